"""Fast loop: projected gradient ascent on the weighted MI objective.

Each iteration reads the latest control parameters, takes one ascent step
on the allocation, clamps every amplitude to a positive floor (so a
powered-down channel keeps a live gradient and can be reactivated), then
projects onto the power ball. Because projection runs after clamping, the
budget constraint holds strictly at the end of every iteration no matter
what the navigator wrote.
"""

from __future__ import annotations

import collections
import threading
import time
from typing import Callable, Optional

import numpy as np

from .mi import MiEvaluator, SampleSet, draw_samples
from .state import Allocation, ChannelState, ControlParams, OptimizerConfig, ParamsCell, StepRecord

FEASIBILITY_TOL = 1e-9


def gradient_step(alloc: Allocation, channels: ChannelState, params: ControlParams,
                  cfg: OptimizerConfig, samples: SampleSet,
                  gains2: Optional[np.ndarray] = None) -> Allocation:
    """One unprojected ascent step: lambda_i += eta * w_i * |h_i| * dI/da.

    Raises ArithmeticError on a non-finite gradient so the caller can skip
    the step with the allocation unchanged.
    """
    g2 = channels.gains2 if gains2 is None else gains2
    h = np.sqrt(g2)
    ev = MiEvaluator(channels.constellation, channels.noise, samples)
    grads = np.array([ev.gradient(hi * li) for hi, li in zip(h, alloc.lam)])
    ascent = cfg.eta * params.w * h * grads
    if not np.all(np.isfinite(ascent)):
        raise ArithmeticError("non-finite gradient")
    return Allocation(alloc.lam + ascent)


def clamp_floor(alloc: Allocation, lambda_min: float) -> Allocation:
    """Raise every amplitude to at least lambda_min (zero-gradient escape)."""
    if not lambda_min > 0:
        raise ValueError("lambda_min must be positive")
    return Allocation(np.maximum(alloc.lam, lambda_min))


def project_ball(alloc: Allocation, p_total: float) -> Allocation:
    """Scale back onto {sum lambda_i^2 <= p_total} if outside; else identity."""
    if not p_total > 0:
        raise ValueError("p_total must be positive")
    nrm2 = float(np.sum(alloc.lam**2))
    if nrm2 > p_total:
        return Allocation(alloc.lam * np.sqrt(p_total / nrm2))
    return alloc


class PowerOptimizer:
    """Owns the allocation and advances it one recorded step at a time.

    Per-step sample sets come from a counter-based stream seeded by
    (base_seed, step), so runs are reproducible and channels share common
    random numbers within a step. With cfg.resample False the step-1
    sample set is reused forever (deterministic ascent mode).
    """

    def __init__(self, channels: ChannelState, cfg: OptimizerConfig,
                 initial: Optional[Allocation] = None,
                 p_total_hint: float = 40.0, base_seed: int = 0):
        self.channels = channels
        self.cfg = cfg
        self.base_seed = int(base_seed)
        self.step_count = 0
        self.alloc = initial if initial is not None else Allocation.uniform(
            channels.n, p_total_hint)
        self._fixed_samples: Optional[SampleSet] = None

    def _samples_for_step(self, step: int) -> SampleSet:
        if not self.cfg.resample:
            if self._fixed_samples is None:
                self._fixed_samples = draw_samples(self.cfg.n_mc, [self.base_seed, 1])
            return self._fixed_samples
        return draw_samples(self.cfg.n_mc, [self.base_seed, step])

    def initial_record(self, params: ControlParams) -> StepRecord:
        """Step-0 snapshot of the untouched allocation (navigator seed state)."""
        samples = draw_samples(self.cfg.n_mc, [self.base_seed, 0])
        ev = MiEvaluator(self.channels.constellation, self.channels.noise, samples)
        h = np.sqrt(self.channels.gains2)
        mis = np.array([ev.estimate(hi * li) for hi, li in zip(h, self.alloc.lam)])
        return StepRecord(step=0, lam=self.alloc.lam.copy(), powers=self.alloc.powers,
                          mi=mis, w=np.asarray(params.w).copy(),
                          p_total=params.p_total,
                          weighted_obj=float(params.w @ mis),
                          sum_mi=float(mis.sum()))

    def step(self, params: ControlParams) -> StepRecord:
        """Advance one iteration under `params` and return its snapshot.

        A failed update (non-finite gradient) leaves the allocation
        unchanged and is reported in the record's events instead of
        raising: the loop must survive bad steps.
        """
        self.step_count += 1
        step = self.step_count
        gains2 = self.channels.gains2
        samples = self._samples_for_step(step)
        events = []
        try:
            updated = gradient_step(self.alloc, self.channels, params, self.cfg,
                                    samples, gains2=gains2)
            clamped = clamp_floor(updated, self.cfg.lambda_min)
            if not np.array_equal(clamped.lam, updated.lam):
                events.append("clamped")
            projected = project_ball(clamped, params.p_total)
            if projected is not clamped:
                events.append("projected")
            self.alloc = projected
        except ArithmeticError as exc:
            events.append(f"step_failed:{exc}")
        ev = MiEvaluator(self.channels.constellation, self.channels.noise, samples)
        h = np.sqrt(gains2)
        mis = np.array([ev.estimate(hi * li) for hi, li in zip(h, self.alloc.lam)])
        return StepRecord(
            step=step,
            lam=self.alloc.lam.copy(),
            powers=self.alloc.powers,
            mi=mis,
            w=np.asarray(params.w).copy(),
            p_total=params.p_total,
            weighted_obj=float(params.w @ mis),
            sum_mi=float(mis.sum()),
            events=tuple(events),
        )


class TelemetryQueue:
    """Bounded non-blocking record queue; overflow drops the oldest, counted."""

    def __init__(self, maxlen: int = 4096):
        self._buf = collections.deque(maxlen=maxlen)
        self._maxlen = maxlen
        self._dropped = 0
        self._lock = threading.Lock()

    def emit(self, record: StepRecord) -> None:
        with self._lock:
            if len(self._buf) == self._maxlen:
                self._dropped += 1
            self._buf.append(record)

    def drain(self) -> list:
        with self._lock:
            out = list(self._buf)
            self._buf.clear()
            return out

    @property
    def dropped(self) -> int:
        with self._lock:
            return self._dropped


def run_loop(optimizer: PowerOptimizer, params_cell: ParamsCell,
             telemetry_sink: Callable[[StepRecord], None],
             stop_signal: threading.Event, pacing: float = 0.0,
             on_record: Optional[Callable[[StepRecord], None]] = None) -> None:
    """Run the fast loop until stopped.

    Control parameters are re-read from the cell at the top of every
    iteration (latest write wins), the sink must never block, and a
    failure inside one step is logged in that step's record while the
    loop keeps going. `pacing` > 0 throttles to roughly that many steps
    per second.
    """
    period = 1.0 / pacing if pacing > 0 else 0.0
    while not stop_signal.is_set():
        t0 = time.monotonic()
        params = params_cell.read()
        record = optimizer.step(params)
        telemetry_sink(record)
        if on_record is not None:
            on_record(record)
        if period > 0.0:
            remaining = period - (time.monotonic() - t0)
            if remaining > 0:
                stop_signal.wait(remaining)
