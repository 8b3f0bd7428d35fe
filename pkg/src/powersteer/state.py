"""Shared domain state: environment, decision variables, control parameters."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mi import Constellation, NoiseModel, qpsk

WEIGHT_SUM_TOL = 1e-9


def _frozen_vector(values, name: str, nonnegative: bool = True) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    if nonnegative and np.any(v < 0):
        raise ValueError(f"{name} must be nonnegative")
    v = v.copy()
    v.flags.writeable = False
    return v


class ChannelState:
    """The environment: per-channel power gains |h_i|^2 plus the noise model.

    Gains change only through `set_gains` (a disturbance or operator
    action); reads return an immutable snapshot so a concurrent update can
    never tear a step's view of the environment.
    """

    def __init__(self, gains2: Sequence[float], noise: NoiseModel | None = None,
                 constellation: Constellation | None = None):
        self._gains2 = _frozen_vector(gains2, "gains2")
        self.noise = noise if noise is not None else NoiseModel()
        self.constellation = constellation if constellation is not None else qpsk()
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self._gains2.size

    @property
    def gains2(self) -> np.ndarray:
        with self._lock:
            return self._gains2

    def set_gains(self, gains2: Sequence[float]) -> None:
        g = _frozen_vector(gains2, "gains2")
        if g.size != self._gains2.size:
            raise ValueError(f"expected {self._gains2.size} gains, got {g.size}")
        with self._lock:
            self._gains2 = g

    def reversed_gains(self) -> np.ndarray:
        """Gain vector flipped end-to-end (the standard disturbance)."""
        return self.gains2[::-1].copy()


@dataclass(frozen=True)
class Allocation:
    """Amplitude vector lambda; allocated power per channel is lambda_i^2.

    Feasibility (sum of powers within budget, entries nonnegative) is
    maintained by the clamp/project pipeline after every step, not by the
    constructor: intermediate post-gradient states may violate it.
    """

    lam: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.lam, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("lambda must be a non-empty 1-D vector")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "lam", v)

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def powers(self) -> np.ndarray:
        return self.lam**2

    @property
    def total_power(self) -> float:
        return float(np.sum(self.lam**2))

    @staticmethod
    def uniform(n: int, p_total: float) -> "Allocation":
        """Even power split: the default, feasible, symmetric start."""
        return Allocation(np.full(n, np.sqrt(p_total / n)))


@dataclass(frozen=True)
class ControlParams:
    """The only surface the navigator may write: weights and power cap."""

    w: np.ndarray
    p_total: float

    def __post_init__(self):
        w = _frozen_vector(self.w, "w")
        s = float(w.sum())
        if abs(s - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1 within {WEIGHT_SUM_TOL}, got {s!r}")
        if not (self.p_total > 0 and np.isfinite(self.p_total)):
            raise ValueError(f"p_total must be positive and finite, got {self.p_total}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p_total", float(self.p_total))

    @staticmethod
    def uniform(n: int, p_total: float) -> "ControlParams":
        return ControlParams(w=np.full(n, 1.0 / n), p_total=p_total)


class ParamsCell:
    """Single shared cell for ControlParams with atomic snapshot semantics.

    Mutations are serialized read-modify-write operations; readers always
    see a complete, validated value.
    """

    def __init__(self, initial: ControlParams):
        self._value = initial
        self._lock = threading.Lock()

    def read(self) -> ControlParams:
        with self._lock:
            return self._value

    def write(self, params: ControlParams) -> None:
        with self._lock:
            self._value = params

    def apply(self, fn) -> ControlParams:
        """Atomically replace the value with fn(current); returns the result."""
        with self._lock:
            self._value = fn(self._value)
            return self._value


@dataclass(frozen=True)
class OptimizerConfig:
    """Fast-loop tuning: step size, recovery floor, sampling policy."""

    eta: float = 1.0
    lambda_min: float = 0.1
    n_mc: int = 10_000
    resample: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.lambda_min > 0:
            raise ValueError("lambda_min must be positive")
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")


@dataclass(frozen=True)
class StepRecord:
    """One optimizer step's snapshot; every field refers to the same step."""

    step: int
    lam: np.ndarray
    powers: np.ndarray
    mi: np.ndarray
    w: np.ndarray
    p_total: float
    weighted_obj: float
    sum_mi: float
    events: tuple = ()
    timestamp: float = field(default_factory=time.time)

    FRAME_ARRAYS = (("lambda", "lam"), ("P", "powers"), ("mi", "mi"), ("w", "w"))

    def to_frame(self) -> dict:
        """Flat telemetry frame: step, lambda_i.., P_i.., mi_i.., w_i.., totals.

        The same schema is used for the CSV/JSONL exports and the live
        stream (timestamps deliberately excluded so that equal runs yield
        byte-equal reports).
        """
        frame: dict = {"step": self.step}
        for prefix, attr in self.FRAME_ARRAYS:
            vec = getattr(self, attr)
            for i, x in enumerate(vec, start=1):
                frame[f"{prefix}_{i}"] = float(x)
        frame["p_total"] = float(self.p_total)
        frame["sum_mi"] = float(self.sum_mi)
        frame["weighted_obj"] = float(self.weighted_obj)
        frame["event"] = ";".join(self.events)
        return frame

    @staticmethod
    def frame_columns(n: int) -> list:
        cols = ["step"]
        for prefix, _ in StepRecord.FRAME_ARRAYS:
            cols.extend(f"{prefix}_{i}" for i in range(1, n + 1))
        cols.extend(["p_total", "sum_mi", "weighted_obj", "event"])
        return cols
