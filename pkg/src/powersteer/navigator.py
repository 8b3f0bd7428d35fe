"""Slow loop: turn a natural-language policy plus a state snapshot into
sanitized control parameters.

Each cycle is memoryless: exactly two messages (system prompt + rendered
state summary) go out, one JSON action comes back, and the response runs
through a fixed pipeline -- parse, clip/normalize weights, clamp budget,
EMA-smooth, write. Anything that fails along the way (connection error,
unparseable output, wrong dimensions) retains the previous parameters and
is recorded; no path can write an unsanitized value.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .state import ChannelState, ControlParams, StepRecord


class NavigatorError(Exception):
    """Base for failures that abort a cycle and retain previous params."""


class ParseError(NavigatorError):
    pass


class NoJsonFound(ParseError):
    pass


class MalformedJson(ParseError):
    pass


class MissingWeights(ParseError):
    pass


class NonNumericEntry(ParseError):
    pass


class DimensionMismatch(NavigatorError):
    pass


@dataclass(frozen=True)
class Policy:
    """Declarative operator intent ("what to achieve"), kept verbatim."""

    text: str
    id: Optional[str] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("policy text must be non-empty")


@dataclass(frozen=True)
class GuardrailConfig:
    beta: float = 0.5
    p_min: float = 1.0
    p_max: float = 100.0
    n_expected: int = 8

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must be in (0, 1]")
        if not (0.0 < self.p_min <= self.p_max):
            raise ValueError("need 0 < p_min <= p_max")
        if self.n_expected < 1:
            raise ValueError("n_expected must be >= 1")


@dataclass(frozen=True)
class StateSummary:
    total_mi: float
    power_used: float
    p_total: float
    rows: tuple
    policy_text: str
    text: str


@dataclass(frozen=True)
class ControlAction:
    """Raw parsed output before any guardrail: may be arbitrarily wrong."""

    weights: tuple
    p_total: Optional[float]
    reasoning: str


@dataclass(frozen=True)
class NavigatorLogEntry:
    """One audit-trail line per cycle, skipped and failed cycles included."""

    timestamp: float
    status: str  # applied | fallback | skipped
    summary: Optional[str] = None
    raw_response: Optional[str] = None
    action: Optional[dict] = None
    error: Optional[str] = None
    flags: tuple = ()
    applied: Optional[dict] = None
    reasoning: str = ""

    def to_json(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "status": self.status,
            "summary": self.summary,
            "raw_response": self.raw_response,
            "action": self.action,
            "error": self.error,
            "flags": list(self.flags),
            "applied": self.applied,
            "reasoning": self.reasoning,
        }


DEFAULT_SYSTEM_PROMPT = """\
You steer the power allocation of N parallel noisy communication channels.

## System model
Each channel i carries unit-energy QPSK symbols through additive Gaussian
noise. The state report lists, per channel: the power gain |h|^2, the
current mutual information MI in bits (it saturates at 2.0 bits per
channel), the allocated power P_i, and the current weight w_i. The header
shows the total MI, the power in use, and the power cap P_total.

## Control mechanism
A fast numerical optimizer continuously re-allocates power to maximize the
weighted sum of per-channel MI subject to sum(P_i) <= P_total. You control
only the weight vector and, optionally, P_total. Increasing w_i tends to
steer more power toward channel i; a weight near zero lets a channel drain.
Weights are relative priorities and will be normalized; you can never set
powers directly or violate the power constraint.

## Output specification
Respond with a single JSON object and nothing else:
{"weights": [w_1, ..., w_N], "P_total": <number, optional>, "reasoning": "<short justification>"}
"weights" must be exactly N nonnegative numbers.

## Task
You are invoked periodically with a fresh state report and the operator's
policy. Interpret the policy against the current state and reply with the
action that serves it best. If no change is needed, repeat the current
weights.
"""


def format_state_summary(record: StepRecord, channels: ChannelState,
                         policy: Policy) -> StateSummary:
    """Render the fixed-width state report; same snapshot, same bytes."""
    gains2 = channels.gains2
    total_mi = float(record.sum_mi)
    power_used = float(np.sum(record.powers))
    lines = [f"Total MI = {total_mi:.2f} bits, Power = {power_used:.1f} / {record.p_total:.1f}"]
    lines.append(" ch |h|^2   MI   P_i   w_i")
    rows = []
    for i in range(len(gains2)):
        row = (i + 1, float(gains2[i]), float(record.mi[i]),
               float(record.powers[i]), float(record.w[i]))
        rows.append(row)
        lines.append(f"{row[0]:3d}  {row[1]:.2f}  {row[2]:.2f}  {row[3]:.2f}  {row[4]:.3f}")
    lines.append(f"Policy: {policy.text}")
    return StateSummary(total_mi=total_mi, power_used=power_used,
                        p_total=float(record.p_total), rows=tuple(rows),
                        policy_text=policy.text, text="\n".join(lines))


def compose_prompt(summary: StateSummary, system_prompt: str = DEFAULT_SYSTEM_PROMPT) -> list:
    """Exactly two messages, no history: every call is self-contained."""
    return [
        {"role": "system", "content": system_prompt},
        {"role": "user", "content": summary.text},
    ]


def _balanced_spans(text: str):
    """Yield top-level {...} spans, honoring JSON string/escape rules."""
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        depth = 0
        in_str = False
        esc = False
        for j in range(start, len(text)):
            ch = text[j]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start:j + 1]
                    break
        else:
            return  # unbalanced to end of text
        pos = start + 1


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_action(raw: str, n_expected: int) -> ControlAction:
    """Extract the first parseable JSON object from a raw response.

    Surrounding prose and code fences are tolerated; the scanner tries
    successive balanced brace spans until one parses. "weights" must be
    present as an array of JSON numbers (numeric strings and booleans are
    rejected); "P_total", if present, must be a number. Length checking is
    deferred to sanitation, so `n_expected` is advisory here.
    """
    if not isinstance(raw, str) or "{" not in raw:
        raise NoJsonFound("no JSON object in response")
    obj = None
    for span in _balanced_spans(raw):
        try:
            candidate = json.loads(span)
        except (json.JSONDecodeError, ValueError, RecursionError):
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
    if obj is None:
        raise MalformedJson("braces present but no parseable JSON object")
    if "weights" not in obj or not isinstance(obj["weights"], list):
        raise MissingWeights('no "weights" array in action')
    weights = obj["weights"]
    if not all(_is_number(x) for x in weights):
        raise NonNumericEntry("weights must be JSON numbers")
    p_total = obj.get("P_total")
    if p_total is not None and not _is_number(p_total):
        raise NonNumericEntry("P_total must be a JSON number")
    reasoning = obj.get("reasoning")
    return ControlAction(
        weights=tuple(float(x) for x in weights),
        p_total=None if p_total is None else float(p_total),
        reasoning=reasoning if isinstance(reasoning, str) else "",
    )


def sanitize_weights(raw: Sequence[float], n_expected: int):
    """Clip negatives, normalize to the simplex, or substitute uniform.

    Returns (weights, flags) with flags out of {"clipped", "uniform"}.
    Raises DimensionMismatch on a wrong-length vector: that is a fallback
    condition (retain previous), not something to repair silently.
    """
    vals = np.asarray(raw, dtype=float)
    if vals.ndim != 1 or vals.size != n_expected:
        raise DimensionMismatch(f"expected {n_expected} weights, got shape {vals.shape}")
    flags = set()
    clipped = np.where(vals < 0, 0.0, vals)
    if not np.array_equal(clipped, vals):
        flags.add("clipped")
    with np.errstate(over="ignore"):  # overflow to inf is a handled input class
        total = float(clipped.sum()) if np.all(np.isfinite(clipped)) else float("nan")
    if not math.isfinite(total) or total <= 0.0:
        flags.add("uniform")
        return np.full(n_expected, 1.0 / n_expected), flags
    return clipped / total, flags


def clamp_budget(raw, current: float, cfg: GuardrailConfig) -> float:
    """Absorbing budget guard: absent/non-finite keeps the current value."""
    if raw is None or not (isinstance(raw, (int, float)) and math.isfinite(raw)):
        return current
    return min(max(float(raw), cfg.p_min), cfg.p_max)


def apply_ema(current: ControlParams, proposed_w: Sequence[float],
              proposed_p: float, beta: float) -> ControlParams:
    """Exponential smoothing toward the proposal; output is re-validated.

    The weight average stays on the simplex in exact arithmetic; the final
    renormalization only cancels floating-point drift.
    """
    if not (0.0 < beta <= 1.0):
        raise ValueError("beta must be in (0, 1]")
    w = (1.0 - beta) * current.w + beta * np.asarray(proposed_w, dtype=float)
    w = w / w.sum()
    p = (1.0 - beta) * current.p_total + beta * float(proposed_p)
    return ControlParams(w=w, p_total=p)


class OptimizerHandle(Protocol):
    """What a cycle needs from the fast loop: a snapshot and a writer."""

    def snapshot(self) -> tuple:  # (StepRecord, ChannelState, ControlParams)
        ...

    def apply_params(self, fn: Callable[[ControlParams], ControlParams]) -> ControlParams:
        ...


def navigator_cycle(handle: OptimizerHandle, policy: Policy, backend,
                    cfg: GuardrailConfig,
                    system_prompt: str = DEFAULT_SYSTEM_PROMPT,
                    clock: Callable[[], float] = time.time) -> NavigatorLogEntry:
    """Run one complete cycle: read, ask, sanitize, write.

    Every failure is absorbed into the returned log entry; the previous
    parameters stay in force whenever anything goes wrong.
    """
    record, channels, current = handle.snapshot()
    summary = format_state_summary(record, channels, policy)
    messages = compose_prompt(summary, system_prompt)
    try:
        raw = backend.complete(messages)
    except Exception as exc:
        return NavigatorLogEntry(
            timestamp=clock(), status="fallback", summary=summary.text,
            raw_response=None, error=f"{type(exc).__name__}: {exc}",
            flags=("fallback",))
    try:
        action = parse_action(raw, cfg.n_expected)
        w_prop, flags = sanitize_weights(action.weights, cfg.n_expected)
    except NavigatorError as exc:
        return NavigatorLogEntry(
            timestamp=clock(), status="fallback", summary=summary.text,
            raw_response=raw, error=f"{type(exc).__name__}: {exc}",
            flags=("fallback",))
    p_prop = None
    if action.p_total is not None and math.isfinite(action.p_total):
        p_prop = clamp_budget(action.p_total, current.p_total, cfg)
        if p_prop != action.p_total:
            flags.add("clamped")

    def mutate(cur: ControlParams) -> ControlParams:
        target_p = cur.p_total if p_prop is None else p_prop
        return apply_ema(cur, w_prop, target_p, cfg.beta)

    applied = handle.apply_params(mutate)
    return NavigatorLogEntry(
        timestamp=clock(), status="applied", summary=summary.text,
        raw_response=raw,
        action={"weights": list(action.weights), "P_total": action.p_total,
                "reasoning": action.reasoning},
        flags=tuple(sorted(flags)),
        applied={"w": [float(x) for x in applied.w],
                 "p_total": float(applied.p_total)},
        reasoning=action.reasoning,
    )


class NavigatorService:
    """Asynchronous wrapper: a worker thread plus a compare-and-set
    in-flight guard so at most one backend call ever runs; a trigger that
    fires while one is pending records a skipped cycle instead of queuing.
    """

    def __init__(self, handle: OptimizerHandle, policy_provider: Callable[[], Policy],
                 backend, cfg: GuardrailConfig,
                 system_prompt: str = DEFAULT_SYSTEM_PROMPT,
                 log_sink: Optional[Callable[[NavigatorLogEntry], None]] = None):
        self.handle = handle
        self.policy_provider = policy_provider
        self.backend = backend
        self.cfg = cfg
        self.system_prompt = system_prompt
        self.log_sink = log_sink or (lambda entry: None)
        self.counters = {"applied": 0, "skipped": 0, "failed": 0}
        self.last_error: Optional[str] = None
        self._inflight = threading.Lock()
        self._jobs: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._worker = threading.Thread(target=self._run, daemon=True,
                                        name="navigator-worker")
        self._worker.start()

    @property
    def in_flight(self) -> bool:
        return self._inflight.locked()

    def try_cycle(self) -> bool:
        """Fire one cycle if idle; log a skipped entry if one is pending."""
        if not self._inflight.acquire(blocking=False):
            entry = NavigatorLogEntry(timestamp=time.time(), status="skipped",
                                      error="previous call still in flight")
            self.counters["skipped"] += 1
            self.log_sink(entry)
            return False
        self._jobs.put("cycle")
        return True

    def _run(self):
        while True:
            job = self._jobs.get()
            if job is None:
                return
            try:
                entry = navigator_cycle(self.handle, self.policy_provider(),
                                        self.backend, self.cfg,
                                        self.system_prompt)
            except Exception as exc:  # defensive: a cycle must never kill the worker
                entry = NavigatorLogEntry(timestamp=time.time(), status="fallback",
                                          error=f"{type(exc).__name__}: {exc}",
                                          flags=("fallback",))
            finally:
                self._inflight.release()
            if entry.status == "applied":
                self.counters["applied"] += 1
                self.last_error = None
            else:
                self.counters["failed"] += 1
                self.last_error = entry.error
            self.log_sink(entry)

    def stop(self, timeout: float = 5.0):
        self._jobs.put(None)
        self._worker.join(timeout=timeout)
