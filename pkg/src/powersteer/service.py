"""Runtime service: the two asynchronous loops plus an HTTP/stream API.

Three cooperating threads -- the optimizer (fast), the navigator worker
(slow), and the API server -- share nothing except an atomic parameter
cell, snapshot reads, and bounded queues. Telemetry backpressure drops
frames (counted), never control; a dead or crawling language-model
endpoint costs adaptation, not steps.
"""

from __future__ import annotations

import collections
import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from pydantic import BaseModel

from .llm import EndpointConfig, make_backend
from .navigator import (
    DEFAULT_SYSTEM_PROMPT,
    GuardrailConfig,
    NavigatorLogEntry,
    NavigatorService,
    Policy,
    clamp_budget,
)
from .optimizer import PowerOptimizer, TelemetryQueue, run_loop
from .state import ChannelState, ControlParams, OptimizerConfig, ParamsCell, StepRecord

PAPER_GAINS = (0.25, 0.36, 0.49, 0.64, 0.81, 1.0, 1.44, 2.25)


@dataclass(frozen=True)
class NavigatorTrigger:
    steps: Optional[int] = None     # fire every K optimizer steps
    seconds: Optional[float] = 2.0  # or every T wall-clock seconds
    policy: str = "Maximize total throughput"
    enabled: bool = True


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "none"  # live | equalizer | static:<file> | fuzz | none
    url: str = "http://127.0.0.1:1234"
    model: str = "local-model"
    temperature: float = 0.3
    max_tokens: int = 2048
    api_key_env: str = "POWERSTEER_API_KEY"
    timeout: float = 30.0

    def endpoint(self) -> EndpointConfig:
        return EndpointConfig(base_url=self.url, model=self.model,
                              temperature=self.temperature,
                              max_tokens=self.max_tokens,
                              api_key=os.environ.get(self.api_key_env) or None,
                              timeout=self.timeout)


@dataclass(frozen=True)
class TelemetryConfig:
    path: Optional[str] = "telemetry.jsonl"
    navigator_log: Optional[str] = "navigator_log.jsonl"
    decimation: int = 5


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000


@dataclass(frozen=True)
class RuntimeConfig:
    n: int = 8
    gains: tuple = PAPER_GAINS
    p_total: float = 40.0
    seed: int = 0
    pacing: float = 0.0  # steps/second; 0 = unthrottled
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    guardrails: GuardrailConfig = field(default_factory=lambda: GuardrailConfig(n_expected=8))
    navigator: NavigatorTrigger = field(default_factory=NavigatorTrigger)
    backend: BackendConfig = field(default_factory=BackendConfig)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def problems(self) -> list:
        """Validation diagnostics; a non-empty list refuses startup."""
        errs = []
        if self.n < 1:
            errs.append("n must be >= 1")
        if len(self.gains) != self.n:
            errs.append(f"gains has {len(self.gains)} entries, expected n={self.n}")
        if any(g < 0 or not np.isfinite(g) for g in self.gains):
            errs.append("gains must be finite and nonnegative")
        if not (self.p_total > 0):
            errs.append("p_total must be positive")
        if not (self.guardrails.p_min <= self.p_total <= self.guardrails.p_max):
            errs.append("initial p_total outside [p_min, p_max]")
        if self.guardrails.n_expected != self.n:
            errs.append("guardrails.n_expected must equal n")
        if self.n * self.optimizer.lambda_min**2 >= self.guardrails.p_min:
            errs.append("n * lambda_min^2 must stay below p_min")
        if self.pacing < 0:
            errs.append("pacing must be >= 0")
        if self.telemetry.decimation < 1:
            errs.append("decimation must be >= 1")
        trig = self.navigator
        if trig.steps is None and trig.seconds is None:
            errs.append("navigator needs a step or time trigger")
        if trig.steps is not None and trig.steps < 1:
            errs.append("navigator.trigger steps must be >= 1")
        if trig.seconds is not None and trig.seconds <= 0:
            errs.append("navigator.trigger seconds must be > 0")
        return errs


def config_from_dict(data: dict) -> RuntimeConfig:
    """Build a RuntimeConfig from nested key/value data (YAML layout)."""
    data = dict(data or {})
    n = int(data.get("n", len(data.get("gains", PAPER_GAINS))))
    base = RuntimeConfig(n=n)

    def sub(name, cls, defaults):
        payload = {**defaults, **(data.get(name) or {})}
        return cls(**payload)

    opt = sub("optimizer", OptimizerConfig, asdict(base.optimizer))
    guard_defaults = {"beta": 0.5, "p_min": 1.0, "p_max": 100.0, "n_expected": n}
    guard = sub("guardrails", GuardrailConfig, guard_defaults)
    nav_in = dict(data.get("navigator") or {})
    steps = nav_in.get("trigger_steps", nav_in.get("steps"))
    unset = object()
    seconds = nav_in.get("trigger_seconds", nav_in.get("seconds", unset))
    if seconds is unset:
        # a configured step trigger replaces the default time trigger
        seconds = None if steps is not None else NavigatorTrigger.seconds
    nav = NavigatorTrigger(
        steps=steps, seconds=seconds,
        policy=nav_in.get("policy", NavigatorTrigger.policy),
        enabled=bool(nav_in.get("enabled", True)))
    backend = sub("backend", BackendConfig, asdict(BackendConfig()))
    telemetry = sub("telemetry", TelemetryConfig, asdict(TelemetryConfig()))
    service = sub("service", ServiceConfig, asdict(ServiceConfig()))
    return RuntimeConfig(
        n=n,
        gains=tuple(data.get("gains", PAPER_GAINS)),
        p_total=float(data.get("p_total", 40.0)),
        seed=int(data.get("seed", 0)),
        pacing=float(data.get("pacing", 0.0)),
        optimizer=opt, guardrails=guard, navigator=nav,
        backend=backend, telemetry=telemetry, service=service,
    )


def load_config(path) -> RuntimeConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh) or {})


class _JsonlWriter:
    """Append-only JSONL sink; silently disabled when path is None."""

    def __init__(self, path: Optional[str]):
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self._lock = threading.Lock()

    def write(self, obj: dict):
        if self._fh is None:
            return
        with self._lock:
            self._fh.write(json.dumps(obj) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


class _RuntimeHandle:
    """Navigator's view of the runtime: snapshots in, parameter mutations out."""

    def __init__(self, runtime: "Runtime"):
        self._rt = runtime

    def snapshot(self):
        return self._rt.latest_record(), self._rt.channels, self._rt.params_cell.read()

    def apply_params(self, fn):
        return self._rt.params_cell.apply(fn)


class Runtime:
    """Owns the three contexts and every cross-thread seam between them."""

    def __init__(self, config: RuntimeConfig, backend=None):
        errs = config.problems()
        if errs:
            raise ValueError("invalid config: " + "; ".join(errs))
        self.config = config
        self.channels = ChannelState(config.gains)
        self.params_cell = ParamsCell(ControlParams.uniform(config.n, config.p_total))
        self.optimizer = PowerOptimizer(self.channels, config.optimizer,
                                        p_total_hint=config.p_total,
                                        base_seed=config.seed)
        self._policy = Policy(config.navigator.policy)
        self._policy_lock = threading.Lock()
        self._latest = self.optimizer.initial_record(self.params_cell.read())
        self._latest_lock = threading.Lock()
        self._queue = TelemetryQueue()
        self._telemetry_file = _JsonlWriter(config.telemetry.path)
        self._nav_file = _JsonlWriter(config.telemetry.navigator_log)
        self._nav_ring = collections.deque(maxlen=1000)
        self._subscribers: list = []
        self._subs_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list = []
        self._violations = 0
        self.navigator_enabled = config.navigator.enabled
        if backend is None:
            endpoint = config.backend.endpoint() if config.backend.kind == "live" else None
            backend = make_backend(config.backend.kind, endpoint,
                                   n=config.n, seed=config.seed)
        self.backend = backend
        self.navigator: Optional[NavigatorService] = None
        if backend is not None:
            self.navigator = NavigatorService(
                _RuntimeHandle(self), self.policy_snapshot, backend,
                config.guardrails, DEFAULT_SYSTEM_PROMPT, self._on_nav_entry)

    # -- snapshots ---------------------------------------------------------

    def latest_record(self) -> StepRecord:
        with self._latest_lock:
            return self._latest

    def policy_snapshot(self) -> Policy:
        with self._policy_lock:
            return self._policy

    def state(self) -> dict:
        record = self.latest_record()
        params = self.params_cell.read()
        nav_status = "disabled"
        counters = {"applied": 0, "skipped": 0, "failed": 0}
        last_error = None
        if self.navigator is not None:
            counters = dict(self.navigator.counters)
            last_error = self.navigator.last_error
            if not self.navigator_enabled:
                nav_status = "paused"
            elif self.navigator.in_flight:
                nav_status = "in-flight"
            else:
                nav_status = "idle"
        return {
            "step": record.step,
            "frame": record.to_frame(),
            "gains": [float(g) for g in self.channels.gains2],
            "params": {"w": [float(x) for x in params.w],
                       "p_total": float(params.p_total)},
            "policy": self.policy_snapshot().text,
            "navigator": {"status": nav_status, "last_error": last_error,
                          "enabled": self.navigator_enabled, **counters},
            "counters": {
                "steps": self.optimizer.step_count,
                "telemetry_dropped": self._queue.dropped,
                "violations": self._violations,
            },
        }

    # -- operator actions ----------------------------------------------------

    def set_policy(self, text: str) -> None:
        policy = Policy(text)
        with self._policy_lock:
            self._policy = policy

    def set_gains(self, gains) -> None:
        self.channels.set_gains(gains)

    def set_budget(self, value: float) -> float:
        clamped = clamp_budget(value, self.params_cell.read().p_total,
                               self.config.guardrails)
        self.params_cell.apply(lambda cur: ControlParams(w=cur.w, p_total=clamped))
        return clamped

    def set_navigator_enabled(self, enabled: bool) -> None:
        self.navigator_enabled = bool(enabled)

    # -- streaming -----------------------------------------------------------

    def subscribe(self, maxsize: int = 256):
        import queue as _queue

        q: _queue.Queue = _queue.Queue(maxsize=maxsize)
        with self._subs_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q) -> None:
        with self._subs_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- loop plumbing ---------------------------------------------------------

    def _on_record(self, record: StepRecord) -> None:
        with self._latest_lock:
            self._latest = record
        if float(np.sum(record.lam**2)) > record.p_total + 1e-9:
            self._violations += 1

    def _on_nav_entry(self, entry: NavigatorLogEntry) -> None:
        self._nav_ring.append(entry)
        self._nav_file.write(entry.to_json())

    def navigator_log(self, limit: int = 50) -> list:
        entries = list(self._nav_ring)[-max(0, int(limit)):]
        return [e.to_json() for e in entries]

    def _pump(self) -> None:
        decim = self.config.telemetry.decimation
        while True:
            for record in self._queue.drain():
                frame = record.to_frame()
                self._telemetry_file.write(frame)
                if record.step % decim == 0:
                    with self._subs_lock:
                        subs = list(self._subscribers)
                    for q in subs:
                        try:
                            q.put_nowait(frame)
                        except Exception:
                            pass  # slow client: drop, never block
            if self._stop.wait(0.05):
                # drain whatever is left, then exit
                for record in self._queue.drain():
                    self._telemetry_file.write(record.to_frame())
                break

    def _ticker(self) -> None:
        trig = self.config.navigator
        last_time = time.monotonic()
        last_step = self.optimizer.step_count
        while not self._stop.wait(0.02):
            if self.navigator is None or not self.navigator_enabled:
                last_time = time.monotonic()
                last_step = self.optimizer.step_count
                continue
            fire = False
            now = time.monotonic()
            steps = self.optimizer.step_count
            if trig.steps is not None and steps - last_step >= trig.steps:
                fire = True
            if trig.seconds is not None and now - last_time >= trig.seconds:
                fire = True
            if fire:
                last_time = now
                last_step = steps
                self.navigator.try_cycle()

    def start(self) -> "Runtime":
        opt_thread = threading.Thread(
            target=run_loop,
            args=(self.optimizer, self.params_cell, self._queue.emit, self._stop),
            kwargs={"pacing": self.config.pacing, "on_record": self._on_record},
            daemon=True, name="optimizer-loop")
        pump_thread = threading.Thread(target=self._pump, daemon=True,
                                       name="telemetry-pump")
        tick_thread = threading.Thread(target=self._ticker, daemon=True,
                                       name="navigator-ticker")
        self._threads = [opt_thread, pump_thread, tick_thread]
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=10.0)
        if self.navigator is not None:
            self.navigator.stop()
        self._telemetry_file.close()
        self._nav_file.close()


# request bodies for the command endpoints (module level so the lazily
# evaluated annotations stay resolvable)
class PolicyBody(BaseModel):
    text: str


class GainsBody(BaseModel):
    gains: list


class BudgetBody(BaseModel):
    p_total: float


class NavigatorBody(BaseModel):
    enabled: bool


def create_app(runtime: Runtime):
    """HTTP facade over a runtime; safe to serve while the loops run."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import HTMLResponse, StreamingResponse

    app = FastAPI(title="powersteer", docs_url=None, redoc_url=None)

    @app.get("/api/state")
    def get_state():
        return runtime.state()

    @app.get("/api/stream")
    async def stream():
        import queue as _queue

        import anyio

        q = runtime.subscribe()

        def next_frame():
            try:
                return q.get(timeout=0.5)
            except _queue.Empty:
                return None

        async def gen():
            try:
                yield "retry: 1000\n\n"
                idle = 0
                while True:
                    frame = await anyio.to_thread.run_sync(next_frame)
                    if frame is not None:
                        idle = 0
                        yield f"data: {json.dumps(frame)}\n\n"
                    else:
                        idle += 1
                        if idle % 4 == 0:
                            yield ": keepalive\n\n"
            finally:
                runtime.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.post("/api/policy")
    def post_policy(body: PolicyBody):
        try:
            runtime.set_policy(body.text)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True, "policy": body.text}

    @app.post("/api/gains")
    def post_gains(body: GainsBody):
        try:
            gains = [float(g) for g in body.gains]
            runtime.set_gains(gains)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"ok": True, "gains": gains}

    @app.post("/api/budget")
    def post_budget(body: BudgetBody):
        applied = runtime.set_budget(body.p_total)
        return {"ok": True, "p_total": applied}

    @app.get("/api/llm-log")
    def llm_log(limit: int = 50):
        return {"entries": runtime.navigator_log(limit)}

    @app.post("/api/navigator")
    def post_navigator(body: NavigatorBody):
        runtime.set_navigator_enabled(body.enabled)
        return {"ok": True, "enabled": runtime.navigator_enabled}

    static_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"

    @app.get("/", response_class=HTMLResponse)
    def index():
        index_file = static_dir / "index.html"
        if index_file.exists():
            return index_file.read_text(encoding="utf-8")
        return HTMLResponse(
            "<html><body><h3>powersteer runtime</h3>"
            "<p>No dashboard build found; the JSON API is live under /api/.</p>"
            "</body></html>")

    if static_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/assets", StaticFiles(directory=str(static_dir)), name="assets")

    return app


def serve(runtime: Runtime, host: str, port: int):
    """Run uvicorn in the foreground until interrupted; returns on shutdown."""
    import uvicorn

    app = create_app(runtime)
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    server.run()
