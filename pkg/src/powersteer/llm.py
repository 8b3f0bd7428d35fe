"""Chat backends: an OpenAI-compatible HTTP client plus deterministic
in-process substitutes (static patterns, an MI equalizer, a malformed
output fuzzer) so every scenario runs offline.

A backend is anything with `complete(messages) -> str`. Backends either
return text or raise a BackendError subtype; they never partially apply
control, so swapping the HTTP client for a scripted one changes nothing
but the returned text.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
import requests


class BackendError(Exception):
    """Base class for chat-backend failures; all map to navigator fallback."""


class ConnectError(BackendError):
    pass


class RequestTimeout(BackendError):
    pass


class HttpStatusError(BackendError):
    def __init__(self, code: int, detail: str = ""):
        super().__init__(f"HTTP {code}" + (f": {detail}" if detail else ""))
        self.code = code


class MissingContent(BackendError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for any OpenAI-compatible chat endpoint."""

    base_url: str
    model: str
    temperature: float = 0.3
    max_tokens: int = 2048
    api_key: Optional[str] = None
    timeout: float = 30.0

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class ChatBackend(Protocol):
    def complete(self, messages: Sequence[dict]) -> str:
        ...


def chat_complete(cfg: EndpointConfig, messages: Sequence[dict]) -> str:
    """Single POST to {base_url}/v1/chat/completions; no silent retries.

    Returns choices[0].message.content. Connection problems, timeouts,
    non-200 statuses and absent content raise the corresponding
    BackendError subtype.
    """
    if len(messages) != 2:
        raise ValueError("expected exactly [system, user] messages")
    url = cfg.base_url.rstrip("/") + "/v1/chat/completions"
    body = {
        "model": cfg.model,
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    try:
        resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout)
    except requests.exceptions.Timeout as exc:
        raise RequestTimeout(str(exc)) from exc
    except requests.exceptions.ConnectionError as exc:
        raise ConnectError(str(exc)) from exc
    if resp.status_code != 200:
        raise HttpStatusError(resp.status_code, resp.text[:200])
    try:
        data = resp.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, LookupError, TypeError) as exc:
        raise MissingContent(f"no choices[0].message.content: {exc}") from exc
    if not isinstance(content, str):
        raise MissingContent("content is not text")
    return content


class HttpChatBackend:
    def __init__(self, cfg: EndpointConfig):
        self.cfg = cfg

    def complete(self, messages: Sequence[dict]) -> str:
        return chat_complete(self.cfg, messages)


class StaticBackend:
    """Always proposes the same action; drives fixed policy shapes in CI."""

    def __init__(self, weights: Sequence[float], p_total: Optional[float] = None,
                 reasoning: str = "static policy pattern"):
        self._payload: dict = {"weights": [float(w) for w in weights]}
        if p_total is not None:
            self._payload["P_total"] = float(p_total)
        self._payload["reasoning"] = reasoning

    def complete(self, messages: Sequence[dict]) -> str:
        return json.dumps(self._payload)


_ROW_RE = re.compile(
    r"^\s*(\d+)\s+(-?[\d.]+)\s+(-?[\d.]+)\s+(-?[\d.]+)\s+(-?[\d.]+)\s*$")

MI_CEILING_BITS = 2.0  # log2(4) for the QPSK constellation


def parse_summary_rows(text: str) -> list:
    """Recover (index, gain2, mi, power, weight) rows from a state report."""
    rows = []
    for line in text.splitlines():
        m = _ROW_RE.match(line)
        if m:
            rows.append((int(m.group(1)), float(m.group(2)), float(m.group(3)),
                         float(m.group(4)), float(m.group(5))))
    return rows


class EqualizerBackend:
    """Deterministic stand-in for an "equalize MI" policy.

    Reads the per-channel MI out of the user message and proposes weights
    proportional to the remaining headroom max(2 - MI, eps): channels far
    from saturation get boosted, saturated ones get the epsilon share.
    """

    def __init__(self, eps: float = 1e-3):
        self.eps = eps

    def complete(self, messages: Sequence[dict]) -> str:
        rows = parse_summary_rows(messages[-1]["content"])
        if not rows:
            raise MissingContent("state summary carries no channel rows")
        mi = np.array([r[2] for r in rows])
        head = np.maximum(MI_CEILING_BITS - mi, self.eps)
        weights = head / head.sum()
        worst = int(np.argmax(head)) + 1
        reasoning = (f"Equalizing MI: channel {worst} is furthest from saturation; "
                     f"weights set proportional to (2 - MI).")
        return json.dumps({"weights": [round(float(w), 6) for w in weights],
                           "reasoning": reasoning})


class FuzzBackend:
    """Rotates through malformed-output classes, deterministically per seed.

    Covers: prose without JSON, truncated JSON, missing/mistyped weights,
    wrong lengths, negative entries, all-zero, NaN/Inf, giant magnitudes,
    numeric strings, out-of-range budgets, extra keys, fence-wrapped valid
    output. Everything a guardrail pipeline must shrug off.
    """

    def __init__(self, seed: int = 0, n: int = 8):
        self.n = n
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self._count = 0

    def _valid_weights(self):
        w = self._rng.uniform(0.0, 1.0, size=self.n)
        return [round(float(x), 4) for x in w]

    def complete(self, messages: Sequence[dict]) -> str:
        i = self._count % 12
        self._count += 1
        rng = self._rng
        if i == 0:
            return "All channels look nominal; no adjustment needed."
        if i == 1:
            return '{"weights": [0.2, 0.1, '
        if i == 2:
            return json.dumps({"priorities": self._valid_weights()})
        if i == 3:
            return json.dumps({"weights": self._valid_weights()[: max(1, self.n - 2)]})
        if i == 4:
            w = self._valid_weights()
            w[int(rng.integers(self.n))] = -abs(float(rng.uniform(0.1, 3.0)))
            return json.dumps({"weights": w})
        if i == 5:
            return json.dumps({"weights": [0.0] * self.n})
        if i == 6:
            w = self._valid_weights()
            w[0] = float("nan")
            w[-1] = float("inf")
            return json.dumps({"weights": w})
        if i == 7:
            return json.dumps({"weights": [1e308] * self.n})
        if i == 8:
            return json.dumps({"weights": self._valid_weights(),
                               "P_total": float(rng.uniform(1e4, 1e9)),
                               "unexpected": {"nested": [1, 2, 3]}})
        if i == 9:
            return json.dumps({"weights": [str(x) for x in self._valid_weights()]})
        if i == 10:
            return json.dumps({"weights": self._valid_weights() + [0.1] * 3})
        payload = json.dumps({"weights": self._valid_weights(),
                              "reasoning": "fenced but fine"})
        return f"Sure! Here is the action:\n```json\n{payload}\n```\n"


class SleepyBackend:
    """Delays every call; for proving the fast loop never waits on this one."""

    def __init__(self, delay_s: float, inner: Optional[ChatBackend] = None, n: int = 8):
        self.delay_s = delay_s
        self.inner = inner or StaticBackend([1.0 / n] * n)

    def complete(self, messages: Sequence[dict]) -> str:
        time.sleep(self.delay_s)
        return self.inner.complete(messages)


def make_backend(selector: str, endpoint: Optional[EndpointConfig] = None,
                 n: int = 8, seed: int = 0):
    """Build a backend from a CLI-style selector.

    Selectors: "live" (HTTP endpoint), "equalizer", "fuzz",
    "static:<path>" (JSON file with weights / optional P_total), "none".
    """
    if selector == "none":
        return None
    if selector == "live":
        if endpoint is None:
            raise ValueError("live backend requires endpoint configuration")
        return HttpChatBackend(endpoint)
    if selector == "equalizer":
        return EqualizerBackend()
    if selector == "fuzz":
        return FuzzBackend(seed=seed, n=n)
    if selector.startswith("static:"):
        path = selector.split(":", 1)[1]
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
        return StaticBackend(spec["weights"], spec.get("P_total"),
                             spec.get("reasoning", "static policy pattern"))
    raise ValueError(f"unknown backend selector: {selector!r}")
