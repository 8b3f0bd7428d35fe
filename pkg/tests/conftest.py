"""Shared fixtures: canned records, an in-memory optimizer handle, and a
stub OpenAI-compatible HTTP server."""

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from powersteer.mi import NoiseModel
from powersteer.state import ChannelState, ControlParams, StepRecord

PAPER_GAINS = [0.25, 0.36, 0.49, 0.64, 0.81, 1.0, 1.44, 2.25]


def make_record(mi, powers, w=None, p_total=40.0, step=1, events=()):
    mi = np.asarray(mi, dtype=float)
    powers = np.asarray(powers, dtype=float)
    n = mi.size
    w = np.full(n, 1.0 / n) if w is None else np.asarray(w, dtype=float)
    return StepRecord(step=step, lam=np.sqrt(powers), powers=powers, mi=mi,
                      w=w, p_total=p_total, weighted_obj=float(w @ mi),
                      sum_mi=float(mi.sum()), events=tuple(events))


class MemoryHandle:
    """Synchronous optimizer-state handle for cycle-level tests."""

    def __init__(self, record, channels, params):
        self.record = record
        self.channels = channels
        self.params = params

    def snapshot(self):
        return self.record, self.channels, self.params

    def apply_params(self, fn):
        self.params = fn(self.params)
        return self.params


class RecordingBackend:
    """Wraps a backend and keeps every message list it was called with."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def complete(self, messages):
        self.calls.append([dict(m) for m in messages])
        return self.inner.complete(messages)


@pytest.fixture
def paper_channels():
    return ChannelState(PAPER_GAINS, NoiseModel())


@pytest.fixture
def uniform_params():
    return ControlParams.uniform(8, 40.0)


@contextmanager
def stub_chat_server(responder):
    """Serve POST /v1/chat/completions with responder(request_dict) -> (status, body).

    body may be a dict (sent as JSON) or a raw string.
    """
    requests_seen = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length)) if length else {}
            requests_seen.append({"path": self.path, "body": payload,
                                  "headers": dict(self.headers)})
            status, body = responder(requests_seen[-1])
            data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", requests_seen
    finally:
        server.shutdown()
        thread.join(timeout=5)


def chat_payload(text):
    """Minimal OpenAI-compatible completion body around `text`."""
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}
