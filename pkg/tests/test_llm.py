"""Chat backend tests: wire format, error taxonomy, scripted substitutes."""

import dataclasses
import json

import numpy as np
import pytest

from conftest import MemoryHandle, chat_payload, make_record, stub_chat_server
from powersteer.llm import (
    ConnectError,
    EndpointConfig,
    EqualizerBackend,
    FuzzBackend,
    HttpChatBackend,
    HttpStatusError,
    MissingContent,
    RequestTimeout,
    SleepyBackend,
    StaticBackend,
    chat_complete,
    make_backend,
    parse_summary_rows,
)
from powersteer.navigator import GuardrailConfig, Policy, navigator_cycle, parse_action
from powersteer.state import ControlParams

MESSAGES = [{"role": "system", "content": "sys"},
            {"role": "user", "content": "state"}]


def make_cfg(base_url, **kw):
    defaults = dict(model="test-model", timeout=5.0)
    defaults.update(kw)
    return EndpointConfig(base_url=base_url, **defaults)


class TestChatComplete:
    def test_round_trip_and_wire_format(self):
        fixed = '{"weights": [0.5, 0.5]}'
        with stub_chat_server(lambda req: (200, chat_payload(fixed))) as (url, seen):
            cfg = make_cfg(url, temperature=0.3, max_tokens=2048, api_key="k123")
            out = chat_complete(cfg, MESSAGES)
        assert out == fixed
        assert len(seen) == 1  # exactly one request per call
        req = seen[0]
        assert req["path"] == "/v1/chat/completions"
        assert req["body"]["model"] == "test-model"
        assert req["body"]["temperature"] == 0.3
        assert req["body"]["max_tokens"] == 2048
        assert [m["role"] for m in req["body"]["messages"]] == ["system", "user"]
        assert req["headers"].get("Authorization") == "Bearer k123"

    def test_no_auth_header_without_key(self):
        with stub_chat_server(lambda req: (200, chat_payload("x"))) as (url, seen):
            chat_complete(make_cfg(url), MESSAGES)
        assert "Authorization" not in seen[0]["headers"]

    def test_http_500_maps_to_status_error(self):
        with stub_chat_server(lambda req: (500, {"error": "boom"})) as (url, _):
            with pytest.raises(HttpStatusError) as err:
                chat_complete(make_cfg(url), MESSAGES)
        assert err.value.code == 500

    def test_timeout_maps_to_request_timeout(self):
        def slow(req):
            import time

            time.sleep(1.0)
            return 200, chat_payload("late")

        with stub_chat_server(slow) as (url, _):
            with pytest.raises(RequestTimeout):
                chat_complete(make_cfg(url, timeout=0.2), MESSAGES)

    def test_refused_connection_maps_to_connect_error(self):
        with pytest.raises(ConnectError):
            chat_complete(make_cfg("http://127.0.0.1:9"), MESSAGES)

    def test_missing_content_detected(self):
        with stub_chat_server(lambda req: (200, {"choices": []})) as (url, _):
            with pytest.raises(MissingContent):
                chat_complete(make_cfg(url), MESSAGES)

    def test_non_string_content_rejected(self):
        body = {"choices": [{"message": {"content": None}}]}
        with stub_chat_server(lambda req: (200, body)) as (url, _):
            with pytest.raises(MissingContent):
                chat_complete(make_cfg(url), MESSAGES)

    def test_requires_two_messages(self):
        with pytest.raises(ValueError):
            chat_complete(make_cfg("http://localhost:1"), [MESSAGES[0]])


class TestStaticBackend:
    def test_p4_pattern_valid_schema(self):
        raw = StaticBackend([0, 0, 0, 0.2, 0.2, 0.2, 0.2, 0.2]).complete(MESSAGES)
        action = parse_action(raw, 8)
        assert action.weights == (0, 0, 0, 0.2, 0.2, 0.2, 0.2, 0.2)

    def test_budget_included_when_given(self):
        raw = StaticBackend([1.0], p_total=30).complete(MESSAGES)
        assert json.loads(raw)["P_total"] == 30

    def test_stable_across_calls(self):
        b = StaticBackend([0.5, 0.5])
        assert b.complete(MESSAGES) == b.complete(MESSAGES)


class TestEqualizerBackend:
    def summary_text(self, mi_values, gains):
        lines = ["Total MI = 10.00 bits, Power = 40.0 / 40.0",
                 " ch |h|^2   MI   P_i   w_i"]
        for i, (g, mi) in enumerate(zip(gains, mi_values), start=1):
            lines.append(f"{i:3d}  {g:.2f}  {mi:.2f}  5.00  0.125")
        lines.append("Policy: Equalize MI across all channels")
        return "\n".join(lines)

    def complete_for(self, mi_values, gains=None):
        gains = gains or [1.0] * len(mi_values)
        messages = [{"role": "system", "content": "s"},
                    {"role": "user", "content": self.summary_text(mi_values, gains)}]
        return parse_action(EqualizerBackend().complete(messages), len(mi_values))

    def test_equal_mi_gives_uniform(self):
        action = self.complete_for([1.5] * 8)
        assert np.allclose(action.weights, 1 / 8, atol=1e-5)

    def test_saturated_channel_gets_epsilon_share(self):
        action = self.complete_for([2.0, 1.0, 1.0, 1.0])
        w = np.array(action.weights)
        assert np.argmin(w) == 0
        assert w[0] == pytest.approx(1e-3 / (1e-3 + 3.0), abs=1e-4)

    def test_weak_channels_boosted_on_reference_gains(self):
        # Near a sum-rate optimum, low-gain channels sit furthest below
        # saturation, so the equalizer must rank channel 1 highest and
        # channel 8 lowest.
        mi = [1.39, 1.57, 1.68, 1.75, 1.80, 1.84, 1.89, 1.93]
        gains = [0.25, 0.36, 0.49, 0.64, 0.81, 1.0, 1.44, 2.25]
        action = self.complete_for(mi, gains)
        w = np.array(action.weights)
        assert np.argmax(w) == 0
        assert np.argmin(w) == 7

    def test_summary_row_parser(self):
        text = self.summary_text([0.5, 1.5], [0.25, 2.25])
        rows = parse_summary_rows(text)
        assert rows == [(1, 0.25, 0.5, 5.0, 0.125), (2, 2.25, 1.5, 5.0, 0.125)]


class TestFuzzBackend:
    def test_deterministic_sequence_per_seed(self):
        a = FuzzBackend(seed=9, n=8)
        b = FuzzBackend(seed=9, n=8)
        seq_a = [a.complete(MESSAGES) for _ in range(24)]
        seq_b = [b.complete(MESSAGES) for _ in range(24)]
        assert seq_a == seq_b
        assert len(set(seq_a)) > 5

    def test_rotation_covers_documented_classes(self):
        b = FuzzBackend(seed=0, n=8)
        outs = [b.complete(MESSAGES) for _ in range(12)]
        assert "{" not in outs[0]                      # prose, no JSON
        assert outs[1].count("{") > outs[1].count("}")  # truncated
        assert "priorities" in outs[2]                  # missing weights
        assert "NaN" in outs[6]
        assert "1e+308" in outs[7]

    def test_giant_magnitudes_survive_sanitization(self, paper_channels):
        record = make_record([1.0] * 8, [5.0] * 8)
        handle = MemoryHandle(record, paper_channels, ControlParams.uniform(8, 40.0))
        b = FuzzBackend(seed=0, n=8)
        for _ in range(8):
            raw = b.complete(MESSAGES)
        assert "1e+308" in raw

        class Replay:
            def complete(self, messages):
                return raw

        entry = navigator_cycle(handle, Policy("p"), Replay(),
                                GuardrailConfig(n_expected=8))
        assert entry.status == "applied"
        w = handle.params.w
        assert np.all(np.isfinite(w)) and w.sum() == pytest.approx(1.0, abs=1e-9)


class TestSubstitutionTransparency:
    def test_http_and_in_process_backends_produce_same_log(self, paper_channels):
        """The navigator only sees returned text, so an HTTP backend and an
        in-process backend with the same payload must yield identical log
        entries up to timestamps."""
        payload = json.dumps({"weights": [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2],
                              "reasoning": "boost the strong pair"})
        record = make_record(np.linspace(0.4, 1.9, 8), [5.0] * 8)
        cfg = GuardrailConfig(n_expected=8)
        entries = {}
        with stub_chat_server(lambda req: (200, chat_payload(payload))) as (url, _):
            handle = MemoryHandle(record, paper_channels, ControlParams.uniform(8, 40.0))
            entries["http"] = navigator_cycle(
                handle, Policy("p"), HttpChatBackend(make_cfg(url)), cfg,
                clock=lambda: 0.0)

        class Inline:
            def complete(self, messages):
                return payload

        handle = MemoryHandle(record, paper_channels, ControlParams.uniform(8, 40.0))
        entries["inline"] = navigator_cycle(handle, Policy("p"), Inline(), cfg,
                                            clock=lambda: 0.0)
        a = dataclasses.replace(entries["http"], timestamp=0.0)
        b = dataclasses.replace(entries["inline"], timestamp=0.0)
        assert a == b


class TestSleepyBackend:
    def test_delegates_after_delay(self):
        import time

        b = SleepyBackend(0.1, StaticBackend([1.0]))
        t0 = time.monotonic()
        out = b.complete(MESSAGES)
        assert time.monotonic() - t0 >= 0.1
        assert json.loads(out)["weights"] == [1.0]


class TestMakeBackend:
    def test_selectors(self, tmp_path):
        assert make_backend("none") is None
        assert isinstance(make_backend("equalizer"), EqualizerBackend)
        assert isinstance(make_backend("fuzz", seed=3), FuzzBackend)
        spec = tmp_path / "pattern.json"
        spec.write_text(json.dumps({"weights": [0.5, 0.5], "P_total": 30}))
        b = make_backend(f"static:{spec}")
        assert json.loads(b.complete(MESSAGES))["P_total"] == 30.0
        live = make_backend("live", EndpointConfig(base_url="http://x", model="m"))
        assert isinstance(live, HttpChatBackend)
        with pytest.raises(ValueError):
            make_backend("nonsense")
        with pytest.raises(ValueError):
            make_backend("live")
