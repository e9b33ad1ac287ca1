import json
import os

import pytest

from mobanom.core import AuthError, ConfigError, EndpointError, LabelEntry, LabelSet
from mobanom.evaluation import roc_auc
from mobanom.llm import (
    LlmEndpointConfig,
    MockEndpoint,
    OracleMockEndpoint,
    PromptCache,
    dump_prompts,
    endpoint_from_config,
    run_llm_detection,
)
from mobanom.llm.client import HttpChatEndpoint, build_bundles
from mobanom.simulator import SimConfig, simulate

SMALL = SimConfig(n_agents=12, weeks=1, n_hunger=2, n_social=0, n_work=1, seed=2)


@pytest.fixture(scope="module")
def sim():
    return simulate(SMALL)


class TestMocks:
    def test_constant_mock_passthrough(self, sim):
        endpoint = MockEndpoint(lambda b: "[0.85]")
        table = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint)
        assert set(table.scores) == set(sim.dataset.agent_ids())
        assert all(s == 0.85 for s in table.scores.values())
        assert endpoint.calls == len(sim.dataset.trajectories)

    def test_oracle_mock_gives_perfect_auc(self, sim):
        endpoint = OracleMockEndpoint(sim.labels)
        table = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint)
        assert roc_auc(table, sim.labels) == 1.0

    def test_oracle_mock_combine(self, sim):
        endpoint = OracleMockEndpoint(sim.labels)
        table = run_llm_detection(sim.dataset, sim.labels, "combine", endpoint)
        assert roc_auc(table, sim.labels) == 1.0

    def test_hint_modes_render(self, sim):
        endpoint = OracleMockEndpoint(sim.labels)
        for mode in ("separate-hint", "combine-hint"):
            table = run_llm_detection(sim.dataset, sim.labels, mode, endpoint)
            assert roc_auc(table, sim.labels) == 1.0


class TestCache:
    def test_warm_cache_issues_zero_calls(self, sim, tmp_path):
        cache_dir = str(tmp_path / "cache")
        endpoint = OracleMockEndpoint(sim.labels)
        t1 = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint, cache_dir=cache_dir)
        first_calls = endpoint.calls
        assert first_calls == len(sim.dataset.trajectories)
        t2 = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint, cache_dir=cache_dir)
        assert endpoint.calls == first_calls  # all served from disk
        assert t1.scores == t2.scores

    def test_cache_file_shape(self, sim, tmp_path):
        cache_dir = str(tmp_path / "cache")
        endpoint = OracleMockEndpoint(sim.labels)
        run_llm_detection(sim.dataset, sim.labels, "separate", endpoint, cache_dir=cache_dir)
        files = [f for f in os.listdir(cache_dir) if f.endswith(".json")]
        assert len(files) == len(sim.dataset.trajectories)
        with open(os.path.join(cache_dir, files[0])) as fh:
            obj = json.load(fh)
        assert {"request", "raw_response", "timestamp"} <= set(obj)

    def test_key_depends_on_model_and_template(self):
        k1 = PromptCache.key("m1", "paper-v1", "text")
        k2 = PromptCache.key("m2", "paper-v1", "text")
        k3 = PromptCache.key("m1", "clean-v1", "text")
        assert len({k1, k2, k3}) == 3


class TestFailureHandling:
    def test_unparseable_answers_omitted(self, sim):
        endpoint = MockEndpoint(lambda b: "I cannot answer that.")
        table = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint)
        assert table.scores == {}
        assert set(table.omitted) == set(sim.dataset.agent_ids())
        assert all("parse error" in reason for reason in table.omitted.values())

    def test_endpoint_error_omits_agents(self, sim):
        def flaky(bundle):
            raise EndpointError("boom")

        class Raising(MockEndpoint):
            def complete(self, bundle):
                raise EndpointError("boom")

        table = run_llm_detection(sim.dataset, sim.labels, "separate", Raising(flaky))
        assert table.scores == {}
        assert all("endpoint error" in r for r in table.omitted.values())

    def test_auth_error_is_fatal(self, sim):
        class Unauthorized(MockEndpoint):
            def complete(self, bundle):
                raise AuthError("bad token")

        with pytest.raises(AuthError):
            run_llm_detection(sim.dataset, sim.labels, "separate", Unauthorized(None))

    def test_partial_combine_parse_keeps_resolved(self, sim):
        def drop_first(bundle):
            lines = [
                f"user {i}: [0.5]" for i in range(2, len(bundle.agent_ids) + 1)
            ]
            return "\n".join(lines)

        endpoint = MockEndpoint(drop_first)
        table = run_llm_detection(sim.dataset, sim.labels, "combine", endpoint)
        assert len(table.scores) == len(sim.dataset.trajectories) - 1
        assert len(table.omitted) == 1


class TestBundling:
    def test_combine_char_budget_splits_batches(self, sim):
        bundles = build_bundles(sim.dataset, sim.labels, "combine", combine_char_budget=4000)
        assert len(bundles) > 1
        covered = [a for b in bundles for a in b.agent_ids]
        assert covered == sim.dataset.agent_ids()  # contiguous ranges, no overlap

    def test_concurrent_dispatch_deterministic(self, sim):
        endpoint = MockEndpoint(lambda b: "[0.4]")
        t1 = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint, max_concurrent=4)
        t2 = run_llm_detection(sim.dataset, sim.labels, "separate", endpoint, max_concurrent=1)
        assert t1.scores == t2.scores


class TestDumpPrompts:
    def test_dump_writes_files_without_endpoint(self, sim, tmp_path):
        out = str(tmp_path / "prompts")
        paths = dump_prompts(sim.dataset, sim.labels, "separate-hint", out)
        assert len(paths) == len(sim.dataset.trajectories)
        index_path = os.path.join(out, "prompts_index.jsonl")
        assert os.path.exists(index_path)
        with open(paths[0]) as fh:
            text = fh.read()
        assert "***<deviate-point>***" in text


class TestHttpEndpoint:
    def test_unknown_provider(self):
        with pytest.raises(ConfigError):
            HttpChatEndpoint(LlmEndpointConfig(provider="carrier-pigeon"))

    def test_missing_token_raises_auth(self, sim, monkeypatch):
        monkeypatch.delenv("LLM_API_TOKEN", raising=False)
        config = LlmEndpointConfig(base_url="https://example.invalid", provider="openai",
                                   model_name="m", max_retries=0)
        endpoint = HttpChatEndpoint(config)
        bundles = build_bundles(sim.dataset, sim.labels, "separate")
        with pytest.raises(AuthError):
            endpoint.complete(bundles[0])

    def test_retry_then_success(self, sim, monkeypatch):
        monkeypatch.setenv("LLM_API_TOKEN", "token")
        config = LlmEndpointConfig(base_url="https://api.test", provider="openai",
                                   model_name="m", max_retries=2)
        endpoint = HttpChatEndpoint(config)
        attempts = {"n": 0}

        class Resp:
            def __init__(self, code, body=None):
                self.status_code = code
                self.text = "err"
                self._body = body

            def json(self):
                return self._body

        def fake_post(url, json=None, headers=None, timeout=None):
            attempts["n"] += 1
            if attempts["n"] < 3:
                return Resp(503)
            return Resp(200, {"choices": [{"message": {"content": "[0.6]"}}],
                              "usage": {"prompt_tokens": 10, "completion_tokens": 5}})

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        monkeypatch.setattr("time.sleep", lambda s: None)
        bundles = build_bundles(sim.dataset, sim.labels, "separate")
        answer = endpoint.complete(bundles[0])
        assert answer.raw_text == "[0.6]"
        assert answer.request_tokens == 10
        assert attempts["n"] == 3

    def test_retries_exhausted(self, sim, monkeypatch):
        monkeypatch.setenv("LLM_API_TOKEN", "token")
        config = LlmEndpointConfig(base_url="https://api.test", provider="anthropic",
                                   model_name="m", max_retries=1)
        endpoint = HttpChatEndpoint(config)

        class Resp:
            status_code = 500
            text = "oops"

        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: Resp())
        monkeypatch.setattr("time.sleep", lambda s: None)
        bundles = build_bundles(sim.dataset, sim.labels, "separate")
        with pytest.raises(EndpointError):
            endpoint.complete(bundles[0])

    def test_auth_http_codes_fatal(self, sim, monkeypatch):
        monkeypatch.setenv("LLM_API_TOKEN", "token")
        config = LlmEndpointConfig(base_url="https://api.test", provider="openai", model_name="m")
        endpoint = HttpChatEndpoint(config)

        class Resp:
            status_code = 401
            text = "who are you"

        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: Resp())
        bundles = build_bundles(sim.dataset, sim.labels, "separate")
        with pytest.raises(AuthError):
            endpoint.complete(bundles[0])

    def test_endpoint_from_config(self, sim):
        assert isinstance(endpoint_from_config(LlmEndpointConfig(provider="openai")), HttpChatEndpoint)
        mock = endpoint_from_config(LlmEndpointConfig(provider="mock-constant", mock_text="[0.3]"))
        assert isinstance(mock, MockEndpoint)
        oracle = endpoint_from_config(LlmEndpointConfig(provider="mock-oracle"), labels=sim.labels)
        assert isinstance(oracle, OracleMockEndpoint)
        with pytest.raises(ConfigError):
            endpoint_from_config(LlmEndpointConfig(provider="mock-oracle"))
