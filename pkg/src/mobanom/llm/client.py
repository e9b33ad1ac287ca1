"""Chat-completion dispatch with disk caching, retries, and mock endpoints.

Real requests go over HTTPS to an OpenAI- or Anthropic-shaped chat endpoint
(selected by the ``provider`` tag); the bearer token is read from an
environment variable, never from files or flags.  Every answer is cached on
disk keyed by SHA-256 of (model name, template version, prompt text), so
reruns are free, deterministic, and auditable.  Mock endpoints make the whole
pipeline runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..core import (
    AuthError,
    ConfigError,
    Dataset,
    EndpointError,
    LabelSet,
    PartialParseError,
    ScoreParseError,
    params_hash,
)
from ..detectors.features import SplitSpec
from ..evaluation import ScoreTable
from .prompts import PromptBundle, build_prompt, normalize_mode, parse_combine_scores, parse_separate_score


@dataclass
class LlmEndpointConfig:
    base_url: str = ""
    model_name: str = "mock"
    provider: str = "openai"  # openai | anthropic | mock-constant | mock-oracle
    auth_token_env_var: str = "LLM_API_TOKEN"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    request_timeout_s: float = 60.0
    max_retries: int = 3
    max_concurrent_requests: int = 2
    cache_dir: str | None = None
    mock_text: str = "[0.5]"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ConfigError("max_concurrent_requests must be >= 1")

    @classmethod
    def from_json_file(cls, path: str) -> "LlmEndpointConfig":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class LlmAnswer:
    raw_text: str
    parsed_scores: dict[str, float] = field(default_factory=dict)
    request_tokens: int | None = None
    response_tokens: int | None = None
    latency_s: float = 0.0
    from_cache: bool = False


class MockEndpoint:
    """Answers via a callable on the bundle; counts how often it is hit."""

    def __init__(self, fn, name: str = "mock"):
        self.fn = fn
        self.name = name
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, bundle: PromptBundle) -> LlmAnswer:
        with self._lock:
            self.calls += 1
        return LlmAnswer(raw_text=self.fn(bundle))


class OracleMockEndpoint(MockEndpoint):
    """Mock that knows the ground truth; useful for end-to-end plumbing tests."""

    def __init__(self, labels: LabelSet, outlier_text: str = "[0.9]", normal_text: str = "[0.1]"):
        def fn(bundle: PromptBundle) -> str:
            def answer(agent_id: str) -> str:
                e = labels.entries.get(agent_id)
                return outlier_text if (e is not None and e.is_outlier) else normal_text

            if bundle.mode.startswith("separate"):
                return answer(bundle.agent_ids[0])
            return "\n".join(
                f"user {i}: {answer(agent_id)}" for i, agent_id in enumerate(bundle.agent_ids, start=1)
            )

        super().__init__(fn, name="mock-oracle")


class HttpChatEndpoint:
    """JSON chat-completion over HTTPS with bounded retries."""

    def __init__(self, config: LlmEndpointConfig):
        if config.provider not in ("openai", "anthropic"):
            raise ConfigError(f"unknown provider {config.provider!r}")
        self.config = config
        self.name = config.model_name
        self.calls = 0

    def _token(self) -> str:
        token = os.environ.get(self.config.auth_token_env_var, "")
        if not token:
            raise AuthError(
                f"auth token environment variable {self.config.auth_token_env_var!r} is empty"
            )
        return token

    def _request(self, prompt: str) -> tuple[dict, dict, str]:
        cfg = self.config
        if cfg.provider == "openai":
            url = cfg.base_url.rstrip("/") + "/chat/completions"
            headers = {"Authorization": f"Bearer {self._token()}"}
            payload = {
                "model": cfg.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": cfg.temperature,
                "max_tokens": cfg.max_output_tokens,
            }
        else:
            url = cfg.base_url.rstrip("/") + "/v1/messages"
            headers = {"x-api-key": self._token(), "anthropic-version": "2023-06-01"}
            payload = {
                "model": cfg.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": cfg.temperature,
                "max_tokens": cfg.max_output_tokens,
            }
        return payload, headers, url

    def _extract(self, body: dict) -> tuple[str, int | None, int | None]:
        if self.config.provider == "openai":
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            return text, usage.get("prompt_tokens"), usage.get("completion_tokens")
        text = body["content"][0]["text"]
        usage = body.get("usage", {})
        return text, usage.get("input_tokens"), usage.get("output_tokens")

    def complete(self, bundle: PromptBundle) -> LlmAnswer:
        import requests

        payload, headers, url = self._request(bundle.text)
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(min(30.0, 0.5 * 2**attempt))
            started = time.monotonic()
            try:
                self.calls += 1
                resp = requests.post(url, json=payload, headers=headers, timeout=self.config.request_timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = EndpointError(f"transient HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            text, req_tokens, resp_tokens = self._extract(resp.json())
            return LlmAnswer(
                raw_text=text,
                request_tokens=req_tokens,
                response_tokens=resp_tokens,
                latency_s=time.monotonic() - started,
            )
        raise EndpointError(f"request failed after {self.config.max_retries + 1} attempts: {last_error}")


class PromptCache:
    """Disk cache ``<cache_dir>/<sha256>.json`` holding request and raw answer."""

    def __init__(self, cache_dir: str):
        self.cache_dir = cache_dir
        os.makedirs(cache_dir, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(model_name: str, template_version: str, prompt: str) -> str:
        blob = f"{model_name}\x00{template_version}\x00{prompt}".encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.cache_dir, key + ".json")

    def get(self, key: str) -> str | None:
        path = self._path(key)
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)["raw_response"]

    def put(self, key: str, request: dict, raw_response: str) -> None:
        with self._lock:
            with open(self._path(key), "w", encoding="utf-8") as fh:
                json.dump(
                    {"request": request, "raw_response": raw_response, "timestamp": time.time()},
                    fh,
                )


def endpoint_from_config(config: LlmEndpointConfig, labels: LabelSet | None = None):
    """Instantiate the endpoint selected by the provider tag."""
    if config.provider in ("openai", "anthropic"):
        return HttpChatEndpoint(config)
    if config.provider == "mock-constant":
        ep = MockEndpoint(lambda bundle: config.mock_text, name=config.model_name)
        return ep
    if config.provider == "mock-oracle":
        if labels is None:
            raise ConfigError("mock-oracle provider needs labels")
        return OracleMockEndpoint(labels)
    raise ConfigError(f"unknown provider {config.provider!r}")


def build_bundles(
    ds: Dataset,
    labels: LabelSet,
    mode: str,
    template_version: str = "paper-v1",
    combine_char_budget: int = 60_000,
    split: SplitSpec | None = None,
) -> list[PromptBundle]:
    """Render all prompts for a dataset without touching any endpoint.

    Hint modes mark labeled outliers at their deviate index and everyone else
    at the train/test split fallback, mirroring what the comparison detectors
    are given.
    """
    mode = normalize_mode(mode)
    deviate_indices: dict[str, int] = {}
    if mode.endswith("_hint"):
        if split is None:
            split = SplitSpec.from_labels(ds, labels)
        deviate_indices = {
            t.agent_id: min(split.split_index[t.agent_id], max(0, len(t.points) - 1))
            for t in ds.trajectories
        }

    nonempty = [t for t in ds.trajectories if t.points]
    if mode.startswith("separate"):
        return [build_prompt(mode, [t], deviate_indices, template_version) for t in nonempty]

    bundles = []
    batch = []
    batch_chars = 0
    for t in nonempty:
        probe = build_prompt("separate", [t], {}, template_version)
        cost = len(probe.text)
        if batch and batch_chars + cost > combine_char_budget:
            bundles.append(build_prompt(mode, batch, deviate_indices, template_version))
            batch = []
            batch_chars = 0
        batch.append(t)
        batch_chars += cost
    if batch:
        bundles.append(build_prompt(mode, batch, deviate_indices, template_version))
    return bundles


def run_llm_detection(
    ds: Dataset,
    labels: LabelSet,
    mode: str,
    endpoint,
    template_version: str = "paper-v1",
    cache_dir: str | None = None,
    max_concurrent: int = 2,
    combine_char_budget: int = 60_000,
    split: SplitSpec | None = None,
) -> ScoreTable:
    """Prompt, dispatch (with caching), and parse into a ScoreTable.

    Transient endpoint failures are retried inside the endpoint; agents whose
    answers cannot be parsed are omitted with a reason.  Auth failures abort
    the run.
    """
    mode = normalize_mode(mode)
    bundles = build_bundles(ds, labels, mode, template_version, combine_char_budget, split)
    cache = PromptCache(cache_dir) if cache_dir else None
    model_name = getattr(endpoint, "name", "unknown")

    def fetch(bundle: PromptBundle) -> tuple[str, bool]:
        key = PromptCache.key(model_name, template_version, bundle.text) if cache else ""
        if cache:
            hit = cache.get(key)
            if hit is not None:
                return hit, True
        answer = endpoint.complete(bundle)
        if cache:
            cache.put(key, {"model": model_name, "template_version": template_version,
                            "prompt": bundle.text}, answer.raw_text)
        return answer.raw_text, False

    raw_answers: list[str | Exception] = [""] * len(bundles)
    with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
        futures = {pool.submit(fetch, b): i for i, b in enumerate(bundles)}
        for future, i in futures.items():
            try:
                raw_answers[i] = future.result()[0]
            except AuthError:
                raise
            except EndpointError as exc:
                raw_answers[i] = exc

    scores: dict[str, float] = {}
    omitted: dict[str, str] = {}
    for t in ds.trajectories:
        if not t.points:
            omitted[t.agent_id] = "empty trajectory"
    for bundle, raw in zip(bundles, raw_answers):
        if isinstance(raw, Exception):
            for agent_id in bundle.agent_ids:
                omitted[agent_id] = f"endpoint error: {raw}"
            continue
        if bundle.mode.startswith("separate"):
            try:
                scores[bundle.agent_ids[0]] = parse_separate_score(raw)
            except ScoreParseError as exc:
                omitted[bundle.agent_ids[0]] = f"parse error: {exc}"
        else:
            try:
                scores.update(parse_combine_scores(raw, bundle.agent_ids))
            except PartialParseError as exc:
                scores.update(exc.resolved)
                for agent_id in exc.unresolved:
                    omitted[agent_id] = "parse error: no score resolved"

    return ScoreTable(
        detector=f"llm_{mode}",
        scores=scores,
        params_hash=params_hash(
            {"mode": mode, "template_version": template_version, "model": model_name}
        ),
        omitted=omitted,
    )


def dump_prompts(
    ds: Dataset,
    labels: LabelSet,
    mode: str,
    out_dir: str,
    template_version: str = "paper-v1",
    combine_char_budget: int = 60_000,
    split: SplitSpec | None = None,
) -> list[str]:
    """Write every PromptBundle to disk without calling any endpoint."""
    bundles = build_bundles(ds, labels, mode, template_version, combine_char_budget, split)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    index = []
    for i, bundle in enumerate(bundles):
        name = f"prompt_{i:04d}.txt"
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(bundle.text)
        index.append(
            {
                "file": name,
                "mode": bundle.mode,
                "template_version": bundle.template_version,
                "agent_ids": bundle.agent_ids,
            }
        )
        paths.append(path)
    with open(os.path.join(out_dir, "prompts_index.jsonl"), "w", encoding="utf-8", newline="") as fh:
        for row in index:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    return paths
