"""Prompt rendering, score parsing, and the chat-completion client harness."""

from .prompts import (
    MODES,
    PromptBundle,
    build_prompt,
    parse_combine_scores,
    parse_separate_score,
    render_stay_sequence,
)
from .client import (
    HttpChatEndpoint,
    LlmAnswer,
    LlmEndpointConfig,
    MockEndpoint,
    OracleMockEndpoint,
    PromptCache,
    dump_prompts,
    endpoint_from_config,
    run_llm_detection,
)

__all__ = [
    "MODES",
    "PromptBundle",
    "render_stay_sequence",
    "build_prompt",
    "parse_separate_score",
    "parse_combine_scores",
    "LlmEndpointConfig",
    "LlmAnswer",
    "HttpChatEndpoint",
    "MockEndpoint",
    "OracleMockEndpoint",
    "PromptCache",
    "endpoint_from_config",
    "run_llm_detection",
    "dump_prompts",
]
