from .backends import (
    ModelBackend,
    RemoteBackend,
    ScriptedBackend,
    ask,
    backends_from_env,
    parse_backend,
    query,
    query_all,
)
from .prompt import (
    Prompt,
    PromptKind,
    build_prompt,
    build_reflection_prompt,
    build_summary_prompt,
)
from .response import ModelOutput, parse_model_response, render_model_output

__all__ = [
    "ModelBackend",
    "ModelOutput",
    "Prompt",
    "PromptKind",
    "RemoteBackend",
    "ScriptedBackend",
    "ask",
    "backends_from_env",
    "build_prompt",
    "build_reflection_prompt",
    "build_summary_prompt",
    "parse_backend",
    "parse_model_response",
    "query",
    "query_all",
    "render_model_output",
]
