"""Model backends: OpenAI-compatible chat endpoints and deterministic scripted replies."""
from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import httpx

from ..errors import ConfigError, NoJsonError, SchemaError, TransportError
from .prompt import Prompt
from .response import ModelOutput, extract_json_object, parse_model_response

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class ModelBackend:
    kind = "abstract"

    def __init__(self, id: str):
        self.id = id

    def complete(self, prompt: Prompt, timeout: float) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.id!r})"


class RemoteBackend(ModelBackend):
    """Chat-completions style HTTP endpoint (OpenAI and compatible servers)."""

    kind = "REMOTE_API"

    def __init__(self, id: str, url: str, model: Optional[str] = None, api_key: Optional[str] = None,
                 client: Optional[httpx.Client] = None):
        super().__init__(id)
        url = url.rstrip("/")
        self.url = url if url.endswith("/chat/completions") else url + "/chat/completions"
        self.model = model or id
        self.api_key = api_key
        self._client = client

    def complete(self, prompt: Prompt, timeout: float) -> str:
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_text()},
                {"role": "user", "content": prompt.user_text()},
            ],
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            if self._client is not None:
                resp = self._client.post(self.url, json=body, headers=headers, timeout=timeout)
            else:
                with httpx.Client() as client:
                    resp = client.post(self.url, json=body, headers=headers, timeout=timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.TimeoutException as exc:
            raise TimeoutError(f"{self.id}: timed out after {timeout}s") from exc
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{self.id}: {exc}") from exc


Reply = Union[str, dict]
Responder = Callable[[Prompt, int], str]


class ScriptedBackend(ModelBackend):
    """Replies are a pure function of (prompt, round).

    Built either from a callable or from a script document::

        {"id": "analyst-a",
         "rules": [{"contains": "drainer", "kind": "analyze", "replies": [r0, r1]}],
         "default": r}

    Rules are tried in order; ``contains`` (substring) or ``regex`` is matched
    against the rendered prompt and ``kind`` optionally restricts the prompt
    type. ``replies`` is indexed by round, the last entry repeating. A reply
    is a JSON object (sent as JSON text), a raw string, or
    ``{"$error": "transport"}`` to simulate a failure.
    """

    kind = "SCRIPTED"

    def __init__(self, id: str, responder: Union[Responder, Mapping]):
        super().__init__(id)
        if callable(responder):
            self._responder = responder
        else:
            self._script = _check_script(responder)
            self._responder = self._from_script

    @classmethod
    def from_file(cls, path: str | Path, id: Optional[str] = None) -> "ScriptedBackend":
        path = Path(path)
        try:
            script = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scripted model {path}: {exc}") from None
        return cls(id or script.get("id") or path.stem, script)

    def _from_script(self, prompt: Prompt, round: int) -> str:
        text = prompt.render()
        for rule in self._script.get("rules", []):
            if "kind" in rule and rule["kind"] != prompt.kind.value:
                continue
            if "contains" in rule and rule["contains"] not in text:
                continue
            if "regex" in rule and not re.search(rule["regex"], text):
                continue
            return _pick(rule, round)
        if "default" not in self._script:
            raise TransportError(f"{self.id}: no scripted reply for this prompt")
        return _pick({"replies": self._script["default"]}, round)

    def complete(self, prompt: Prompt, timeout: float) -> str:
        return self._responder(prompt, prompt.round)


def _check_script(script: Mapping) -> Mapping:
    if not isinstance(script, Mapping) or not ("rules" in script or "default" in script):
        raise ConfigError("scripted model needs 'rules' and/or 'default'")
    for i, rule in enumerate(script.get("rules", [])):
        if "replies" not in rule and "reply" not in rule:
            raise ConfigError(f"rule #{i} has no replies")
    return script


def _pick(rule: Mapping, round: int) -> str:
    replies = rule.get("replies", rule.get("reply"))
    if not isinstance(replies, list):
        replies = [replies]
    reply = replies[min(round, len(replies) - 1)]
    if isinstance(reply, dict):
        if "$error" in reply:
            raise TransportError(f"scripted failure: {reply['$error']}")
        return json.dumps(reply)
    return str(reply)


def query(backend: ModelBackend, prompt: Prompt, timeout: float = DEFAULT_TIMEOUT) -> str:
    """Ask ``backend`` once, retrying once on transport failure or a reply without JSON."""
    last: Exception | None = None
    for attempt in (1, 2):
        try:
            raw = backend.complete(prompt, timeout)
            extract_json_object(raw)
            return raw
        except (TransportError, NoJsonError) as exc:
            last = exc
            log.warning("%s attempt %d failed: %s", backend.id, attempt, exc)
    assert last is not None
    raise last


def ask(backend: ModelBackend, prompt: Prompt, timeout: float = DEFAULT_TIMEOUT) -> ModelOutput:
    """Query and parse, with one retry when the reply is unusable."""
    last: Exception | None = None
    for attempt in (1, 2):
        try:
            return parse_model_response(backend.complete(prompt, timeout), backend.id)
        except (TransportError, NoJsonError, SchemaError) as exc:
            last = exc
            log.warning("%s attempt %d failed: %s", backend.id, attempt, exc)
    assert last is not None
    raise last


def query_all(
    calls: Sequence[tuple[ModelBackend, Prompt]],
    timeout: float = DEFAULT_TIMEOUT,
) -> list[Union[str, Exception]]:
    """Query several backends concurrently; each slot holds the reply or the exception."""
    if not calls:
        return []

    def one(call):
        backend, prompt = call
        try:
            return query(backend, prompt, timeout)
        except Exception as exc:  # reported per slot
            return exc

    with ThreadPoolExecutor(max_workers=len(calls)) as pool:
        return list(pool.map(one, calls))


def parse_backend(descriptor: str, index: int = 1, env: Optional[Mapping[str, str]] = None) -> ModelBackend:
    """Build a backend from ``remote:<name>@<url>`` or ``scripted:<path>``."""
    env = os.environ if env is None else env
    kind, sep, rest = descriptor.strip().partition(":")
    if not sep or not rest:
        raise ConfigError(f"bad model descriptor {descriptor!r}")
    if kind == "scripted":
        return ScriptedBackend.from_file(rest)
    if kind == "remote":
        name, at, url = rest.partition("@")
        if not at or not name or not url.startswith(("http://", "https://")):
            raise ConfigError(f"remote model descriptor must be remote:<name>@<url>, got {descriptor!r}")
        key_name = re.sub(r"[^A-Z0-9]", "_", name.upper())
        api_key = env.get(f"MODEL_API_KEY_{index}") or env.get(f"MODEL_API_KEY_{key_name}") or env.get("MODEL_API_KEY")
        return RemoteBackend(name, url, model=name, api_key=api_key)
    raise ConfigError(f"unknown model backend kind {kind!r}")


def backends_from_env(env: Optional[Mapping[str, str]] = None) -> list[ModelBackend]:
    env = os.environ if env is None else env
    out = []
    i = 1
    while f"MODEL_{i}" in env:
        out.append(parse_backend(env[f"MODEL_{i}"], i, env))
        i += 1
    return dedupe_ids(out)


def dedupe_ids(backends: Sequence[ModelBackend]) -> list[ModelBackend]:
    seen: dict[str, int] = {}
    for b in backends:
        n = seen.get(b.id, 0)
        seen[b.id] = n + 1
        if n:
            b.id = f"{b.id}#{n + 1}"
    return list(backends)


__all__ = [
    "ModelBackend",
    "RemoteBackend",
    "ScriptedBackend",
    "ask",
    "backends_from_env",
    "parse_backend",
    "query",
    "query_all",
]
