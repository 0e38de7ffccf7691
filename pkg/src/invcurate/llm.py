"""Chat-completion clients.

Every client exposes ``complete(system, user, n) -> list[str]``. The HTTP
client talks to an OpenAI-compatible ``/chat/completions`` endpoint; the
directory and static clients serve canned responses for offline runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    pass


class LLMClient(Protocol):
    def complete(self, system: str, user: str, n: int = 1) -> list[str]: ...


@dataclass
class LLMConfig:
    base_url: str = "http://localhost:8000/v1"
    model: str = "default"
    temperature: float = 0.7
    top_p: float = 0.8
    max_tokens: int = 1024
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    max_retries: int = 4
    backoff: float = 1.0
    stub_dir: str | None = None  # canned responses keyed by prompt hash

    @classmethod
    def from_dict(cls, d: dict) -> "LLMConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown llm config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def prompt_hash(system: str, user: str) -> str:
    return hashlib.sha256(f"{system}\x00{user}".encode("utf-8")).hexdigest()[:16]


_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


def llm_complete(config: LLMConfig, system: str, user: str, n: int = 1,
                 transport: httpx.BaseTransport | None = None) -> list[str]:
    """Sample ``n`` completions, retrying transient failures with backoff.

    Raises TransportError once the retries are exhausted.
    """
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    url = config.base_url.rstrip("/") + "/chat/completions"
    messages = [{"role": "system", "content": system}, {"role": "user", "content": user}]
    out: list[str] = []
    with httpx.Client(timeout=config.timeout, transport=transport) as client:
        while len(out) < n:
            payload = {
                "model": config.model,
                "messages": messages,
                "temperature": config.temperature,
                "top_p": config.top_p,
                "max_tokens": config.max_tokens,
                "n": n - len(out),
            }
            body = _post_with_retries(client, url, headers, payload, config)
            choices = body.get("choices") or []
            if not choices:
                raise TransportError("response carried no choices")
            for ch in choices:
                out.append((ch.get("message") or {}).get("content") or "")
    return out[:n]


def _post_with_retries(client: httpx.Client, url: str, headers: dict, payload: dict,
                       config: LLMConfig) -> dict:
    last = ""
    for attempt in range(config.max_retries + 1):
        try:
            r = client.post(url, headers=headers, json=payload)
            if r.status_code == 200:
                return r.json()
            last = f"HTTP {r.status_code}: {r.text[:200]}"
            if r.status_code not in _RETRY_STATUS:
                break
        except (httpx.TransportError, json.JSONDecodeError) as exc:
            last = f"{type(exc).__name__}: {exc}"
        if attempt < config.max_retries:
            delay = config.backoff * (2 ** attempt)
            log.info("LLM request failed (%s); retrying in %.1fs", last, delay)
            time.sleep(delay)
    raise TransportError(last)


class HTTPClient:
    def __init__(self, config: LLMConfig):
        self.config = config

    def complete(self, system: str, user: str, n: int = 1) -> list[str]:
        return llm_complete(self.config, system, user, n)


class DirectoryStubClient:
    """Serves ``<dir>/<prompt-hash>.json`` (a JSON list of completions).

    Falls back to ``<dir>/default.json`` when no file matches the hash.
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    def complete(self, system: str, user: str, n: int = 1) -> list[str]:
        path = self.directory / f"{prompt_hash(system, user)}.json"
        if not path.exists():
            path = self.directory / "default.json"
        if not path.exists():
            raise TransportError(f"no canned response for prompt {prompt_hash(system, user)}")
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, str):
            data = [data]
        return [str(x) for x in data][:n]


class StaticClient:
    """Returns the same completions for every prompt."""

    def __init__(self, responses: list[str]):
        self.responses = list(responses)
        self.calls: list[tuple[str, str, int]] = []

    def complete(self, system: str, user: str, n: int = 1) -> list[str]:
        self.calls.append((system, user, n))
        return self.responses[:n]


def make_client(config: LLMConfig) -> LLMClient:
    if config.stub_dir:
        return DirectoryStubClient(config.stub_dir)
    return HTTPClient(config)


def extract_json_object(text: str) -> dict | None:
    """First JSON object embedded in ``text`` (code fences and prose allowed)."""
    decoder = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        i = text.find("{", i + 1)
    return None
