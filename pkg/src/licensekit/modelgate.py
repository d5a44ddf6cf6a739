"""Uniform gateway to chat-completion and embedding endpoints.

Every request is identified by a stable fingerprint of (model id, rendered
prompt, sampling params). A live backend speaks the common chat-completion
wire shape over HTTPS with retries and client-side latency capture; a
record backend persists every answer keyed by fingerprint; a replay
backend answers from such a store only, so a recorded run is
bit-reproducible on any machine with no network at all.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .prompts import RenderedPrompt


class GateError(Exception):
    """Base class for model-gateway failures."""


class ConfigurationError(GateError):
    pass


class TransportError(GateError):
    """Network-level failure after exhausting retries."""


class ProtocolError(GateError):
    """The endpoint answered, but not with a usable completion."""


class ReplayMissError(GateError):
    """A fingerprint was not found in the replay store."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout_s: float = 60.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ConfigurationError("max_tokens must be positive")
        if self.timeout_s <= 0:
            raise ConfigurationError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")


@dataclass(frozen=True)
class ModelEndpointConfig:
    model_id: str
    base_url: str = ""
    auth_env: str | None = None
    params: GenerationParams = field(default_factory=GenerationParams)
    parameter_count_b: float | None = None  # documentation only

    def credential(self) -> str | None:
        if not self.auth_env:
            return None
        value = os.environ.get(self.auth_env)
        if value is None:
            raise ConfigurationError(
                f"model {self.model_id!r}: credential env var {self.auth_env!r} is not set"
            )
        return value


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency_s: float
    model_id: str
    request_fingerprint: str


def completion_fingerprint(model_id: str, system_text: str, user_text: str, params: GenerationParams) -> str:
    payload = json.dumps(
        [model_id, system_text, user_text, {"temperature": params.temperature, "max_tokens": params.max_tokens}],
        ensure_ascii=False,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def embedding_fingerprint(model_id: str, text: str) -> str:
    payload = json.dumps(["embed", model_id, text], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_registry(path: str | Path) -> dict[str, ModelEndpointConfig]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    registry: dict[str, ModelEndpointConfig] = {}
    for entry in doc.get("models", []):
        params = entry.get("params", {})
        config = ModelEndpointConfig(
            model_id=entry["model_id"],
            base_url=entry.get("base_url", ""),
            auth_env=entry.get("auth_env"),
            params=GenerationParams(
                temperature=params.get("temperature", 0.0),
                max_tokens=params.get("max_tokens", 1024),
                timeout_s=params.get("timeout_s", 60.0),
                max_retries=params.get("max_retries", 2),
            ),
            parameter_count_b=entry.get("parameter_count_b"),
        )
        if config.model_id in registry:
            raise ConfigurationError(f"duplicate model_id {config.model_id!r} in registry")
        registry[config.model_id] = config
    return registry


class LiveBackend:
    """Talks to real endpoints. Latency covers the final successful attempt."""

    def __init__(self, transport: httpx.BaseTransport | None = None, backoff_base_s: float = 0.5):
        self._client = httpx.Client(transport=transport)
        self._backoff_base_s = backoff_base_s

    def close(self) -> None:
        self._client.close()

    def complete(self, config: ModelEndpointConfig, prompt: RenderedPrompt) -> ModelResponse:
        token = config.credential()
        fp = completion_fingerprint(config.model_id, prompt.system_text, prompt.user_text, config.params)
        body = {
            "model": config.model_id,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "temperature": config.params.temperature,
            "max_tokens": config.params.max_tokens,
        }
        data, latency = self._post(config, "/chat/completions", body, token)
        return ModelResponse(
            text=_completion_text(data),
            latency_s=latency,
            model_id=config.model_id,
            request_fingerprint=fp,
        )

    def embed(self, config: ModelEndpointConfig, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        token = config.credential()
        data, _ = self._post(config, "/embeddings", {"model": config.model_id, "input": text}, token)
        embedding = data.get("embedding")
        if not isinstance(embedding, list):
            raise ProtocolError(f"model {config.model_id!r}: response has no 'embedding' array")
        return [float(v) for v in embedding]

    def _post(self, config: ModelEndpointConfig, route: str, body: dict, token: str | None):
        url = config.base_url.rstrip("/") + route
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        attempts = config.params.max_retries + 1
        last_exc: Exception | None = None
        for attempt in range(attempts):
            start = time.monotonic()
            try:
                resp = self._client.post(url, json=body, headers=headers, timeout=config.params.timeout_s)
            except httpx.TimeoutException as exc:
                last_exc = TransportError(f"{config.model_id}: timed out after {config.params.timeout_s}s")
                last_exc.__cause__ = exc
            except httpx.HTTPError as exc:
                last_exc = TransportError(f"{config.model_id}: transport failure: {exc}")
                last_exc.__cause__ = exc
            else:
                if resp.status_code == 200:
                    latency = time.monotonic() - start
                    try:
                        return resp.json(), latency
                    except ValueError:
                        raise ProtocolError(f"{config.model_id}: response body is not JSON")
                if resp.status_code in (429, 500, 502, 503, 504):
                    last_exc = TransportError(f"{config.model_id}: retriable status {resp.status_code}")
                else:
                    raise ProtocolError(
                        f"{config.model_id}: status {resp.status_code}: {resp.text[:200]}"
                    )
            if attempt < attempts - 1:
                time.sleep(self._backoff_base_s * (2**attempt))
        raise last_exc if last_exc else TransportError(f"{config.model_id}: request failed")


def _completion_text(data: Mapping) -> str:
    choices = data.get("choices")
    if isinstance(choices, list) and choices:
        first = choices[0]
        message = first.get("message")
        if isinstance(message, Mapping) and isinstance(message.get("content"), str):
            return message["content"]
        if isinstance(first.get("text"), str):
            return first["text"]
    if isinstance(data.get("text"), str):
        return data["text"]
    raise ProtocolError("response carries no completion text field")


class ReplayStore:
    """json-lines store: {"fp", "text", "latency_s", "embedding"?} per line."""

    def __init__(self) -> None:
        self.completions: dict[str, tuple[str, float]] = {}
        self.embeddings: dict[str, list[float]] = {}

    @classmethod
    def load(cls, path: str | Path) -> "ReplayStore":
        store = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry.get("embedding") is not None:
                    store.embeddings[entry["fp"]] = [float(v) for v in entry["embedding"]]
                else:
                    store.completions[entry["fp"]] = (entry["text"], float(entry["latency_s"]))
        return store

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for fp in sorted(self.completions):
                text, latency = self.completions[fp]
                fh.write(json.dumps({"fp": fp, "text": text, "latency_s": latency}, ensure_ascii=False) + "\n")
            for fp in sorted(self.embeddings):
                fh.write(
                    json.dumps(
                        {"fp": fp, "text": "", "latency_s": 0.0, "embedding": self.embeddings[fp]},
                        ensure_ascii=False,
                    )
                    + "\n"
                )


class ReplayBackend:
    """Answers exclusively from a store; a missing fingerprint is an error."""

    def __init__(self, store: ReplayStore):
        self._store = store

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        return cls(ReplayStore.load(path))

    def complete(self, config: ModelEndpointConfig, prompt: RenderedPrompt) -> ModelResponse:
        fp = completion_fingerprint(config.model_id, prompt.system_text, prompt.user_text, config.params)
        hit = self._store.completions.get(fp)
        if hit is None:
            raise ReplayMissError(f"no recorded completion for fingerprint {fp}")
        text, latency = hit
        return ModelResponse(text=text, latency_s=latency, model_id=config.model_id, request_fingerprint=fp)

    def embed(self, config: ModelEndpointConfig, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        fp = embedding_fingerprint(config.model_id, text)
        hit = self._store.embeddings.get(fp)
        if hit is None:
            raise ReplayMissError(f"no recorded embedding for fingerprint {fp}")
        return list(hit)


class RecordBackend:
    """Wraps a live backend and appends every answer to a sink file."""

    def __init__(self, inner, sink_path: str | Path):
        self._inner = inner
        self._sink_path = Path(sink_path)
        self._lock = threading.Lock()

    def _append(self, entry: dict) -> None:
        with self._lock:
            with self._sink_path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def complete(self, config: ModelEndpointConfig, prompt: RenderedPrompt) -> ModelResponse:
        response = self._inner.complete(config, prompt)
        self._append(
            {"fp": response.request_fingerprint, "text": response.text, "latency_s": response.latency_s}
        )
        return response

    def embed(self, config: ModelEndpointConfig, text: str) -> list[float]:
        vector = self._inner.embed(config, text)
        self._append(
            {
                "fp": embedding_fingerprint(config.model_id, text),
                "text": "",
                "latency_s": 0.0,
                "embedding": list(vector),
            }
        )
        return vector


def record_session(sink: str | Path, transport: httpx.BaseTransport | None = None) -> RecordBackend:
    return RecordBackend(LiveBackend(transport=transport), sink)


def replay_session(source: str | Path) -> ReplayBackend:
    return ReplayBackend.from_file(source)


class Embedder:
    """Dimension-checked embedding handle bound to one backend and model."""

    def __init__(self, backend, config: ModelEndpointConfig):
        self._backend = backend
        self._config = config
        self._dim: int | None = None

    @property
    def model_id(self) -> str:
        return self._config.model_id

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        vector = self._backend.embed(self._config, text)
        if self._dim is None:
            self._dim = len(vector)
        elif len(vector) != self._dim:
            raise ProtocolError(
                f"embedder {self._config.model_id!r} changed dimension: {self._dim} -> {len(vector)}"
            )
        return vector
