"""Chat-completion gateway with mock, HTTP and replay backends.

Every request is digested over its full canonical content (model, sampling
parameters, message texts, attachment uids) so that scripted mocks, replay
logs and response caches all key on the same value. Completions run under a
bounded-concurrency semaphore with exponential-backoff retries for
transient failures, and each success can be appended to a JSONL replay log
that a later run can serve answers from without any network access.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

from .errors import ConfigError, GatewayError

if TYPE_CHECKING:
    from .imagefunc import ImageRef

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    attachments: tuple = ()


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 256
    seed: int = 0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5


@dataclass(frozen=True)
class BackendConfig:
    """How to reach a model. The credential itself never lives here, only
    the name of the environment variable that holds it."""

    kind: str = "mock"
    endpoint: str | None = None
    model: str = "default"
    credential_env: str = "EVENTCAST_API_KEY"
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    replay_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("http-chat", "mock", "replay"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http-chat" and not self.endpoint:
            raise ConfigError("http-chat backend needs an endpoint")
        if self.kind == "replay" and not self.replay_path:
            raise ConfigError("replay backend needs a replay log path")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be at least 1")


def prompt_digest(messages: Sequence[ChatMessage], params: GenerationParams, model: str) -> str:
    """Stable sha256 over the canonical request content."""
    payload = {
        "model": model,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "seed": params.seed,
        "messages": [
            {
                "role": m.role,
                "text": m.text,
                "attachments": [a.image_uid for a in m.attachments],
            }
            for m in messages
        ],
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class HttpChatBackend:
    """OpenAI-style chat completions over HTTPS.

    The bearer token is read from the configured environment variable at
    request time and is never echoed into logs, errors or replay records.
    Timeouts, connection failures, 429 and 5xx responses are retryable;
    other client errors are permanent.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        credential_env: str = "EVENTCAST_API_KEY",
        timeout: float = 60.0,
        transport=None,
    ):
        import httpx

        self.endpoint = endpoint
        self.credential_env = credential_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _token(self) -> str:
        token = os.environ.get(self.credential_env)
        if not token:
            raise ConfigError(f"environment variable {self.credential_env} is not set")
        return token

    @staticmethod
    def _content(message: ChatMessage):
        if not message.attachments:
            return message.text
        parts: list[dict] = [{"type": "text", "text": message.text}]
        for image in message.attachments:
            encoded = base64.b64encode(image.resolve_bytes()).decode("ascii")
            parts.append({"type": "image", "image_uid": image.image_uid, "image_b64": encoded})
        return parts

    def send(self, messages: Sequence[ChatMessage], params: GenerationParams, model: str) -> str:
        import httpx

        body = {
            "model": model,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
            "messages": [{"role": m.role, "content": self._content(m)} for m in messages],
        }
        try:
            response = self._client.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self._token()}"},
            )
        except httpx.TimeoutException as exc:
            raise GatewayError(f"request timed out: {exc}", retryable=True) from exc
        except httpx.TransportError as exc:
            raise GatewayError(f"transport failure: {exc}", retryable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise GatewayError(f"server returned {response.status_code}", retryable=True)
        if response.status_code >= 400:
            raise GatewayError(f"server returned {response.status_code}", retryable=False)
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}", retryable=False) from exc

    def close(self) -> None:
        self._client.close()


class MockBackend:
    """Deterministic in-process backend for tests and offline runs.

    Responses come from a digest-keyed script, then from a responder
    callable, then from a fixed default. A request matching none of those
    is a permanent failure, which keeps accidental coverage gaps loud.
    """

    def __init__(
        self,
        script: dict[str, str] | None = None,
        responder: Callable[[Sequence[ChatMessage], GenerationParams], str] | None = None,
        default: str | None = None,
    ):
        self.script = dict(script or {})
        self.responder = responder
        self.default = default
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, messages: Sequence[ChatMessage], params: GenerationParams, model: str) -> str:
        with self._lock:
            self.calls += 1
        digest = prompt_digest(messages, params, model)
        if digest in self.script:
            return self.script[digest]
        if self.responder is not None:
            return self.responder(messages, params)
        if self.default is not None:
            return self.default
        raise GatewayError(f"mock has no response for digest {digest}", retryable=False)


def read_replay_log(path: Path | str) -> dict[str, str]:
    responses: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read replay log {path}: {exc}") from exc
    with fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            responses[record["prompt_digest"]] = record["response"]
    return responses


class ReplayBackend:
    """Serves answers recorded by an earlier run; touches no network.

    A digest absent from the log is a permanent error: replay is meant to
    reproduce a run exactly, not to mask a changed prompt.
    """

    def __init__(self, path: Path | str):
        self._responses = read_replay_log(path)

    def __len__(self) -> int:
        return len(self._responses)

    def send(self, messages: Sequence[ChatMessage], params: GenerationParams, model: str) -> str:
        digest = prompt_digest(messages, params, model)
        if digest not in self._responses:
            raise GatewayError(f"digest {digest} not in replay log", retryable=False)
        return self._responses[digest]


class LlmGateway:
    """Front door for completions: concurrency bound, retries, replay log."""

    def __init__(
        self,
        backend,
        *,
        model: str = "default",
        max_in_flight: int = 4,
        retry: RetryPolicy | None = None,
        replay_log: Path | str | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.model = model
        self.retry = retry or RetryPolicy()
        self._semaphore = threading.Semaphore(max_in_flight)
        self._replay_log = Path(replay_log) if replay_log is not None else None
        self._log_lock = threading.Lock()
        self._sleep = sleeper

    def complete(self, messages: Sequence[ChatMessage], params: GenerationParams | None = None) -> str:
        params = params or GenerationParams()
        digest = prompt_digest(messages, params, self.model)
        start = time.monotonic()
        with self._semaphore:
            response, attempts = self._send_with_retry(messages, params)
        latency_ms = (time.monotonic() - start) * 1000.0
        self._record(digest, messages, params, response, latency_ms, attempts)
        return response

    def _send_with_retry(self, messages, params) -> tuple[str, int]:
        attempt = 1
        while True:
            try:
                return self.backend.send(messages, params, self.model), attempt
            except GatewayError as exc:
                if not exc.retryable or attempt >= self.retry.max_attempts:
                    raise
                delay = self.retry.base_backoff * (2 ** (attempt - 1))
                logger.warning("attempt %d failed (%s); retrying in %.2fs", attempt, exc, delay)
                self._sleep(delay)
                attempt += 1

    def close(self) -> None:
        closer = getattr(self.backend, "close", None)
        if closer is not None:
            closer()

    def _record(self, digest, messages, params, response, latency_ms, attempts) -> None:
        if self._replay_log is None:
            return
        record = {
            "prompt_digest": digest,
            "model": self.model,
            "params": {
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
                "seed": params.seed,
            },
            "messages": [
                {
                    "role": m.role,
                    "text": m.text,
                    "attachments": [a.image_uid for a in m.attachments],
                }
                for m in messages
            ],
            "response": response,
            "latency_ms": round(latency_ms, 3),
            "attempts": attempts,
        }
        with self._log_lock:
            with open(self._replay_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def build_gateway(
    config: BackendConfig,
    *,
    script: dict[str, str] | None = None,
    responder: Callable | None = None,
    default_response: str | None = None,
    replay_log: Path | str | None = None,
    transport=None,
) -> LlmGateway:
    """Assemble a gateway from a backend description.

    ``replay_log`` is where this gateway writes; ``config.replay_path`` is
    where a replay backend reads from. The two may point at the same file
    across consecutive runs, which is how record-then-replay works.
    """
    if config.kind == "http-chat":
        backend = HttpChatBackend(
            config.endpoint, credential_env=config.credential_env, transport=transport
        )
    elif config.kind == "mock":
        backend = MockBackend(script=script, responder=responder, default=default_response)
    else:
        backend = ReplayBackend(config.replay_path)
    return LlmGateway(
        backend,
        model=config.model,
        max_in_flight=config.max_in_flight,
        retry=config.retry,
        replay_log=replay_log,
    )
