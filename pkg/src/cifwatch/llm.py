"""Text-generation backends: a JSON-over-HTTP client and a scripted mock keyed by prompt hash."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import BackendError, ConfigError, FixtureMissError

log = logging.getLogger(__name__)

ENDPOINT_ENV = "CIFWATCH_LLM_ENDPOINT"
MODEL_ENV = "CIFWATCH_LLM_MODEL"

CLASSIFY_TEMPERATURE = 0.0
GENERATE_TEMPERATURE = 0.7


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 1024
    temperature: float = CLASSIFY_TEMPERATURE
    stop_sequences: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    backoff_base: float = 0.5

    def delay(self, attempt: int) -> float:
        """Seconds to wait after failed attempt number ``attempt`` (1-based)."""
        return self.backoff_base * 2 ** (attempt - 1)


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "http" | "mock"
    endpoint: str | None = None
    model: str | None = None
    fixtures: Path | None = None
    max_concurrent: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 120.0

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint and self.model):
            raise ConfigError("http backend needs an endpoint and a model name")
        if self.kind == "mock" and self.fixtures is None:
            raise ConfigError("mock backend needs a fixtures file")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, env: dict | None = None) -> "BackendDescriptor":
        env = os.environ if env is None else env
        d = dict(d)
        kind = d.pop("kind", None)
        if kind == "http":
            d["endpoint"] = env.get(ENDPOINT_ENV) or d.get("endpoint")
            d["model"] = env.get(MODEL_ENV) or d.get("model")
        retry = d.pop("retry", None) or {}
        if d.get("fixtures") is not None:
            d["fixtures"] = Path(d["fixtures"])
        try:
            return cls(kind=kind, retry=RetryPolicy(**retry), **d)
        except TypeError as exc:
            raise ConfigError(f"bad backend descriptor: {exc}") from None


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class Backend(Protocol):
    max_concurrent: int

    def complete(self, req: GenerationRequest) -> str: ...


class MockBackend:
    """Returns scripted completions; a prompt without a fixture is an error."""

    def __init__(self, fixtures: dict[str, str], max_concurrent: int = 4):
        self.fixtures = dict(fixtures)
        self.max_concurrent = max_concurrent

    @classmethod
    def from_file(cls, path: str | Path, max_concurrent: int = 4) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), max_concurrent)

    def complete(self, req: GenerationRequest) -> str:
        key = prompt_hash(req.prompt)
        try:
            return self.fixtures[key]
        except KeyError:
            raise FixtureMissError(key) from None


def extract_completion(body) -> str:
    """First completion text from the common response shapes."""
    if isinstance(body, dict):
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            first = choices[0]
            if isinstance(first.get("text"), str):
                return first["text"]
            message = first.get("message") or {}
            if isinstance(message.get("content"), str):
                return message["content"]
        for key in ("text", "response", "completion", "output"):
            if isinstance(body.get(key), str):
                return body[key]
    raise BackendError(f"no completion text in response: {json.dumps(body)[:200]}")


class HttpBackend:
    def __init__(
        self,
        endpoint: str,
        model: str,
        retry: RetryPolicy = RetryPolicy(),
        max_concurrent: int = 4,
        timeout: float = 120.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.retry = retry
        self.max_concurrent = max_concurrent
        self.timeout = timeout
        self.session = session or requests.Session()
        self.sleep = sleep

    def payload(self, req: GenerationRequest) -> dict:
        body = {
            "model": self.model,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.stop_sequences:
            body["stop"] = list(req.stop_sequences)
        return body

    def complete(self, req: GenerationRequest) -> str:
        data = json.dumps(self.payload(req), ensure_ascii=False).encode("utf-8")
        headers = {"Content-Type": "application/json; charset=utf-8"}
        last: BackendError | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                resp = self.session.post(self.endpoint, data=data, headers=headers,
                                         timeout=self.timeout)
            except requests.RequestException as exc:
                last = BackendError(f"request to {self.endpoint} failed: {exc}")
            else:
                if 200 <= resp.status_code < 300:
                    try:
                        return extract_completion(resp.json())
                    except ValueError:
                        raise BackendError(f"non-JSON response: {resp.text[:200]!r}") from None
                last = BackendError(f"HTTP {resp.status_code} from {self.endpoint}",
                                    status=resp.status_code)
                if resp.status_code < 500 and resp.status_code != 429:
                    raise last
            if attempt < self.retry.max_attempts:
                log.warning("attempt %d failed (%s); retrying", attempt, last)
                self.sleep(self.retry.delay(attempt))
        assert last is not None
        raise last


def make_backend(desc: BackendDescriptor) -> Backend:
    if desc.kind == "mock":
        return MockBackend.from_file(desc.fixtures, desc.max_concurrent)
    return HttpBackend(desc.endpoint, desc.model, desc.retry, desc.max_concurrent, desc.timeout)


def generate(req: GenerationRequest, backend: Backend | BackendDescriptor) -> str:
    if isinstance(backend, BackendDescriptor):
        backend = make_backend(backend)
    return backend.complete(req)


class _Capped:
    def __init__(self, backend: Backend):
        self.backend = backend
        self.gate = threading.BoundedSemaphore(backend.max_concurrent)

    def __call__(self, req: GenerationRequest) -> str:
        with self.gate:
            return self.backend.complete(req)


def generate_many(reqs: Sequence[GenerationRequest], backend: Backend) -> list[str]:
    """Run ``reqs`` with at most ``backend.max_concurrent`` in flight; results keep input order."""
    if not reqs:
        return []
    capped = _Capped(backend)
    if backend.max_concurrent == 1:
        return [capped(r) for r in reqs]
    with ThreadPoolExecutor(max_workers=backend.max_concurrent) as pool:
        return list(pool.map(capped, reqs))
