"""LLM provider abstraction: wire contract, deterministic stub, HTTP adapter.

The wire contract is a single POST of {model_name, system_text, messages,
params} returning {text}. The stub provider (endpoint scheme "stub:") is a
pure function of the request, which makes full sessions replayable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .errors import ProviderError

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    id: str
    endpoint_url: str
    model_name: str
    credential: Optional[str] = None  # resolved from env; never exported
    params: dict = field(default_factory=dict)


@dataclass
class ProviderMessage:
    role_tag: str
    text: str


@dataclass
class ProviderRequest:
    model_name: str
    system_text: str
    messages: list[ProviderMessage]
    params: dict = field(default_factory=dict)

    def to_wire(self) -> dict:
        return {
            "model_name": self.model_name,
            "system_text": self.system_text,
            "messages": [{"role_tag": m.role_tag, "text": m.text} for m in self.messages],
            "params": self.params,
        }


@dataclass
class ProviderResponse:
    text: str
    finish_reason: str = "stop"
    latency_ms: int = 0


class Provider(Protocol):
    def generate(self, request: ProviderRequest) -> ProviderResponse: ...


def request_digest(request: ProviderRequest) -> str:
    canonical = json.dumps(request.to_wire(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class StubProvider:
    """Deterministic test double: output is a stable function of the request.

    Verdict-format requests (params.response_format == "verdict") get a
    YES/NO answer from the digest parity; everything else gets a short echo
    of the last message so conversational tests can assert on content.
    """

    def generate(self, request: ProviderRequest) -> ProviderResponse:
        digest = request_digest(request)
        if request.params.get("response_format") == "verdict":
            text = "YES" if int(digest[:8], 16) % 2 == 0 else "NO"
            return ProviderResponse(text=text)
        last = request.messages[-1].text if request.messages else ""
        text = f"[{digest[:10]}] re: {last[:120]}"
        return ProviderResponse(text=text)


class FailingProvider:
    """Fault-injection double: fails the first ``failures`` calls."""

    def __init__(self, inner: Provider, failures: int):
        self.inner = inner
        self.remaining = failures
        self.calls = 0

    def generate(self, request: ProviderRequest) -> ProviderResponse:
        self.calls += 1
        if self.remaining > 0:
            self.remaining -= 1
            raise ProviderError("injected transport failure")
        return self.inner.generate(request)


class HttpProvider:
    """POSTs the wire contract to an external endpoint."""

    def __init__(self, endpoint_url: str, credential: Optional[str] = None, timeout_s: float = 30.0):
        self.endpoint_url = endpoint_url
        self.credential = credential
        self.timeout_s = timeout_s

    def generate(self, request: ProviderRequest) -> ProviderResponse:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.credential:
            headers["Authorization"] = f"Bearer {self.credential}"
        started = time.monotonic()
        try:
            resp = requests.post(
                self.endpoint_url,
                json=request.to_wire(),
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"provider returned status {resp.status_code}")
        body = resp.json()
        text = body.get("text", "")
        if not text:
            raise ProviderError("provider returned empty text")
        latency = int((time.monotonic() - started) * 1000)
        return ProviderResponse(text=text, finish_reason=body.get("finish_reason", "stop"), latency_ms=latency)


def provider_for(config: ModelConfig) -> Provider:
    if config.endpoint_url.startswith("stub:"):
        return StubProvider()
    return HttpProvider(config.endpoint_url, config.credential)


def generate_with_retry(
    provider: Provider,
    request: ProviderRequest,
    retries: int = 3,
    backoff_s: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> ProviderResponse:
    """Call the provider, retrying transport failures with backoff.

    Raises ProviderError after the final attempt; callers decide whether to
    fail open (moderation) or stay silent (agents).
    """
    last_exc: Optional[Exception] = None
    for attempt in range(retries):
        try:
            return provider.generate(request)
        except ProviderError as exc:
            last_exc = exc
            if attempt < retries - 1:
                logger.warning("provider attempt %d failed, retrying: %s", attempt + 1, exc)
                sleep(backoff_s * (2**attempt))
    raise ProviderError(f"provider failed after {retries} attempts: {last_exc}")
