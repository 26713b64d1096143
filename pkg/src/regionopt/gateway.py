"""Chat-completion access for the agents, with retries and token accounting.

Two transports are provided: :class:`HttpTransport` speaks the
OpenAI-compatible ``/chat/completions`` protocol, :class:`MockTransport`
replays a fixed script and records every request. The API key is read from
the ``OPENAI_API_KEY`` environment variable only.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import ConfigurationError, TransientTransportError, TransportError
from .prompts import PromptPair

API_KEY_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "OPENAI_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


@dataclass(frozen=True)
class ModelConfig:
    model: str = "gpt-4o-mini"
    timeout: float = 120.0
    retries: int = 3
    temperature: float = 0.7
    max_tokens: int | None = None
    backoff: float = 1.0

    def __post_init__(self):
        if self.retries < 0:
            raise ConfigurationError("retry budget must be >= 0")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")


@dataclass(frozen=True)
class Reply:
    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None


@dataclass(frozen=True)
class LedgerSnapshot:
    api_calls: int
    input_tokens: int
    output_tokens: int
    estimated: bool


class TokenLedger:
    """Call and token counters for one run; safe to share between threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self.api_calls = 0
        self.input_tokens = 0
        self.output_tokens = 0
        self.estimated = False

    def record(self, input_tokens: int, output_tokens: int, estimated: bool = False):
        if input_tokens < 0 or output_tokens < 0:
            raise ValueError("token counts cannot be negative")
        with self._lock:
            self.api_calls += 1
            self.input_tokens += input_tokens
            self.output_tokens += output_tokens
            self.estimated = self.estimated or estimated

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(self.api_calls, self.input_tokens, self.output_tokens,
                                  self.estimated)


def estimate_tokens(text: str) -> int:
    """Rough count used when the provider reports no usage: 4 characters a token."""
    return math.ceil(len(text) / 4)


class Transport(Protocol):
    def send(self, prompt: PromptPair, cfg: ModelConfig) -> Reply: ...


class MockTransport:
    """Replays ``script`` in order, one entry per call.

    An entry is a reply string, a mapping ``{"reply": ..., "input_tokens": ...,
    "output_tokens": ...}``, or ``{"error": message, "transient": bool}`` to
    simulate a failure. Running past the end raises :class:`TransportError`.
    """

    def __init__(self, script: Sequence):
        self.script = list(script)
        self.requests: list[PromptPair] = []
        self._lock = threading.Lock()
        self._next = 0

    @classmethod
    def from_file(cls, path) -> "MockTransport":
        """Load a script from a JSON list file."""
        script = json.loads(Path(path).read_text())
        if not isinstance(script, list):
            raise ConfigurationError(f"{path}: a mock script is a JSON list")
        return cls(script)

    @property
    def remaining(self) -> int:
        return len(self.script) - self._next

    def send(self, prompt: PromptPair, cfg: ModelConfig) -> Reply:
        with self._lock:
            self.requests.append(prompt)
            if self._next >= len(self.script):
                raise TransportError("mock script exhausted")
            entry = self.script[self._next]
            self._next += 1
        if isinstance(entry, str):
            return Reply(entry)
        if "error" in entry:
            kind = TransientTransportError if entry.get("transient") else TransportError
            raise kind(entry["error"])
        return Reply(entry["reply"], entry.get("input_tokens"), entry.get("output_tokens"))


class HttpTransport:
    """OpenAI-compatible chat completions over HTTP."""

    def __init__(self, base_url: str | None = None, client: httpx.Client | None = None):
        self.api_key = os.environ.get(API_KEY_ENV, "").strip()
        if not self.api_key:
            raise ConfigurationError(f"set {API_KEY_ENV} to use the live transport")
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self._client = client

    def send(self, prompt: PromptPair, cfg: ModelConfig) -> Reply:
        body = {
            "model": cfg.model,
            "messages": [{"role": "system", "content": prompt.system},
                         {"role": "user", "content": prompt.user}],
            "temperature": cfg.temperature,
        }
        if cfg.max_tokens is not None:
            body["max_tokens"] = cfg.max_tokens
        client = self._client or httpx.Client(timeout=cfg.timeout)
        try:
            resp = client.post(f"{self.base_url}/chat/completions", json=body,
                               headers={"Authorization": f"Bearer {self.api_key}"},
                               timeout=cfg.timeout)
        except httpx.TimeoutException as exc:
            raise TransientTransportError(f"request timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientTransportError(f"request failed: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {exc}") from exc
        usage = data.get("usage") or {}
        return Reply(text, usage.get("prompt_tokens"), usage.get("completion_tokens"))


class AgentGateway:
    """Sends prompts through a transport, retrying transient failures."""

    def __init__(self, transport: Transport, cfg: ModelConfig | None = None, sleep=time.sleep):
        self.transport = transport
        self.cfg = cfg or ModelConfig()
        self._sleep = sleep

    def complete(self, prompt: PromptPair, ledger: TokenLedger) -> str:
        cfg = self.cfg
        for attempt in range(cfg.retries + 1):
            try:
                reply = self.transport.send(prompt, cfg)
                break
            except TransientTransportError as exc:
                if attempt == cfg.retries:
                    raise TransportError(f"giving up after {attempt + 1} attempts: {exc}") from exc
                self._sleep(cfg.backoff * 2 ** attempt)
        estimated = reply.input_tokens is None or reply.output_tokens is None
        n_in = reply.input_tokens
        if n_in is None:
            n_in = estimate_tokens(prompt.system) + estimate_tokens(prompt.user)
        n_out = reply.output_tokens if reply.output_tokens is not None else estimate_tokens(reply.text)
        ledger.record(n_in, n_out, estimated)
        return reply.text

    def bind(self, ledger: TokenLedger) -> "Agent":
        return Agent(self, ledger)


@dataclass
class Agent:
    """A gateway tied to one run's ledger; this is what the strategies call."""

    gateway: AgentGateway
    ledger: TokenLedger

    def ask(self, prompt: PromptPair) -> str:
        return self.gateway.complete(prompt, self.ledger)
