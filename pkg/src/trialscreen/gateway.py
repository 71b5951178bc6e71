"""Model gateway: one call surface over scripted, recorded, and live backends.

Every completion flows through :class:`Gateway`, which handles retries for
transient transport failures, accounts usage and cost per call, and keys
record/replay cassettes by a stable request digest so reruns are exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .chunking import Tokenizer, WhitespaceTokenizer
from .errors import (CassetteMissError, GatewayError, GatewayTransportError,
                     ScriptMissError, ValidationError)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValidationError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    latency_ms: float = 0.0


def request_digest(request: ChatRequest) -> str:
    """Stable identity of a request: hash of contents, not object identity."""
    h = hashlib.sha256()
    for part in (request.system_prompt, request.user_prompt, request.model_id,
                 repr(float(request.temperature))):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class Backend(Protocol):
    backend_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


# ---------------------------------------------------------------------------
# Scripted backend

@dataclass(frozen=True)
class ScriptRule:
    """Reply when every fragment appears in the combined prompt text."""
    contains: tuple[str, ...]
    reply: str

    def matches(self, text: str) -> bool:
        return all(fragment in text for fragment in self.contains)


class ScriptedBackend:
    """Deterministic offline backend driven by ordered substring rules.

    The first rule whose fragments all appear in the concatenated system and
    user prompts wins.  With no match the optional default reply is used;
    without one the call raises ScriptMissError so a misconfigured script
    cannot silently degrade a test run.
    """

    backend_id = "scripted"

    def __init__(self, rules: Sequence[ScriptRule], default_reply: Optional[str] = None):
        self.rules = tuple(rules)
        self.default_reply = default_reply

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.system_prompt + "\n" + request.user_prompt
        for rule in self.rules:
            if rule.matches(text):
                return ChatResponse(text=rule.reply, backend_id=self.backend_id)
        if self.default_reply is not None:
            return ChatResponse(text=self.default_reply, backend_id=self.backend_id)
        raise ScriptMissError(
            f"no scripted rule matched request digest {request_digest(request)[:12]}")

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptRule(contains=tuple(r["contains"]), reply=r["reply"])
                 for r in payload.get("rules", [])]
        return cls(rules, default_reply=payload.get("default_reply"))


# ---------------------------------------------------------------------------
# Record / replay cassettes

CASSETTE_FORMAT = "cassette-v1"


class RecordingBackend:
    """Wraps another backend and captures every response keyed by digest."""

    def __init__(self, inner: Backend, cassette_path: str | Path):
        self.inner = inner
        self.backend_id = f"recording({inner.backend_id})"
        self.cassette_path = Path(cassette_path)
        self._entries: dict[str, dict] = {}
        if self.cassette_path.exists():
            self._entries = _read_cassette(self.cassette_path)

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        digest = request_digest(request)
        self._entries[digest] = {
            "text": response.text,
            "prompt_tokens": response.prompt_tokens,
            "completion_tokens": response.completion_tokens,
        }
        self.flush()
        return response

    def flush(self) -> None:
        body = json.dumps({"format": CASSETTE_FORMAT, "entries": self._entries},
                          sort_keys=True, indent=1)
        self.cassette_path.write_text(body, encoding="utf-8")


class ReplayBackend:
    """Serves previously recorded responses; an unknown digest is an error.

    A miss means the replayed run diverged from the recorded one (different
    prompt, model, or temperature), which must fail loudly rather than fall
    through to a live call.
    """

    backend_id = "replay"

    def __init__(self, cassette_path: str | Path):
        self.cassette_path = Path(cassette_path)
        if not self.cassette_path.exists():
            raise CassetteMissError(f"cassette not found: {self.cassette_path}")
        self._entries = _read_cassette(self.cassette_path)

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        entry = self._entries.get(digest)
        if entry is None:
            raise CassetteMissError(
                f"no recorded response for request digest {digest[:12]} "
                f"in {self.cassette_path.name}")
        return ChatResponse(text=entry["text"], backend_id=self.backend_id,
                            prompt_tokens=entry.get("prompt_tokens"),
                            completion_tokens=entry.get("completion_tokens"))


def _read_cassette(path: Path) -> dict[str, dict]:
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != CASSETTE_FORMAT:
        raise ValidationError(f"unsupported cassette format in {path}")
    return dict(payload["entries"])


# ---------------------------------------------------------------------------
# Live backend

class LiveBackend:
    """OpenAI-style chat-completion client over HTTP."""

    backend_id = "live"

    def __init__(self, base_url: str, api_key_env: str = "TRIALSCREEN_API_KEY",
                 timeout_s: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def complete(self, request: ChatRequest) -> ChatResponse:
        import httpx

        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise GatewayError(f"missing API key: set {self.api_key_env}")
        payload = {
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        }
        started = time.monotonic()
        try:
            response = httpx.post(f"{self.base_url}/chat/completions", json=payload,
                                  headers={"Authorization": f"Bearer {api_key}"},
                                  timeout=self.timeout_s)
        except httpx.HTTPError as exc:
            raise GatewayTransportError(f"transport failure: {exc}") from exc
        latency_ms = (time.monotonic() - started) * 1000.0
        if response.status_code >= 500:
            raise GatewayTransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise GatewayError(f"request rejected with status {response.status_code}: "
                               f"{response.text[:200]}")
        body = response.json()
        usage = body.get("usage", {})
        return ChatResponse(text=body["choices"][0]["message"]["content"],
                            backend_id=self.backend_id,
                            prompt_tokens=usage.get("prompt_tokens"),
                            completion_tokens=usage.get("completion_tokens"),
                            latency_ms=latency_ms)


# ---------------------------------------------------------------------------
# Cost accounting

@dataclass(frozen=True)
class PriceTable:
    """Per-token prices (e.g. 2e-06 per input token) keyed by model id.

    ``default`` applies to models without an explicit row, so tests can use
    a single flat price without enumerating model ids.
    """

    per_model: tuple[tuple[str, float, float], ...] = ()
    default_input: float = 0.0
    default_output: float = 0.0

    def __post_init__(self) -> None:
        for _, p_in, p_out in self.per_model:
            if p_in < 0 or p_out < 0:
                raise ValidationError("prices must be >= 0")
        if self.default_input < 0 or self.default_output < 0:
            raise ValidationError("prices must be >= 0")

    def prices_for(self, model_id: str) -> tuple[float, float]:
        for model, p_in, p_out in self.per_model:
            if model == model_id:
                return p_in, p_out
        return self.default_input, self.default_output

    def cost(self, model_id: str, prompt_tokens: int, completion_tokens: int) -> float:
        p_in, p_out = self.prices_for(model_id)
        return prompt_tokens * p_in + completion_tokens * p_out

    @classmethod
    def from_file(cls, path: str | Path) -> "PriceTable":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        rows = tuple((m, float(p["input_price_per_token"]), float(p["output_price_per_token"]))
                     for m, p in sorted(payload.get("models", {}).items()))
        return cls(per_model=rows,
                   default_input=float(payload.get("default_input_price_per_token", 0.0)),
                   default_output=float(payload.get("default_output_price_per_token", 0.0)))


@dataclass(frozen=True)
class LedgerEntry:
    role: str
    model_id: str
    prompt_tokens: int
    completion_tokens: int
    cost: float
    latency_ms: float = 0.0


class CostLedger:
    """Append-only record of model usage for one run."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def total_cost(self) -> float:
        return sum(e.cost for e in self.entries)

    def total_prompt_tokens(self) -> int:
        return sum(e.prompt_tokens for e in self.entries)

    def total_completion_tokens(self) -> int:
        return sum(e.completion_tokens for e in self.entries)

    def call_count(self) -> int:
        return len(self.entries)

    def to_records(self) -> list[dict]:
        """Serializable view; latency is excluded so reruns serialize equal."""
        return [{
            "role": e.role,
            "model_id": e.model_id,
            "prompt_tokens": e.prompt_tokens,
            "completion_tokens": e.completion_tokens,
            "cost": e.cost,
        } for e in self.entries]


def ledger_total(ledger: CostLedger) -> float:
    return ledger.total_cost()


# ---------------------------------------------------------------------------
# Gateway

RETRYABLE_ATTEMPTS = 3


class Gateway:
    """Front door for completions: retry, usage fallback, cost accounting.

    Only transport-level failures (connection errors, 5xx) are retried, up
    to three attempts with exponential backoff.  Scripted and replay misses
    are configuration bugs and surface immediately.
    """

    def __init__(self, backend: Backend, prices: PriceTable = PriceTable(),
                 ledger: Optional[CostLedger] = None,
                 usage_tokenizer: Optional[Tokenizer] = None,
                 max_concurrency: int = 4,
                 sleep: Callable[[float], None] = time.sleep,
                 backoff_base_s: float = 0.5):
        if max_concurrency < 1:
            raise ValidationError("max_concurrency must be >= 1")
        self.backend = backend
        self.prices = prices
        self.ledger = ledger if ledger is not None else CostLedger()
        self.usage_tokenizer = usage_tokenizer or WhitespaceTokenizer()
        self._semaphore = threading.Semaphore(max_concurrency)
        self._sleep = sleep
        self._backoff_base_s = backoff_base_s

    def complete(self, request: ChatRequest, role: str = "unspecified") -> ChatResponse:
        last_error: Optional[Exception] = None
        for attempt in range(RETRYABLE_ATTEMPTS):
            if attempt:
                self._sleep(self._backoff_base_s * (2 ** (attempt - 1)))
            with self._semaphore:
                try:
                    response = self.backend.complete(request)
                except GatewayTransportError as exc:
                    last_error = exc
                    continue
            return self._account(request, response, role)
        raise GatewayTransportError(
            f"gave up after {RETRYABLE_ATTEMPTS} attempts: {last_error}")

    def _account(self, request: ChatRequest, response: ChatResponse,
                 role: str) -> ChatResponse:
        prompt_tokens = response.prompt_tokens
        if prompt_tokens is None:
            prompt_tokens = (len(self.usage_tokenizer.encode(request.system_prompt))
                             + len(self.usage_tokenizer.encode(request.user_prompt)))
        completion_tokens = response.completion_tokens
        if completion_tokens is None:
            completion_tokens = len(self.usage_tokenizer.encode(response.text))
        self.ledger.record(LedgerEntry(
            role=role, model_id=request.model_id, prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            cost=self.prices.cost(request.model_id, prompt_tokens, completion_tokens),
            latency_ms=response.latency_ms))
        return ChatResponse(text=response.text, backend_id=response.backend_id,
                            prompt_tokens=prompt_tokens,
                            completion_tokens=completion_tokens,
                            latency_ms=response.latency_ms)
