"""Gateway to chat-completions endpoints plus a deterministic mock.

Owns retries, call/token budgets, and JSON payload extraction. Pipelines only
ever see ``ChatProvider.complete``; the transport behind it is either a live
HTTP endpoint or a scripted mock.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .core import ReasoningEffort


class ProviderError(Exception):
    pass


class TransportError(ProviderError):
    """Transient transport failure; retried up to the attempt cap."""


class RateLimitedError(TransportError):
    pass


class AuthError(ProviderError):
    """Endpoint rejected credentials; never retried."""


class BudgetExceededError(ProviderError):
    pass


class MalformedResponseError(ProviderError):
    pass


class NoJsonFoundError(ProviderError):
    pass


class UnscriptedRequestError(ProviderError):
    """The mock saw a request it has no canned response for."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion request.

    ``reasoning_effort`` maps to the endpoint's effort field when present and
    is omitted from the wire payload when ``none``.
    """

    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_output_tokens: int = 1000
    reasoning_effort: ReasoningEffort = ReasoningEffort.none
    response_kind: str = "free_text"  # or "json_object"

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("at least one message required")
        roles = {r for r, _ in self.messages}
        if not roles <= {"system", "user", "assistant"}:
            raise ValueError(f"invalid roles: {roles - {'system', 'user', 'assistant'}}")
        if self.messages[-1][0] != "user":
            raise ValueError("last message must have role user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")
        if self.response_kind not in ("free_text", "json_object"):
            raise ValueError("response_kind must be free_text or json_object")

    def fingerprint(self) -> str:
        payload = canonical_json(
            {
                "messages": [[r, t] for r, t in self.messages],
                "temperature": self.temperature,
                "max_output_tokens": self.max_output_tokens,
                "reasoning_effort": self.reasoning_effort.value,
                "response_kind": self.response_kind,
            }
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    reasoning_tokens: int = 0
    finish_reason: str = "stop"  # stop | length | other

    def __post_init__(self) -> None:
        if self.finish_reason not in ("stop", "length", "other"):
            raise ValueError("finish_reason must be stop, length or other")
        if not self.text and self.finish_reason == "stop":
            raise ValueError("empty text only allowed when finish_reason != stop")
        for name in ("prompt_tokens", "completion_tokens", "reasoning_tokens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens + self.reasoning_tokens


class BudgetLedger:
    """Call/token budget with atomic bookkeeping.

    No new call is admitted once either limit is reached; a None limit means
    unlimited. Spend is committed exactly once per successful call.
    """

    def __init__(self, max_calls: int | None = None, max_total_tokens: int | None = None):
        self.max_calls = max_calls
        self.max_total_tokens = max_total_tokens
        self.spent_calls = 0
        self.spent_tokens = 0
        self._lock = threading.Lock()

    def check(self, request: ChatRequest) -> None:
        """Raise BudgetExceededError if the request cannot be admitted."""
        with self._lock:
            if self.max_calls is not None and self.spent_calls >= self.max_calls:
                raise BudgetExceededError(
                    f"call budget exhausted ({self.spent_calls}/{self.max_calls})"
                )
            if (
                self.max_total_tokens is not None
                and self.spent_tokens + request.max_output_tokens > self.max_total_tokens
            ):
                raise BudgetExceededError(
                    f"token budget exhausted ({self.spent_tokens}/{self.max_total_tokens})"
                )

    def commit(self, response: ChatResponse) -> None:
        with self._lock:
            self.spent_calls += 1
            self.spent_tokens += response.total_tokens

    def snapshot(self) -> dict[str, int | None]:
        with self._lock:
            return {
                "max_calls": self.max_calls,
                "max_total_tokens": self.max_total_tokens,
                "spent_calls": self.spent_calls,
                "spent_tokens": self.spent_tokens,
            }


@dataclass(frozen=True)
class RetryPolicy:
    """5 attempts, 500 ms base, x2 backoff, full jitter."""

    max_attempts: int = 5
    base_delay_s: float = 0.5
    multiplier: float = 2.0
    full_jitter: bool = True


@dataclass(frozen=True)
class DecodingDefaults:
    """Decoding parameters applied by the pipelines.

    1000 output tokens for plain stages; 10000 once reasoning effort is on,
    since thinking tokens share the completion budget. Candidate sampling for
    self-consistency uses its own non-zero temperature.
    """

    temperature: float = 0.0
    max_output_tokens: int = 1000
    reasoning_max_output_tokens: int = 10000
    sc_sampling_temperature: float = 0.7

    def output_cap(self, effort: ReasoningEffort) -> int:
        if effort is ReasoningEffort.none:
            return self.max_output_tokens
        return self.reasoning_max_output_tokens


Transport = Callable[[ChatRequest, str], ChatResponse]


class ChatProvider:
    """Budget- and retry-aware wrapper around a transport.

    Shareable across threads; the ledger is the only mutable state and its
    updates are atomic.
    """

    def __init__(
        self,
        transport: Transport,
        ledger: BudgetLedger | None = None,
        retry: RetryPolicy = RetryPolicy(),
        defaults: DecodingDefaults = DecodingDefaults(),
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.transport = transport
        self.ledger = ledger or BudgetLedger()
        self.retry = retry
        self.defaults = defaults
        self._sleep = sleep
        self._rng = rng or random.Random()

    def complete(self, request: ChatRequest, stage: str) -> ChatResponse:
        """One chat completion with backoff on transient failures.

        Raises BudgetExceededError before any attempt when the ledger has no
        headroom; raises the last transport error once attempts are exhausted.
        The ledger is updated exactly once, after success.
        """
        self.ledger.check(request)
        delay = self.retry.base_delay_s
        last_err: Exception | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                response = self.transport(request, stage)
                break
            except (RateLimitedError, TransportError) as err:
                last_err = err
                if attempt == self.retry.max_attempts:
                    raise
                pause = delay * self._rng.random() if self.retry.full_jitter else delay
                self._sleep(pause)
                delay *= self.retry.multiplier
        else:  # pragma: no cover - loop always breaks or raises
            raise TransportError(str(last_err))
        self.ledger.commit(response)
        return response


def canonical_json(value: Any) -> str:
    """Stable JSON text: sorted keys, no whitespace, unicode kept."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


_DECODER = json.JSONDecoder()


def extract_json(text: str) -> dict[str, Any]:
    """Return the first syntactically valid JSON object embedded in ``text``.

    Models routinely wrap JSON in code fences or prose; scanning for the
    first parseable object is the repair. String field bytes are preserved
    exactly as sent. Raises NoJsonFoundError when no object parses.
    """
    idx = 0
    while True:
        pos = text.find("{", idx)
        if pos == -1:
            raise NoJsonFoundError("no JSON object found in response")
        try:
            obj, _ = _DECODER.raw_decode(text, pos)
        except json.JSONDecodeError:
            idx = pos + 1
            continue
        if isinstance(obj, dict):
            return obj
        idx = pos + 1


class MockProvider:
    """Deterministic scripted transport for tests and dry runs.

    The script maps a stage name (or ``fp:<request fingerprint>``) to either
    a response string, a dict (text / finish_reason / token counts, or
    ``{"error": "transport" | "rate_limited"}``), or a list of such entries
    consumed one per call in order. Unscripted requests fail loudly unless
    ``echo`` is set, in which case the response is a deterministic digest of
    the request. Every request is recorded in arrival order.
    """

    def __init__(self, script: Mapping[str, Any] | None = None, echo: bool = False):
        self.script = dict(script or {})
        self.echo = echo
        self.requests: list[tuple[str, ChatRequest]] = []
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def __call__(self, request: ChatRequest, stage: str) -> ChatResponse:
        with self._lock:
            self.requests.append((stage, request))
            key = None
            if stage in self.script:
                key = stage
            else:
                fp = "fp:" + request.fingerprint()
                if fp in self.script:
                    key = fp
            if key is None:
                if self.echo:
                    return ChatResponse(text="echo-" + request.fingerprint()[:16])
                raise UnscriptedRequestError(f"no scripted response for stage {stage!r}")
            entry = self.script[key]
            if isinstance(entry, list):
                i = self._cursor.get(key, 0)
                if i >= len(entry):
                    raise UnscriptedRequestError(
                        f"scripted sequence for stage {stage!r} exhausted after {i} calls"
                    )
                self._cursor[key] = i + 1
                entry = entry[i]
        return self._materialize(entry, stage)

    @staticmethod
    def _materialize(entry: Any, stage: str) -> ChatResponse:
        if isinstance(entry, str):
            return ChatResponse(text=entry)
        if isinstance(entry, Mapping):
            if "error" in entry:
                kind = entry["error"]
                if kind == "rate_limited":
                    raise RateLimitedError(f"scripted rate limit at stage {stage!r}")
                if kind == "transport":
                    raise TransportError(f"scripted transport failure at stage {stage!r}")
                raise ValueError(f"unknown scripted error kind {kind!r}")
            return ChatResponse(
                text=entry.get("text", ""),
                prompt_tokens=int(entry.get("prompt_tokens", 0)),
                completion_tokens=int(entry.get("completion_tokens", 0)),
                reasoning_tokens=int(entry.get("reasoning_tokens", 0)),
                finish_reason=entry.get("finish_reason", "stop"),
            )
        raise ValueError(f"unsupported script entry for stage {stage!r}: {type(entry)}")

    def count_for_stage(self, stage: str) -> int:
        with self._lock:
            return sum(1 for s, _ in self.requests if s == stage)


@dataclass
class HttpTransport:
    """Chat-completions-style HTTP endpoint.

    POSTs to ``{base_url}/chat/completions`` with the conventional payload.
    401/403 raise AuthError, 429 raises RateLimitedError (retryable), 5xx and
    connection problems raise TransportError.
    """

    base_url: str
    model: str
    api_key: str = ""
    timeout_s: float = 120.0
    per_stage_model: Mapping[str, str] = field(default_factory=dict)

    def __call__(self, request: ChatRequest, stage: str) -> ChatResponse:
        import requests as _requests

        payload: dict[str, Any] = {
            "model": self.per_stage_model.get(stage, self.model),
            "messages": [{"role": r, "content": t} for r, t in request.messages],
            "temperature": request.temperature,
            "max_completion_tokens": request.max_output_tokens,
        }
        if request.reasoning_effort is not ReasoningEffort.none:
            payload["reasoning_effort"] = request.reasoning_effort.value
        if request.response_kind == "json_object":
            payload["response_format"] = {"type": "json_object"}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = _requests.post(
                self.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_s,
            )
        except _requests.RequestException as err:
            raise TransportError(str(err)) from err
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimitedError("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            raise TransportError(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise MalformedResponseError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
            usage = body.get("usage", {})
            details = usage.get("completion_tokens_details", {}) or {}
            return ChatResponse(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                reasoning_tokens=int(details.get("reasoning_tokens", 0)),
                finish_reason={"stop": "stop", "length": "length"}.get(
                    choice.get("finish_reason"), "other"
                ),
            )
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise MalformedResponseError(f"cannot parse endpoint response: {err}") from err
