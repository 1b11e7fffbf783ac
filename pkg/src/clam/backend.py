"""Uniform completion interface over language models.

Two backends share one contract: an HTTP client for OpenAI-compatible
``/v1/completions`` endpoints, and a scripted backend that replays canned
responses for offline, deterministic tests. Log-probabilities are natural-log
(base e), exactly as received on the wire; they are never renormalized.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import requests

__all__ = [
    "CompletionRequest",
    "TokenInfo",
    "Completion",
    "FinishReason",
    "Backend",
    "BackendError",
    "TransportError",
    "AuthenticationError",
    "NoMatchingRuleError",
    "ScriptRule",
    "ScriptedBackend",
    "OpenAICompatibleBackend",
    "load_script_rules",
    "API_KEY_ENV",
    "API_BASE_ENV",
]

API_KEY_ENV = "CLAM_API_KEY"
API_BASE_ENV = "CLAM_API_BASE"
DEFAULT_API_BASE = "https://api.openai.com"


class BackendError(Exception):
    """Base class for completion-backend failures."""


class TransportError(BackendError):
    """Transient transport failure; retried up to the configured budget."""


class AuthenticationError(BackendError):
    """Credential rejected or missing; never retried."""


class NoMatchingRuleError(BackendError):
    """A scripted backend received a prompt no rule matches.

    This signals a test-fixture gap and is never turned into an empty
    completion.
    """


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    OTHER = "other"


@dataclass(frozen=True)
class CompletionRequest:
    """One generation request: prompt, sampling controls, logprob options."""

    prompt: str
    max_tokens: int = 64
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    logprob_top_k: int = 0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if any(not s for s in self.stop_sequences):
            raise ValueError("stop sequences must be non-empty")
        if self.logprob_top_k < 0:
            raise ValueError("logprob_top_k must be >= 0")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class TokenInfo:
    """One generated token with its logprob and top-k alternatives."""

    text: str
    logprob: float
    top_alternatives: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.logprob > 0:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")
        for _, lp in self.top_alternatives:
            if lp > 0:
                raise ValueError(f"alternative logprob must be <= 0, got {lp}")


@dataclass(frozen=True)
class Completion:
    """Generated text plus per-token logprobs.

    ``text`` excludes any stop sequence; the concatenation of token texts
    equals ``text`` plus the trailing stop sequence, if one was hit.
    """

    text: str
    tokens: tuple[TokenInfo, ...]
    finish_reason: FinishReason


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> Completion: ...


def _split_tokens(text: str) -> list[str]:
    """Whitespace-attached chunks whose concatenation reproduces ``text``."""
    parts = [m.group(0) for m in re.finditer(r"\s*\S+", text)]
    if not parts:
        return [text] if text else []
    consumed = sum(len(p) for p in parts)
    if consumed < len(text):
        parts[-1] += text[consumed:]
    return parts


class _Matcher(str, Enum):
    EXACT = "exact"
    CONTAINS = "contains"
    NTH_CALL = "nth_call"


@dataclass(frozen=True)
class ScriptRule:
    """One prompt-matching rule of a scripted backend.

    ``matcher_value`` is the match text for exact/contains, or the 0-based
    call index for nth_call. Optional ``response_logprobs`` fixes the token
    boundaries and logprobs of the canned response; entries are
    ``(token_text, logprob, top_alternatives)``.
    """

    matcher_kind: str
    matcher_value: object
    response_text: str
    response_logprobs: Optional[tuple[TokenInfo, ...]] = None

    def __post_init__(self):
        kind = _Matcher(self.matcher_kind)
        if kind in (_Matcher.EXACT, _Matcher.CONTAINS):
            if not isinstance(self.matcher_value, str) or not self.matcher_value:
                raise ValueError(f"{kind.value} matcher requires non-empty text")
        else:
            if not isinstance(self.matcher_value, int) or self.matcher_value < 0:
                raise ValueError("nth_call matcher requires a non-negative index")

    def matches(self, prompt: str, call_index: int) -> bool:
        kind = _Matcher(self.matcher_kind)
        if kind is _Matcher.EXACT:
            return prompt == self.matcher_value
        if kind is _Matcher.CONTAINS:
            return self.matcher_value in prompt
        return call_index == self.matcher_value


class ScriptedBackend:
    """Deterministic test double: first matching rule, in declaration order.

    ``complete()`` is a pure function of (request, call index); the call
    counter is the only mutable state and is updated atomically.
    """

    def __init__(self, rules: Sequence[ScriptRule]):
        if not rules:
            raise ValueError("scripted backend requires at least one rule")
        seen_exact: set[str] = set()
        for rule in rules:
            if rule.matcher_kind == _Matcher.EXACT.value:
                if rule.matcher_value in seen_exact:
                    raise ValueError(
                        f"duplicate exact matcher: {rule.matcher_value!r}"
                    )
                seen_exact.add(rule.matcher_value)
        self._rules = tuple(rules)
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def call_count(self) -> int:
        with self._lock:
            return self._calls

    def complete(self, request: CompletionRequest) -> Completion:
        with self._lock:
            call_index = self._calls
            self._calls += 1
        for rule in self._rules:
            if rule.matches(request.prompt, call_index):
                return self._render(rule, request)
        raise NoMatchingRuleError(
            f"no scripted rule matches call #{call_index}; prompt tail: "
            f"{request.prompt[-120:]!r}"
        )

    def _render(self, rule: ScriptRule, request: CompletionRequest) -> Completion:
        if rule.response_logprobs is not None:
            raw = [(t.text, t.logprob, t.top_alternatives) for t in rule.response_logprobs]
        else:
            raw = [(chunk, 0.0, ()) for chunk in _split_tokens(rule.response_text)]

        truncated = len(raw) > request.max_tokens
        raw = raw[: request.max_tokens]
        full = "".join(t for t, _, _ in raw)

        stop_at: Optional[tuple[int, str]] = None
        for seq in request.stop_sequences:
            idx = full.find(seq)
            if idx != -1 and (stop_at is None or idx < stop_at[0]):
                stop_at = (idx, seq)

        if stop_at is not None:
            cut = stop_at[0] + len(stop_at[1])
            kept: list[tuple[str, float, tuple]] = []
            pos = 0
            for text, lp, top in raw:
                if pos >= cut:
                    break
                if pos + len(text) > cut:
                    kept.append((text[: cut - pos], lp, top))
                else:
                    kept.append((text, lp, top))
                pos += len(text)
            raw = kept
            text_out = full[: stop_at[0]]
            finish = FinishReason.STOP
        else:
            text_out = full
            finish = FinishReason.LENGTH if truncated else FinishReason.STOP

        k = request.logprob_top_k
        tokens = tuple(
            TokenInfo(
                text=t,
                logprob=lp,
                top_alternatives=tuple(top[:k]) if top else (((t, lp),) if k > 0 else ()),
            )
            for t, lp, top in raw
        )
        return Completion(text=text_out, tokens=tokens, finish_reason=finish)


def load_script_rules(path: str | Path) -> list[ScriptRule]:
    """Load scripted rules from a JSON file.

    Format: an array of objects with ``matcher_kind``, ``matcher_value``,
    ``response`` and optional ``logprobs`` (list of ``{token, logprob, top}``
    where ``top`` is a list of ``[token, logprob]`` pairs).
    """
    data = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(data, list):
        raise ValueError("rules file must contain a JSON array")
    rules = []
    for i, entry in enumerate(data):
        try:
            logprobs = None
            if entry.get("logprobs") is not None:
                logprobs = tuple(
                    TokenInfo(
                        text=tok["token"],
                        logprob=float(tok["logprob"]),
                        top_alternatives=tuple(
                            (str(t), float(lp)) for t, lp in tok.get("top", [])
                        ),
                    )
                    for tok in entry["logprobs"]
                )
            rules.append(
                ScriptRule(
                    matcher_kind=entry["matcher_kind"],
                    matcher_value=entry["matcher_value"],
                    response_text=entry["response"],
                    response_logprobs=logprobs,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"invalid rule at index {i}: {exc}") from exc
    return rules


_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class OpenAICompatibleBackend:
    """HTTP client for OpenAI-compatible text-completion endpoints.

    The bearer credential comes from ``CLAM_API_KEY`` and the server root
    from ``CLAM_API_BASE`` (default ``https://api.openai.com``); credentials
    are never read from config files. Transient failures (transport errors,
    429, 5xx) are retried with jittered exponential backoff; total attempts
    never exceed ``1 + max_retries``.
    """

    def __init__(
        self,
        model: str,
        *,
        api_key: Optional[str] = None,
        api_base: Optional[str] = None,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        timeout: float = 60.0,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.model = model
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise AuthenticationError(
                f"no API credential: set the {API_KEY_ENV} environment variable"
            )
        base = api_base if api_base is not None else os.environ.get(API_BASE_ENV, DEFAULT_API_BASE)
        self._url = base.rstrip("/") + "/v1/completions"
        self._headers = {
            "Authorization": f"Bearer {key}",
            "Content-Type": "application/json",
        }
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._timeout = timeout
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()

    def complete(self, request: CompletionRequest) -> Completion:
        body = {
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        if request.logprob_top_k > 0:
            body["logprobs"] = request.logprob_top_k

        attempts = 0
        while True:
            attempts += 1
            try:
                resp = self._session.post(
                    self._url, headers=self._headers, json=body, timeout=self._timeout
                )
            except requests.RequestException as exc:
                if attempts > self._max_retries:
                    raise TransportError(f"transport failure after {attempts} attempts: {exc}") from exc
                self._backoff(attempts)
                continue

            if resp.status_code in (401, 403):
                raise AuthenticationError(f"authentication failed (HTTP {resp.status_code})")
            if resp.status_code in _RETRYABLE_STATUSES:
                if attempts > self._max_retries:
                    raise TransportError(
                        f"HTTP {resp.status_code} after {attempts} attempts"
                    )
                self._backoff(attempts)
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return parse_completion_response(resp.json())

    def _backoff(self, attempt: int) -> None:
        delay = self._backoff_base * (2 ** (attempt - 1))
        delay *= 1.0 + self._rng.uniform(-0.1, 0.1)
        self._sleep(max(0.0, delay))


def parse_completion_response(payload: dict) -> Completion:
    """Build a Completion from an OpenAI-style response body."""
    try:
        choice = payload["choices"][0]
        text = choice["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed completion response: {exc}") from exc

    tokens: tuple[TokenInfo, ...] = ()
    lp = choice.get("logprobs")
    if lp and lp.get("tokens"):
        tops = lp.get("top_logprobs") or [None] * len(lp["tokens"])
        tokens = tuple(
            TokenInfo(
                text=tok,
                logprob=float(tok_lp),
                top_alternatives=tuple(
                    sorted(((t, float(v)) for t, v in (alts or {}).items()),
                           key=lambda kv: -kv[1])
                ),
            )
            for tok, tok_lp, alts in zip(lp["tokens"], lp["token_logprobs"], tops)
        )

    reason = choice.get("finish_reason")
    finish = FinishReason(reason) if reason in ("stop", "length") else FinishReason.OTHER
    return Completion(text=text, tokens=tokens, finish_reason=finish)
