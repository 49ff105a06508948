"""Chat-completion backends and role-level prompt plumbing.

Two backend kinds exist behind one ``complete`` interface: a remote
OpenAI-compatible endpoint and a deterministic scripted table for tests,
dry runs, and desk-scale pipelines. Scripted lookups are keyed by a
conversation fingerprint (hash of system prompt + ordered history texts),
so branching points address distinct script rows without manual wiring.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx

from .errors import (
    ContractError,
    EmptyCompletionError,
    RateLimitError,
    ScriptExhaustedError,
    TransportError,
)
from .prompt_templates import OOD_STYLES, PromptTemplates, fill

COACH = "coach"
CLIENT = "client"
ROLES = (COACH, CLIENT)

TERMINATION_MARKER = "[SESSION_END]"

CLIENT_PROMPT_MODES = ("sft", "coevolution", "evaluation")


def other_role(role: str) -> str:
    return CLIENT if role == COACH else COACH


@dataclass(frozen=True)
class Utterance:
    """One dialogue turn. ``coach_step`` is set on coach turns only."""

    role: str
    text: str
    coach_step: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ContractError(f"unknown role: {self.role!r}")
        if not self.text:
            raise ContractError("utterance text must be non-empty")
        if self.coach_step is not None and self.role != COACH:
            raise ContractError("coach_step is only valid on coach utterances")


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.9
    top_p: float = 0.95
    max_tokens: int = 312
    seed: int | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ContractError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ContractError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ContractError("max_tokens must be positive")

    @classmethod
    def tree_defaults(cls) -> "SamplingParams":
        return cls(temperature=0.9, top_p=0.95, max_tokens=312)

    @classmethod
    def eval_defaults(cls) -> "SamplingParams":
        return cls(temperature=0.2, top_p=0.95, max_tokens=312)

    @classmethod
    def judge_defaults(cls) -> "SamplingParams":
        return cls(temperature=0.0, top_p=1.0, max_tokens=1024)


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0


def conversation_fingerprint(system: str, history_texts: Sequence[str]) -> str:
    """Stable hash of (system prompt, ordered history texts)."""
    payload = json.dumps([system, *history_texts], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class AgentBackend:
    """Interface shared by remote and scripted backends."""

    kind = "abstract"

    def complete(
        self,
        system: str,
        messages: Sequence[dict],
        params: SamplingParams,
        response_schema: dict | None = None,
    ) -> Completion:
        raise NotImplementedError


class RemoteBackend(AgentBackend):
    """OpenAI-compatible chat-completions client with retries.

    Credentials are read from the environment variable named by
    ``auth_env`` at request time, never stored.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        auth_env: str | None = None,
        retries: int = 2,
        timeout: float = 60.0,
        backoff_s: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_name = model_name
        self.auth_env = auth_env
        self.retries = retries
        self.backoff_s = backoff_s
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, system, messages, params, response_schema=None):
        body = {
            "model": self.model_name,
            "messages": [{"role": "system", "content": system}, *messages],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        if response_schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": response_schema,
            }

        url = f"{self.endpoint}/chat/completions"
        last_error: TransportError | None = None
        for attempt in range(self.retries + 1):
            if attempt and self.backoff_s:
                time.sleep(self.backoff_s * attempt)
            try:
                started = time.monotonic()
                resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = TransportError(f"request failed: {exc!r}")
                continue
            latency = time.monotonic() - started
            if resp.status_code == 429:
                last_error = RateLimitError(f"rate limited by {url}")
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"server error {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"unexpected status {resp.status_code} from {url}")
            try:
                payload = resp.json()
                text = payload["choices"][0]["message"]["content"]
                usage = payload.get("usage", {})
            except (KeyError, IndexError, ValueError) as exc:
                raise TransportError(f"malformed completion payload: {exc!r}")
            if not text or not text.strip():
                last_error = EmptyCompletionError("backend returned an empty completion")
                continue
            return Completion(
                text=text,
                prompt_tokens=usage.get("prompt_tokens", 0),
                completion_tokens=usage.get("completion_tokens", 0),
                latency_s=latency,
            )
        raise last_error if last_error else TransportError("request failed")


Responder = Callable[[str, tuple[str, ...], str, int], str]
"""(system, history_texts, fingerprint, sample_index) -> completion text."""


class ScriptedBackend(AgentBackend):
    """Deterministic backend: returns ``script[(fingerprint, index)]``.

    Sample indices are allocated per fingerprint in call order, so M
    samples under the same history consume indices 0..M-1. Lookups that
    miss the table fall through to ``responder``; with no responder the
    backend is strict and raises. Index allocation is serialized per
    instance; a fresh instance replays identically.
    """

    kind = "scripted"

    def __init__(
        self,
        script: dict[tuple[str, int], str] | None = None,
        responder: Responder | None = None,
        model_name: str = "scripted",
    ):
        self.script = dict(script or {})
        self.responder = responder
        self.model_name = model_name
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    def _next_index(self, fingerprint: str) -> int:
        with self._lock:
            index = self._counters.get(fingerprint, 0)
            self._counters[fingerprint] = index + 1
        return index

    def complete(self, system, messages, params, response_schema=None):
        history_texts = tuple(m["content"] for m in messages)
        fingerprint = conversation_fingerprint(system, history_texts)
        index = self._next_index(fingerprint)
        key = (fingerprint, index)
        if key in self.script:
            text = self.script[key]
        elif self.responder is not None:
            text = self.responder(system, history_texts, fingerprint, index)
        else:
            raise ScriptExhaustedError(
                f"no script row for fingerprint {fingerprint[:12]}... index {index}"
            )
        if not text:
            raise EmptyCompletionError("scripted backend produced empty text")
        return Completion(text=text)


def _chat_messages(history: Sequence[Utterance], speaker: str) -> list[dict]:
    # The speaker's own past turns map to "assistant", the other side to "user".
    return [
        {
            "role": "assistant" if u.role == speaker else "user",
            "content": u.text,
        }
        for u in history
    ]


def next_utterance(
    backend: AgentBackend,
    system: str,
    history: Sequence[Utterance],
    params: SamplingParams,
    speaker: str,
    coach_step: int | None = None,
) -> Utterance:
    """Sample one utterance for ``speaker`` given the dialogue so far."""
    if speaker not in ROLES:
        raise ContractError(f"unknown speaker: {speaker!r}")
    if history and history[-1].role == speaker:
        raise ContractError(
            f"history must alternate: last turn is already {speaker}"
        )
    completion = backend.complete(system, _chat_messages(history, speaker), params)
    return Utterance(
        role=speaker,
        text=completion.text,
        coach_step=coach_step if speaker == COACH else None,
    )


def render_client_prompt(
    persona,
    mode: str,
    templates: PromptTemplates,
    trait: str | None = None,
) -> str:
    """Render the client system prompt for one persona.

    SFT mode injects the sampled trait descriptor; co-evolution and
    evaluation use the trait-free variant so the client stays free to
    adapt under its preference signal.
    """
    if mode not in CLIENT_PROMPT_MODES:
        raise ContractError(f"unknown client prompt mode: {mode!r}")
    if mode == "sft":
        if trait is None:
            raise ContractError("sft mode requires a trait descriptor")
        template = templates.client_with_trait
    else:
        if trait is not None:
            raise ContractError(f"trait is not allowed in {mode} mode")
        template = templates.client_no_trait
    persona_text = json.dumps(persona.to_doc(), indent=2, ensure_ascii=False)
    out = fill(template, persona_text=persona_text)
    if trait is not None:
        out = fill(out, trait_description=trait)
    return out


def render_ood_client_prompt(persona, style: str, templates: PromptTemplates) -> str:
    if style not in OOD_STYLES:
        raise ContractError(f"unknown OOD style: {style!r}")
    persona_text = json.dumps(persona.to_doc(), indent=2, ensure_ascii=False)
    return fill(templates.ood_styles[style], persona_text=persona_text)


def detect_termination(u: Utterance | str) -> bool:
    """True iff the utterance ends with the session-end marker; mid-text
    occurrences do not terminate."""
    text = u if isinstance(u, str) else u.text
    return text.rstrip().endswith(TERMINATION_MARKER)
