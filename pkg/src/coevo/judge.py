"""Structured multi-dimensional judging of coach utterances.

The judge protocol has three steps — client-state identification,
sentence-level function labeling, and per-dimension reasoning followed by
an integer score — enforced by the JSON schema shipped in
``judge_schema.json``. That file is the single source of truth for the
state and label enums and for the reasoning-before-score field order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .agents import (
    CLIENT,
    COACH,
    AgentBackend,
    SamplingParams,
    Utterance,
)
from .errors import ContractError, JudgeValidationError, ScoringError, TransportError
from .prompt_templates import PromptTemplates, fill
from .tree import DialogueTree, path_history

CLIENT_STATES = (
    "engaged",
    "ambivalent",
    "sustain_resistant",
    "emotional",
    "informational",
)

GROUP_A = (
    "open_question_evoking",
    "simple_reflection",
    "complex_reflection",
    "double_sided_reflection",
    "affirmation",
    "summary",
)
GROUP_B = ("neutral_question", "rapport_or_info", "other")
GROUP_C = (
    "leading_question",
    "premature_planning",
    "arguing_for_change",
    "arguing_against_sustain",
    "reassurance",
    "unsolicited_advice",
    "parroting",
    "distorted_reflection",
)
ALL_LABELS = GROUP_A + GROUP_B + GROUP_C

DIMENSIONS = ("cct", "sst", "empathy")

CLIENT_REWARD = (0.0, 0.0, 0.0)


def label_group(label: str) -> str:
    """A -> MI-adherent, B -> neutral, C -> anti-pattern."""
    if label in GROUP_A:
        return "A"
    if label in GROUP_B:
        return "B"
    if label in GROUP_C:
        return "C"
    raise ContractError(f"unknown function label: {label!r}")


def load_judge_schema() -> dict:
    text = resources.files("coevo").joinpath("judge_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


_SCHEMA = load_judge_schema()
_VALIDATOR = jsonschema.Draft202012Validator(_SCHEMA["schema"])


@dataclass(frozen=True)
class ScoreVector:
    """Per-dimension judge scores; 3 is neutral MI behavior, 1-2 encode
    anti-patterns."""

    cct: int
    sst: int
    empathy: int

    def __post_init__(self):
        for name in DIMENSIONS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ContractError(f"{name} score must be an integer")
            if not 1 <= value <= 5:
                raise ContractError(f"{name} score {value} outside [1, 5]")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.cct, self.sst, self.empathy)


@dataclass(frozen=True)
class ClientState:
    value: str
    evidence: str

    def __post_init__(self):
        if self.value not in CLIENT_STATES:
            raise ContractError(f"unknown client state: {self.value!r}")


@dataclass(frozen=True)
class SentenceLabel:
    sentence: str
    label: str

    def __post_init__(self):
        if self.label not in ALL_LABELS:
            raise ContractError(f"unknown function label: {self.label!r}")

    @property
    def group(self) -> str:
        return label_group(self.label)


@dataclass(frozen=True)
class JudgeAnnotation:
    state: ClientState
    sentences: tuple[SentenceLabel, ...]
    reasoning: dict[str, str]
    scores: ScoreVector

    def to_doc(self) -> dict:
        return {
            "state": {"value": self.state.value, "evidence": self.state.evidence},
            "sentences": [
                {"sentence": s.sentence, "label": s.label} for s in self.sentences
            ],
            "reasoning": dict(self.reasoning),
            "scores": {
                "cct": self.scores.cct,
                "sst": self.scores.sst,
                "empathy": self.scores.empathy,
            },
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "JudgeAnnotation":
        return cls(
            state=ClientState(doc["state"]["value"], doc["state"]["evidence"]),
            sentences=tuple(
                SentenceLabel(s["sentence"], s["label"]) for s in doc["sentences"]
            ),
            reasoning=dict(doc["reasoning"]),
            scores=ScoreVector(**doc["scores"]),
        )


@dataclass(frozen=True)
class JudgeRequest:
    system: str
    user: str
    schema: dict
    params: SamplingParams


def format_context(context: list[Utterance]) -> str:
    return "\n".join(f"{u.role.capitalize()}: {u.text}" for u in context)


def render_judge_request(
    context: list[Utterance],
    target: Utterance,
    templates: PromptTemplates,
    max_context_turns: int | None = None,
) -> JudgeRequest:
    """Fixed judge system prompt plus the two slotted inputs.

    The context window defaults to the full prefix; a truncation length is
    exposed for cost control only.
    """
    if target.role != COACH:
        raise ContractError("judge targets must be coach utterances")
    if any(u is target for u in context):
        raise ContractError("context must exclude the target utterance")
    window = context if max_context_turns is None else context[-max_context_turns:]
    user = fill(
        templates.judge_input,
        insert_recent_turns=format_context(window),
        insert_coach_utterance=target.text,
    )
    return JudgeRequest(
        system=templates.judge_system,
        user=user,
        schema=_SCHEMA,
        params=SamplingParams.judge_defaults(),
    )


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1 and text.endswith("```"):
            text = text[first_newline + 1 : -3].strip()
    return text


def parse_judge_response(raw: str) -> JudgeAnnotation:
    """Validate a raw judge response against the schema and build the
    annotation. Every violation carries the offending path."""
    try:
        doc = json.loads(_strip_fences(raw))
    except json.JSONDecodeError as exc:
        raise JudgeValidationError(f"response is not valid JSON: {exc}")
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        first = errors[0]
        raise JudgeValidationError(first.message, path=first.json_path)
    keys = list(doc.keys())
    for dim in DIMENSIONS:
        if keys.index(f"{dim}_reasoning") > keys.index(f"{dim}_score"):
            raise JudgeValidationError(
                f"{dim}_reasoning must precede {dim}_score", path=f"$.{dim}_score"
            )
    return JudgeAnnotation(
        state=ClientState(doc["client_state"]["state"], doc["client_state"]["evidence"]),
        sentences=tuple(
            SentenceLabel(s["sentence"], s["label"]) for s in doc["sentences"]
        ),
        reasoning={dim: doc[f"{dim}_reasoning"] for dim in DIMENSIONS},
        scores=ScoreVector(
            cct=doc["cct_score"],
            sst=doc["sst_score"],
            empathy=doc["empathy_score"],
        ),
    )


def render_judge_response(annotation: JudgeAnnotation) -> str:
    """Canonical wire form; reasoning fields precede their scores."""
    doc = {
        "client_state": {
            "state": annotation.state.value,
            "evidence": annotation.state.evidence,
        },
        "sentences": [
            {"sentence": s.sentence, "label": s.label} for s in annotation.sentences
        ],
    }
    for dim in DIMENSIONS:
        doc[f"{dim}_reasoning"] = annotation.reasoning[dim]
        doc[f"{dim}_score"] = getattr(annotation.scores, dim)
    return json.dumps(doc, ensure_ascii=False)


@dataclass
class ScoringStats:
    judged: int = 0
    retried: int = 0
    failed: list[int] = field(default_factory=list)


def score_tree(
    tree: DialogueTree,
    judge: AgentBackend,
    retry_limit: int = 3,
    templates: PromptTemplates | None = None,
    max_context_turns: int | None = None,
    stats: ScoringStats | None = None,
) -> DialogueTree:
    """Annotate every coach node with judge scores.

    Each failed request is fully re-issued up to ``retry_limit`` extra
    times. If any node stays unjudged the tree is marked unscorable and a
    ScoringError lists the failed node ids.
    """
    if templates is None:
        from .prompt_templates import load_templates

        templates = load_templates()
    stats = stats if stats is not None else ScoringStats()
    for node in tree.walk():
        if node.role != COACH:
            node.reward = CLIENT_REWARD
            continue
        request = render_judge_request(
            path_history(tree, node.id),
            node.utterance,
            templates,
            max_context_turns=max_context_turns,
        )
        annotation = None
        for attempt in range(retry_limit + 1):
            try:
                completion = judge.complete(
                    request.system,
                    [{"role": "user", "content": request.user}],
                    request.params,
                    response_schema=request.schema,
                )
                annotation = parse_judge_response(completion.text)
                break
            except (TransportError, JudgeValidationError):
                if attempt < retry_limit:
                    stats.retried += 1
                    continue
        if annotation is None:
            stats.failed.append(node.id)
            continue
        node.annotation = annotation
        node.reward = tuple(float(x) for x in annotation.scores.as_tuple())
        stats.judged += 1
    if stats.failed:
        tree.unscorable = True
        raise ScoringError(stats.failed)
    # Client nodes never carry nonzero reward.
    assert all(
        n.reward == CLIENT_REWARD for n in tree.walk() if n.role == CLIENT
    )
    return tree
