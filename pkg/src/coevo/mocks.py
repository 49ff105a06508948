"""Deterministic scripted agents and synthetic personas.

Everything here is a pure function of (seed, fingerprint, sample index),
so full pipeline runs replay bit-identically. The mock judge emits valid
wire-format annotations whose scores vary with the hash, giving trees
enough score spread for Pareto pairs to exist.
"""

from __future__ import annotations

import hashlib

from .agents import ScriptedBackend
from .judge import (
    ALL_LABELS,
    CLIENT_STATES,
    ClientState,
    JudgeAnnotation,
    ScoreVector,
    SentenceLabel,
    render_judge_response,
)
from .personas import Occupation, Persona, Place

_FIRST_OCCUPATIONS = (
    "Librarian", "Electrician", "Line Cook", "Paramedic", "Accountant",
    "Landscaper", "Teacher", "Courier", "Pharmacist", "Welder",
    "Barista", "Surveyor", "Dispatcher", "Tailor", "Carpenter",
)
_CONDITIONS = (
    "hypertension", "type 2 diabetes", "asthma", "chronic back pain",
    "high cholesterol", "insomnia", "mild arthritis", "seasonal depression",
)
_SETTINGS = ("urban", "suburban", "rural", "frontier")
_GENDERS = ("Male", "Female", "Non-binary", "Other")
_ACTIVITY = (
    "Sedentary", "Lightly active", "Moderately active", "Very active",
    "Highly active",
)

TRAITS = (
    "hesitant but curious",
    "skeptical and guarded",
    "warm but easily discouraged",
    "pragmatic and busy",
    "anxious yet motivated",
    "upbeat but scattered",
)


def _digest(*parts) -> bytes:
    joined = "\x1f".join(str(p) for p in parts)
    return hashlib.sha256(joined.encode("utf-8")).digest()


def mock_persona(index: int) -> Persona:
    d = _digest("persona", index)
    occupation = _FIRST_OCCUPATIONS[d[0] % len(_FIRST_OCCUPATIONS)]
    condition_a = _CONDITIONS[d[1] % len(_CONDITIONS)]
    condition_b = _CONDITIONS[d[2] % len(_CONDITIONS)]
    return Persona(
        index=index,
        age=18 + d[3] % 60,
        gender=_GENDERS[d[4] % len(_GENDERS)],
        ethnicity=["Asian", "Black", "Hispanic", "White", "Middle Eastern"][d[5] % 5],
        place=Place("US", "WA", f"Town {d[6] % 100}", _SETTINGS[d[7] % 4]),
        activity_level=_ACTIVITY[d[8] % 5],
        occupations=(
            Occupation(
                f"{occupation} #{index}",
                ["full-time", "part-time", "self-employed"][d[9] % 3],
                f"Works as a {occupation.lower()} with a varying weekly schedule.",
            ),
        ),
        body_composition=f"build profile {d[10] % 7}",
        health=(condition_a, f"{condition_b} (mild)"),
        physical_limitations=(f"limited tolerance pattern {d[11] % 5}",),
        goals=(
            f"improve stamina for daily routine ({index})",
            "sleep more regularly through the week",
            f"manage {condition_a} with steadier habits",
        ),
        challenges=(
            f"work schedule leaves little energy on weekdays ({index})",
            f"{condition_b} flares when routines change quickly",
            "past attempts faded after a few weeks",
        ),
    )


def mock_pool(size: int) -> list[Persona]:
    return [mock_persona(i) for i in range(size)]


def utterance_responder(side: str, seed: int = 0):
    """Deterministic free-text replies for a coach or client agent."""

    def responder(system, history_texts, fingerprint, index):
        tag = _digest(side, seed, fingerprint, index).hex()[:10]
        turn = len(history_texts)
        return f"({side} {tag}) turn {turn} sample {index}."

    return responder


def judge_responder(seed: int = 0, constant: ScoreVector | None = None):
    """Valid wire-format judge responses; scores derived from the hash of
    the request unless a constant vector is given."""

    def responder(system, history_texts, fingerprint, index):
        d = _digest("judge", seed, fingerprint)
        if constant is not None:
            scores = constant
        else:
            scores = ScoreVector(
                1 + d[0] % 5,
                1 + d[1] % 5,
                1 + d[2] % 5,
            )
        state = CLIENT_STATES[d[3] % len(CLIENT_STATES)]
        n_sentences = 1 + d[4] % 3
        sentences = tuple(
            SentenceLabel(
                f"sentence {i} ({d[5 + i] % 97})",
                ALL_LABELS[d[8 + i] % len(ALL_LABELS)],
            )
            for i in range(n_sentences)
        )
        annotation = JudgeAnnotation(
            state=ClientState(state, f"evidence {d[12] % 89}"),
            sentences=sentences,
            reasoning={
                "cct": f"cct rationale {d[13] % 83}",
                "sst": f"sst rationale {d[14] % 83}",
                "empathy": f"empathy rationale {d[15] % 83}",
            },
            scores=scores,
        )
        return render_judge_response(annotation)

    return responder


def mock_agent_backend(side: str, seed: int = 0) -> ScriptedBackend:
    return ScriptedBackend(
        responder=utterance_responder(side, seed), model_name=f"mock-{side}-{seed}"
    )


def mock_judge_backend(seed: int = 0, constant: ScoreVector | None = None) -> ScriptedBackend:
    return ScriptedBackend(
        responder=judge_responder(seed, constant), model_name=f"mock-judge-{seed}"
    )


def mock_persona_generator(n: int) -> ScriptedBackend:
    """Backend whose every completion is a JSON array of n valid personas."""
    import json

    def responder(system, history_texts, fingerprint, index):
        docs = [mock_persona(i).to_doc() for i in range(n)]
        return json.dumps(docs)

    return ScriptedBackend(responder=responder, model_name="mock-persona-gen")
