"""Blinded human pair-ranking study: sampling, blinding, serving, stats.

The rater sees only the persona document, the shared dialogue history,
two candidate replies labeled First and Second, and the scoring rubric.
Iteration indices are replaced by abstract group labels under a seeded
random bijection; candidate order is randomized per task; judge scores,
Q vectors, reasoning, and the true orientation stay server-side.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ContractError, DuplicateSubmissionError, StudyError, UnknownTaskError
from .preferences import PreferencePair

CHOICES = ("First", "Second")

GROUP_LABEL_POOL = (
    "Group Maple",
    "Group Cedar",
    "Group Juniper",
    "Group Aspen",
    "Group Birch",
    "Group Rowan",
    "Group Alder",
    "Group Willow",
)


def sample_study_pairs(
    datasets: dict[int, Sequence[PreferencePair]], per_iter: int
) -> list[PreferencePair]:
    """Top ``per_iter`` pairs per iteration by descending sum-gap, so the
    sample reflects the strongest preference signals; ties break on the
    provenance id."""
    if per_iter < 0:
        raise ContractError("per_iter must be >= 0")
    sampled: list[PreferencePair] = []
    for iteration in sorted(datasets):
        pairs = list(datasets[iteration])
        if len(pairs) < per_iter:
            raise StudyError(
                f"iteration {iteration} has {len(pairs)} pairs, need {per_iter}"
            )
        pairs.sort(key=lambda p: (-p.sum_gap, p.pair_id))
        sampled.extend(pairs[:per_iter])
    return sampled


@dataclass(frozen=True)
class HiddenKey:
    """Server-side only; never serialized into a rater payload."""

    judge_preferred: str  # which shown label corresponds to the judge's chosen
    iteration: int
    chosen_q: tuple[float, float, float]
    rejected_q: tuple[float, float, float]
    sum_gap: float
    pair_id: str


@dataclass
class RatingTask:
    task_id: str
    group_label: str
    persona: dict
    history: list[dict]
    candidate_first: str
    candidate_second: str
    hidden: HiddenKey

    def payload(self) -> dict:
        """The rater-facing view; hidden fields are excluded by
        construction, not by filtering."""
        return {
            "task_id": self.task_id,
            "group_label": self.group_label,
            "persona": self.persona,
            "history": self.history,
            "candidate_first": self.candidate_first,
            "candidate_second": self.candidate_second,
        }


@dataclass
class RatingRecord:
    task_id: str
    choice: str
    timestamp: float


@dataclass
class BlindedSession:
    session_id: str
    seed: int
    iteration_labels: dict[int, str]
    tasks: list[RatingTask]
    records: dict[str, RatingRecord] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.records) == len(self.tasks)

    def next_task(self) -> RatingTask | None:
        for task in self.tasks:
            if task.task_id not in self.records:
                return task
        return None


def create_session(
    pairs: Sequence[PreferencePair],
    seed: int,
    personas: dict[int, dict] | None = None,
    session_id: str = "default",
) -> BlindedSession:
    """Blind and shuffle a pair sample into rating tasks.

    Iterations map to abstract labels under the seed; within each task the
    candidate order is randomized and only the orientation key remembers
    which side the judge preferred.
    """
    if not pairs:
        raise StudyError("cannot create a session with no pairs")
    personas = personas or {}
    rng = random.Random(seed)
    iterations = sorted({p.iteration for p in pairs})
    if len(iterations) > len(GROUP_LABEL_POOL):
        raise StudyError(f"too many iterations to blind: {len(iterations)}")
    labels = list(GROUP_LABEL_POOL)
    rng.shuffle(labels)
    iteration_labels = {it: labels[i] for i, it in enumerate(iterations)}

    tasks = []
    for i, pair in enumerate(pairs):
        chosen_first = rng.random() < 0.5
        first, second = (
            (pair.chosen.text, pair.rejected.text)
            if chosen_first
            else (pair.rejected.text, pair.chosen.text)
        )
        tasks.append(
            RatingTask(
                task_id=f"task-{i:04d}",
                group_label=iteration_labels[pair.iteration],
                persona=personas.get(pair.persona_index, {}),
                history=[{"role": u.role, "text": u.text} for u in pair.prompt],
                candidate_first=first,
                candidate_second=second,
                hidden=HiddenKey(
                    judge_preferred="First" if chosen_first else "Second",
                    iteration=pair.iteration,
                    chosen_q=pair.chosen_q.as_tuple(),
                    rejected_q=pair.rejected_q.as_tuple(),
                    sum_gap=pair.sum_gap,
                    pair_id=pair.pair_id,
                ),
            )
        )
    rng.shuffle(tasks)
    return BlindedSession(
        session_id=session_id,
        seed=seed,
        iteration_labels=iteration_labels,
        tasks=tasks,
    )


def submit_ranking(session: BlindedSession, task_id: str, choice: str) -> RatingRecord:
    if choice not in CHOICES:
        raise ContractError(f"choice must be one of {CHOICES}, got {choice!r}")
    if not any(t.task_id == task_id for t in session.tasks):
        raise UnknownTaskError(f"unknown task: {task_id}")
    if task_id in session.records:
        raise DuplicateSubmissionError(f"task {task_id} already answered")
    record = RatingRecord(task_id=task_id, choice=choice, timestamp=time.time())
    session.records[task_id] = record
    return record


@dataclass(frozen=True)
class GroupAgreement:
    label: str
    agreed: int
    total: int
    top_half_agreed: int
    top_half_total: int

    @property
    def pct(self) -> float:
        return 100.0 * self.agreed / self.total if self.total else 0.0

    @property
    def top_half_pct(self) -> float:
        return 100.0 * self.top_half_agreed / self.top_half_total if self.top_half_total else 0.0


@dataclass
class AgreementReport:
    groups: list[GroupAgreement]
    agreed: int
    total: int
    top_half_agreed: int
    top_half_total: int
    complete: bool

    @property
    def overall_pct(self) -> float:
        return 100.0 * self.agreed / self.total if self.total else 0.0

    @property
    def top_half_pct(self) -> float:
        return 100.0 * self.top_half_agreed / self.top_half_total if self.top_half_total else 0.0

    def to_doc(self) -> dict:
        return {
            "groups": [
                {
                    "label": g.label,
                    "agreed": g.agreed,
                    "total": g.total,
                    "pct": g.pct,
                    "top_half_agreed": g.top_half_agreed,
                    "top_half_total": g.top_half_total,
                    "top_half_pct": g.top_half_pct,
                }
                for g in self.groups
            ],
            "agreed": self.agreed,
            "total": self.total,
            "overall_pct": self.overall_pct,
            "top_half_agreed": self.top_half_agreed,
            "top_half_total": self.top_half_total,
            "top_half_pct": self.top_half_pct,
            "complete": self.complete,
        }


def agreement_stats(session: BlindedSession, allow_partial: bool = False) -> AgreementReport:
    """Rater-vs-judge agreement per group, over all answered tasks and
    over each group's high-gap top half."""
    if not session.complete and not allow_partial:
        raise StudyError(
            f"session has {len(session.records)}/{len(session.tasks)} answers; "
            "pass allow_partial for an interim report"
        )
    by_label: dict[str, list[RatingTask]] = {}
    for task in session.tasks:
        by_label.setdefault(task.group_label, []).append(task)

    groups = []
    total_agreed = total_all = 0
    top_agreed = top_total = 0
    for label in sorted(by_label):
        tasks = [t for t in by_label[label] if t.task_id in session.records]
        agreed = sum(
            1
            for t in tasks
            if session.records[t.task_id].choice == t.hidden.judge_preferred
        )
        ranked = sorted(tasks, key=lambda t: (-t.hidden.sum_gap, t.hidden.pair_id))
        top = ranked[: len(by_label[label]) // 2]
        t_agreed = sum(
            1
            for t in top
            if session.records[t.task_id].choice == t.hidden.judge_preferred
        )
        groups.append(
            GroupAgreement(
                label=label,
                agreed=agreed,
                total=len(tasks),
                top_half_agreed=t_agreed,
                top_half_total=len(top),
            )
        )
        total_agreed += agreed
        total_all += len(tasks)
        top_agreed += t_agreed
        top_total += len(top)
    return AgreementReport(
        groups=groups,
        agreed=total_agreed,
        total=total_all,
        top_half_agreed=top_agreed,
        top_half_total=top_total,
        complete=session.complete,
    )


def save_session(session: BlindedSession, path: str | Path) -> None:
    doc = {
        "session_id": session.session_id,
        "seed": session.seed,
        "iteration_labels": {str(k): v for k, v in session.iteration_labels.items()},
        "tasks": [
            {
                **t.payload(),
                "hidden": {
                    "judge_preferred": t.hidden.judge_preferred,
                    "iteration": t.hidden.iteration,
                    "chosen_q": list(t.hidden.chosen_q),
                    "rejected_q": list(t.hidden.rejected_q),
                    "sum_gap": t.hidden.sum_gap,
                    "pair_id": t.hidden.pair_id,
                },
            }
            for t in session.tasks
        ],
        "records": [
            {"task_id": r.task_id, "choice": r.choice, "timestamp": r.timestamp}
            for r in session.records.values()
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_session(path: str | Path) -> BlindedSession:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    tasks = [
        RatingTask(
            task_id=t["task_id"],
            group_label=t["group_label"],
            persona=t["persona"],
            history=t["history"],
            candidate_first=t["candidate_first"],
            candidate_second=t["candidate_second"],
            hidden=HiddenKey(
                judge_preferred=t["hidden"]["judge_preferred"],
                iteration=t["hidden"]["iteration"],
                chosen_q=tuple(t["hidden"]["chosen_q"]),
                rejected_q=tuple(t["hidden"]["rejected_q"]),
                sum_gap=t["hidden"]["sum_gap"],
                pair_id=t["hidden"]["pair_id"],
            ),
        )
        for t in doc["tasks"]
    ]
    session = BlindedSession(
        session_id=doc["session_id"],
        seed=doc["seed"],
        iteration_labels={int(k): v for k, v in doc["iteration_labels"].items()},
        tasks=tasks,
    )
    for r in doc["records"]:
        session.records[r["task_id"]] = RatingRecord(
            task_id=r["task_id"], choice=r["choice"], timestamp=r["timestamp"]
        )
    return session


try:  # pydantic is only needed when the HTTP surface is served
    from pydantic import BaseModel as _BaseModel
except ImportError:  # pragma: no cover
    _BaseModel = object


class RankBody(_BaseModel):
    task_id: str
    choice: str


def create_app(
    sessions: dict[str, BlindedSession],
    rubric_text: str,
    persist_path: str | Path | None = None,
):
    """HTTP surface consumed by the rater UI: next task, rank, stats,
    and the read-only rubric."""
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import PlainTextResponse

    app = FastAPI(title="pair-ranking study")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def get_session(session_id: str) -> BlindedSession:
        if session_id not in sessions:
            raise HTTPException(status_code=404, detail="unknown session")
        return sessions[session_id]

    @app.get("/session/{session_id}/next")
    def next_task(session_id: str):
        session = get_session(session_id)
        progress = {"answered": len(session.records), "total": len(session.tasks)}
        task = session.next_task()
        if task is None:
            return {"done": True, "progress": progress}
        return {"done": False, "task": task.payload(), "progress": progress}

    @app.post("/session/{session_id}/rank")
    def rank(session_id: str, body: RankBody):
        session = get_session(session_id)
        try:
            submit_ranking(session, body.task_id, body.choice)
        except DuplicateSubmissionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ContractError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if persist_path is not None:
            save_session(session, persist_path)
        return {
            "ok": True,
            "progress": {"answered": len(session.records), "total": len(session.tasks)},
        }

    @app.get("/session/{session_id}/stats")
    def stats(session_id: str):
        session = get_session(session_id)
        return agreement_stats(session, allow_partial=True).to_doc()

    @app.get("/rubric", response_class=PlainTextResponse)
    def rubric():
        return rubric_text

    return app
