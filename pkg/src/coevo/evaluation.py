"""Evaluation matrix, cell metrics, and the fixed-coach difficulty probe.

Evaluation dialogues are linear: the fixed client opener, then T coach
steps at low temperature, truncating early on the session-end marker.
Coach utterances inside the scoring window are judged with the same
protocol used during training; steps before the window are engaging
behavior and are excluded from every metric.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .agents import (
    CLIENT,
    COACH,
    AgentBackend,
    SamplingParams,
    Utterance,
    detect_termination,
    next_utterance,
    render_client_prompt,
    render_ood_client_prompt,
)
from .errors import JudgeValidationError, MetricError, TransportError
from .judge import (
    ScoreVector,
    SentenceLabel,
    parse_judge_response,
    render_judge_request,
)
from .personas import Persona
from .prompt_templates import PromptTemplates
from .tree import OPENER_TEXT

DEFAULT_WINDOW = (4, 8)


@dataclass(frozen=True)
class EvalConfig:
    T: int = 8
    window: tuple[int, int] = DEFAULT_WINDOW
    sampling: SamplingParams = field(default_factory=SamplingParams.eval_defaults)
    judge_retry_limit: int = 3

    def __post_init__(self):
        lo, hi = self.window
        if not (1 <= lo <= hi <= self.T):
            raise MetricError(f"scoring window {self.window} outside [1, {self.T}]")

    def in_window(self, coach_step: int) -> bool:
        return self.window[0] <= coach_step <= self.window[1]


@dataclass(frozen=True)
class CoachBundle:
    """A named coach condition: backend plus fixed system prompt."""

    name: str
    backend: AgentBackend
    system_prompt: str


@dataclass(frozen=True)
class ClientBundle:
    """A named client condition. ``style=None`` is the standard trait-free
    client prompt; otherwise one of the OOD style templates."""

    name: str
    backend: AgentBackend
    style: str | None = None

    def system_for(self, persona: Persona, templates: PromptTemplates) -> str:
        if self.style is None:
            return render_client_prompt(persona, "evaluation", templates)
        return render_ood_client_prompt(persona, self.style, templates)


@dataclass
class EvalDialogue:
    persona_index: int
    utterances: list[Utterance]
    truncated: bool


def run_eval_dialogue(
    coach_bundle: CoachBundle,
    client_bundle: ClientBundle,
    persona: Persona,
    cfg: EvalConfig,
    templates: PromptTemplates,
) -> EvalDialogue:
    """One linear dialogue: opener plus up to T coach/client pairs."""
    client_system = client_bundle.system_for(persona, templates)
    utterances = [Utterance(CLIENT, OPENER_TEXT)]
    truncated = False
    for step in range(1, cfg.T + 1):
        coach_turn = next_utterance(
            coach_bundle.backend,
            coach_bundle.system_prompt,
            utterances,
            cfg.sampling,
            COACH,
            coach_step=step,
        )
        utterances.append(coach_turn)
        if detect_termination(coach_turn):
            truncated = step < cfg.T
            break
        client_turn = next_utterance(
            client_bundle.backend,
            client_system,
            utterances,
            cfg.sampling,
            CLIENT,
        )
        utterances.append(client_turn)
        if detect_termination(client_turn):
            truncated = step < cfg.T
            break
    return EvalDialogue(persona.index, utterances, truncated)


@dataclass(frozen=True)
class ScoredUtterance:
    persona_index: int
    coach_step: int
    scores: ScoreVector
    labels: tuple[SentenceLabel, ...]
    state: str

    @property
    def mean3(self) -> float:
        return sum(self.scores.as_tuple()) / 3.0


def judge_dialogue(
    dialogue: EvalDialogue,
    judge: AgentBackend,
    cfg: EvalConfig,
    templates: PromptTemplates,
) -> list[ScoredUtterance]:
    """Judge the coach utterances inside the scoring window."""
    scored = []
    for i, utterance in enumerate(dialogue.utterances):
        if utterance.role != COACH or utterance.coach_step is None:
            continue
        if not cfg.in_window(utterance.coach_step):
            continue
        request = render_judge_request(dialogue.utterances[:i], utterance, templates)
        annotation = None
        last_error: Exception | None = None
        for _attempt in range(cfg.judge_retry_limit + 1):
            try:
                completion = judge.complete(
                    request.system,
                    [{"role": "user", "content": request.user}],
                    request.params,
                    response_schema=request.schema,
                )
                annotation = parse_judge_response(completion.text)
                break
            except (TransportError, JudgeValidationError) as exc:
                last_error = exc
        if annotation is None:
            raise MetricError(
                f"judging failed at persona {dialogue.persona_index} "
                f"step {utterance.coach_step}: {last_error}"
            )
        scored.append(
            ScoredUtterance(
                persona_index=dialogue.persona_index,
                coach_step=utterance.coach_step,
                scores=annotation.scores,
                labels=annotation.sentences,
                state=annotation.state.value,
            )
        )
    return scored


@dataclass(frozen=True)
class CellMetrics:
    cct_mean: float
    sst_mean: float
    empathy_mean: float
    mean3: float
    cct_se: float
    sst_se: float
    empathy_se: float
    mean3_se: float
    anti_pct: float
    n_utterances: int
    n_personas: int

    def to_doc(self) -> dict:
        return {
            "cct_mean": self.cct_mean,
            "sst_mean": self.sst_mean,
            "empathy_mean": self.empathy_mean,
            "mean3": self.mean3,
            "cct_se": self.cct_se,
            "sst_se": self.sst_se,
            "empathy_se": self.empathy_se,
            "mean3_se": self.mean3_se,
            "anti_pct": self.anti_pct,
            "n_utterances": self.n_utterances,
            "n_personas": self.n_personas,
        }


def _se(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values) / len(values) ** 0.5


def cell_metrics(scored: Sequence[ScoredUtterance]) -> CellMetrics:
    """Utterance-first aggregation for one (coach, client) cell.

    mean3 averages the per-utterance three-dimension average; standard
    errors are across per-persona means, not across utterances. anti% is
    the share of sentences whose function label is an anti-pattern.
    """
    if not scored:
        raise MetricError("cell has no scored utterances")
    mean3 = statistics.fmean(u.mean3 for u in scored)
    dim_means = {
        dim: statistics.fmean(getattr(u.scores, dim) for u in scored)
        for dim in ("cct", "sst", "empathy")
    }
    # Identity check: with all three scores on every utterance, the mean of
    # per-utterance averages equals the average of the dimension means.
    assert abs(mean3 - sum(dim_means.values()) / 3.0) < 1e-9

    by_persona: dict[int, list[ScoredUtterance]] = {}
    for u in scored:
        by_persona.setdefault(u.persona_index, []).append(u)
    persona_mean3 = [
        statistics.fmean(u.mean3 for u in us) for us in by_persona.values()
    ]
    persona_dim = {
        dim: [
            statistics.fmean(getattr(u.scores, dim) for u in us)
            for us in by_persona.values()
        ]
        for dim in ("cct", "sst", "empathy")
    }

    total_sentences = sum(len(u.labels) for u in scored)
    anti_sentences = sum(
        1 for u in scored for s in u.labels if s.group == "C"
    )
    anti_pct = 100.0 * anti_sentences / total_sentences if total_sentences else 0.0

    return CellMetrics(
        cct_mean=dim_means["cct"],
        sst_mean=dim_means["sst"],
        empathy_mean=dim_means["empathy"],
        mean3=mean3,
        cct_se=_se(persona_dim["cct"]),
        sst_se=_se(persona_dim["sst"]),
        empathy_se=_se(persona_dim["empathy"]),
        mean3_se=_se(persona_mean3),
        anti_pct=anti_pct,
        n_utterances=len(scored),
        n_personas=len(by_persona),
    )


@dataclass(frozen=True)
class FourCondSummary:
    mean3: float
    anti_pct: float
    cct_mean: float
    sst_mean: float
    empathy_mean: float


def four_cond_avg(cells: Sequence[CellMetrics]) -> FourCondSummary:
    """Unweighted mean of each cell-level metric over the four client
    conditions."""
    if len(cells) != 4:
        raise MetricError(f"expected exactly 4 client-condition cells, got {len(cells)}")
    return FourCondSummary(
        mean3=statistics.fmean(c.mean3 for c in cells),
        anti_pct=statistics.fmean(c.anti_pct for c in cells),
        cct_mean=statistics.fmean(c.cct_mean for c in cells),
        sst_mean=statistics.fmean(c.sst_mean for c in cells),
        empathy_mean=statistics.fmean(c.empathy_mean for c in cells),
    )


def run_cell(
    coach_bundle: CoachBundle,
    client_bundle: ClientBundle,
    personas: Sequence[Persona],
    judge: AgentBackend,
    cfg: EvalConfig,
    templates: PromptTemplates,
) -> tuple[CellMetrics, list[ScoredUtterance]]:
    scored: list[ScoredUtterance] = []
    for persona in personas:
        dialogue = run_eval_dialogue(coach_bundle, client_bundle, persona, cfg, templates)
        scored.extend(judge_dialogue(dialogue, judge, cfg, templates))
    return cell_metrics(scored), scored


def run_matrix(
    coach_bundles: Sequence[CoachBundle],
    client_bundles: Sequence[ClientBundle],
    personas: Sequence[Persona],
    judge: AgentBackend,
    cfg: EvalConfig,
    templates: PromptTemplates,
) -> dict:
    """Full coach-condition x client-condition matrix, plus per-coach
    cross-condition aggregates when all four client conditions are present."""
    cells = {}
    for coach_bundle in coach_bundles:
        for client_bundle in client_bundles:
            metrics, _ = run_cell(
                coach_bundle, client_bundle, personas, judge, cfg, templates
            )
            cells[(coach_bundle.name, client_bundle.name)] = metrics
    report = {
        "cells": {
            f"{coach}|{client}": m.to_doc() for (coach, client), m in cells.items()
        }
    }
    if len(client_bundles) == 4:
        report["four_cond_avg"] = {
            coach.name: four_cond_avg(
                [cells[(coach.name, cb.name)] for cb in client_bundles]
            ).__dict__
            for coach in coach_bundles
        }
    return report


@dataclass(frozen=True)
class ProbeRow:
    client: str
    cct_mean: float
    sst_mean: float
    empathy_mean: float
    mean3: float
    cct_below3_pct: float
    state_distribution: dict[str, float]
    anti_pct: float

    def to_doc(self) -> dict:
        return {
            "client": self.client,
            "cct_mean": self.cct_mean,
            "sst_mean": self.sst_mean,
            "empathy_mean": self.empathy_mean,
            "mean3": self.mean3,
            "cct_below3_pct": self.cct_below3_pct,
            "state_distribution": dict(self.state_distribution),
            "anti_pct": self.anti_pct,
        }


@dataclass
class ProbeReport:
    coach: str
    rows: list[ProbeRow] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {"coach": self.coach, "rows": [r.to_doc() for r in self.rows]}


def cct_below3_pct(cct_scores: Sequence[int]) -> float:
    """Percent of scored coach utterances with CCT strictly below the
    neutral score of 3."""
    if not cct_scores:
        raise MetricError("no CCT scores")
    return 100.0 * sum(1 for s in cct_scores if s < 3) / len(cct_scores)


def probe_fixed_coach(
    coach_bundle: CoachBundle,
    client_bundles: Sequence[ClientBundle],
    personas: Sequence[Persona],
    judge: AgentBackend,
    cfg: EvalConfig,
    templates: PromptTemplates,
) -> ProbeReport:
    """Hold one coach fixed and run it against each client condition.

    Because the coach never changes, row-to-row differences isolate how
    hard each client makes the coaching task. The client-state
    distribution uses the judge's step-1 state for each scored coach turn,
    i.e. the state of the client utterance immediately preceding it.
    """
    from .judge import CLIENT_STATES

    if not client_bundles:
        raise MetricError("probe needs at least one client bundle")
    report = ProbeReport(coach=coach_bundle.name)
    for client_bundle in client_bundles:
        metrics, scored = run_cell(
            coach_bundle, client_bundle, personas, judge, cfg, templates
        )
        n = len(scored)
        distribution = {
            state: 100.0 * sum(1 for u in scored if u.state == state) / n
            for state in CLIENT_STATES
        }
        report.rows.append(
            ProbeRow(
                client=client_bundle.name,
                cct_mean=metrics.cct_mean,
                sst_mean=metrics.sst_mean,
                empathy_mean=metrics.empathy_mean,
                mean3=metrics.mean3,
                cct_below3_pct=cct_below3_pct([u.scores.cct for u in scored]),
                state_distribution=distribution,
                anti_pct=metrics.anti_pct,
            )
        )
    return report


def write_trajectory(rows: Sequence[dict], path: str | Path) -> Path:
    """Plot-ready long format: one (iteration, condition, metric, value)
    per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["iteration", "condition", "metric", "value"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def trajectory_rows(
    iteration_cells: dict[int, CellMetrics], condition: str
) -> list[dict]:
    rows = []
    for iteration in sorted(iteration_cells):
        m = iteration_cells[iteration]
        for metric, value in (
            ("cct", m.cct_mean),
            ("sst", m.sst_mean),
            ("empathy", m.empathy_mean),
            ("mean3", m.mean3),
            ("anti_pct", m.anti_pct),
        ):
            rows.append(
                {
                    "iteration": iteration,
                    "condition": condition,
                    "metric": metric,
                    "value": value,
                }
            )
    return rows
