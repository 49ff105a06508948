"""The per-iteration co-evolution loop and SFT corpus generation.

Each iteration runs four checkpointed stages: generate N trees with the
previous policies, judge every coach node, back values up and extract
both preference datasets, then invoke the trainer hook once per side and
register the resulting artifacts. Weights never move in-process; the
trainer hook is an external command contract, desk-testable with the
no-op trainer.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import random

from .agents import (
    CLIENT,
    COACH,
    AgentBackend,
    SamplingParams,
    Utterance,
    detect_termination,
    next_utterance,
    render_client_prompt,
)
from .errors import (
    ArtifactLookupError,
    CoevoError,
    ConfigError,
    ContractError,
    IterationError,
)
from .game_checks import check_client_consistency, check_coach_consistency
from .judge import ScoringStats, score_tree
from .mocks import TRAITS
from .personas import Persona
from .preferences import (
    PreferencePair,
    extract_client_pairs,
    extract_coach_pairs,
    export_pairs,
)
from .prompt_templates import PromptTemplates, load_templates
from .tree import BranchingSchedule, build_tree, load_tree, save_tree, tree_shape
from .valuation import DiscountConfig, backup_q

STAGES = ("generate", "score", "extract", "train")

SFT_ITERATION = 0
HARD_CAP_PAIRS = 30


@dataclass(frozen=True)
class IterationConfig:
    K: int = 13
    N: int = 3
    M: int = 3
    gamma: float = 0.5
    T: int = 8
    branch_steps: tuple[int, ...] = (4, 6)
    beta: float = 0.1
    tree_sampling: SamplingParams = field(default_factory=SamplingParams.tree_defaults)
    judge_retry_limit: int = 3
    consistency_trials: int = 100

    def schedule(self) -> BranchingSchedule:
        return BranchingSchedule.from_steps(self.branch_steps, M=self.M, T=self.T)


@dataclass(frozen=True)
class PolicyRef:
    side: str
    iteration: int
    artifact_uri: str
    reference_of: str

    def to_doc(self) -> dict:
        return {
            "side": self.side,
            "iteration": self.iteration,
            "artifact_uri": self.artifact_uri,
            "reference_of": self.reference_of,
        }


class ArtifactRegistry:
    """(side, iteration) -> artifact URI, persisted as a manifest file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, dict[str, str]] = {COACH: {}, CLIENT: {}}
        if self.path.is_file():
            raw = json.loads(self.path.read_text(encoding="utf-8"))
            self._entries = {side: dict(raw.get(side, {})) for side in (COACH, CLIENT)}

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(self._entries, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def register(self, side: str, iteration: int, uri: str) -> None:
        if side not in (COACH, CLIENT):
            raise ContractError(f"unknown side: {side!r}")
        self._entries[side][str(iteration)] = uri
        self._save()

    def lookup(self, side: str, iteration: int) -> str:
        try:
            return self._entries[side][str(iteration)]
        except KeyError:
            raise ArtifactLookupError(
                f"no registered {side} artifact for iteration {iteration}"
            )

    def has(self, side: str, iteration: int) -> bool:
        return str(iteration) in self._entries.get(side, {})

    def bootstrap_sft(self, coach_uri: str = "sft:coach", client_uri: str = "sft:client") -> None:
        if not self.has(COACH, SFT_ITERATION):
            self.register(COACH, SFT_ITERATION, coach_uri)
        if not self.has(CLIENT, SFT_ITERATION):
            self.register(CLIENT, SFT_ITERATION, client_uri)


def reference_policy_for(registry: ArtifactRegistry, side: str, k: int) -> PolicyRef:
    """Coach updates reference the previous iteration; the client always
    references its SFT initialization."""
    if k < 1:
        raise ContractError("iterations are numbered from 1")
    if side == COACH:
        iteration = k - 1
    elif side == CLIENT:
        iteration = SFT_ITERATION
    else:
        raise ContractError(f"unknown side: {side!r}")
    from .preferences import REFERENCE_POLICIES

    return PolicyRef(
        side=side,
        iteration=iteration,
        artifact_uri=registry.lookup(side, iteration),
        reference_of=REFERENCE_POLICIES[side],
    )


class TrainerHook:
    """External trainer contract: given a dataset and a reference policy,
    produce an artifact and return its URI."""

    def train(self, side: str, iteration: int, dataset: Path, reference: PolicyRef, artifact_out: Path) -> str:
        raise NotImplementedError


class NoopTrainer(TrainerHook):
    """Writes a stub artifact; lets the loop run without any optimizer."""

    def train(self, side, iteration, dataset, reference, artifact_out):
        artifact_out.parent.mkdir(parents=True, exist_ok=True)
        n_records = sum(1 for line in dataset.read_text(encoding="utf-8").splitlines() if line)
        artifact_out.write_text(
            json.dumps(
                {
                    "trainer": "noop",
                    "side": side,
                    "iteration": iteration,
                    "dataset_records": n_records,
                    "reference": reference.to_doc(),
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        return str(artifact_out)


class CommandTrainer(TrainerHook):
    """Invokes ``command <argfile>`` where the arg file is a JSON document
    naming the dataset, side, reference, and expected artifact path."""

    def __init__(self, command: str):
        self.command = command

    def train(self, side, iteration, dataset, reference, artifact_out):
        artifact_out.parent.mkdir(parents=True, exist_ok=True)
        arg_file = artifact_out.with_suffix(".args.json")
        arg_file.write_text(
            json.dumps(
                {
                    "side": side,
                    "iteration": iteration,
                    "dataset": str(dataset),
                    "reference": reference.to_doc(),
                    "artifact_out": str(artifact_out),
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        result = subprocess.run(
            [*shlex.split(self.command), str(arg_file)],
            capture_output=True,
            text=True,
        )
        if result.returncode != 0:
            raise CoevoError(
                f"trainer command failed ({result.returncode}): {result.stderr.strip()}"
            )
        if not artifact_out.exists():
            raise CoevoError(f"trainer did not produce artifact {artifact_out}")
        return str(artifact_out)


class BackendProvider:
    """Resolves the backend acting for a side at a given iteration."""

    def backend_for(self, side: str, iteration: int) -> AgentBackend:
        raise NotImplementedError

    def judge_backend(self) -> AgentBackend:
        raise NotImplementedError


class MockBackendProvider(BackendProvider):
    """Scripted agents whose text distribution shifts with the iteration,
    standing in for the evolving adapters."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def backend_for(self, side, iteration):
        from .mocks import mock_agent_backend

        return mock_agent_backend(side, seed=self.seed * 1000 + iteration)

    def judge_backend(self):
        from .mocks import mock_judge_backend

        return mock_judge_backend(seed=self.seed)


class StaticBackendProvider(BackendProvider):
    def __init__(self, coach: AgentBackend, client: AgentBackend, judge: AgentBackend):
        self._coach = coach
        self._client = client
        self._judge = judge

    def backend_for(self, side, iteration):
        return self._coach if side == COACH else self._client

    def judge_backend(self):
        return self._judge


def tree_personas_for_iteration(
    pool: Sequence[Persona], tree_indices: Sequence[int], k: int, n: int, seed: int
) -> list[Persona]:
    """Sequential-without-replacement persona draw for iteration k.

    The tree partition is shuffled once per run seed; iteration k consumes
    slots [(k-1)*N, k*N). Exhaustion is an explicit error.
    """
    order = list(tree_indices)
    random.Random(seed).shuffle(order)
    start = (k - 1) * n
    if start + n > len(order):
        raise ConfigError(
            f"tree persona partition exhausted at iteration {k}: "
            f"{len(order)} personas cannot cover {start + n}"
        )
    by_index = {p.index: p for p in pool}
    chosen = []
    for idx in order[start : start + n]:
        if idx not in by_index:
            raise ConfigError(f"persona index {idx} missing from pool")
        chosen.append(by_index[idx])
    return chosen


@dataclass
class IterationReport:
    iteration: int
    tree_shapes: list[dict] = field(default_factory=list)
    coach_pairs: int = 0
    client_pairs: int = 0
    judge_failures: int = 0
    judge_retries: int = 0
    consistency: dict = field(default_factory=dict)
    datasets: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "iteration": self.iteration,
            "tree_shapes": self.tree_shapes,
            "coach_pairs": self.coach_pairs,
            "client_pairs": self.client_pairs,
            "judge_failures": self.judge_failures,
            "judge_retries": self.judge_retries,
            "consistency": self.consistency,
            "datasets": self.datasets,
            "artifacts": self.artifacts,
        }


class _IterationState:
    def __init__(self, run_dir: Path, k: int):
        self.dir = run_dir / "iterations" / f"iter_{k:03d}"
        self.trees_dir = self.dir / "trees"
        self.datasets_dir = self.dir / "datasets"
        self.reports_dir = self.dir / "reports"
        self.stage_file = self.dir / "stage.json"

    def completed(self) -> list[str]:
        if self.stage_file.is_file():
            return json.loads(self.stage_file.read_text(encoding="utf-8"))["completed"]
        return []

    def mark(self, stage: str) -> None:
        done = self.completed()
        if stage not in done:
            done.append(stage)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stage_file.write_text(
            json.dumps({"completed": done}, sort_keys=True) + "\n", encoding="utf-8"
        )

    def tree_paths(self, n: int) -> list[Path]:
        return [self.trees_dir / f"tree_{i}.json" for i in range(n)]


def run_iteration(
    k: int,
    cfg: IterationConfig,
    run_dir: str | Path,
    backends: BackendProvider,
    trainer: TrainerHook,
    pool: Sequence[Persona],
    tree_indices: Sequence[int],
    templates: PromptTemplates | None = None,
    seed: int = 0,
) -> IterationReport:
    """One full co-evolution iteration with resumable stage checkpoints."""
    if k < 1:
        raise ContractError("iterations are numbered from 1")
    run_dir = Path(run_dir)
    templates = templates or load_templates()
    registry = ArtifactRegistry(run_dir / "artifacts.manifest")
    # Both previous artifacts must exist before any work starts.
    for side in (COACH, CLIENT):
        if not registry.has(side, k - 1):
            raise ArtifactLookupError(
                f"iteration {k} requires the {side} artifact of iteration {k - 1}"
            )

    state = _IterationState(run_dir, k)
    report = IterationReport(iteration=k)
    schedule = cfg.schedule()
    personas = tree_personas_for_iteration(pool, tree_indices, k, cfg.N, seed)
    tree_paths = state.tree_paths(cfg.N)

    def _stage_generate():
        coach = backends.backend_for(COACH, k - 1)
        client = backends.backend_for(CLIENT, k - 1)
        for i, persona in enumerate(personas):
            tree = build_tree(
                schedule,
                coach,
                client,
                persona,
                params=cfg.tree_sampling,
                templates=templates,
                tree_id=f"iter{k:03d}-t{i}-p{persona.index}",
                iteration=k,
                seeds={"run_seed": seed, "tree_index": i},
            )
            save_tree(tree, tree_paths[i])

    def _stage_score():
        judge = backends.judge_backend()
        stats = ScoringStats()
        for path in tree_paths:
            tree = load_tree(path)
            score_tree(
                tree,
                judge,
                retry_limit=cfg.judge_retry_limit,
                templates=templates,
                stats=stats,
            )
            save_tree(tree, path)
        (state.reports_dir / "scoring.json").parent.mkdir(parents=True, exist_ok=True)
        (state.reports_dir / "scoring.json").write_text(
            json.dumps(
                {"judged": stats.judged, "retried": stats.retried},
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )

    def _stage_extract():
        coach_pairs: list[PreferencePair] = []
        client_pairs: list[PreferencePair] = []
        for path in tree_paths:
            tree = load_tree(path)
            backup_q(tree, DiscountConfig(cfg.gamma))
            save_tree(tree, path)
            coach_pairs.extend(extract_coach_pairs(tree))
            client_pairs.extend(extract_client_pairs(tree))
        state.datasets_dir.mkdir(parents=True, exist_ok=True)
        export_pairs(coach_pairs, COACH, state.datasets_dir / "coach.jsonl", beta=cfg.beta)
        export_pairs(client_pairs, CLIENT, state.datasets_dir / "client.jsonl", beta=cfg.beta)
        checks = {
            COACH: check_coach_consistency(
                coach_pairs, trials=cfg.consistency_trials, seed=seed
            ).to_doc(),
            CLIENT: check_client_consistency(
                client_pairs, trials=cfg.consistency_trials, seed=seed
            ).to_doc(),
        }
        (state.reports_dir).mkdir(parents=True, exist_ok=True)
        (state.reports_dir / "consistency.json").write_text(
            json.dumps(checks, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _stage_train():
        for side in (COACH, CLIENT):  # coach first, then client
            reference = reference_policy_for(registry, side, k)
            dataset = state.datasets_dir / f"{side}.jsonl"
            artifact_out = run_dir / "artifacts" / f"{side}_iter_{k:03d}.json"
            uri = trainer.train(side, k, dataset, reference, artifact_out)
            registry.register(side, k, uri)

    stage_fns = {
        "generate": _stage_generate,
        "score": _stage_score,
        "extract": _stage_extract,
        "train": _stage_train,
    }
    for stage in STAGES:
        if stage in state.completed():
            continue
        try:
            stage_fns[stage]()
        except CoevoError as exc:
            raise IterationError(str(exc), stage=stage, iteration=k) from exc
        state.mark(stage)

    # Assemble the report from on-disk state so resumed runs agree.
    for path in tree_paths:
        tree = load_tree(path)
        shape = tree_shape(tree)
        report.tree_shapes.append(
            {
                "tree_id": tree.tree_id,
                "persona_index": tree.persona_index,
                "leaves": shape.leaves,
                "branch_groups": shape.branch_groups,
                "max_depth": shape.max_depth,
                "truncated_paths": shape.truncated_paths,
            }
        )
    scoring = json.loads((state.reports_dir / "scoring.json").read_text(encoding="utf-8"))
    report.judge_retries = scoring["retried"]
    report.judge_failures = 0
    report.coach_pairs = sum(
        1 for line in (state.datasets_dir / "coach.jsonl").read_text(encoding="utf-8").splitlines() if line
    )
    report.client_pairs = sum(
        1 for line in (state.datasets_dir / "client.jsonl").read_text(encoding="utf-8").splitlines() if line
    )
    report.consistency = json.loads(
        (state.reports_dir / "consistency.json").read_text(encoding="utf-8")
    )
    report.datasets = {
        COACH: str(state.datasets_dir / "coach.jsonl"),
        CLIENT: str(state.datasets_dir / "client.jsonl"),
    }
    report.artifacts = {
        COACH: registry.lookup(COACH, k),
        CLIENT: registry.lookup(CLIENT, k),
    }
    state.reports_dir.mkdir(parents=True, exist_ok=True)
    (state.reports_dir / "iteration.json").write_text(
        json.dumps(report.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return report


def run_loop(
    from_k: int,
    to_k: int,
    cfg: IterationConfig,
    run_dir: str | Path,
    backends: BackendProvider,
    trainer: TrainerHook,
    pool: Sequence[Persona],
    tree_indices: Sequence[int],
    templates: PromptTemplates | None = None,
    seed: int = 0,
) -> list[IterationReport]:
    if not 1 <= from_k <= to_k:
        raise ContractError(f"bad iteration range [{from_k}, {to_k}]")
    reports = []
    for k in range(from_k, to_k + 1):
        reports.append(
            run_iteration(
                k, cfg, run_dir, backends, trainer, pool, tree_indices,
                templates=templates, seed=seed,
            )
        )
    return reports


@dataclass
class SftCorpusRecord:
    dialogue: list[Utterance]
    persona_index: int
    termination: str  # "marker" | "hard_cap"

    def exchange_pairs(self) -> int:
        return sum(1 for u in self.dialogue if u.role == COACH)


def generate_sft_dialogue(
    persona: Persona,
    coach_backend: AgentBackend,
    client_backend: AgentBackend,
    templates: PromptTemplates,
    trait: str,
    params: SamplingParams | None = None,
    hard_cap: int = HARD_CAP_PAIRS,
) -> SftCorpusRecord:
    """One supervised dialogue: client speaks first, coach responds, until
    the client emits the end marker or the exchange-pair cap is reached."""
    params = params or SamplingParams(temperature=1.0, top_p=0.95, max_tokens=256)
    client_system = render_client_prompt(persona, "sft", templates, trait=trait)
    coach_system = templates.coach_sft_datagen
    dialogue = [next_utterance(client_backend, client_system, [], params, CLIENT)]
    termination = "hard_cap"
    for step in range(1, hard_cap + 1):
        coach_turn = next_utterance(
            coach_backend, coach_system, dialogue, params, COACH, coach_step=step
        )
        dialogue.append(coach_turn)
        client_turn = next_utterance(
            client_backend, client_system, dialogue, params, CLIENT
        )
        dialogue.append(client_turn)
        if detect_termination(client_turn):
            termination = "marker"
            break
    return SftCorpusRecord(dialogue, persona.index, termination)


def generate_sft_corpus(
    personas: Sequence[Persona],
    coach_backend: AgentBackend,
    client_backend: AgentBackend,
    templates: PromptTemplates | None = None,
    params: SamplingParams | None = None,
    hard_cap: int = HARD_CAP_PAIRS,
    seed: int = 0,
    on_error: Callable[[Persona, Exception], None] | None = None,
) -> list[SftCorpusRecord]:
    """One dialogue per persona; failed dialogues are skipped, not fatal."""
    templates = templates or load_templates()
    rng = random.Random(seed)
    corpus = []
    for persona in personas:
        trait = rng.choice(TRAITS)
        try:
            corpus.append(
                generate_sft_dialogue(
                    persona, coach_backend, client_backend, templates,
                    trait=trait, params=params, hard_cap=hard_cap,
                )
            )
        except CoevoError as exc:
            if on_error is not None:
                on_error(persona, exc)
    return corpus


def export_role_masked(
    corpus: Sequence[SftCorpusRecord], role: str, path: str | Path
) -> Path:
    """Emit the corpus with per-utterance loss flags for one adapter.

    The same corpus exports to both roles: each record keeps every turn,
    flagging only the target role's utterances for the loss.
    """
    if role not in (COACH, CLIENT):
        raise ContractError(f"unknown role: {role!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in corpus:
            doc = {
                "persona_index": record.persona_index,
                "termination": record.termination,
                "loss_role": role,
                "turns": [
                    {"role": u.role, "text": u.text, "loss": u.role == role}
                    for u in record.dialogue
                ],
            }
            fh.write(json.dumps(doc, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    return path
