"""Pareto-dominant preference pairs and DPO dataset export.

Coach pairs: within each coach branch group (siblings sharing one
dialogue history), chosen strictly Pareto-dominates rejected on the
backed-up Q vector. Client pairs: within each client branch group, the
same construction on the sign-flipped challenge vector, so the chosen
client utterance is the one whose continuations degrade coaching quality
on every dimension. Pairs never cross groups: DPO needs an identical
prompt for both candidates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .agents import CLIENT, COACH, Utterance
from .errors import ContractError, ExtractionError
from .tree import DialogueTree, branch_groups, path_history
from .valuation import QVector

SIDES = (COACH, CLIENT)

# Coach DPO references the previous iteration's policy; client DPO stays
# anchored at its SFT initialization.
REFERENCE_POLICIES = {COACH: "rolling_previous", CLIENT: "fixed_sft"}

DEFAULT_BETA = 0.1


def pareto_dominates(a: QVector, b: QVector) -> bool:
    """Strict Pareto dominance: >= everywhere, > somewhere."""
    at, bt = a.as_tuple(), b.as_tuple()
    return all(x >= y for x, y in zip(at, bt)) and any(x > y for x, y in zip(at, bt))


def challenge_vector(q: QVector) -> QVector:
    """Componentwise negation; orders client utterances by how much they
    degrade downstream coaching quality."""
    return QVector(-q.cct, -q.sst, -q.empathy)


@dataclass(frozen=True)
class PreferencePair:
    side: str
    prompt: tuple[Utterance, ...]
    chosen: Utterance
    rejected: Utterance
    chosen_q: QVector
    rejected_q: QVector
    sum_gap: float
    tree_id: str
    iteration: int
    branch_group: str
    chosen_node: int
    rejected_node: int
    persona_index: int

    @property
    def pair_id(self) -> str:
        return f"{self.tree_id}:{self.branch_group}:{self.chosen_node}>{self.rejected_node}"


def _node_q(tree: DialogueTree, node) -> QVector:
    if node.q is None:
        raise ExtractionError(f"node {node.id} has no backed-up value")
    return QVector.of(node.q)


def _pairs_for_role(tree: DialogueTree, role: str) -> list[PreferencePair]:
    pairs: list[PreferencePair] = []
    for group_id, members in sorted(branch_groups(tree, role).items()):
        prompt = None
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                qa, qb = _node_q(tree, a), _node_q(tree, b)
                if role == COACH:
                    ca, cb = qa, qb
                else:
                    ca, cb = challenge_vector(qa), challenge_vector(qb)
                if pareto_dominates(ca, cb):
                    chosen, rejected = a, b
                    cq, rq = qa, qb
                    gap = sum(x - y for x, y in zip(ca.as_tuple(), cb.as_tuple()))
                elif pareto_dominates(cb, ca):
                    chosen, rejected = b, a
                    cq, rq = qb, qa
                    gap = sum(x - y for x, y in zip(cb.as_tuple(), ca.as_tuple()))
                else:
                    continue
                if prompt is None:
                    # Siblings share a parent, hence an identical history.
                    prompt = tuple(path_history(tree, a.id))
                pairs.append(
                    PreferencePair(
                        side=role,
                        prompt=prompt,
                        chosen=chosen.utterance,
                        rejected=rejected.utterance,
                        chosen_q=cq,
                        rejected_q=rq,
                        sum_gap=gap,
                        tree_id=tree.tree_id,
                        iteration=tree.iteration,
                        branch_group=group_id,
                        chosen_node=chosen.id,
                        rejected_node=rejected.id,
                        persona_index=tree.persona_index,
                    )
                )
    return pairs


def extract_coach_pairs(tree: DialogueTree) -> list[PreferencePair]:
    return _pairs_for_role(tree, COACH)


def extract_client_pairs(tree: DialogueTree) -> list[PreferencePair]:
    return _pairs_for_role(tree, CLIENT)


def _pair_record(pair: PreferencePair, beta: float) -> dict:
    return {
        "side": pair.side,
        "prompt": [
            {"role": u.role, "text": u.text, "coach_step": u.coach_step}
            for u in pair.prompt
        ],
        "chosen": pair.chosen.text,
        "rejected": pair.rejected.text,
        "reference_policy": REFERENCE_POLICIES[pair.side],
        "beta": beta,
        "metadata": {
            "tree_id": pair.tree_id,
            "iteration": pair.iteration,
            "branch_group": pair.branch_group,
            "coach_step": pair.chosen.coach_step,
            "chosen_q": list(pair.chosen_q.as_tuple()),
            "rejected_q": list(pair.rejected_q.as_tuple()),
            "sum_gap": pair.sum_gap,
            "chosen_node": pair.chosen_node,
            "rejected_node": pair.rejected_node,
            "persona_index": pair.persona_index,
        },
    }


def export_pairs(
    pairs: Sequence[PreferencePair],
    side: str,
    path: str | Path,
    beta: float = DEFAULT_BETA,
) -> Path:
    """Write one DPO example per pair, newline-delimited. Lossless."""
    if side not in SIDES:
        raise ContractError(f"unknown side: {side!r}")
    mixed = [p.pair_id for p in pairs if p.side != side]
    if mixed:
        raise ContractError(f"pairs from the other side in export: {mixed[:5]}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(_pair_record(pair, beta), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    return path


def load_pairs(path: str | Path) -> list[PreferencePair]:
    pairs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            meta = rec["metadata"]
            chosen_role = COACH if rec["side"] == COACH else CLIENT
            prompt = tuple(
                Utterance(u["role"], u["text"], u.get("coach_step"))
                for u in rec["prompt"]
            )
            step = meta.get("coach_step")
            pairs.append(
                PreferencePair(
                    side=rec["side"],
                    prompt=prompt,
                    chosen=Utterance(chosen_role, rec["chosen"], step),
                    rejected=Utterance(chosen_role, rec["rejected"], step),
                    chosen_q=QVector.of(meta["chosen_q"]),
                    rejected_q=QVector.of(meta["rejected_q"]),
                    sum_gap=meta["sum_gap"],
                    tree_id=meta["tree_id"],
                    iteration=meta["iteration"],
                    branch_group=meta["branch_group"],
                    chosen_node=meta["chosen_node"],
                    rejected_node=meta["rejected_node"],
                    persona_index=meta["persona_index"],
                )
            )
    return pairs


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow.
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def dpo_loss(batch: Iterable[dict], beta: float) -> float:
    """Reference computation of the pairwise preference loss.

    Each item carries per-sequence log-probabilities under the policy and
    the reference for the chosen and rejected completions; the loss is the
    batch mean of -log sigmoid(beta * (chosen ratio - rejected ratio)).
    Training itself is delegated to the external trainer hook.
    """
    if beta <= 0:
        raise ContractError("beta must be positive")
    items = list(batch)
    if not items:
        raise ContractError("batch must be non-empty")
    total = 0.0
    for item in items:
        values = (
            item["logpi_chosen"],
            item["logref_chosen"],
            item["logpi_rejected"],
            item["logref_rejected"],
        )
        if not all(math.isfinite(v) for v in values):
            raise ContractError(f"non-finite log-probability in item: {item}")
        lpc, lrc, lpr, lrr = values
        margin = (lpc - lrc) - (lpr - lrr)
        total += _softplus(-beta * margin)
    return total / len(items)
