"""Scalarization-based consistency checks over extracted preference pairs.

Any positive weighted sum is strictly monotone under Pareto dominance, so
every coach pair must score higher for the chosen side under every
positive weighting, and every client pair lower. These checks never feed
training; they run as a verification suite over exported datasets and are
appended to iteration reports.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agents import CLIENT, COACH
from .errors import ContractError
from .preferences import PreferencePair
from .valuation import QVector

WEIGHT_LOG_RANGE = (1e-2, 1e2)


@dataclass(frozen=True)
class Scalarization:
    weights: tuple[float, float, float]

    def __post_init__(self):
        if len(self.weights) != 3 or any(w <= 0 for w in self.weights):
            raise ContractError(f"weights must be 3 positive reals, got {self.weights}")


def scalarize(q: QVector, w: Scalarization) -> float:
    return sum(wi * qi for wi, qi in zip(w.weights, q.as_tuple()))


def sample_scalarizations(trials: int, seed: int = 0) -> list[Scalarization]:
    """Log-uniform positive weights, one triple per trial."""
    import math

    rng = random.Random(seed)
    lo, hi = (math.log(x) for x in WEIGHT_LOG_RANGE)
    return [
        Scalarization(tuple(math.exp(rng.uniform(lo, hi)) for _ in range(3)))
        for _ in range(trials)
    ]


@dataclass(frozen=True)
class ConsistencyViolation:
    pair_id: str
    weights: tuple[float, float, float]
    chosen_value: float
    rejected_value: float


@dataclass
class ConsistencyReport:
    side: str
    pairs_checked: int
    trials: int
    violations: list[ConsistencyViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_doc(self) -> dict:
        return {
            "side": self.side,
            "pairs_checked": self.pairs_checked,
            "trials": self.trials,
            "violations": [
                {
                    "pair_id": v.pair_id,
                    "weights": list(v.weights),
                    "chosen_value": v.chosen_value,
                    "rejected_value": v.rejected_value,
                }
                for v in self.violations
            ],
        }


def _check(
    pairs: Sequence[PreferencePair],
    side: str,
    trials: int,
    seed: int,
    chosen_must_be_larger: bool,
) -> ConsistencyReport:
    report = ConsistencyReport(side=side, pairs_checked=len(pairs), trials=trials)
    if not pairs:
        return report
    weights = sample_scalarizations(trials, seed=seed)
    w_matrix = np.array([w.weights for w in weights])  # (trials, 3)
    chosen = np.array([p.chosen_q.as_tuple() for p in pairs])  # (n, 3)
    rejected = np.array([p.rejected_q.as_tuple() for p in pairs])
    chosen_values = chosen @ w_matrix.T  # (n, trials)
    rejected_values = rejected @ w_matrix.T
    if chosen_must_be_larger:
        bad = chosen_values <= rejected_values
    else:
        bad = chosen_values >= rejected_values
    for i, j in zip(*np.nonzero(bad)):
        report.violations.append(
            ConsistencyViolation(
                pairs[i].pair_id,
                weights[j].weights,
                float(chosen_values[i, j]),
                float(rejected_values[i, j]),
            )
        )
    return report


def check_coach_consistency(
    pairs: Sequence[PreferencePair], trials: int = 100, seed: int = 0
) -> ConsistencyReport:
    """Chosen coach utterances must scalarize strictly higher under every
    sampled positive weighting. Violations mean the pairs were not built
    by strict dominance."""
    return _check(pairs, COACH, trials, seed, chosen_must_be_larger=True)


def check_client_consistency(
    pairs: Sequence[PreferencePair], trials: int = 100, seed: int = 0
) -> ConsistencyReport:
    """Chosen client utterances must scalarize strictly lower: the
    sign-flipped construction prefers utterances that reduce downstream
    coaching quality."""
    return _check(pairs, CLIENT, trials, seed, chosen_must_be_larger=False)
