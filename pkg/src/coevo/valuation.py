"""Dimension-wise discounted value backup over a scored dialogue tree.

Every node's backed-up vector is its immediate reward plus gamma times
the arithmetic mean of its children's vectors; leaves keep their
immediate reward. Client nodes carry zero immediate reward, so a client
node's value is exactly gamma times the mean over its sampled
continuations, and the step-T coach node's value equals its judge score.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, ValuationError
from .tree import DialogueTree

DIMS = 3


@dataclass(frozen=True)
class QVector:
    cct: float
    sst: float
    empathy: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cct, self.sst, self.empathy)

    @classmethod
    def of(cls, values) -> "QVector":
        cct, sst, empathy = values
        return cls(float(cct), float(sst), float(empathy))


@dataclass(frozen=True)
class DiscountConfig:
    gamma: float = 0.5

    def __post_init__(self):
        # gamma = 0 is the no-lookahead degenerate case; keep it legal.
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1]")


def backup_q(tree: DialogueTree, cfg: DiscountConfig | None = None) -> DialogueTree:
    """Back up rewards into per-node Q vectors, children before parents.

    Traversal order is irrelevant to the result; depth order is used so
    the recursion never exceeds the stack.
    """
    cfg = cfg or DiscountConfig()
    gamma = cfg.gamma
    unscored = [n.id for n in tree.walk() if n.reward is None]
    if unscored:
        raise ValuationError(f"nodes without reward: {unscored[:10]}")
    for node in sorted(tree.nodes.values(), key=lambda n: n.depth, reverse=True):
        reward = node.reward
        if not node.children:
            node.q = tuple(float(r) for r in reward)
            continue
        child_qs = [tree.nodes[c].q for c in node.children]
        k = len(child_qs)
        node.q = tuple(
            float(reward[d]) + gamma * (sum(q[d] for q in child_qs) / k)
            for d in range(DIMS)
        )
    return tree
