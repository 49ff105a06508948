from __future__ import annotations

import random

import pytest

from coevo.agents import CLIENT, COACH, Utterance
from coevo.prompt_templates import load_templates
from coevo.tree import BranchingSchedule, DialogueTree, OPENER_TEXT

# The worked persona example used across persona tests.
SAMPLE_PERSONA_DOC = {
    "age": 35,
    "gender": "Male",
    "ethnicity": "Asian",
    "place": {"country": "US", "state": "WA", "city": "Bellevue", "setting": "urban"},
    "activity_level": "Highly active",
    "occupations": [
        {
            "title": "Competitive Distance Runner (Semi-professional Coach)",
            "employment_type": "part-time",
            "description": "Trains and coaches clients; physically demanding "
            "schedule but still has desk time for planning.",
        }
    ],
    "body_composition": "Lean athletic; strong but has recurring injury history risk.",
    "health": [
        "Gastrointestinal reflux (frequent after intense training)",
        "Asthma (cold-air triggered)",
        "Mild depression in winter months",
    ],
    "physical_limitations": [
        "Shin splints that flare with increases in training volume",
        "Reduced tolerance for barefoot or uneven terrain due to pain",
    ],
    "goals": [
        "Manage reflux so post-run recovery and sleep improve",
        "Reduce asthma-related discomfort during cold runs",
        "Build more durable lower legs to prevent recurring shin splints",
    ],
    "challenges": [
        "When he's training hard, he forgets nutrition timing, worsening reflux after sessions",
        "Cold-air breathing symptoms make him adjust pace abruptly, which affects training consistency",
        "Shin splints cause fear of escalation, so he may under-train in key weeks",
    ],
}


@pytest.fixture(scope="session")
def templates():
    return load_templates()


def make_random_tree(
    rng: random.Random,
    max_depth: int = 6,
    max_branching: int = 3,
    tree_id: str = "random",
    iteration: int = 1,
) -> DialogueTree:
    """Random alternating tree with integer judge-like rewards on coach
    nodes and zero rewards on client nodes. Sibling sets of size >= 2 are
    recorded as branch groups, mirroring how the builder marks them."""
    tree = DialogueTree(
        tree_id=tree_id,
        persona_index=rng.randrange(10_000),
        schedule=BranchingSchedule(),
        iteration=iteration,
    )
    root = tree.add_node(Utterance(CLIENT, OPENER_TEXT), parent=None)
    root.reward = (0.0, 0.0, 0.0)

    def grow(parent_id: int, role: str, depth: int):
        if depth > max_depth:
            return
        n_children = rng.randint(0, max_branching)
        if depth == 1 and n_children == 0:
            n_children = 1  # keep trees non-trivial
        group = f"{role}@{parent_id}" if n_children >= 2 else None
        for i in range(n_children):
            step = (depth + 1) // 2 if role == COACH else None
            node = tree.add_node(
                Utterance(role, f"{role} d{depth} c{i} ({rng.randrange(10_000)})", step),
                parent_id,
                branch_group=group,
            )
            if role == COACH:
                node.reward = (
                    float(rng.randint(1, 5)),
                    float(rng.randint(1, 5)),
                    float(rng.randint(1, 5)),
                )
            else:
                node.reward = (0.0, 0.0, 0.0)
            grow(node.id, CLIENT if role == COACH else COACH, depth + 1)

    grow(root.id, COACH, 1)
    return tree


def naive_backup(tree: DialogueTree, gamma: float) -> dict[int, tuple[float, float, float]]:
    """Independent reference recursion for the discounted backup; written
    against the raw node structure, no shared code with the engine."""

    def value(node_id: int) -> tuple[float, float, float]:
        node = tree.nodes[node_id]
        r = node.reward
        if not node.children:
            return (float(r[0]), float(r[1]), float(r[2]))
        kids = [value(c) for c in node.children]
        n = len(kids)
        return tuple(
            float(r[d]) + gamma * sum(k[d] for k in kids) / n for d in range(3)
        )

    return {nid: value(nid) for nid in tree.nodes}


def brute_force_pairs(tree: DialogueTree, role: str, negate: bool):
    """Exhaustive ordered-pair enumeration per branch group under the
    strict dominance definition, independent of the extraction code."""
    groups: dict[str, list] = {}
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if node.branch_group is not None and node.utterance.role == role:
            groups.setdefault(node.branch_group, []).append(node)
    found = set()
    sign = -1.0 if negate else 1.0
    for group_id, members in groups.items():
        for a in members:
            for b in members:
                if a.id == b.id:
                    continue
                va = [sign * x for x in a.q]
                vb = [sign * x for x in b.q]
                if all(x >= y for x, y in zip(va, vb)) and any(
                    x > y for x, y in zip(va, vb)
                ):
                    found.add((a.id, b.id))
    return found
