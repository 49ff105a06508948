"""Branching coach/client dialogue trees.

A tree starts at the fixed client opener and alternates roles along every
path. Linear segments sample one utterance per side; at each branching
step the coach samples M candidates under the same history and each
candidate receives M independent client responses. A finished tree is
immutable apart from judge annotations and backed-up Q values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

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
from .errors import CoevoError, ConfigError, ContractError, TreeBuildError
from .prompt_templates import PromptTemplates

OPENER_TEXT = "Hi, there!"


@dataclass(frozen=True)
class BranchingSchedule:
    """Tree layout: linear pairs, branch steps, branching factor, horizon.

    The pair counts are redundant with ``branch_steps``/``T`` and are
    cross-checked so a hand-edited config cannot silently disagree.
    """

    engaging_pairs: int = 3
    branch_steps: tuple[int, ...] = (4, 6)
    M: int = 3
    gap_pairs_after_first_branch: int = 1
    rollout_pairs: int = 2
    T: int = 8

    def __post_init__(self):
        object.__setattr__(self, "branch_steps", tuple(self.branch_steps))
        self.validate()

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        steps = self.branch_steps
        if any(s < 1 or s > self.T for s in steps):
            raise ConfigError(f"branch steps {steps} must lie in [1, {self.T}]")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigError(f"branch steps {steps} must be strictly increasing")
        if steps:
            if self.engaging_pairs != steps[0] - 1:
                raise ConfigError(
                    f"engaging_pairs={self.engaging_pairs} inconsistent with "
                    f"first branch step {steps[0]}"
                )
            if self.rollout_pairs != self.T - steps[-1]:
                raise ConfigError(
                    f"rollout_pairs={self.rollout_pairs} inconsistent with "
                    f"last branch step {steps[-1]} and T={self.T}"
                )
        if len(steps) >= 2:
            if self.gap_pairs_after_first_branch != steps[1] - steps[0] - 1:
                raise ConfigError(
                    "gap_pairs_after_first_branch inconsistent with branch steps"
                )

    @classmethod
    def from_steps(cls, branch_steps: Sequence[int], M: int = 3, T: int = 8) -> "BranchingSchedule":
        steps = tuple(branch_steps)
        return cls(
            engaging_pairs=(steps[0] - 1) if steps else T,
            branch_steps=steps,
            M=M,
            gap_pairs_after_first_branch=(steps[1] - steps[0] - 1) if len(steps) >= 2 else 0,
            rollout_pairs=(T - steps[-1]) if steps else 0,
            T=T,
        )

    def full_path_utterances(self) -> int:
        # Opener + one coach and one client turn per step.
        return 2 * self.T + 1

    def to_doc(self) -> dict:
        return {
            "engaging_pairs": self.engaging_pairs,
            "branch_steps": list(self.branch_steps),
            "M": self.M,
            "gap_pairs_after_first_branch": self.gap_pairs_after_first_branch,
            "rollout_pairs": self.rollout_pairs,
            "T": self.T,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "BranchingSchedule":
        return cls(
            engaging_pairs=doc["engaging_pairs"],
            branch_steps=tuple(doc["branch_steps"]),
            M=doc["M"],
            gap_pairs_after_first_branch=doc["gap_pairs_after_first_branch"],
            rollout_pairs=doc["rollout_pairs"],
            T=doc["T"],
        )


@dataclass
class DialogueNode:
    id: int
    parent: int | None
    utterance: Utterance
    depth: int
    children: list[int] = field(default_factory=list)
    branch_group: str | None = None
    reward: tuple[float, float, float] | None = None
    q: tuple[float, float, float] | None = None
    annotation: object | None = None

    @property
    def role(self) -> str:
        return self.utterance.role


@dataclass
class DialogueTree:
    tree_id: str
    persona_index: int
    schedule: BranchingSchedule
    iteration: int = 0
    seeds: dict = field(default_factory=dict)
    nodes: dict[int, DialogueNode] = field(default_factory=dict)
    root: int = 0
    unscorable: bool = False
    _next_id: int = 0

    def add_node(
        self,
        utterance: Utterance,
        parent: int | None,
        branch_group: str | None = None,
    ) -> DialogueNode:
        if parent is None and self.nodes:
            raise ContractError("tree already has a root")
        if parent is not None:
            parent_node = self.nodes[parent]
            if parent_node.role == utterance.role:
                raise ContractError("roles must alternate along every path")
            depth = parent_node.depth + 1
        else:
            if utterance.role != CLIENT:
                raise ContractError("root must be the client opener")
            depth = 0
        node = DialogueNode(
            id=self._next_id,
            parent=parent,
            utterance=utterance,
            depth=depth,
            branch_group=branch_group,
        )
        self.nodes[node.id] = node
        if parent is not None:
            self.nodes[parent].children.append(node.id)
        else:
            self.root = node.id
        self._next_id += 1
        return node

    def node(self, node_id: int) -> DialogueNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ContractError(f"unknown node id: {node_id}")

    def walk(self) -> Iterator[DialogueNode]:
        """Nodes in id (construction) order."""
        for node_id in sorted(self.nodes):
            yield self.nodes[node_id]

    def leaves(self) -> list[DialogueNode]:
        return [n for n in self.walk() if not n.children]

    def coach_nodes(self) -> list[DialogueNode]:
        return [n for n in self.walk() if n.role == COACH]

    def path_to(self, node_id: int) -> list[Utterance]:
        """Utterances from the root to ``node_id`` inclusive."""
        chain = []
        cursor: int | None = node_id
        while cursor is not None:
            node = self.node(cursor)
            chain.append(node.utterance)
            cursor = node.parent
        chain.reverse()
        return chain


def path_history(tree: DialogueTree, node_id: int) -> list[Utterance]:
    """Utterances from the root to the node's parent inclusive: the shared
    prompt context for that node."""
    node = tree.node(node_id)
    if node.parent is None:
        return []
    return tree.path_to(node.parent)


def branch_groups(tree: DialogueTree, role: str) -> dict[str, list[DialogueNode]]:
    """Branch groups of the given role, keyed by group id, members in
    construction order."""
    groups: dict[str, list[DialogueNode]] = {}
    for node in tree.walk():
        if node.branch_group is not None and node.role == role:
            groups.setdefault(node.branch_group, []).append(node)
    return groups


@dataclass(frozen=True)
class ShapeSummary:
    leaves: int
    branch_groups: int
    max_depth: int
    truncated_paths: int


def tree_shape(tree: DialogueTree) -> ShapeSummary:
    leaves = tree.leaves()
    full_len = tree.schedule.full_path_utterances()
    truncated = sum(
        1
        for leaf in leaves
        if detect_termination(leaf.utterance) and leaf.depth + 1 < full_len
    )
    max_depth = max((n.depth for n in tree.nodes.values()), default=0)
    return ShapeSummary(
        leaves=len(leaves),
        branch_groups=len(branch_groups(tree, COACH)),
        max_depth=max_depth,
        truncated_paths=truncated,
    )


class _TreeBuilder:
    def __init__(
        self,
        schedule: BranchingSchedule,
        coach: AgentBackend,
        client: AgentBackend,
        persona,
        params: SamplingParams,
        templates: PromptTemplates,
        tree_id: str,
        iteration: int,
        seeds: dict,
    ):
        self.schedule = schedule
        self.coach = coach
        self.client = client
        self.params = params
        self.coach_system = templates.coach_operational
        self.client_system = render_client_prompt(persona, "coevolution", templates)
        self.tree = DialogueTree(
            tree_id=tree_id,
            persona_index=persona.index,
            schedule=schedule,
            iteration=iteration,
            seeds=dict(seeds),
        )

    def _sample(self, speaker: str, parent_id: int, step: int | None, group: str | None) -> DialogueNode:
        history = self.tree.path_to(parent_id)
        backend = self.coach if speaker == COACH else self.client
        system = self.coach_system if speaker == COACH else self.client_system
        utterance = next_utterance(
            backend, system, history, self.params, speaker, coach_step=step
        )
        return self.tree.add_node(utterance, parent_id, branch_group=group)

    def build(self) -> DialogueTree:
        root = self.tree.add_node(Utterance(CLIENT, OPENER_TEXT), parent=None)
        self._extend(root.id, step=1)
        return self.tree

    def _extend(self, parent_id: int, step: int) -> None:
        """Grow one path from a client node at coach step ``step``."""
        if step > self.schedule.T:
            return
        m = self.schedule.M
        # Groups of one admit no comparison and are not recorded.
        branching = step in self.schedule.branch_steps and m >= 2
        if branching:
            coach_group = f"{COACH}@{parent_id}"
            coach_nodes = [
                self._sample(COACH, parent_id, step, coach_group) for _ in range(m)
            ]
            for coach_node in coach_nodes:
                if detect_termination(coach_node.utterance):
                    continue
                client_group = f"{CLIENT}@{coach_node.id}"
                client_nodes = [
                    self._sample(CLIENT, coach_node.id, None, client_group)
                    for _ in range(m)
                ]
                for client_node in client_nodes:
                    if detect_termination(client_node.utterance):
                        continue
                    self._extend(client_node.id, step + 1)
        else:
            coach_node = self._sample(COACH, parent_id, step, None)
            if detect_termination(coach_node.utterance):
                return
            client_node = self._sample(CLIENT, coach_node.id, None, None)
            if detect_termination(client_node.utterance):
                return
            self._extend(client_node.id, step + 1)


def build_tree(
    schedule: BranchingSchedule,
    coach: AgentBackend,
    client: AgentBackend,
    persona,
    params: SamplingParams | None = None,
    templates: PromptTemplates | None = None,
    tree_id: str | None = None,
    iteration: int = 0,
    seeds: dict | None = None,
) -> DialogueTree:
    """Build one dialogue tree following the schedule exactly.

    A backend failure mid-build raises TreeBuildError carrying the subtree
    completed so far.
    """
    if templates is None:
        from .prompt_templates import load_templates

        templates = load_templates()
    builder = _TreeBuilder(
        schedule=schedule,
        coach=coach,
        client=client,
        persona=persona,
        params=params or SamplingParams.tree_defaults(),
        templates=templates,
        tree_id=tree_id or f"iter{iteration:03d}-p{persona.index}",
        iteration=iteration,
        seeds=seeds or {},
    )
    try:
        return builder.build()
    except CoevoError as exc:
        raise TreeBuildError(
            f"tree build failed: {exc}", partial_tree=builder.tree
        ) from exc


def _annotation_to_doc(annotation) -> dict | None:
    if annotation is None:
        return None
    return annotation.to_doc()


def save_tree(tree: DialogueTree, path: str | Path) -> None:
    doc = {
        "header": {
            "tree_id": tree.tree_id,
            "persona_index": tree.persona_index,
            "schedule": tree.schedule.to_doc(),
            "iteration": tree.iteration,
            "seeds": tree.seeds,
            "root": tree.root,
            "unscorable": tree.unscorable,
        },
        "nodes": [
            {
                "id": n.id,
                "parent": n.parent,
                "role": n.role,
                "text": n.utterance.text,
                "coach_step": n.utterance.coach_step,
                "depth": n.depth,
                "children": n.children,
                "branch_group": n.branch_group,
                "reward": list(n.reward) if n.reward is not None else None,
                "q": list(n.q) if n.q is not None else None,
                "annotation": _annotation_to_doc(n.annotation),
            }
            for n in tree.walk()
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )


def load_tree(path: str | Path) -> DialogueTree:
    from .judge import JudgeAnnotation

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    header = doc["header"]
    tree = DialogueTree(
        tree_id=header["tree_id"],
        persona_index=header["persona_index"],
        schedule=BranchingSchedule.from_doc(header["schedule"]),
        iteration=header["iteration"],
        seeds=header["seeds"],
        root=header["root"],
        unscorable=header.get("unscorable", False),
    )
    max_id = -1
    for nd in doc["nodes"]:
        node = DialogueNode(
            id=nd["id"],
            parent=nd["parent"],
            utterance=Utterance(nd["role"], nd["text"], nd["coach_step"]),
            depth=nd["depth"],
            children=list(nd["children"]),
            branch_group=nd["branch_group"],
            reward=tuple(nd["reward"]) if nd["reward"] is not None else None,
            q=tuple(nd["q"]) if nd["q"] is not None else None,
            annotation=(
                JudgeAnnotation.from_doc(nd["annotation"])
                if nd["annotation"] is not None
                else None
            ),
        )
        tree.nodes[node.id] = node
        max_id = max(max_id, node.id)
    tree._next_id = max_id + 1
    return tree


def check_alternation(tree: DialogueTree) -> None:
    """Exhaustive role-alternation check; raises on violation."""
    root = tree.node(tree.root)
    if root.role != CLIENT or root.utterance.text != OPENER_TEXT:
        raise ContractError("root must be the fixed client opener")
    for node in tree.walk():
        for child_id in node.children:
            child = tree.node(child_id)
            if child.role == node.role:
                raise ContractError(
                    f"role alternation violated between {node.id} and {child_id}"
                )
            if child.parent != node.id:
                raise ContractError(f"parent link broken at node {child_id}")
