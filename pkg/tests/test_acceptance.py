"""Acceptance gate: every criterion below runs at its stated tolerance and
prints one [ACCEPTANCE] pass/fail line (visible with ``pytest -s``)."""

from __future__ import annotations

import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest
import yaml

from coevo.agents import CLIENT, COACH, Utterance
from coevo.cli import main
from coevo.evaluation import CellMetrics, cct_below3_pct, cell_metrics, four_cond_avg
from coevo.game_checks import check_coach_consistency, sample_scalarizations
from coevo.judge import ScoreVector, SentenceLabel
from coevo.mocks import mock_agent_backend, mock_persona
from coevo.preferences import (
    PreferencePair,
    dpo_loss,
    extract_client_pairs,
    extract_coach_pairs,
)
from coevo.study import agreement_stats, create_session, sample_study_pairs
from coevo.tree import BranchingSchedule, build_tree, tree_shape
from coevo.valuation import DiscountConfig, QVector, backup_q

from conftest import brute_force_pairs, make_random_tree, naive_backup
from test_study import answer_to_reference_counts, table_fixture_pairs


@contextmanager
def criterion(name: str):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL ({time.monotonic() - started:.2f}s)")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS ({time.monotonic() - started:.2f}s)")


def test_tree_topology():
    with criterion("tree topology (81/10/17 at M=3; 16/5 at M=2; <1s)"):
        started = time.monotonic()
        tree3 = build_tree(
            BranchingSchedule(),
            mock_agent_backend(COACH, 0),
            mock_agent_backend(CLIENT, 0),
            mock_persona(3000),
        )
        shape3 = tree_shape(tree3)
        assert shape3.leaves == 81
        assert shape3.branch_groups == 10
        assert all(len(tree3.path_to(l.id)) == 17 for l in tree3.leaves())

        # Brute-force oracle: walk the schedule abstractly, counting paths.
        def oracle(schedule):
            paths, groups = 1, 0
            for step in range(1, schedule.T + 1):
                if step in schedule.branch_steps and schedule.M >= 2:
                    groups += paths
                    paths *= schedule.M * schedule.M
            return paths, groups

        schedule2 = BranchingSchedule.from_steps((4, 6), M=2, T=8)
        assert oracle(schedule2) == (16, 5)
        tree2 = build_tree(
            schedule2,
            mock_agent_backend(COACH, 0),
            mock_agent_backend(CLIENT, 0),
            mock_persona(3001),
        )
        shape2 = tree_shape(tree2)
        assert (shape2.leaves, shape2.branch_groups) == (16, 5)
        assert oracle(tree3.schedule) == (shape3.leaves, shape3.branch_groups)
        assert time.monotonic() - started < 1.0


def test_backup_oracle():
    with criterion("backup oracle (200 random trees, 1e-12; gamma identities)"):
        started = time.monotonic()
        rng = random.Random(1001)
        for _ in range(200):
            tree = make_random_tree(rng, max_depth=6, max_branching=3)
            gamma = rng.choice([0.3, 0.5, 0.75, 1.0])
            expected = naive_backup(tree, gamma)
            backup_q(tree, DiscountConfig(gamma))
            for nid, node in tree.nodes.items():
                for d in range(3):
                    assert abs(node.q[d] - expected[nid][d]) <= 1e-12
            # client-node identity: q = gamma * mean(children q), exactly
            for node in tree.nodes.values():
                if node.role == CLIENT and node.children:
                    kids = [tree.nodes[c].q for c in node.children]
                    for d in range(3):
                        assert node.q[d] == gamma * (
                            sum(k[d] for k in kids) / len(kids)
                        )
        tree = make_random_tree(rng)
        backup_q(tree, DiscountConfig(0.0))
        assert all(n.q == n.reward for n in tree.nodes.values())
        assert time.monotonic() - started < 5.0


def test_pair_extraction_oracle():
    with criterion("pair extraction oracle (200 random trees; <=30 at defaults)"):
        started = time.monotonic()
        rng = random.Random(2002)
        for _ in range(200):
            tree = make_random_tree(rng, max_depth=6, max_branching=3)
            backup_q(tree, DiscountConfig(0.5))
            got_coach = {
                (p.chosen_node, p.rejected_node) for p in extract_coach_pairs(tree)
            }
            got_client = {
                (p.chosen_node, p.rejected_node) for p in extract_client_pairs(tree)
            }
            assert got_coach == brute_force_pairs(tree, COACH, negate=False)
            assert got_client == brute_force_pairs(tree, CLIENT, negate=True)
        for seed in range(3):
            tree = build_tree(
                BranchingSchedule(),
                mock_agent_backend(COACH, seed),
                mock_agent_backend(CLIENT, seed),
                mock_persona(3000 + seed),
            )
            from coevo.judge import score_tree
            from coevo.mocks import mock_judge_backend

            score_tree(tree, mock_judge_backend(seed))
            backup_q(tree, DiscountConfig(0.5))
            assert len(extract_coach_pairs(tree)) <= 30
        assert time.monotonic() - started < 5.0


def test_lemma_suites():
    with criterion("lemma suites (1e4 instances x 100 weights, 0 violations)"):
        started = time.monotonic()
        rng = np.random.default_rng(3003)
        n = 10_000
        base = rng.uniform(0.0, 10.0, size=(n, 3))
        bumps = rng.uniform(0.0, 2.0, size=(n, 3))
        # guarantee strictness in at least one dimension
        bumps[np.arange(n), rng.integers(0, 3, size=n)] += 0.1
        dominant = base + bumps
        weights = np.array(
            [w.weights for w in sample_scalarizations(100, seed=404)]
        )
        margins = bumps @ weights.T  # (n, 100)
        # Coach-side consistency: dominance implies a larger weighted sum.
        assert (dominant @ weights.T > base @ weights.T).all()
        assert (margins > 0).all()
        # Client-side dual: negation implies a strictly smaller weighted sum.
        assert ((-dominant) @ weights.T < (-base) @ weights.T).all()

        # the engine checker agrees, and flags an injected non-dominant pair
        def pair(chosen, rejected, pid):
            return PreferencePair(
                side=COACH,
                prompt=(Utterance(CLIENT, "Hi, there!"),),
                chosen=Utterance(COACH, "a"),
                rejected=Utterance(COACH, "b"),
                chosen_q=QVector.of(chosen),
                rejected_q=QVector.of(rejected),
                sum_gap=float(sum(chosen) - sum(rejected)),
                tree_id=pid,
                iteration=1,
                branch_group="g",
                chosen_node=0,
                rejected_node=1,
                persona_index=0,
            )

        sample_pairs = [
            pair(dominant[i], base[i], f"p{i}") for i in range(0, n, 100)
        ]
        assert check_coach_consistency(sample_pairs, trials=100, seed=5).ok
        poisoned = sample_pairs + [pair((3.0, 5.0, 3.0), (4.0, 4.0, 4.0), "bad")]
        report = check_coach_consistency(poisoned, trials=100, seed=5)
        assert not report.ok
        assert all(v.pair_id.startswith("bad:") for v in report.violations)
        assert time.monotonic() - started < 10.0


def test_dpo_reference_computation():
    with criterion("DPO reference (ln 2 at zero ratios; FD gradient 1e-6)"):
        zero = {
            "logpi_chosen": -3.0,
            "logref_chosen": -3.0,
            "logpi_rejected": -7.0,
            "logref_rejected": -7.0,
        }
        assert abs(dpo_loss([zero] * 8, beta=0.1) - math.log(2)) <= 1e-12

        rng = random.Random(4004)
        h = 1e-6
        for _ in range(100):
            beta = rng.uniform(0.05, 5.0)
            batch = [
                {
                    "logpi_chosen": rng.uniform(-4, 4),
                    "logref_chosen": rng.uniform(-4, 4),
                    "logpi_rejected": rng.uniform(-4, 4),
                    "logref_rejected": rng.uniform(-4, 4),
                }
                for _ in range(rng.randint(1, 8))
            ]
            n = len(batch)
            idx = rng.randrange(n)
            item = batch[idx]
            margin = (item["logpi_chosen"] - item["logref_chosen"]) - (
                item["logpi_rejected"] - item["logref_rejected"]
            )
            sig = 1.0 / (1.0 + math.exp(beta * margin))
            for key, sign in (("logpi_chosen", -1.0), ("logpi_rejected", 1.0)):
                plus = [dict(b) for b in batch]
                minus = [dict(b) for b in batch]
                plus[idx][key] += h
                minus[idx][key] -= h
                fd = (dpo_loss(plus, beta) - dpo_loss(minus, beta)) / (2 * h)
                analytic = sign * beta * sig / n
                assert fd == pytest.approx(analytic, rel=1e-6, abs=1e-9)


def test_metric_fixtures():
    with criterion("metric fixtures (mean3 4.25; 4-cond 4.24/0.33; probe 50.0)"):
        items = []
        for i in range(100):
            items.append(
                # dimension sums 388 / 440 / 446 over 100 utterances
                _scored(
                    persona=i % 20,
                    step=4 + i % 5,
                    cct=4 if i < 88 else 3,
                    sst=5 if i < 40 else 4,
                    emp=5 if i < 46 else 4,
                )
            )
        metrics = cell_metrics(items)
        assert metrics.cct_mean == pytest.approx(3.88, abs=1e-9)
        assert metrics.sst_mean == pytest.approx(4.40, abs=1e-9)
        assert metrics.empathy_mean == pytest.approx(4.46, abs=1e-9)
        assert abs(metrics.mean3 - 4.25) <= 0.005

        cells = [
            _cell(4.25, 0.41), _cell(4.21, 0.26), _cell(3.88, 0.66), _cell(4.63, 0.00),
        ]
        summary = four_cond_avg(cells)
        assert abs(summary.mean3 - 4.24) <= 0.005
        assert abs(summary.anti_pct - 0.33) <= 0.005

        assert cct_below3_pct([1, 2, 3, 4]) == 50.0


def test_agreement_fixtures():
    with criterion("agreement fixtures (90/80/65/75 per group; 62/80 = 77.5%)"):
        session = create_session(
            sample_study_pairs(table_fixture_pairs(), 20), seed=42
        )
        answer_to_reference_counts(session)
        report = agreement_stats(session)
        by_iter = {session.iteration_labels[it]: it for it in (3, 6, 9, 12)}
        pct = {by_iter[g.label]: g.pct for g in report.groups}
        assert pct == {3: 90.0, 6: 80.0, 9: 65.0, 12: 75.0}
        assert (report.agreed, report.total) == (62, 80)
        assert report.overall_pct == 77.5


def test_end_to_end_determinism(tmp_path):
    with criterion("end-to-end determinism (coevolve run twice, byte-identical)"):
        digests = []
        for run_name in ("a", "b"):
            run_dir = tmp_path / run_name
            config = tmp_path / f"{run_name}.yaml"
            config.write_text(yaml.safe_dump({"workdir": str(run_dir), "seed": 11}))
            code = main(
                ["--quiet", "--config", str(config), "coevolve", "run",
                 "--from", "1", "--to", "2", "--trainer", "noop", "--mock"]
            )
            assert code == 0
            snapshot = {}
            for k in (1, 2):
                iter_dir = run_dir / "iterations" / f"iter_{k:03d}"
                for rel in (
                    "datasets/coach.jsonl",
                    "datasets/client.jsonl",
                    "reports/iteration.json",
                    "reports/consistency.json",
                ):
                    text = (iter_dir / rel).read_text(encoding="utf-8")
                    # reports embed the run dir in dataset paths; normalize
                    snapshot[f"{k}:{rel}"] = text.replace(str(run_dir), "<run>")
            digests.append(snapshot)
        assert digests[0] == digests[1]
        for key, text in digests[0].items():
            if key.endswith("coach.jsonl") and text:
                assert '"reference_policy": "rolling_previous"' in text


def test_blinding_soundness():
    with criterion("blinding soundness (20-task payload scan)"):
        pairs = sample_study_pairs({3: table_fixture_pairs()[3]}, 20)
        personas = {4000: mock_persona(4000).to_doc()}
        session = create_session(pairs, seed=9, personas=personas)
        assert len(session.tasks) == 20
        needles = ["iteration", "hidden", "judge", "sum_gap", "q_vector", "reasoning"]
        for task in session.tasks:
            needles += [str(v) for v in task.hidden.chosen_q]
            needles += [str(v) for v in task.hidden.rejected_q]
            needles += [str(task.hidden.sum_gap), task.hidden.pair_id]
        for task in session.tasks:
            serialized = json.dumps(task.payload())
            for needle in needles:
                assert needle not in serialized, f"leaked: {needle}"


def _scored(persona, step, cct, sst, emp):
    from coevo.evaluation import ScoredUtterance

    return ScoredUtterance(
        persona_index=persona,
        coach_step=step,
        scores=ScoreVector(cct, sst, emp),
        labels=(SentenceLabel("s", "other"),),
        state="informational",
    )


def _cell(mean3, anti):
    return CellMetrics(
        cct_mean=mean3, sst_mean=mean3, empathy_mean=mean3, mean3=mean3,
        cct_se=0.0, sst_se=0.0, empathy_se=0.0, mean3_se=0.0,
        anti_pct=anti, n_utterances=100, n_personas=20,
    )
