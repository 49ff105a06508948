from __future__ import annotations

import json

import pytest
import yaml

from coevo.cli import main
from coevo.tree import load_tree, tree_shape


@pytest.fixture()
def config_path(tmp_path):
    cfg = {
        "workdir": str(tmp_path / "run"),
        "seed": 3,
        "iteration": {"N": 2, "M": 2},
        "pool_size": 4020,
    }
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def run(argv, capsys=None):
    code = main(argv)
    return code


def test_tree_build_mock_produces_81_leaves(tmp_path):
    out = tmp_path / "tree.json"
    code = main(["--quiet", "tree", "build", "--persona", "3000", "--mock", "--out", str(out)])
    assert code == 0
    tree = load_tree(out)
    shape = tree_shape(tree)
    assert shape.leaves == 81
    assert shape.branch_groups == 10


def test_tree_score_value_and_pairs_check(tmp_path, config_path):
    tree_path = tmp_path / "tree.json"
    assert main(["--quiet", "--config", config_path, "tree", "build", "--persona", "3000",
                 "--mock", "--out", str(tree_path)]) == 0
    assert main(["--quiet", "--config", config_path, "tree", "score", "--tree", str(tree_path),
                 "--mock"]) == 0
    assert main(["--quiet", "--config", config_path, "tree", "value", "--tree", str(tree_path)]) == 0
    tree = load_tree(tree_path)
    assert all(n.q is not None for n in tree.walk())

    out_dir = tmp_path / "pairs"
    assert main(["--quiet", "pairs", "extract", "--trees", str(tree_path),
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "coach.jsonl").exists()
    assert main(["--quiet", "pairs", "check", "--pairs", str(out_dir / "coach.jsonl")]) == 0


def test_pairs_export_round_trip(tmp_path, config_path):
    tree_path = tmp_path / "tree.json"
    main(["--quiet", "--config", config_path, "tree", "build", "--persona", "3001",
          "--mock", "--out", str(tree_path)])
    main(["--quiet", "--config", config_path, "tree", "score", "--tree", str(tree_path), "--mock"])
    main(["--quiet", "--config", config_path, "tree", "value", "--tree", str(tree_path)])
    out_dir = tmp_path / "pairs"
    main(["--quiet", "pairs", "extract", "--trees", str(tree_path), "--out-dir", str(out_dir)])
    re_exported = tmp_path / "again.jsonl"
    assert main(["--quiet", "pairs", "export", "--pairs", str(out_dir / "coach.jsonl"),
                 "--side", "coach", "--out", str(re_exported)]) == 0
    assert re_exported.read_bytes() == (out_dir / "coach.jsonl").read_bytes()


def test_coevolve_run_smoke(tmp_path, config_path):
    code = main(["--quiet", "--config", config_path, "coevolve", "run",
                 "--from", "1", "--to", "1", "--trainer", "noop", "--mock"])
    assert code == 0
    run_dir = tmp_path / "run"
    iter_dir = run_dir / "iterations" / "iter_001"
    assert (iter_dir / "datasets" / "coach.jsonl").exists()
    assert (iter_dir / "datasets" / "client.jsonl").exists()
    report = json.loads((iter_dir / "reports" / "iteration.json").read_text())
    assert report["iteration"] == 1
    assert (run_dir / "config.json").exists()
    assert not (run_dir / "run.lock").exists()  # lock released


def test_coevolve_respects_lock(tmp_path, config_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir(parents=True)
    (run_dir / "run.lock").write_text("12345")
    code = main(["--quiet", "--config", config_path, "coevolve", "run",
                 "--from", "1", "--to", "1", "--trainer", "noop", "--mock"])
    assert code == 3


def test_usage_error_exit_code():
    assert main(["tree", "build", "--no-such-flag"]) == 2
    assert main(["no-such-group"]) == 2


def test_validation_error_exit_code():
    assert main(["--quiet", "personas", "partition", "--pool-size", "4019"]) == 3


def test_partition_defaults_print(capsys):
    assert main(["personas", "partition", "--pool-size", "5000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sft"] == [0, 2999]
    assert out["eval"] == [4000, 4019]


def test_dry_run_creates_nothing(tmp_path):
    out = tmp_path / "tree.json"
    assert main(["--quiet", "--dry-run", "tree", "build", "--persona", "3000",
                 "--mock", "--out", str(out)]) == 0
    assert not out.exists()


def test_personas_generate_and_validate(tmp_path):
    pool_path = tmp_path / "pool.ndjson"
    assert main(["--quiet", "personas", "generate", "--n", "8", "--mock",
                 "--out", str(pool_path)]) == 0
    assert len(pool_path.read_text().splitlines()) == 8
    assert main(["--quiet", "personas", "validate", "--pool", str(pool_path),
                 "--threshold", "0.9"]) == 0


def test_sft_generate_and_export(tmp_path, config_path):
    corpus_path = tmp_path / "corpus.jsonl"
    assert main(["--quiet", "--config", config_path, "sft", "generate",
                 "--count", "2", "--mock", "--out", str(corpus_path)]) == 0
    records = [json.loads(l) for l in corpus_path.read_text().splitlines()]
    assert len(records) == 2
    masked = tmp_path / "coach_masked.jsonl"
    assert main(["--quiet", "sft", "export", "--corpus", str(corpus_path),
                 "--role", "coach", "--out", str(masked)]) == 0
    doc = json.loads(masked.read_text().splitlines()[0])
    assert any(t["loss"] for t in doc["turns"])


def test_eval_matrix_small(tmp_path, config_path):
    out = tmp_path / "matrix.json"
    assert main(["--quiet", "--config", config_path, "eval", "matrix", "--mock",
                 "--personas", "2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["cells"]) == 8  # 2 coach bundles x 4 client conditions


def test_eval_probe_and_trajectory(tmp_path, config_path):
    probe_out = tmp_path / "probe.json"
    assert main(["--quiet", "--config", config_path, "eval", "probe", "--mock",
                 "--personas", "2", "--out", str(probe_out)]) == 0
    probe = json.loads(probe_out.read_text())
    assert len(probe["rows"]) == 4
    traj_out = tmp_path / "trajectory.csv"
    assert main(["--quiet", "--config", config_path, "eval", "trajectory", "--mock",
                 "--personas", "2", "--iterations", "2", "--out", str(traj_out)]) == 0
    assert traj_out.read_text().startswith("iteration,condition,metric,value")


def test_study_sample_and_stats(tmp_path, config_path):
    assert main(["--quiet", "--config", config_path, "coevolve", "run",
                 "--from", "1", "--to", "2", "--trainer", "noop", "--mock"]) == 0
    sampled = tmp_path / "sampled.jsonl"
    code = main(["--quiet", "--config", config_path, "study", "sample",
                 "--run-dir", str(tmp_path / "run"), "--per-iter", "1",
                 "--out", str(sampled)])
    assert code == 0
    assert len(sampled.read_text().splitlines()) == 2  # one per iteration
    # serve --dry-run builds the session in memory and leaves no state
    session_path = tmp_path / "session.json"
    assert main(["--quiet", "--config", config_path, "--dry-run", "study", "serve",
                 "--pairs", str(sampled), "--mock", "--session", str(session_path)]) == 0
    assert not session_path.exists()

    from coevo.preferences import load_pairs
    from coevo.study import create_session, save_session, submit_ranking

    session = create_session(load_pairs(sampled), seed=0)
    submit_ranking(session, session.tasks[0].task_id, "First")
    save_session(session, session_path)
    assert main(["--config", config_path, "study", "stats",
                 "--session", str(session_path)]) == 0
