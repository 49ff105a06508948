"""Command-line entry point for every pipeline stage.

Exit codes: 0 success, 2 usage, 3 validation/config, 4 transport,
5 internal. Every subcommand honors --config, --seed, and --dry-run;
scripted backends plus a synthetic persona pool make any command runnable
offline with --mock.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .agents import CLIENT, COACH
from .config import BackendSpec, RunConfig, load_config, save_config_snapshot
from .errors import (
    CoevoError,
    ConfigError,
    ContractError,
    GenerationError,
    JudgeValidationError,
    PersonaParseError,
    StudyError,
    TransportError,
)
from .prompt_templates import load_templates

USAGE_EXIT = 2
VALIDATION_EXIT = 3
TRANSPORT_EXIT = 4
INTERNAL_EXIT = 5

_VALIDATION_ERRORS = (
    ConfigError,
    ContractError,
    PersonaParseError,
    GenerationError,
    JudgeValidationError,
    StudyError,
)


class RunLock:
    """One CLI instance per run directory."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / "run.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"run directory is locked by {self.path}")
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _mock_spec(seed: int) -> BackendSpec:
    return BackendSpec(kind="scripted", seed=seed)


def _backend(cfg: RunConfig, role: str, mock: bool):
    spec = _mock_spec(cfg.seed) if mock else cfg.backends[role]
    return spec.build(role, default_seed=cfg.seed)


def _templates(cfg: RunConfig):
    return load_templates(cfg.templates_dir)


def _load_personas(cfg: RunConfig, mock: bool):
    from .mocks import mock_pool
    from .personas import load_pool

    if cfg.pool:
        return load_pool(cfg.pool)
    if mock or all(spec.kind == "scripted" for spec in cfg.backends.values()):
        return mock_pool(cfg.pool_size)
    raise ConfigError("no persona pool configured; set pool: or pass --mock")


def _persona_by_index(pool, index: int):
    for p in pool:
        if p.index == index:
            return p
    raise ConfigError(f"persona index {index} not in pool of {len(pool)}")


def _print(args, payload) -> None:
    if not args.quiet:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# --- command implementations -------------------------------------------------


def cmd_personas_generate(args, cfg: RunConfig) -> int:
    from .mocks import mock_persona_generator
    from .personas import generate_persona_batch, save_pool

    if args.dry_run:
        _print(args, {"action": "personas generate", "n": args.n, "out": args.out})
        return 0
    templates = _templates(cfg)
    if args.mock:
        backend = mock_persona_generator(args.n)
    else:
        backend = _backend(cfg, "persona_generator", mock=False)
    personas = generate_persona_batch(
        backend, args.n, templates, start_index=args.start_index
    )
    save_pool(personas, args.out)
    _print(args, {"generated": len(personas), "out": args.out})
    return 0


def cmd_personas_validate(args, cfg: RunConfig) -> int:
    from .personas import load_pool, validate_batch, validate_persona

    pool = load_pool(args.pool) if args.pool else _load_personas(cfg, args.mock)
    if args.dry_run:
        _print(args, {"action": "personas validate", "count": len(pool)})
        return 0
    per_persona = {
        p.index: [str(v) for v in validate_persona(p).violations]
        for p in pool
        if not validate_persona(p).ok
    }
    report = validate_batch(pool, dominance_threshold=args.threshold)
    _print(
        args,
        {
            "personas": len(pool),
            "invalid": per_persona,
            "balance_violations": [
                {"attribute": b.attribute, "dominant_value": b.dominant_value, "share": b.share}
                for b in report.balance_violations
            ],
            "uniqueness_violations": [
                {"field": u.field, "value": u.duplicated_value}
                for u in report.uniqueness_violations
            ],
            "coherence_flags": report.coherence_flags,
        },
    )
    return 0 if not per_persona and report.ok else VALIDATION_EXIT


def cmd_personas_partition(args, cfg: RunConfig) -> int:
    from .personas import partition_pool

    partition = partition_pool(args.pool_size or cfg.pool_size, cfg.partition)
    _print(
        args,
        {
            "sft": [partition.sft_range.lo, partition.sft_range.hi],
            "tree": [partition.tree_range.lo, partition.tree_range.hi],
            "eval": [partition.eval_range.lo, partition.eval_range.hi],
        },
    )
    return 0


def cmd_sft_generate(args, cfg: RunConfig) -> int:
    from .loop import generate_sft_corpus

    pool = _load_personas(cfg, args.mock)
    personas = [p for p in pool if p.index in cfg.partition.sft_range][: args.count]
    if args.dry_run:
        _print(args, {"action": "sft generate", "dialogues": len(personas)})
        return 0
    corpus = generate_sft_corpus(
        personas,
        _backend(cfg, "coach", args.mock),
        _backend(cfg, "client", args.mock),
        templates=_templates(cfg),
        seed=cfg.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for record in corpus:
            fh.write(
                json.dumps(
                    {
                        "persona_index": record.persona_index,
                        "termination": record.termination,
                        "turns": [
                            {"role": u.role, "text": u.text} for u in record.dialogue
                        ],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    _print(args, {"dialogues": len(corpus), "out": str(out)})
    return 0


def cmd_sft_export(args, cfg: RunConfig) -> int:
    from .agents import Utterance
    from .loop import SftCorpusRecord, export_role_masked

    corpus = []
    with open(args.corpus, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            corpus.append(
                SftCorpusRecord(
                    dialogue=[Utterance(t["role"], t["text"]) for t in doc["turns"]],
                    persona_index=doc["persona_index"],
                    termination=doc["termination"],
                )
            )
    if args.dry_run:
        _print(args, {"action": "sft export", "records": len(corpus), "role": args.role})
        return 0
    export_role_masked(corpus, args.role, args.out)
    _print(args, {"records": len(corpus), "role": args.role, "out": args.out})
    return 0


def cmd_tree_build(args, cfg: RunConfig) -> int:
    from .tree import build_tree, save_tree, tree_shape

    pool = _load_personas(cfg, args.mock)
    persona = _persona_by_index(pool, args.persona)
    if args.dry_run:
        _print(args, {"action": "tree build", "persona": persona.index})
        return 0
    tree = build_tree(
        cfg.iteration.schedule(),
        _backend(cfg, "coach", args.mock),
        _backend(cfg, "client", args.mock),
        persona,
        params=cfg.iteration.tree_sampling,
        templates=_templates(cfg),
        iteration=args.iteration,
    )
    save_tree(tree, args.out)
    shape = tree_shape(tree)
    _print(
        args,
        {
            "out": args.out,
            "leaves": shape.leaves,
            "branch_groups": shape.branch_groups,
            "max_depth": shape.max_depth,
            "truncated_paths": shape.truncated_paths,
        },
    )
    return 0


def cmd_tree_score(args, cfg: RunConfig) -> int:
    from .judge import ScoringStats, score_tree
    from .tree import load_tree, save_tree

    tree = load_tree(args.tree)
    if args.dry_run:
        _print(args, {"action": "tree score", "tree": args.tree})
        return 0
    stats = ScoringStats()
    score_tree(
        tree,
        _backend(cfg, "judge", args.mock),
        templates=_templates(cfg),
        stats=stats,
    )
    save_tree(tree, args.out or args.tree)
    _print(args, {"judged": stats.judged, "retried": stats.retried})
    return 0


def cmd_tree_value(args, cfg: RunConfig) -> int:
    from .tree import load_tree, save_tree
    from .valuation import DiscountConfig, backup_q

    tree = load_tree(args.tree)
    if args.dry_run:
        _print(args, {"action": "tree value", "tree": args.tree})
        return 0
    backup_q(tree, DiscountConfig(args.gamma if args.gamma is not None else cfg.iteration.gamma))
    save_tree(tree, args.out or args.tree)
    root_q = tree.node(tree.root).q
    _print(args, {"root_q": list(root_q)})
    return 0


def cmd_pairs_extract(args, cfg: RunConfig) -> int:
    from .preferences import export_pairs, extract_client_pairs, extract_coach_pairs
    from .tree import load_tree

    coach_pairs, client_pairs = [], []
    for path in args.trees:
        tree = load_tree(path)
        coach_pairs.extend(extract_coach_pairs(tree))
        client_pairs.extend(extract_client_pairs(tree))
    if args.dry_run:
        _print(args, {"action": "pairs extract", "coach": len(coach_pairs), "client": len(client_pairs)})
        return 0
    out_dir = Path(args.out_dir)
    export_pairs(coach_pairs, COACH, out_dir / "coach.jsonl", beta=cfg.iteration.beta)
    export_pairs(client_pairs, CLIENT, out_dir / "client.jsonl", beta=cfg.iteration.beta)
    _print(args, {"coach_pairs": len(coach_pairs), "client_pairs": len(client_pairs), "out_dir": str(out_dir)})
    return 0


def cmd_pairs_export(args, cfg: RunConfig) -> int:
    from .preferences import export_pairs, load_pairs

    pairs = load_pairs(args.pairs)
    if args.dry_run:
        _print(args, {"action": "pairs export", "pairs": len(pairs)})
        return 0
    export_pairs(pairs, args.side, args.out, beta=cfg.iteration.beta)
    _print(args, {"pairs": len(pairs), "out": args.out})
    return 0


def cmd_pairs_check(args, cfg: RunConfig) -> int:
    from .game_checks import check_client_consistency, check_coach_consistency
    from .preferences import load_pairs

    pairs = load_pairs(args.pairs)
    coach_pairs = [p for p in pairs if p.side == COACH]
    client_pairs = [p for p in pairs if p.side == CLIENT]
    if args.dry_run:
        _print(args, {"action": "pairs check", "pairs": len(pairs)})
        return 0
    coach_report = check_coach_consistency(coach_pairs, trials=args.trials, seed=cfg.seed)
    client_report = check_client_consistency(client_pairs, trials=args.trials, seed=cfg.seed)
    _print(args, {"coach": coach_report.to_doc(), "client": client_report.to_doc()})
    return 0 if coach_report.ok and client_report.ok else VALIDATION_EXIT


def cmd_coevolve_run(args, cfg: RunConfig) -> int:
    from .loop import (
        ArtifactRegistry,
        CommandTrainer,
        MockBackendProvider,
        NoopTrainer,
        StaticBackendProvider,
        run_loop,
    )

    run_dir = Path(cfg.workdir)
    if args.dry_run:
        _print(
            args,
            {
                "action": "coevolve run",
                "from": args.from_k,
                "to": args.to_k,
                "run_dir": str(run_dir),
                "trainer": args.trainer,
            },
        )
        return 0
    pool = _load_personas(cfg, args.mock)
    trainer = NoopTrainer() if args.trainer == "noop" else CommandTrainer(args.trainer)
    if args.mock or all(s.kind == "scripted" for s in cfg.backends.values()):
        provider = MockBackendProvider(seed=cfg.seed)
    else:
        provider = StaticBackendProvider(
            _backend(cfg, "coach", False),
            _backend(cfg, "client", False),
            _backend(cfg, "judge", False),
        )
    with RunLock(run_dir):
        save_config_snapshot(cfg, run_dir)
        registry = ArtifactRegistry(run_dir / "artifacts.manifest")
        if args.from_k == 1:
            registry.bootstrap_sft()
        reports = run_loop(
            args.from_k,
            args.to_k,
            cfg.iteration,
            run_dir,
            provider,
            trainer,
            pool,
            list(cfg.partition.tree_range.indices()),
            templates=_templates(cfg),
            seed=cfg.seed,
        )
    _print(
        args,
        {
            "iterations": [r.iteration for r in reports],
            "coach_pairs": [r.coach_pairs for r in reports],
            "client_pairs": [r.client_pairs for r in reports],
            "run_dir": str(run_dir),
        },
    )
    return 0


def _eval_bundles(args, cfg: RunConfig, templates):
    from .evaluation import ClientBundle, CoachBundle

    coach_backend = _backend(cfg, "coach", args.mock)
    client_backend = _backend(cfg, "client", args.mock)
    coach_bundles = [
        CoachBundle("coach-operational", coach_backend, templates.coach_operational),
        CoachBundle("coach-rubric", coach_backend, templates.coach_rubric),
    ]
    client_bundles = [
        ClientBundle("client-default", client_backend, None),
        ClientBundle("client-emotional", client_backend, "emotional"),
        ClientBundle("client-resistant", client_backend, "resistant"),
        ClientBundle("client-ambivalent", client_backend, "ambivalent"),
    ]
    return coach_bundles, client_bundles


def _eval_personas(args, cfg: RunConfig):
    pool = _load_personas(cfg, args.mock)
    personas = [p for p in pool if p.index in cfg.partition.eval_range]
    if args.personas:
        personas = personas[: args.personas]
    return personas


def cmd_eval_matrix(args, cfg: RunConfig) -> int:
    from .evaluation import run_matrix

    templates = _templates(cfg)
    coach_bundles, client_bundles = _eval_bundles(args, cfg, templates)
    personas = _eval_personas(args, cfg)
    if args.dry_run:
        _print(
            args,
            {
                "action": "eval matrix",
                "coach_conditions": len(coach_bundles),
                "client_conditions": len(client_bundles),
                "personas": len(personas),
                "dialogues": len(coach_bundles) * len(client_bundles) * len(personas),
            },
        )
        return 0
    report = run_matrix(
        coach_bundles,
        client_bundles,
        personas,
        _backend(cfg, "judge", args.mock),
        cfg.eval,
        templates,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print(args, {"cells": len(report["cells"]), "out": str(out)})
    return 0


def cmd_eval_probe(args, cfg: RunConfig) -> int:
    from .evaluation import probe_fixed_coach

    templates = _templates(cfg)
    coach_bundles, client_bundles = _eval_bundles(args, cfg, templates)
    personas = _eval_personas(args, cfg)
    if args.dry_run:
        _print(args, {"action": "eval probe", "personas": len(personas)})
        return 0
    report = probe_fixed_coach(
        coach_bundles[0],
        client_bundles,
        personas,
        _backend(cfg, "judge", args.mock),
        cfg.eval,
        templates,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print(args, {"rows": len(report.rows), "out": str(out)})
    return 0


def cmd_eval_trajectory(args, cfg: RunConfig) -> int:
    from .evaluation import CoachBundle, run_cell, trajectory_rows, write_trajectory
    from .mocks import mock_agent_backend

    templates = _templates(cfg)
    _, client_bundles = _eval_bundles(args, cfg, templates)
    personas = _eval_personas(args, cfg)
    fixed_client = client_bundles[0]
    if args.dry_run:
        _print(args, {"action": "eval trajectory", "iterations": args.iterations})
        return 0
    cells = {}
    for k in range(1, args.iterations + 1):
        # One coach bundle per iteration artifact. Scripted mode varies the
        # mock by iteration; remote mode expects the endpoint to be swapped
        # to each checkpoint's adapter externally.
        backend = (
            mock_agent_backend(COACH, seed=cfg.seed * 1000 + k)
            if args.mock or cfg.backends["coach"].kind == "scripted"
            else _backend(cfg, "coach", False)
        )
        coach_bundle = CoachBundle(
            f"coach-iter-{k}", backend, templates.coach_operational
        )
        metrics, _ = run_cell(
            coach_bundle, fixed_client, personas,
            _backend(cfg, "judge", args.mock), cfg.eval, templates,
        )
        cells[k] = metrics
    rows = trajectory_rows(cells, condition=fixed_client.name)
    write_trajectory(rows, args.out)
    _print(args, {"rows": len(rows), "out": args.out})
    return 0


def cmd_study_sample(args, cfg: RunConfig) -> int:
    from .preferences import load_pairs
    from .study import sample_study_pairs

    datasets = {}
    run_dir = Path(args.run_dir)
    for iter_dir in sorted((run_dir / "iterations").glob("iter_*")):
        dataset = iter_dir / "datasets" / "coach.jsonl"
        if dataset.is_file():
            pairs = load_pairs(dataset)
            if pairs:
                datasets[pairs[0].iteration] = pairs
    if args.iterations:
        wanted = set(args.iterations)
        datasets = {k: v for k, v in datasets.items() if k in wanted}
    if args.dry_run:
        _print(args, {"action": "study sample", "iterations": sorted(datasets)})
        return 0
    sampled = sample_study_pairs(datasets, args.per_iter or cfg.study_per_iter)
    from .preferences import export_pairs

    export_pairs(sampled, COACH, args.out, beta=cfg.iteration.beta)
    _print(args, {"sampled": len(sampled), "out": args.out})
    return 0


def cmd_study_serve(args, cfg: RunConfig) -> int:
    import uvicorn

    from .mocks import mock_persona
    from .preferences import load_pairs
    from .study import create_app, create_session, load_session

    templates = _templates(cfg)
    persist = args.session
    if args.session and Path(args.session).is_file():
        session = load_session(args.session)
    else:
        pairs = load_pairs(args.pairs)
        personas = {}
        pool = _load_personas(cfg, args.mock) if (cfg.pool or args.mock) else []
        by_index = {p.index: p for p in pool}
        for pair in pairs:
            p = by_index.get(pair.persona_index) or mock_persona(pair.persona_index)
            personas[pair.persona_index] = p.to_doc()
        session = create_session(pairs, seed=cfg.seed, personas=personas)
    if args.dry_run:
        _print(args, {"action": "study serve", "tasks": len(session.tasks)})
        return 0
    if persist and not Path(persist).is_file():
        from .study import save_session

        save_session(session, persist)
    app = create_app({session.session_id: session}, templates.rubric_inline, persist_path=persist)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_study_stats(args, cfg: RunConfig) -> int:
    from .study import agreement_stats, load_session

    session = load_session(args.session)
    report = agreement_stats(session, allow_partial=True)
    _print(args, report.to_doc())
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coevo",
        description="Dual-agent co-evolution pipeline over branching coaching dialogues.",
    )
    parser.add_argument("--version", action="version", version=f"coevo {__version__}")
    parser.add_argument("--config", default=None, help="YAML run config")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--dry-run", action="store_true", help="resolve and print, do not execute")
    parser.add_argument("--quiet", action="store_true", help="suppress JSON output")
    sub = parser.add_subparsers(dest="group", required=True)

    personas = sub.add_parser("personas").add_subparsers(dest="command", required=True)
    g = personas.add_parser("generate")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--start-index", type=int, default=0)
    g.add_argument("--mock", action="store_true")
    g.set_defaults(fn=cmd_personas_generate)
    v = personas.add_parser("validate")
    v.add_argument("--pool", default=None)
    v.add_argument("--threshold", type=float, default=0.5)
    v.add_argument("--mock", action="store_true")
    v.set_defaults(fn=cmd_personas_validate)
    p = personas.add_parser("partition")
    p.add_argument("--pool-size", type=int, default=None)
    p.set_defaults(fn=cmd_personas_partition)

    sft = sub.add_parser("sft").add_subparsers(dest="command", required=True)
    g = sft.add_parser("generate")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--mock", action="store_true")
    g.set_defaults(fn=cmd_sft_generate)
    e = sft.add_parser("export")
    e.add_argument("--corpus", required=True)
    e.add_argument("--role", choices=[COACH, CLIENT], required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_sft_export)

    tree = sub.add_parser("tree").add_subparsers(dest="command", required=True)
    b = tree.add_parser("build")
    b.add_argument("--persona", type=int, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--iteration", type=int, default=0)
    b.add_argument("--mock", action="store_true")
    b.set_defaults(fn=cmd_tree_build)
    s = tree.add_parser("score")
    s.add_argument("--tree", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--mock", action="store_true")
    s.set_defaults(fn=cmd_tree_score)
    v = tree.add_parser("value")
    v.add_argument("--tree", required=True)
    v.add_argument("--out", default=None)
    v.add_argument("--gamma", type=float, default=None)
    v.set_defaults(fn=cmd_tree_value)

    pairs = sub.add_parser("pairs").add_subparsers(dest="command", required=True)
    x = pairs.add_parser("extract")
    x.add_argument("--trees", nargs="+", required=True)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(fn=cmd_pairs_extract)
    e = pairs.add_parser("export")
    e.add_argument("--pairs", required=True)
    e.add_argument("--side", choices=[COACH, CLIENT], required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_pairs_export)
    c = pairs.add_parser("check")
    c.add_argument("--pairs", required=True)
    c.add_argument("--trials", type=int, default=100)
    c.set_defaults(fn=cmd_pairs_check)

    coevolve = sub.add_parser("coevolve").add_subparsers(dest="command", required=True)
    r = coevolve.add_parser("run")
    r.add_argument("--from", dest="from_k", type=int, required=True)
    r.add_argument("--to", dest="to_k", type=int, required=True)
    r.add_argument("--trainer", default="noop", help="'noop' or an external command")
    r.add_argument("--mock", action="store_true")
    r.set_defaults(fn=cmd_coevolve_run)

    ev = sub.add_parser("eval").add_subparsers(dest="command", required=True)
    m = ev.add_parser("matrix")
    m.add_argument("--out", required=True)
    m.add_argument("--personas", type=int, default=None)
    m.add_argument("--mock", action="store_true")
    m.set_defaults(fn=cmd_eval_matrix)
    pr = ev.add_parser("probe")
    pr.add_argument("--out", required=True)
    pr.add_argument("--personas", type=int, default=None)
    pr.add_argument("--mock", action="store_true")
    pr.set_defaults(fn=cmd_eval_probe)
    tj = ev.add_parser("trajectory")
    tj.add_argument("--out", required=True)
    tj.add_argument("--iterations", type=int, default=3)
    tj.add_argument("--personas", type=int, default=None)
    tj.add_argument("--mock", action="store_true")
    tj.set_defaults(fn=cmd_eval_trajectory)

    study = sub.add_parser("study").add_subparsers(dest="command", required=True)
    sa = study.add_parser("sample")
    sa.add_argument("--run-dir", required=True)
    sa.add_argument("--out", required=True)
    sa.add_argument("--per-iter", type=int, default=None)
    sa.add_argument("--iterations", type=int, nargs="*", default=None)
    sa.set_defaults(fn=cmd_study_sample)
    se = study.add_parser("serve")
    se.add_argument("--session", default=None, help="session file to resume or create")
    se.add_argument("--pairs", default=None, help="sampled pairs to build a session from")
    se.add_argument("--host", default="127.0.0.1")
    se.add_argument("--port", type=int, default=8321)
    se.add_argument("--mock", action="store_true")
    se.set_defaults(fn=cmd_study_serve)
    st = study.add_parser("stats")
    st.add_argument("--session", required=True)
    st.set_defaults(fn=cmd_study_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.fn(args, cfg)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_EXIT
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return TRANSPORT_EXIT
    except CoevoError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
