"""Run configuration: one human-editable YAML document.

An empty config reproduces the reference settings (13 iterations, 3 trees
of branching factor 3 at coach steps 4 and 6, horizon 8, gamma 0.5, tree
sampling 0.9/0.95/312, eval sampling 0.2, judge at temperature 0, pool
partition 0-2999 / 3000-3999 / 4000-4019).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agents import AgentBackend, RemoteBackend, SamplingParams
from .errors import ConfigError
from .evaluation import EvalConfig
from .loop import IterationConfig
from .personas import IndexInterval, PoolPartition


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "scripted"
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    retries: int = 2
    seed: int | None = None

    def build(self, role: str, default_seed: int = 0) -> AgentBackend:
        if self.kind == "remote":
            if not self.endpoint or not self.model:
                raise ConfigError(f"remote backend for {role} needs endpoint and model")
            return RemoteBackend(
                self.endpoint, self.model, auth_env=self.auth_env, retries=self.retries
            )
        if self.kind == "scripted":
            from .mocks import mock_agent_backend, mock_judge_backend

            seed = self.seed if self.seed is not None else default_seed
            if role == "judge":
                return mock_judge_backend(seed=seed)
            return mock_agent_backend(role, seed=seed)
        raise ConfigError(f"unknown backend kind: {self.kind!r}")


@dataclass
class RunConfig:
    seed: int = 0
    workdir: str = "runs/default"
    templates_dir: str | None = None
    pool: str | None = None
    pool_size: int = 5000
    partition: PoolPartition = field(default_factory=PoolPartition)
    iteration: IterationConfig = field(default_factory=IterationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    backends: dict[str, BackendSpec] = field(
        default_factory=lambda: {
            "coach": BackendSpec(),
            "client": BackendSpec(),
            "judge": BackendSpec(),
            "persona_generator": BackendSpec(),
        }
    )
    study_per_iter: int = 20

    def to_doc(self) -> dict:
        return {
            "seed": self.seed,
            "workdir": self.workdir,
            "templates_dir": self.templates_dir,
            "pool": self.pool,
            "pool_size": self.pool_size,
            "partition": {
                "sft": [self.partition.sft_range.lo, self.partition.sft_range.hi],
                "tree": [self.partition.tree_range.lo, self.partition.tree_range.hi],
                "eval": [self.partition.eval_range.lo, self.partition.eval_range.hi],
            },
            "iteration": {
                "K": self.iteration.K,
                "N": self.iteration.N,
                "M": self.iteration.M,
                "gamma": self.iteration.gamma,
                "T": self.iteration.T,
                "branch_steps": list(self.iteration.branch_steps),
                "beta": self.iteration.beta,
                "tree_sampling": {
                    "temperature": self.iteration.tree_sampling.temperature,
                    "top_p": self.iteration.tree_sampling.top_p,
                    "max_tokens": self.iteration.tree_sampling.max_tokens,
                },
            },
            "eval": {
                "T": self.eval.T,
                "window": list(self.eval.window),
                "sampling": {
                    "temperature": self.eval.sampling.temperature,
                    "top_p": self.eval.sampling.top_p,
                    "max_tokens": self.eval.sampling.max_tokens,
                },
            },
            "backends": {
                name: {
                    "kind": spec.kind,
                    "endpoint": spec.endpoint,
                    "model": spec.model,
                    "auth_env": spec.auth_env,
                    "retries": spec.retries,
                    "seed": spec.seed,
                }
                for name, spec in self.backends.items()
            },
            "study": {"per_iter": self.study_per_iter},
        }


def _interval(doc, default: IndexInterval) -> IndexInterval:
    if doc is None:
        return default
    return IndexInterval(int(doc[0]), int(doc[1]))


def _sampling(doc, default: SamplingParams) -> SamplingParams:
    if not doc:
        return default
    return SamplingParams(
        temperature=doc.get("temperature", default.temperature),
        top_p=doc.get("top_p", default.top_p),
        max_tokens=doc.get("max_tokens", default.max_tokens),
        seed=doc.get("seed"),
    )


def config_from_doc(doc: dict | None) -> RunConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    cfg = RunConfig()
    cfg.seed = int(doc.get("seed", cfg.seed))
    cfg.workdir = doc.get("workdir", cfg.workdir)
    cfg.templates_dir = doc.get("templates_dir")
    cfg.pool = doc.get("pool")
    cfg.pool_size = int(doc.get("pool_size", cfg.pool_size))
    part = doc.get("partition", {}) or {}
    cfg.partition = PoolPartition(
        sft_range=_interval(part.get("sft"), cfg.partition.sft_range),
        tree_range=_interval(part.get("tree"), cfg.partition.tree_range),
        eval_range=_interval(part.get("eval"), cfg.partition.eval_range),
    )
    it = doc.get("iteration", {}) or {}
    defaults = IterationConfig()
    cfg.iteration = IterationConfig(
        K=int(it.get("K", defaults.K)),
        N=int(it.get("N", defaults.N)),
        M=int(it.get("M", defaults.M)),
        gamma=float(it.get("gamma", defaults.gamma)),
        T=int(it.get("T", defaults.T)),
        branch_steps=tuple(it.get("branch_steps", defaults.branch_steps)),
        beta=float(it.get("beta", defaults.beta)),
        tree_sampling=_sampling(it.get("tree_sampling"), defaults.tree_sampling),
    )
    ev = doc.get("eval", {}) or {}
    eval_defaults = EvalConfig()
    cfg.eval = EvalConfig(
        T=int(ev.get("T", eval_defaults.T)),
        window=tuple(ev.get("window", eval_defaults.window)),
        sampling=_sampling(ev.get("sampling"), eval_defaults.sampling),
    )
    backends = doc.get("backends", {}) or {}
    for name, spec in backends.items():
        if name not in cfg.backends:
            raise ConfigError(f"unknown backend role: {name!r}")
        spec = spec or {}
        cfg.backends[name] = BackendSpec(
            kind=spec.get("kind", "scripted"),
            endpoint=spec.get("endpoint"),
            model=spec.get("model"),
            auth_env=spec.get("auth_env"),
            retries=int(spec.get("retries", 2)),
            seed=spec.get("seed"),
        )
    study = doc.get("study", {}) or {}
    cfg.study_per_iter = int(study.get("per_iter", cfg.study_per_iter))
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    return config_from_doc(doc)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        yaml.safe_dump(cfg.to_doc(), sort_keys=True, default_flow_style=False),
        encoding="utf-8",
    )


def save_config_snapshot(cfg: RunConfig, run_dir: str | Path) -> None:
    """A run directory embeds the exact config it was produced with."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.to_doc(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
