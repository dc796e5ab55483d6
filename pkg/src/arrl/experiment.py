"""Experiment configuration files and the multi-seed run orchestration."""

from __future__ import annotations

import concurrent.futures as cf
import json
import logging
import time
from collections import defaultdict
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from arrl.agents import RLConfig
from arrl.env import DynamicsPerturbation, EnvConfig
from arrl.errors import BadConfig, MissingCheckpoint, MissingRuns
from arrl.gaits import GaitKind, GaitSpec
from arrl.trainer import (AgentKind, OptimizerKind, RunRecord, TrainerConfig, arrl_train, config_hash,
                          load_checkpoint)
from arrl.transfer import TableRow, TransferSchedule, evaluate_transfer, median

log = logging.getLogger(__name__)

DESK_RL = {"actor_hidden": [64, 64], "critic_hidden": [64, 64]}


class MethodSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    agent: AgentKind | None = None
    optimizer: OptimizerKind | None = None
    gait: GaitKind = GaitKind.ROSE

    @property
    def name(self) -> str:
        if self.agent and self.optimizer:
            return f"{self.agent}+{self.optimizer}"
        return f"Vanilla {self.agent or self.optimizer}"

    @property
    def slug(self) -> str:
        return f"{self.agent or 'none'}-{self.optimizer or 'none'}-{self.gait.value}".lower()


class TransferProfile(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    perturbation: DynamicsPerturbation = Field(default_factory=DynamicsPerturbation.default_transfer)
    eval_seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    ramp_time: float = Field(2.0, gt=0)
    k2: float = Field(0.5, gt=0)


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce a batch of runs."""

    model_config = ConfigDict(extra="forbid")

    methods: list[MethodSpec] = Field(..., min_length=1)
    seeds: list[int] = Field(..., min_length=1)
    trainer: dict[str, Any] = Field(default_factory=dict)
    env: dict[str, Any] = Field(default_factory=dict)
    rl: dict[str, Any] = Field(default_factory=lambda: dict(DESK_RL))
    transfer: TransferProfile = Field(default_factory=TransferProfile)
    output_dir: str = "runs"

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, v: list[int]) -> list[int]:
        if len(set(v)) != len(v):
            raise ValueError("seeds must be unique")
        return v

    def env_config(self) -> EnvConfig:
        return _build(EnvConfig, self.env, "env")

    def rl_config(self) -> RLConfig:
        return _build(RLConfig, self.rl, "rl")

    def trainer_config(self, method: MethodSpec, seed: int) -> TrainerConfig:
        d = {**self.trainer, "agent": method.agent, "optimizer": method.optimizer,
             "gait": method.gait, "seed": seed}
        return _build(TrainerConfig, d, "trainer")

    def run_key(self, method: MethodSpec) -> str:
        """Hash of everything that shapes a run except its seed."""
        tc = self.trainer_config(method, 0)
        return config_hash(tc, self.rl_config(), self.env_config())

    def run_dir(self, method: MethodSpec, seed: int, out: str | Path | None = None) -> Path:
        root = Path(out or self.output_dir)
        return root / f"{method.slug}_{self.run_key(method)}" / f"seed{seed}"

    def validate_sections(self) -> None:
        self.env_config()
        self.rl_config()
        for m in self.methods:
            self.trainer_config(m, self.seeds[0])


def _build(cls, data: dict, section: str):
    try:
        return cls(**data)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in (section, *err["loc"]))
        raise BadConfig(err["msg"], loc) from None


def _bad_config(e: ValidationError) -> BadConfig:
    err = e.errors()[0]
    return BadConfig(err["msg"], ".".join(str(p) for p in err["loc"]))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise BadConfig(f"not valid YAML: {e}") from None
    return parse_config(raw)


def parse_config(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise BadConfig("top level must be a mapping")
    try:
        cfg = ExperimentConfig(**raw)
    except ValidationError as e:
        raise _bad_config(e) from None
    cfg.validate_sections()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)


# ---------------------------------------------------------------------------- running


def _run_one(cfg_json: str, method_json: str, seed: int, out: str) -> str:
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    method = MethodSpec.model_validate_json(method_json)
    run_dir = cfg.run_dir(method, seed, out)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists() and json.loads(manifest_path.read_text()).get("complete"):
        return "skipped"
    run_dir.mkdir(parents=True, exist_ok=True)
    tc = cfg.trainer_config(method, seed)
    t0 = time.perf_counter()
    res = arrl_train(tc, cfg.rl_config(), cfg.env_config(), out_dir=run_dir)
    res.record.write_csv(run_dir / "episodes.csv")
    manifest = {
        "run_id": res.record.run_id,
        "run_key": cfg.run_key(method),
        "config_hash": res.record.config_hash,
        "seed": seed,
        "method": method.name,
        "agent": method.agent,
        "optimizer": method.optimizer,
        "gait": method.gait.value,
        "episodes": len(res.record.episodes),
        "env_steps": int(res.record.env_steps[-1]) if res.record.episodes else 0,
        "best_return": res.record.best_return,
        "tells": res.record.tells,
        "theta_prime": res.theta_final.to_dict(),
        "trainer": tc.model_dump(mode="json"),
        "wall_time_s": time.perf_counter() - t0,
        "complete": True,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return "done"


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, seeds: list[int] | None = None,
                   jobs: int = 1) -> dict[str, int]:
    """Run every (method, seed) pair, skipping completed run directories."""
    out = str(out or cfg.output_dir)
    seeds = seeds or cfg.seeds
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "experiment.yaml").write_text(dump_config(cfg))
    cfg_json = cfg.model_dump_json()
    tasks = [(cfg_json, m.model_dump_json(), s, out) for m in cfg.methods for s in seeds]
    counts = {"done": 0, "skipped": 0, "failed": 0}
    if jobs <= 1:
        for t in tasks:
            counts[_safe_run(t)] += 1
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            for status in pool.map(_safe_run, tasks):
                counts[status] += 1
    return counts


def _safe_run(task) -> str:
    try:
        return _run_one(*task)
    except Exception:  # a failed run must not take the batch down
        log.exception("run failed: seed=%s", task[2])
        return "failed"


def find_runs(paths) -> list[Path]:
    """Completed run directories under any of ``paths``."""
    found = []
    for p in paths:
        p = Path(p)
        if (p / "manifest.json").exists():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(m.parent for m in p.rglob("manifest.json")))
    runs = [r for r in dict.fromkeys(found) if json.loads((r / "manifest.json").read_text()).get("complete")]
    if not runs:
        raise MissingRuns(f"no completed runs under {', '.join(map(str, paths))}")
    return runs


def load_run(run_dir: Path) -> tuple[dict, RunRecord]:
    manifest = json.loads((run_dir / "manifest.json").read_text())
    rec = RunRecord.read_csv(run_dir / "episodes.csv", manifest["seed"], manifest["method"], manifest["gait"])
    return manifest, rec


def find_checkpoints(root: str | Path) -> list[Path]:
    root = Path(root)
    cks = sorted(p.parent for p in root.rglob("checkpoint.json")) if root.is_dir() else []
    if not cks:
        raise MissingCheckpoint(f"no checkpoints under {root}")
    return cks


def seeds_from_arg(text: str | None) -> list[int] | None:
    """Parse ``--seeds`` as a comma list with optional ranges, e.g. ``0,1,5-7``."""
    if not text:
        return None
    seeds: list[int] = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    return seeds


def step_grid(records: list[RunRecord], n: int = 200) -> np.ndarray:
    t_end = min(int(r.env_steps[-1]) for r in records if r.episodes)
    return np.unique(np.linspace(0, t_end, n).round().astype(int))


# ---------------------------------------------------------------------------- transfer tables


def transfer_table(ck_root: str | Path, profile: TransferProfile | None = None,
                   env_cfg: EnvConfig | None = None):
    """Direct and progressive transfer of every checkpoint under ``ck_root``.

    Returns ``(rows, samples)``: one row per method x gait (vanilla RL rows
    span all gaits) with medians over checkpoints and evaluation seeds, and
    the raw per-episode samples keyed by (method, gait).
    """
    profile = profile or TransferProfile()
    samples: dict[tuple[str, str], dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for ck in find_checkpoints(ck_root):
        agent, theta, manifest = load_checkpoint(ck)
        weight = manifest["base_weight"]
        gait = manifest["gait"]
        key = (manifest["method"], gait if weight > 0 else "all")
        ctrl_theta = theta if weight > 0 else None
        for s in profile.eval_seeds:
            direct = evaluate_transfer(agent, ctrl_theta, gait, profile.perturbation, False, seed=s,
                                       env_cfg=env_cfg, base_weight=weight)
            if ctrl_theta is not None:
                cfg = env_cfg or EnvConfig()
                spec = GaitSpec.from_stance(gait, cfg.geometry, cfg.transition_plan())
                sched = TransferSchedule.for_amplitude(spec.amplitude(theta), profile.ramp_time, k2=profile.k2)
                prog = evaluate_transfer(agent, ctrl_theta, gait, profile.perturbation, True, seed=s,
                                         env_cfg=env_cfg, base_weight=weight, schedule=sched)
            else:
                prog = direct
            d = samples[key]
            d["direct_return"].append(direct.ret)
            d["direct_distance"].append(direct.distance)
            d["progressive_return"].append(prog.ret)
            d["progressive_distance"].append(prog.distance)
            d["checkpoint"].append(str(ck))
            d["seed"].append(s)
    rows = [TableRow(m, g, median(d["direct_return"]), median(d["direct_distance"]),
                     median(d["progressive_return"]), median(d["progressive_distance"]),
                     len(set(d["checkpoint"])))
            for (m, g), d in sorted(samples.items())]
    return rows, samples
