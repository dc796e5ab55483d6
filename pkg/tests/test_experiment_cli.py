import csv
import json
import re

import numpy as np
import pytest
import yaml

from arrl.cli import main
from arrl.errors import BadConfig, MissingCheckpoint, MissingRuns
from arrl.experiment import (find_checkpoints, find_runs, load_run, parse_config, run_experiment,
                             seeds_from_arg, transfer_table)
from arrl.plotting import aggregate, plot_runs, render_svg, to_px
from arrl.trainer import EpisodeRecord, RunRecord
from arrl.transfer import TABLE_HEADER

TINY = {
    "methods": [{"agent": "TD3", "optimizer": "CMAES", "gait": "Rose"}, {"optimizer": "BO", "gait": "Sine"}],
    "seeds": [0, 1, 2],
    "trainer": {"t_max": 120, "H": 2, "eval_interval": 60},
    "env": {"max_steps": 30},
    "rl": {"actor_hidden": [8], "critic_hidden": [8], "batch_size": 8, "warmup_steps": 20},
    "transfer": {"eval_seeds": [0, 1]},
}


@pytest.fixture(scope="module")
def batch(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfg = parse_config(TINY)
    counts = run_experiment(cfg, out=root)
    return cfg, root, counts


def test_batch_writes_one_dir_per_method_and_seed(batch):
    cfg, root, counts = batch
    assert counts == {"done": 6, "skipped": 0, "failed": 0}
    runs = find_runs([root])
    assert len(runs) == 6
    for m in cfg.methods:
        for s in cfg.seeds:
            d = cfg.run_dir(m, s, root)
            manifest = json.loads((d / "manifest.json").read_text())
            assert manifest["complete"] and manifest["seed"] == s and manifest["method"] == m.name
            assert (d / "episodes.csv").exists()


def test_rerun_is_idempotent(batch):
    cfg, root, _ = batch
    before = {p: p.stat().st_mtime_ns for p in root.rglob("episodes.csv")}
    assert run_experiment(cfg, out=root) == {"done": 0, "skipped": 6, "failed": 0}
    assert {p: p.stat().st_mtime_ns for p in root.rglob("episodes.csv")} == before


def test_episode_csv_schema(batch):
    _, root, _ = batch
    with open(find_runs([root])[0] / "episodes.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["run_id", "episode", "env_step", "return"] and len(header) == 11


def test_config_errors_name_the_field():
    with pytest.raises(BadConfig) as e:
        parse_config({k: v for k, v in TINY.items() if k != "seeds"})
    assert e.value.field == "seeds"
    with pytest.raises(BadConfig) as e:
        parse_config({**TINY, "rl": {"actor_lr": -1.0}})
    assert e.value.field == "rl.actor_lr"
    with pytest.raises(BadConfig) as e:
        parse_config({**TINY, "seeds": [1, 1]})
    assert e.value.field == "seeds"
    with pytest.raises(BadConfig):
        parse_config([1, 2])


def test_config_yaml_roundtrip(tmp_path):
    cfg = parse_config(TINY)
    p = tmp_path / "exp.yaml"
    p.write_text(yaml.safe_dump(cfg.model_dump(mode="json")))
    from arrl.experiment import load_config

    again = load_config(p)
    assert again == cfg and again.run_key(cfg.methods[0]) == cfg.run_key(cfg.methods[0])


def test_missing_runs_and_checkpoints(tmp_path):
    with pytest.raises(MissingRuns):
        find_runs([tmp_path])
    with pytest.raises(MissingCheckpoint):
        find_checkpoints(tmp_path)


@pytest.mark.parametrize("text,expected", [(None, None), ("3", [3]), ("0,2", [0, 2]), ("1-3,7", [1, 2, 3, 7])])
def test_seeds_from_arg(text, expected):
    assert seeds_from_arg(text) == expected


# ---------------------------------------------------------------------------- plots


def synthetic_records():
    recs = []
    for seed, scale in enumerate((1.0, 2.0, 3.0)):
        r = RunRecord("h", seed, "Vanilla TD3", "all")
        for i in range(10):
            r.episodes.append(EpisodeRecord(i, scale * np.sin(i) + i, 100, 100 * (i + 1), np.zeros(7), i, ""))
        recs.append(r)
    return recs


def test_svg_is_byte_identical_for_same_inputs(tmp_path):
    a, b = render_svg(aggregate(synthetic_records())), render_svg(aggregate(synthetic_records()))
    assert a == b
    plot_runs(synthetic_records(), tmp_path / "x")
    plot_runs(synthetic_records(), tmp_path / "y")
    assert (tmp_path / "x" / "best_so_far.svg").read_bytes() == (tmp_path / "y" / "best_so_far.svg").read_bytes()


def test_svg_points_recover_data_within_half_pixel():
    aggs = aggregate(synthetic_records())
    svg = render_svg(aggs)
    g = re.search(r'data-xmin="([^"]+)" data-xmax="([^"]+)" data-ymin="([^"]+)" data-ymax="([^"]+)"', svg)
    xr, yr = (float(g[1]), float(g[2])), (float(g[3]), float(g[4]))
    pts = re.search(r'class="mean"[^>]*points="([^"]+)"', svg)[1].split()
    a = aggs[0]
    ok = np.isfinite(a.mean)
    for (px, py), x, y in zip((map(float, p.split(",")) for p in pts), a.steps[ok], a.mean[ok]):
        ex, ey = to_px(float(x), float(y), xr, yr, 0)
        assert abs(px - ex) <= 0.5 and abs(py - ey) <= 0.5


def test_aggregate_envelope_orders_and_is_monotone():
    a = aggregate(synthetic_records())[0]
    ok = np.isfinite(a.mean)
    assert np.all(a.lo[ok] <= a.mean[ok]) and np.all(a.mean[ok] <= a.hi[ok])
    assert np.all(np.diff(a.mean[ok]) >= 0) and a.n_seeds == 3


# ---------------------------------------------------------------------------- transfer and CLI


def test_transfer_table_rows(batch):
    cfg, root, _ = batch
    rows, samples = transfer_table(root, cfg.transfer, cfg.env_config())
    keys = {(r.method, r.gait) for r in rows}
    assert keys == {("TD3+CMAES", "Rose"), ("Vanilla BO", "Sine")}
    for r in rows:
        assert r.n_seeds == 3
        assert len(samples[(r.method, r.gait)]["seed"]) == 3 * len(cfg.transfer.eval_seeds)
        assert r.direct_distance >= 0 and r.progressive_distance >= 0


def test_cli_end_to_end(tmp_path, capsys):
    cfg_path = tmp_path / "exp.yaml"
    small = {**TINY, "methods": [{"optimizer": "CMAES", "gait": "Rose"}], "seeds": [0, 1]}
    cfg_path.write_text(yaml.safe_dump(small))
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg_path), "--out", str(out), "--seeds", "0-1"]) == 0
    assert "2 done" in capsys.readouterr().out
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert "2 skipped" in capsys.readouterr().out
    assert main(["plot", str(out), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "best_so_far.svg").exists()
    assert main(["transfer", str(out), "--config", str(cfg_path), "--out", str(tmp_path / "tr"),
                 "--seeds", "0"]) == 0
    with open(tmp_path / "tr" / "transfer.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TABLE_HEADER and len(rows) == 2


def test_cli_reports_errors_with_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"methods": [{"agent": "TD3"}]}))
    assert main(["train", "--config", str(bad)]) == 2
    assert "BadConfig" in capsys.readouterr().err
    assert main(["plot", str(tmp_path), "--out", str(tmp_path / "p")]) == 2
    assert "MissingRuns" in capsys.readouterr().err


def test_load_run_matches_manifest(batch):
    _, root, _ = batch
    manifest, rec = load_run(find_runs([root])[0])
    assert len(rec.episodes) == manifest["episodes"]
    assert rec.best_return == pytest.approx(manifest["best_return"])


def test_shipped_config_parses():
    from pathlib import Path

    from arrl.experiment import load_config

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.yaml")
    assert [m.name for m in cfg.methods] == ["TD3+CMAES", "Vanilla TD3", "Vanilla CMAES"]
