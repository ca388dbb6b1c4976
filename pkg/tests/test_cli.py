"""End-to-end checks of the command line entry point (no subprocesses)."""

from __future__ import annotations

import json
from pathlib import Path

from rdsw.cli import main


def _write_config(tmp_path: Path, name: str, payload: dict) -> str:
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def test_gallery_listing(capsys):
    assert main(["gallery"]) == 0
    out = capsys.readouterr().out
    print(out)
    for token in ("binary_affine", "gamma = -log 2", "anton", "diag_rot", "rotation_only"):
        assert token in out, f"gallery listing should mention {token!r}"


def test_stationary_outputs_and_manifest(tmp_path):
    cfg = _write_config(
        tmp_path,
        "stat.json",
        {
            "command": "stationary",
            "system": "binary_affine",
            "seed": 5,
            "params": {"burn_in": 200, "samples": 20_000},
        },
    )
    out_dir = tmp_path / "run"
    assert main(["stationary", "--config", cfg, "--out", str(out_dir)]) == 0
    atoms = (out_dir / "atoms.csv").read_text().splitlines()
    assert atoms[0] == "weight,x0"
    assert len(atoms) == 20_001, "one row per retained sample"
    manifest = json.loads((out_dir / "manifest.json").read_text())
    print({k: manifest[k] for k in ("command", "seed", "threads", "format")})
    assert manifest["command"] == "stationary"
    assert manifest["seed"] == 5
    assert manifest["resolved"]["params"]["samples"] == 20_000
    assert "rdsw" in manifest["versions"] and "numpy" in manifest["versions"]
    weight = atoms[1].split(",")[0]
    assert float(weight) == 1.0 / 20_000, "weights serialize with full precision"


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write_config(
        tmp_path,
        "stat.json",
        {"command": "stationary", "system": "binary_affine", "seed": 9, "params": {"samples": 500, "burn_in": 10}},
    )
    out_dir = tmp_path / "run"
    assert main(["stationary", "--config", cfg, "--seed", "12", "--out", str(out_dir)]) == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seed"] == 12, "--seed must win over the config seed"


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = _write_config(tmp_path, "bad.json", {"command": "stationary", "system": "binary_affine", "bogus": 1})
    assert main(["stationary", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    print(err)
    assert "config error" in err and "bogus" in err


def test_command_mismatch_rejected(tmp_path, capsys):
    cfg = _write_config(tmp_path, "mis.json", {"command": "sync", "system": "binary_affine"})
    assert main(["stationary", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "subcommand" in capsys.readouterr().err


def test_inline_system_validation_surfaces(tmp_path, capsys):
    cfg = _write_config(
        tmp_path,
        "inline.json",
        {
            "command": "stationary",
            "system": {
                "name": "lopsided",
                "maps": [
                    {"family": "affine_interval", "a": 0.5, "b": 0.0},
                    {"family": "affine_interval", "a": 0.5, "b": 0.5},
                ],
                "probs": [0.5, 0.4],
            },
            "params": {"samples": 100},
        },
    )
    assert main(["stationary", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    print(err)
    assert "probs must sum to 1" in err


def test_guard_errors_exit_4(tmp_path, capsys):
    cfg = _write_config(
        tmp_path,
        "lc.json",
        {
            "command": "cocycle",
            "cocycle": "rotation_only",
            "params": {"mode": "verify_lc", "n": 50, "replicas": 8},
        },
    )
    assert main(["cocycle", "--config", cfg, "--out", str(tmp_path / "x")]) == 4
    err = capsys.readouterr().err
    print(err)
    assert "[RefusalError]" in err


def test_seed_validation(tmp_path, capsys):
    cfg = _write_config(tmp_path, "s.json", {"command": "stationary", "system": "binary_affine", "params": {"samples": 100}})
    assert main(["stationary", "--config", cfg, "--seed", "-3", "--out", str(tmp_path / "x")]) == 2
    assert "seed" in capsys.readouterr().err


def test_json_format_variant(tmp_path):
    cfg = _write_config(
        tmp_path,
        "j.json",
        {
            "command": "sync",
            "system": "binary_affine",
            "format": "json",
            "seed": 3,
            "params": {"x": 0.125, "y": 0.625, "n": 40},
        },
    )
    out_dir = tmp_path / "run"
    assert main(["sync", "--config", cfg, "--out", str(out_dir)]) == 0
    fit = json.loads((out_dir / "fit.json").read_text())
    print(fit)
    assert isinstance(fit, list) and set(fit[0]) == {"rate", "intercept", "r2", "censored_at"}
    trace = json.loads((out_dir / "trace.json").read_text())
    assert len(trace) == 41


def test_byte_determinism_across_threads(tmp_path):
    payload = {
        "command": "sync",
        "system": "binary_affine",
        "seed": 3,
        "params": {"x": 0.125, "y": 0.625, "n": 60},
    }
    cfg = _write_config(tmp_path, "d.json", payload)
    dirs = [tmp_path / "a", tmp_path / "b"]
    assert main(["sync", "--config", cfg, "--out", str(dirs[0]), "--threads", "1"]) == 0
    assert main(["sync", "--config", cfg, "--out", str(dirs[1]), "--threads", "4"]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    for name in names:
        a = (dirs[0] / name).read_bytes()
        b = (dirs[1] / name).read_bytes()
        if name == "manifest.json":
            ma, mb = json.loads(a), json.loads(b)
            for drop in ("wall_time_s", "threads"):
                ma.pop(drop), mb.pop(drop)
            assert ma == mb, "manifests must agree apart from timing and thread count"
        else:
            assert a == b, f"{name} must be byte-identical across thread counts"


def test_verify_single_case(tmp_path, capsys):
    out_dir = tmp_path / "verify"
    code = main(["verify", "--case", "sync-rate-battery", "--out", str(out_dir)])
    out = capsys.readouterr().out
    print(out)
    assert code == 0
    assert "PASS sync-rate-battery" in out
    report = (out_dir / "report.csv").read_text()
    assert report == "case,passed\nsync-rate-battery,1\n"
    produced = list((out_dir / "sync-rate-battery").iterdir())
    assert produced, "verify should leave per-case artifacts behind"


def test_verify_unknown_case_exits_2(tmp_path, capsys):
    assert main(["verify", "--case", "not-a-case", "--out", str(tmp_path / "x")]) == 2
    assert "not-a-case" in capsys.readouterr().err


def test_ulam_export(tmp_path):
    cfg = _write_config(
        tmp_path,
        "u.json",
        {
            "command": "ulam",
            "system": "binary_affine",
            "params": {"k_cells": 64, "export_matrix": True, "probe_decay": True},
        },
    )
    out_dir = tmp_path / "run"
    assert main(["ulam", "--config", cfg, "--out", str(out_dir)]) == 0
    coo = (out_dir / "operator_coo.txt").read_text().splitlines()
    assert coo[0] == "0 0 0.5", "sparse export starts with the first dyadic overlap"
    assert len(coo) == 128, "two entries per row at k=64"
    summary = (out_dir / "ulam_summary.csv").read_text().splitlines()
    assert "probe_decay_rate" in summary[0] and "gap" in summary[0]
    eigen = (out_dir / "eigen.csv").read_text().splitlines()
    assert len(eigen) == 65
