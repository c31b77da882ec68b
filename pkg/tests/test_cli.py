from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from edgechain.cli import main

SMALL_YAML = """
seeds: [1]
timeslots: 15
system: {alpha: 100, capacity: [300, 250, 250, 250]}
fleet: {devices_per_level: 3, legacy_devices: 1}
ledger: {difficulty_bits: 4}
sweep: {beta_values: [1.0, 1.35, 3.0], scales: [1.0, 0.5]}
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL_YAML)
    return str(p)


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_run_writes_artifacts(cfg_file, tmp_path):
    out = tmp_path / "out"
    r = invoke("run", "--config", cfg_file, "--out", out)
    assert r.exit_code == 0, r.output
    for name in ("manifest.json", "config.yaml", "metrics.csv", "credit_traj.csv", "utilization.csv", "audit.json",
                 "chain_seed1.jsonl", "state_seed1.json", "decisions_seed1.jsonl", "events_seed1.jsonl"):
        assert (out / name).exists(), name
    assert json.loads((out / "audit.json").read_text())["1"]["ok"]


def test_env_out_dir(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv("EDGECHAIN_OUT", str(tmp_path / "env"))
    assert invoke("compare", "--config", cfg_file).exit_code == 0
    assert (tmp_path / "env" / "scheduler_cmp.csv").exists()


def test_sweep_and_scale_overrides(cfg_file, tmp_path):
    r = invoke("sweep-beta", "--config", cfg_file, "--out", tmp_path / "b", "--beta", 1.0, "--beta", 2.0)
    assert r.exit_code == 0, r.output
    assert len((tmp_path / "b" / "beta_sweep.csv").read_text().splitlines()) == 3
    r = invoke("scale", "--config", cfg_file, "--out", tmp_path / "s", "--scale", 0.7)
    assert r.exit_code == 0, r.output
    assert len((tmp_path / "s" / "scale_sweep.csv").read_text().splitlines()) == 4


def test_config_errors(cfg_file, tmp_path):
    r = invoke("run", "--config", cfg_file, "--out", tmp_path / "x", "--scheduler", "Lottery")
    assert r.exit_code == 1 and "scheduler" in r.output
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: {capacity: [1, 1, 1, 1]}\n")
    r = invoke("run", "--config", bad, "--out", tmp_path / "y")
    assert r.exit_code == 1 and "system.alpha" in r.output
    assert not (tmp_path / "y").exists()
    r = invoke("run", "--config", cfg_file, "--out", "/proc/edgechain-nope")
    assert r.exit_code == 1
    assert invoke("sweep-beta", "--config", cfg_file, "--out", tmp_path / "z", "--beta", 0.5).exit_code == 1


def test_replay_pass_and_fail(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert invoke("run", "--config", cfg_file, "--out", out).exit_code == 0
    chain = out / "chain_seed1.jsonl"
    r = invoke("replay", chain)
    assert r.exit_code == 0 and "audit pass" in r.output and '"state_matches": true' in r.output

    data = bytearray(chain.read_bytes())
    pos = data.index(b'"cents":') + 8
    data[pos] = ord("9") if data[pos] != ord("9") else ord("8")
    tampered = tmp_path / "chain_t.jsonl"
    tampered.write_bytes(bytes(data))
    r = invoke("replay", tampered)
    assert r.exit_code == 2 and "audit FAIL" in r.output

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert invoke("replay", empty).exit_code == 2
    assert invoke("replay", tmp_path / "missing.jsonl").exit_code == 1
