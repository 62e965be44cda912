import json

import pytest
from click.testing import CliRunner

from photorack.cli import main

TOY = """
rack:
  chips:
    cpu: {escape_gbytes_per_s: 430.8, count: 28}
switches:
  wss: {radix: 2, wavelengths_per_port: 64}
fabric: {wss_count: 32, wss_start_stride: 0}
"""


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, list(args), catch_exceptions=False)


def test_pack_default(runner, tmp_path):
    r = invoke(runner, "--out", str(tmp_path), "pack")
    assert r.exit_code == 0
    rows = {x["chip_type"]: (x["chips_per_mcm"], x["mcm_count"])
            for x in json.loads((tmp_path / "pack.json").read_text())["rows"]}
    assert rows["gpu"] == (3, 171) and rows["ddr4"] == (27, 38)
    assert "350" in r.output


def test_pack_gpu_only(runner, tmp_path):
    cfg = tmp_path / "gpu.yaml"
    cfg.write_text("rack:\n  chips:\n    gpu: {escape_gbytes_per_s: 1886.7, count: 512}\n")
    r = invoke(runner, "--config", str(cfg), "--out", str(tmp_path), "--format", "csv", "pack")
    assert r.exit_code == 0
    assert (tmp_path / "pack.csv").read_text().splitlines() == ["chip_type,chips_per_mcm,mcm_count",
                                                                 "gpu,3,171"]


def test_infeasible_exit_code(runner, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("rack:\n  chips:\n    nic: {escape_gbytes_per_s: 7000, count: 4}\n")
    r = runner.invoke(main, ["--config", str(cfg), "pack"])
    assert r.exit_code == 2
    assert "nic" in r.output


def test_unknown_key_exit_code(runner, tmp_path):
    cfg = tmp_path / "typo.yaml"
    cfg.write_text("mcm: {fibres: 32}\n")
    assert runner.invoke(main, ["--config", str(cfg), "pack"]).exit_code == 2


def test_direct_bw_case_a(runner, tmp_path):
    r = invoke(runner, "--out", str(tmp_path), "direct-bw", "--fabric", "awgr")
    assert r.exit_code == 0
    d = json.loads((tmp_path / "direct_bw.json").read_text())
    assert d["min_gbps"] == 125.0 and d["max_gbps"] == 150.0


def test_direct_bw_two_mcm_toy(runner, tmp_path):
    cfg = tmp_path / "toy.yaml"
    cfg.write_text(TOY)
    r = invoke(runner, "--config", str(cfg), "--out", str(tmp_path), "direct-bw", "--fabric", "wss")
    assert r.exit_code == 0
    d = json.loads((tmp_path / "direct_bw.json").read_text())
    assert d["mcm_count"] == 2
    assert d["min_gbps"] == 32 * 64 * 25.0


def test_latency(runner):
    assert invoke(runner, "latency", "--tech", "photonic", "--distance", "4").output.strip().endswith("35 ns")
    assert invoke(runner, "latency", "--tech", "pcie_gen5_tree").output.strip().endswith("85 ns")


def test_power(runner, tmp_path):
    r = invoke(runner, "--out", str(tmp_path), "power")
    assert r.exit_code == 0
    d = json.loads((tmp_path / "power.json").read_text())
    assert d["total_w"] <= 150e3
    assert {"laser_w", "transceiver_w", "switch_w"} <= set(d)


def test_iso_and_fec(runner):
    assert "1082 vs baseline 1920" in invoke(runner, "iso").output
    assert "meets" in invoke(runner, "fec", "--raw-ber", "1e-9").output
    assert "misses" in invoke(runner, "fec", "--raw-ber", "1e-6").output


def test_simulate_twice_identical(runner, tmp_path):
    outs = []
    for name in ("a", "b"):
        r = invoke(runner, "--out", str(tmp_path / name), "simulate", "--seed", "7", "--horizon", "0.02")
        assert r.exit_code == 0
        outs.append((tmp_path / name / "simulate.json").read_bytes())
    assert outs[0] == outs[1]


def test_config_round_trip(runner, tmp_path):
    r = invoke(runner, "--out", str(tmp_path), "config")
    dumped = tmp_path / "config.yaml"
    assert dumped.exists()
    a = invoke(runner, "--out", str(tmp_path / "a"), "simulate", "--seed", "3", "--horizon", "0.02")
    b = invoke(runner, "--config", str(dumped), "--out", str(tmp_path / "b"), "simulate",
               "--seed", "3", "--horizon", "0.02")
    assert a.exit_code == b.exit_code == 0
    assert (tmp_path / "a" / "simulate.json").read_bytes() == (tmp_path / "b" / "simulate.json").read_bytes()


def test_simulate_trace_and_csv(runner, tmp_path):
    r = invoke(runner, "--out", str(tmp_path), "--format", "csv", "simulate", "--horizon", "0.02",
               "--trace")
    assert r.exit_code == 0
    assert (tmp_path / "simulate.csv").read_text().startswith("class,")
    lines = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert lines and all(json.loads(x)["decision"] for x in lines)
