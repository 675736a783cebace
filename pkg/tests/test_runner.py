import csv
import json
import os

import numpy as np
import pytest

from fiberflow import cli, runner
from fiberflow.errors import ConfigurationError

BASE_CONFIG = """
[family]
kind = "unit_ball"

[stencil]
s0 = [0.3, 0.0]
delta = 0.03

[grid]
h = 0.06
eps_cut = 0.05

[flow]
t_final = 0.6
snapshot_times = [0.3, 0.6]
c_cfl = 2.0
dt_probe = 0.1

[diagnostics]
interior_margin = 0.4
berman_tol = 0.5
relflow_tol = 0.5
ke_tol = 0.5

[run]
out_dir = "PLACEHOLDER"
"""


def make_config(out_dir, **subs):
    text = BASE_CONFIG.replace("PLACEHOLDER", str(out_dir))
    for old, new in subs.items():
        assert old in text
        text = text.replace(old, new)
    return runner.parse_config(text)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_minimal_config_fills_defaults():
    cfg = runner.parse_config("""
[family]
kind = "unit_ball"
[stencil]
s0 = 0.5
[grid]
h = 0.02
[flow]
t_final = 3.0
""")
    assert cfg.family.kind == "unit_ball"
    assert cfg.s0 == 0.5 + 0j
    assert cfg.delta == 0.01
    assert cfg.snapshot_times == (3.0,)
    assert cfg.c_cfl == 0.4


def test_negative_t_final_names_field():
    with pytest.raises(ConfigurationError, match="t_final"):
        runner.parse_config("""
[family]
kind = "unit_ball"
[stencil]
s0 = 0.5
[flow]
t_final = -1.0
""")


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError, match="wibble"):
        runner.parse_config("""
[family]
kind = "unit_ball"
wibble = 3
[stencil]
s0 = 0.5
""")


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError, match="plotting"):
        runner.parse_config("""
[family]
kind = "unit_ball"
[stencil]
s0 = 0.5
[plotting]
dpi = 300
""")


def test_unsorted_snapshots_rejected():
    with pytest.raises(ConfigurationError, match="sorted"):
        runner.parse_config("""
[family]
kind = "unit_ball"
[stencil]
s0 = 0.5
[flow]
t_final = 2.0
snapshot_times = [1.0, 0.5]
""")


def test_polynomial_reality_violation_names_coefficient():
    with pytest.raises(ConfigurationError, match=r"\(1,0,0,0\)"):
        runner.parse_config("""
[family]
kind = "polynomial"
coefficients = [[[1, 0, 0, 0], 1.0]]
bbox = [-1.0, 1.0, -1.0, 1.0]
[stencil]
s0 = 0.0
""")


def test_run_produces_artifacts_and_passes(tmp_path):
    cfg = make_config(tmp_path / "out")
    code = runner.run(cfg)
    assert code == runner.EXIT_OK
    rows = read_csv(tmp_path / "out" / "diagnostics.csv")
    assert [row["t"] for row in rows] == ["0.3", "0.6"]
    assert float(rows[0]["min_c"]) > 0
    with open(tmp_path / "out" / "summary.json") as fh:
        summary = json.load(fh)
    assert summary["schema_version"] == 1
    assert summary["min_c_over_run"] > 0
    assert all(summary["checks"].values())
    snaps = os.listdir(tmp_path / "out" / "snapshots")
    assert len(snaps) == 9 * 6  # 9 fibers x {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}


def test_product_disc_curvature_near_zero(tmp_path):
    cfg = make_config(tmp_path / "out", **{'kind = "unit_ball"': 'kind = "product_disc"'})
    code = runner.run(cfg)
    assert code == runner.EXIT_OK
    with open(tmp_path / "out" / "summary.json") as fh:
        summary = json.load(fh)
    assert abs(summary["min_c_over_run"]) <= 1e-10


def test_determinism_identical_csv_bytes(tmp_path):
    cfg_a = make_config(tmp_path / "a")
    cfg_b = make_config(tmp_path / "b")
    assert runner.run(cfg_a) == runner.EXIT_OK
    assert runner.run(cfg_b) == runner.EXIT_OK
    bytes_a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert bytes_a == bytes_b


def test_resume_equals_fresh_run(tmp_path):
    # interrupted run to t = 0.3, resumed to 0.6, against an uninterrupted run
    partial = make_config(tmp_path / "res", **{
        "t_final = 0.6": "t_final = 0.3",
        "snapshot_times = [0.3, 0.6]": "snapshot_times = [0.3]"})
    assert runner.run(partial) == runner.EXIT_OK
    full = make_config(tmp_path / "res")
    assert runner.resume(full) == runner.EXIT_OK
    fresh = make_config(tmp_path / "fresh")
    assert runner.run(fresh) == runner.EXIT_OK
    rows_resumed = read_csv(tmp_path / "res" / "diagnostics.csv")
    rows_fresh = read_csv(tmp_path / "fresh" / "diagnostics.csv")
    assert len(rows_resumed) == len(rows_fresh)
    for ra, rb in zip(rows_resumed, rows_fresh):
        for col in runner.CSV_COLUMNS:
            va, vb = float(ra[col]), float(rb[col])
            if np.isnan(va) and np.isnan(vb):
                continue
            assert va == pytest.approx(vb, abs=1e-12)


def test_resume_without_snapshots_is_fresh_run(tmp_path):
    cfg = make_config(tmp_path / "out")
    assert runner.resume(cfg) == runner.EXIT_OK
    assert (tmp_path / "out" / "diagnostics.csv").exists()


def test_resume_refuses_changed_grid(tmp_path):
    cfg = make_config(tmp_path / "out")
    assert runner.run(cfg) == runner.EXIT_OK
    changed = make_config(tmp_path / "out", **{"h = 0.06": "h = 0.05"})
    assert runner.resume(changed) == runner.EXIT_BREAKDOWN


def test_empty_mask_exit_code(tmp_path):
    cfg = make_config(tmp_path / "out", **{"eps_cut = 0.05": "eps_cut = 3.0"})
    assert runner.run(cfg) == runner.EXIT_BREAKDOWN


def test_failing_check_exit_code(tmp_path):
    cfg = make_config(tmp_path / "out")
    cfg.berman_tol = 1e-15  # unattainably tight
    assert runner.run(cfg) == runner.EXIT_CHECKS_FAILED


def test_workers_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(runner.WORKERS_ENV, "2")
    cfg = make_config(tmp_path / "out")
    ctx = runner._RunContext(cfg, None)
    assert ctx.workers == 2


def test_parallel_run_matches_serial(tmp_path):
    serial = make_config(tmp_path / "serial")
    parallel = make_config(tmp_path / "parallel")
    assert runner.run(serial, workers=1) == runner.EXIT_OK
    assert runner.run(parallel, workers=2) == runner.EXIT_OK
    assert (tmp_path / "serial" / "diagnostics.csv").read_bytes() == \
        (tmp_path / "parallel" / "diagnostics.csv").read_bytes()


def test_cli_run_and_checks(tmp_path, capsys):
    config_path = tmp_path / "cfg.toml"
    config_path.write_text(BASE_CONFIG.replace("PLACEHOLDER", str(tmp_path / "out")))
    assert cli.main(["run", "--config", str(config_path)]) == 0
    assert (tmp_path / "out" / "summary.json").exists()
    assert cli.main(["oracle-check", "--points", "50"]) == 0
    assert cli.main(["identity-check", "--cases", "100"]) == 0
    capsys.readouterr()


def test_cli_bad_config_file(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[family]\nkind = 'unknown_family'\n[stencil]\ns0 = 0.5\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
