import json
from pathlib import Path

import numpy as np
import pytest

from nildual.cli import main, parse_lambda, parse_lambda_list
from nildual.errors import ConfigError
from nildual.io_formats import read_field_csv, write_field_csv
from nildual.nil3 import DomainGrid

SMALL = ["--grid=-1,1,-1,1,21,21"]


def run(argv):
    return main(argv)


def test_parse_lambda():
    assert parse_lambda("1") == 1.0
    assert parse_lambda("1j") == 1j
    assert abs(parse_lambda("exp:pi/3") - np.exp(1j * np.pi / 3)) < 1e-15
    with pytest.raises(ConfigError):
        parse_lambda("0.5")
    with pytest.raises(ConfigError):
        parse_lambda_list("")


def test_generate_outputs(tmp_path):
    rc = run(["generate", "--example", "paraboloid", *SMALL,
              "--lambda", "1", "--out", str(tmp_path)])
    assert rc == 0
    (run_dir,) = tmp_path.iterdir()
    names = {p.name for p in run_dir.iterdir()}
    assert "lam0_f_minus.obj" in names
    assert "lam0_psi1.csv" in names
    assert "frames.json" in names
    assert "config.json" in names
    obj = (run_dir / "lam0_f_minus.obj").read_text().splitlines()
    n_v = sum(1 for l in obj if l.startswith("v "))
    n_f = sum(1 for l in obj if l.startswith("f "))
    assert n_v == 21 * 21
    assert n_f == 2 * 20 * 20
    sidecar = json.loads((run_dir / "lam0_f_minus.sidecar.json").read_text())
    assert sidecar["schema"] == 1 and "config_hash" in sidecar


def test_generate_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        rc = run(["generate", "--example", "paraboloid", *SMALL,
                  "--lambda", "1", "--out", str(out)])
        assert rc == 0
    (da,) = a.iterdir()
    (db,) = b.iterdir()
    for pa in sorted(da.iterdir()):
        pb = db / pa.name
        assert pa.read_bytes() == pb.read_bytes(), pa.name


def test_dual_uses_cache_and_reports_fit(tmp_path):
    args = ["--example", "paraboloid", *SMALL, "--lambda", "1",
            "--allow-reflection", "--out", str(tmp_path)]
    assert run(["generate", *args]) == 0
    assert run(["dual", *args]) == 0
    (run_dir,) = tmp_path.iterdir()
    fit = json.loads((run_dir / "lam0_dual_fit.json").read_text())
    assert fit["equivalent"] is True
    assert fit["kind"].startswith("reflection")
    assert (run_dir / "lam0_f_plus.obj").exists()
    assert (run_dir / "lam0_branch_log.json").exists()
    assert (run_dir / "lam0_dual_psi1.csv").exists()


def test_smyth_masks_disk(tmp_path):
    rc = run(["generate", "--example", "smyth-1", "--lambda", "1",
              "--out", str(tmp_path)])
    assert rc == 0
    (run_dir,) = tmp_path.iterdir()
    sidecar = json.loads((run_dir / "lam0_f_minus.sidecar.json").read_text())
    assert len(sidecar["masked_nodes"]) > 0
    obj = (run_dir / "lam0_f_minus.obj").read_text().splitlines()
    n_v = sum(1 for l in obj if l.startswith("v "))
    assert n_v == 41 * 41 - len(sidecar["masked_nodes"])


def test_dual_from_cache_with_exclusion_mask(tmp_path):
    # the cache carries the export mask and the trust mask separately, so
    # a cached dual run on a masked example still extracts on the full
    # smooth field (regression: identity-filled holes poisoned stencils)
    args = ["--example", "smyth-1", "--lambda", "1", "--out", str(tmp_path)]
    assert run(["generate", *args]) == 0
    assert run(["dual", *args]) == 0
    (run_dir,) = tmp_path.iterdir()
    assert (run_dir / "lam0_dual_psi1.csv").exists()
    log = json.loads((run_dir / "lam0_branch_log.json").read_text())
    assert log["masked"] > 0  # exclusion disk + the zero of B


def test_verify_exit_codes(tmp_path):
    rc = run(["verify", "--example", "paraboloid",
              "--lambda", "1", "--out", str(tmp_path)])
    assert rc == 0
    (run_dir,) = tmp_path.iterdir()
    report = json.loads((run_dir / "report.json").read_text())
    assert report["passed"] is True
    # perturbed frame: nonzero exit, SU(1,1) and compatibility checks trip
    rc = run(["verify", "--example", "paraboloid",
              "--lambda", "1", "--out", str(tmp_path),
              "--perturb-frame", "1e-3"])
    assert rc == 1
    report = json.loads((run_dir / "report.json").read_text())
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert any(n.startswith("frame_su11") for n in failed)


def test_sweep_requires_two_lambdas(tmp_path):
    rc = run(["sweep", "--example", "paraboloid", *SMALL,
              "--lambda", "1", "--out", str(tmp_path)])
    assert rc == 2
    rc = run(["sweep", "--example", "paraboloid", *SMALL,
              "--lambda", "1,exp:pi/3", "--out", str(tmp_path)])
    assert rc == 0
    (run_dir,) = tmp_path.iterdir()
    rep = json.loads((run_dir / "sweep_report.json").read_text())
    assert len(rep["entries"]) == 2
    assert rep["entries"][1]["dirac_potential_drift"] < 1e-5
    assert (run_dir / "lam1_f_plus.obj").exists()


def test_export_from_cache(tmp_path):
    args = ["--example", "paraboloid", *SMALL, "--lambda", "1",
            "--out", str(tmp_path)]
    assert run(["generate", *args]) == 0
    (run_dir,) = tmp_path.iterdir()
    rc = run(["export", "--run", str(run_dir), "--formats", "obj"])
    assert rc == 0
    assert (run_dir / "export_lam0_f_plus.obj").exists()


def test_potential_file_pipeline(tmp_path):
    from nildual.io_formats import write_json
    from nildual.potentials import paraboloid_potential
    pot = tmp_path / "pot.json"
    write_json(pot, paraboloid_potential().to_json())
    rc = run(["generate", "--potential", str(pot), *SMALL,
              "--lambda", "1", "--out", str(tmp_path / "o")])
    assert rc == 0


def test_spinor_csv_pipeline(tmp_path):
    from .oracles import paraboloid_spinors, paraboloid_surface
    grid = DomainGrid(-1.0, 1.0, -1.0, 1.0, 21, 21)
    psi1, psi2 = paraboloid_spinors(grid)
    write_field_csv(tmp_path / "in_psi1.csv", psi1, grid)
    write_field_csv(tmp_path / "in_psi2.csv", psi2, grid)
    rc = run(["generate", "--spinors", str(tmp_path / "in"),
              "--lambda", "1", "--out", str(tmp_path / "o")])
    assert rc == 0
    (run_dir,) = (tmp_path / "o").iterdir()
    assert (run_dir / "lam0_f_minus.obj").exists()
    rc = run(["verify", "--spinors", str(tmp_path / "in"),
              "--lambda", "1", "--out", str(tmp_path / "o")])
    assert rc == 0


def test_field_csv_roundtrip(tmp_path):
    grid = DomainGrid(-1.0, 1.0, -0.5, 0.5, 7, 5)
    rng = np.random.default_rng(3)
    f = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    write_field_csv(tmp_path / "f.csv", f, grid)
    g2, f2, m2 = read_field_csv(tmp_path / "f.csv")
    assert g2 == grid
    assert np.allclose(f2, f)
    assert m2.all()


def test_error_on_missing_pipeline(tmp_path):
    rc = run(["generate", "--lambda", "1", "--out", str(tmp_path)])
    assert rc == 2


def test_unknown_example(tmp_path):
    rc = run(["generate", "--example", "smyth-3", "--grid=-0.3,0.3,-0.3,0.3,21,21", "--lambda", "1",
              "--out", str(tmp_path)])
    assert rc == 0  # smyth-k generalizes
