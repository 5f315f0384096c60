import csv
import subprocess
import sys

import pytest

from pxlap import varexp
from pxlap.cli import RunConfig, load_config, main, run
from pxlap.errors import ConfigError


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_end_to_end(tmp_path):
    rc = main(["solve", "--mesh", "interval:256", "--p", "2", "--f", "t^3", "--q", "4", "--r", "3.5",
               "--theta", "3.5", "--t0", "1", "--lambda", "0.05", "--out", str(tmp_path),
               "--trace", "--emit-gnuplot"])
    assert rc == 0
    sol = rows(tmp_path / "solution.csv")
    assert len(sol) == 257 and list(sol[0]) == ["x", "u"]
    rep = rows(tmp_path / "report.csv")[0]
    assert rep["converged"] == "true" and float(rep["residual_dual_norm"]) <= 1e-8
    assert float(rep["min_u"]) > 0 and rep["hypotheses_pass"] == "true"
    assert rep["dual_norm"].startswith("sqrt(r^T K^-1 r)")
    trace = (tmp_path / "mpa_trace.csv").read_text().splitlines()
    assert trace[0] == "iter,point,energy,grad_dual"
    dat = (tmp_path / "solution.dat").read_text().splitlines()
    assert len(dat) == 257 and len(dat[1].split()) == 2


def test_torsion_report(tmp_path):
    assert main(["torsion", "--mesh", "interval:256", "--p", "2", "--lambda", "1",
                 "--out", str(tmp_path)]) == 0
    assert float(rows(tmp_path / "report.csv")[0]["min_u"]) == pytest.approx(-0.125, abs=5e-5)


def test_verify_passes(tmp_path):
    assert main(["verify", "--seed", "7", "--draws", "40", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "verify.csv")
    assert {r["suite"] for r in table} >= {"norm_axioms", "unit_sphere", "norm_modular", "holder"}
    assert all(r["passed"] == "true" for r in table)


def test_sweep_outputs(tmp_path):
    assert main(["sweep", "--mesh", "interval:64", "--lambdas", "0.2,0.1", "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "sweep.csv")
    assert [float(r["lambda"]) for r in table] == [0.2, 0.1]
    assert float(rows(tmp_path / "report.csv")[0]["lambda_threshold"]) == 0.2


def test_norm_command(tmp_path):
    assert main(["norm", "--mesh", "interval:64", "--u", "2", "--out", str(tmp_path)]) == 0
    rep = rows(tmp_path / "report.csv")[0]
    assert float(rep["luxemburg_norm"]) == pytest.approx(2.0, rel=1e-12)
    assert rep["sobolev_norm"] == ""


def test_outputs_are_deterministic(tmp_path):
    args = ["solve", "--mesh", "interval:64", "--lambda", "0.1", "--q", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("solution.csv", "report.csv"):
        a, b = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
        assert a == b and b"\r\n" not in a


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text('# comment\np = "2 + 0.5*x"\nmesh = interval:32\nlambda = 0.1\ntol = 1e-9\n')
    c = load_config(cfg, {"command": "solve", "tol": "1e-10"})
    assert c.p_expr == "2 + 0.5*x" and c.mesh == "interval:32"
    assert c.tol == 1e-10 and c.path_points == 41 and c.lam == 0.1


def test_empty_config_gets_defaults(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("")
    c = load_config(cfg, {"command": "torsion", "lam": "1"})
    assert c.tol == 1e-8 and c.path_points == 41


@pytest.mark.parametrize("text, key", [
    ("lambda_list = 0.5, 0.2, 0.7", "lambda_list"),
    ("bogus = 3", "bogus"),
    ("tol = -1", "tol"),
    ("tol = abc", "tol"),
    ('p = "2 + * x"', "p"),
    ("mesh = interval:1", "mesh"),
    ("mesh = disk:4", "mesh"),
    ("nonsense line", "nonsense line"),
])
def test_config_errors(tmp_path, text, key):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text + "\n")
    with pytest.raises(ConfigError) as info:
        load_config(cfg, {"command": "sweep", "lambda_list": "0.2,0.1"} if key != "lambda_list"
                    else {"command": "sweep"})
    assert info.value.key == key


def test_syntax_error_reports_offset():
    with pytest.raises(ConfigError) as info:
        load_config(None, {"command": "solve", "lam": "0.1", "p_expr": "2 + * x"})
    assert "byte 4" in str(info.value)


def test_exit_codes(tmp_path):
    assert main(["sweep", "--lambdas", "0.5,0.7", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--out", str(tmp_path)]) == 2                        # missing λ
    assert main(["sweep", "--lambdas", "0.2,0.1", "--parallel", "--out", str(tmp_path)]) == 2
    # f = 0 has no descent direction: the solver cannot start
    assert main(["solve", "--f", "0*t", "--lambda", "0.1", "--mesh", "interval:16",
                 "--out", str(tmp_path)]) == 3
    assert main(["norm", "--p", "0.5", "--out", str(tmp_path)]) == 2       # p < 1


def test_verify_property_failure_exit_code(tmp_path, monkeypatch):
    broken = lambda *a, **k: [varexp.SuiteResult("holder", False, -1.0, 1)]
    monkeypatch.setattr(varexp, "function_space_suite", broken)
    assert main(["verify", "--out", str(tmp_path)]) == 4
    assert rows(tmp_path / "verify.csv")[0]["passed"] == "false"


def test_torsion_no_convergence_exit_code(tmp_path):
    assert main(["torsion", "--p", "3", "--lambda", "1", "--tol", "1e-300",
                 "--mesh", "interval:16", "--out", str(tmp_path)]) == 3


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "pxlap", "torsion", "--mesh", "interval:8", "--lambda", "1",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "solution.csv").exists()


def test_run_validates_config(tmp_path):
    with pytest.raises(ConfigError):
        run(RunConfig(command="nope", out_dir=str(tmp_path)))
