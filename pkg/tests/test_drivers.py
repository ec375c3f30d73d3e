import csv
import json

import numpy as np
import pytest

from mixedplate.drivers import cli, convergence
from mixedplate.drivers.convergence import CSV_HEADER, RunConfig, run
from mixedplate.solvers import SolverError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def example1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    argv = ["--example", "1", "--element", "bdm", "--order", "1", "--theta", "1",
            "--tau", "10", "--levels", "5", "--base-n", "2", "--out", str(out)]
    assert cli.main(argv) == 0
    return out, argv


def test_csv_schema(example1_run):
    out, _ = example1_run
    rows = read_csv(out / "example1_u.csv")
    assert tuple(rows[0]) == CSV_HEADER
    body = rows[1:]
    assert len(body) == 5 and all(len(r) == 11 for r in body)
    assert all(body[0][i] == "--" for i in range(2, 11, 2))
    hs = [float(r[0]) for r in body]
    assert all(b < a for a, b in zip(hs, hs[1:]))
    assert float(body[-1][2]) == pytest.approx(2.0, abs=0.15)


def test_manifest(example1_run):
    out, _ = example1_run
    m = json.loads((out / "manifest.json").read_text())
    assert m["complete"] is True and m["tables"] == ["example1_u.csv"]
    assert m["config"]["tau"] == 10.0 and m["config"]["theta"] == 1.0
    assert m["effective"]["domain"] == "unit_square"
    assert {"mixedplate", "numpy", "scipy", "python"} <= set(m["versions"])
    assert len(m["level_info"]) == 5


def test_rerun_is_byte_identical(example1_run, tmp_path):
    out, argv = example1_run
    argv = argv[:-1] + [str(tmp_path)]
    assert cli.main(argv) == 0
    assert (tmp_path / "example1_u.csv").read_bytes() == (out / "example1_u.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["--theta", "0.5"], ["--example", "4", "--p", "3"], ["--example", "7"],
    ["--element", "rt"], ["--order", "3"], ["--levels", "1"], ["--example", "2", "--levels", "2"],
    ["--tau", "-1"], ["--solver", "lu"], ["--domain", "omega1"], ["--max-picard", "0"]])
def test_cli_rejects_invalid(argv, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_allow_any_theta_flag():
    args = cli.build_parser().parse_args(["--theta", "0.5", "--allow-any-theta"])
    assert cli.config_from_args(args).theta == 0.5


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study\nexample = 3\nlevels=4\ntau = 20  # override\nallow-any-theta = yes\n")
    args = cli.build_parser().parse_args(["--config", str(cfg), "--levels", "3"])
    c = cli.config_from_args(args)
    assert (c.example, c.levels, c.tau, c.allow_any_theta) == (3, 3, 20.0, True)
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    with pytest.raises(ValueError):
        cli.read_config_file(bad)
    bad.write_text("levels\n")
    with pytest.raises(ValueError):
        cli.read_config_file(bad)


def test_default_tau_per_example():
    assert RunConfig(example=1).params(RunConfig(example=1).case()).tau == 10.0
    c = RunConfig(example=2, levels=3)
    assert c.params(c.case()).tau == 200.0


def test_partial_tables_flushed_on_failure(tmp_path, monkeypatch, capsys):
    real = convergence.solve_linear
    calls = {"n": 0}

    def flaky(system, options=None):
        calls["n"] += 1
        if calls["n"] == 3:
            raise SolverError("injected failure", residual=1.0)
        return real(system, options)

    monkeypatch.setattr(convergence, "solve_linear", flaky)
    code = cli.main(["--example", "1", "--levels", "4", "--base-n", "2", "--out", str(tmp_path)])
    assert code == 1
    assert "level 2" in capsys.readouterr().err
    rows = read_csv(tmp_path / "example1_u.csv")
    assert len(rows) == 3
    assert json.loads((tmp_path / "manifest.json").read_text())["complete"] is False


def test_von_karman_run_writes_two_tables(tmp_path):
    res = run(RunConfig(example=4, levels=2, base_n=4))
    res.write(tmp_path)
    assert set(res.tables) == {"xi", "psi"}
    assert (tmp_path / "example4_xi.csv").exists() and (tmp_path / "example4_psi.csv").exists()
    assert all(info["picard_converged"] for info in res.level_info)


def test_reference_mode_self_consistency():
    res = run(RunConfig(example=2, levels=3, base_n=2, reference_extra=1))
    t = res.tables["u"]
    assert len(t.reports) == 3 and res.level_info[0]["reference"]
    errs = t.errors("l2_u")
    assert np.all(errs > 0) and errs[-1] < errs[0]


def test_mesh_file_input(tmp_path):
    from mixedplate.mesh import generate_square_mesh
    path = tmp_path / "square.mesh"
    generate_square_mesh(2).save(path)
    a = run(RunConfig(example=1, levels=2, mesh_file=str(path)))
    b = run(RunConfig(example=1, levels=2, base_n=2))
    np.testing.assert_array_equal(a.tables["u"].errors("l2_u"), b.tables["u"].errors("l2_u"))
