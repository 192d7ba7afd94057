"""CLI behaviour: verbs, exit codes, artifacts, determinism."""

import json

import pytest

from pandi import cli

INLINE = """\
[scenario]
schema = pi-scenario-ini/1
name = my-planar

[system]
state = x1, x2
f = -x1 + theta_a*x1^3*x2 ; 0
g = 0 ; 1

[params]
theta_a = 1.0

[manifold]
phi = x2 + x1^2

[rates]
alpha = 8

[initial]
x0 = 1.0, 0.5
"""

CASCADE = """\
[scenario]
schema = pi-scenario-ini/1
name = staged

[system]
state = x1, x2, x3
f = -x1 + x1^2 + x1*x2 ; x3 ; 0
g = 0 ; 0 ; 1

[manifold]
psi1 = x2 + x1

[rates]
alpha_2 = 8
alpha = 12

[initial]
x0 = 1.0, 0.5, -0.5
"""


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_list_prints_catalog(capsys):
    assert cli.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 14
    ids = [ln.split()[0] for ln in lines]
    assert "ex1" in ids and "maglev" in ids


def test_describe_shows_parameters(capsys):
    assert cli.main(["describe", "maglev"]) == 0
    out = capsys.readouterr().out
    assert "m_b = 3" in out
    assert "behavior: zeta-decay-to-named-equilibrium" in out
    assert cli.main(["describe", "nope"]) == 2


def test_run_writes_csv_and_summary(tmp_path, capsys):
    assert cli.main(["run", "ex1", "--x0", "1,1",
                     "--out", str(tmp_path)]) == 0
    header = (tmp_path / "ex1.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,u,phi_1,S"
    summary = read_json(tmp_path / "ex1.json")
    assert summary["schema"] == "pi-scenario-ini/1"
    assert summary["scenario"] == "ex1"
    assert summary["termination"] == "completed"
    assert summary["rates"]["phi"]["fitted"] == pytest.approx(6.0, rel=1e-4)
    assert summary["rates"]["S"]["fitted"] == pytest.approx(12.0, rel=1e-4)
    assert summary["checks"] == {"decay-pass": True,
                                 "law-equivalence-pass": True,
                                 "invariance-pass": True}
    assert summary["wall_clock_s"] is None
    assert summary["settling_time"] > 0


def test_reruns_are_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert cli.main(["run", "ex1", "--x0", "1,1", "--t-end", "5",
                         "--out", str(tmp_path / sub)]) == 0
    for name in ("ex1.csv", "ex1.json"):
        assert (tmp_path / "a" / name).read_bytes() \
            == (tmp_path / "b" / name).read_bytes()


def test_timing_flag_adds_wall_clock(tmp_path):
    assert cli.main(["run", "ex1", "--t-end", "2", "--timing",
                     "--out", str(tmp_path)]) == 0
    summary = read_json(tmp_path / "ex1.json")
    assert isinstance(summary["wall_clock_s"], float)


def test_singular_run_exits_4_with_partial_csv(tmp_path, capsys):
    assert cli.main(["run", "w2-case2", "--out", str(tmp_path)]) == 4
    summary = read_json(tmp_path / "w2-case2.json")
    assert summary["termination"] == "singularity"
    rows = (tmp_path / "w2-case2.csv").read_text().splitlines()
    assert len(rows) > 1000
    err = capsys.readouterr().err
    assert "singularity" in err


def test_robustness_run_reports_flag(tmp_path):
    argv = ["run", "slotine-reg", "--out", str(tmp_path)]
    for name in ("theta_a", "theta_b", "theta_c", "theta_d"):
        argv += ["--controller", f"{name}=0"]
    assert cli.main(argv) == 0
    checks = read_json(tmp_path / "slotine-reg.json")["checks"]
    assert checks["robustness-pass"] is True
    assert checks["decay-pass"] is None


def test_inline_config_run(tmp_path):
    cfg = tmp_path / "inline.ini"
    cfg.write_text(INLINE)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == 0
    summary = read_json(tmp_path / "my-planar.json")
    assert summary["scenario"] == "my-planar"
    assert summary["rates"]["phi"]["fitted"] == pytest.approx(4.0, rel=1e-4)
    assert summary["checks"]["law-equivalence-pass"] is None
    assert summary["checks"]["decay-pass"] is True


def test_inline_cascade_config_run(tmp_path):
    cfg = tmp_path / "staged.ini"
    cfg.write_text(CASCADE)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path),
                     "--t-end", "10"]) == 0
    summary = read_json(tmp_path / "staged.json")
    assert summary["termination"] == "completed"
    assert summary["rates"]["phi"]["fitted"] == pytest.approx(6.0, rel=1e-3)
    header = (tmp_path / "staged.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,u,phi_1,phi_2,S"


def test_sweep_writes_index_and_per_value_files(tmp_path, capsys):
    assert cli.main(["sweep", "ex1", "--param", "alpha",
                     "--values", "8,12", "--t-end", "5",
                     "--out", str(tmp_path)]) == 0
    index = read_json(tmp_path / "ex1-sweep.json")
    assert index["param"] == "alpha"
    assert index["values"] == [8.0, 12.0]
    assert len(index["runs"]) == 2
    assert index["runs"][0]["alphas"]["alpha"] == 8.0
    for v in ("8", "12"):
        assert (tmp_path / f"ex1-alpha-{v}.csv").exists()
        assert (tmp_path / f"ex1-alpha-{v}.json").exists()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PANDI_OUT", str(tmp_path / "envout"))
    assert cli.main(["run", "ex1", "--t-end", "2"]) == 0
    assert (tmp_path / "envout" / "ex1.csv").exists()


def test_config_error_exit_codes(tmp_path):
    assert cli.main(["run", "nope"]) == 2
    assert cli.main(["run", "ex1", "--set", "alph=3"]) == 2
    assert cli.main(["run", "ex1", "--x0", "1,2,3"]) == 2
    assert cli.main(["sweep", "ex1", "--param", "alpha",
                     "--values", ","]) == 2

    bad = tmp_path / "bad.ini"
    bad.write_text(INLINE.replace("x2 + x1^2", "x2 + + x1"))
    assert cli.main(["run", str(bad), "--out", str(tmp_path)]) == 2

    schema = tmp_path / "schema.ini"
    schema.write_text(INLINE.replace("pi-scenario-ini/1", "other/9"))
    assert cli.main(["run", str(schema)]) == 2

    surplus = tmp_path / "surplus.ini"
    surplus.write_text(INLINE + "\n[mystery]\nkey = 1\n")
    assert cli.main(["run", str(surplus)]) == 2


def test_synthesis_error_exit_code():
    assert cli.main(["run", "ex1", "--set", "alpha=-3"]) == 3


def test_unknown_method_rejected_by_parser():
    with pytest.raises(SystemExit) as err:
        cli.main(["run", "ex1", "--method", "euler"])
    assert err.value.code == 2
