import json

import pytest

from memtrap import cli
from memtrap.powerlab import synthetic_trace


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_arguments_prints_usage(capsys):
    code, out, err = run([], capsys)
    assert code == 1
    assert "usage" in err and out == ""


def test_malformed_flag(capsys):
    code, _, err = run(["film", "--d-nm", "a,b"], capsys)
    assert code == 1 and "usage" in err
    code, _, err = run(["nosuch"], capsys)
    assert code == 1


def test_film_table(capsys):
    code, out, _ = run(["film", "--n", "1.76", "--lambda-nm", "852", "--theta-deg", "45",
                        "--d-nm", "25,50,75"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "d_nm,T_s,T_p,T_circ"
    tc = [float(l.split(",")[3]) for l in lines[1:]]
    assert tc == pytest.approx([0.962, 0.880, 0.803], abs=1e-3)


def test_film_ar(capsys):
    code, out, _ = run(["film", "--ar"], capsys)
    assert code == 0 and out.startswith("ar_thickness_nm: 264.3")


def test_fitloss(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    path.write_text(synthetic_trace(1.0).to_csv())
    code, out, _ = run(["fitloss", str(path), "--json", str(tmp_path / "fit.json")], capsys)
    assert code == 0
    assert "alpha_db_per_cm: 1.000" in out
    assert json.loads((tmp_path / "fit.json").read_text())["alpha_db_per_cm"] == pytest.approx(1.0)


def test_fitloss_bad_file(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    path.write_text("position_cm,intensity\n0,1\n1,-1\n2,1\n")
    assert run(["fitloss", str(path)], capsys)[0] == 1


def test_config_precedence_and_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"film": {"d_nm": [50], "theta_deg": 0}}))
    code, out, _ = run(["film", "--config", str(cfg)], capsys)
    assert code == 0 and len(out.strip().splitlines()) == 2
    assert out.strip().splitlines()[1].startswith("50,0.885")
    code, out, _ = run(["film", "--config", str(cfg), "--theta-deg", "45"], capsys)
    assert out.strip().splitlines()[1].endswith("0.880326")
    cfg.write_text(json.dumps({"span_um": 100, "bogus_key": 1}))
    code, _, err = run(["film", "--config", str(cfg)], capsys)
    assert code == 1 and "bogus_key" in err


def test_validation_and_solver_exit_codes(tmp_path, capsys):
    code, _, err = run(["thermal", "--variant", "hybrid_needle", "--span-um", "400",
                        "--gap-um", "300"], capsys)
    assert code == 1 and "gap" in err
    code, _, _ = run(["thermal", "--variant", "straight", "--span-um", "200",
                      "--thermal-max-iter", "1", "--power-mw", "50"], capsys)
    assert code == 2
    code, _, err = run(["trap", "--half-domain", "--h-nm", "20", "--p-blue-mw", "0"], capsys)
    assert code == 2 and "no trap" in err


def test_thermal_and_failcurve_outputs(tmp_path, capsys):
    field = tmp_path / "T.csv"
    code, out, _ = run(["thermal", "--variant", "straight", "--span-um", "200",
                        "--field", str(field)], capsys)
    assert code == 0 and "peak_k:" in out
    assert field.read_text().splitlines()[0] == "x_um,y_um,T_K"
    curve = tmp_path / "curve.csv"
    code, _, _ = run(["failcurve", "--variant", "straight", "--spans-um", "200,100",
                      "--out", str(curve)], capsys)
    assert code == 0
    rows = curve.read_text().splitlines()
    assert rows[0] == "span_um,p_fail_mw" and rows[1].startswith("100,")
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_sweep_cli(tmp_path, capsys, monkeypatch):
    from memtrap import sweep
    monkeypatch.setattr(sweep, "evaluate", lambda spec, xs: xs.t_wg_nm - xs.t_mem_nm)
    out = tmp_path / "sweep.csv"
    code, _, _ = run(["sweep", "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t_wg_nm,t_mem_nm,objective,status" and len(lines) == 13
    code, _, err = run(["sweep", "--sweep-t-wg-nm", "75", "--sweep-t-mem-nm", "100"], capsys)
    assert code == 1


def test_mode_cli(tmp_path, capsys):
    code, out, _ = run(["mode", "--h-nm", "20", "--half-domain", "--field", str(tmp_path / "E.csv")], capsys)
    assert code == 0 and "n_eff=1.15" in out
    assert (tmp_path / "E.csv").read_text().startswith("x_nm,y_nm,E")


def test_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spans_um": [150], "h_nm": 20}))
    code, out, _ = run(["report", "--config", str(cfg), "--half-domain",
                        "--out-dir", str(tmp_path / "rep")], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "rep" / "summary.json").read_text())
    assert summary["config"]["spans_um"] == [150]
    assert len(summary["config_hash"]) == 64
    assert summary["results"]["film_T_circ_50nm"] == pytest.approx(0.880, abs=1e-3)
    assert {"film.csv", "trap.txt", "failcurve.csv", "summary.json"} <= {
        p.name for p in (tmp_path / "rep").iterdir()}
    assert "config_hash:" in out
