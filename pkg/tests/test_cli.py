import json
import os

import pytest

from weak2strong.cli import main
from weak2strong.experiments import read_results


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_theory_regime(capsys):
    code, out, _ = run(capsys, "theory", "--lambda-t", "0.5", "--gamma-t", "0.25", "--sigma", "1")
    assert code == 0
    payload = json.loads(out)
    assert payload["regime"] == "TeacherOverRegularized"
    assert set(payload) == {"loss_teacher", "loss_student", "gap", "delta_gamma", "regime"}
    assert json.loads(json.dumps(payload)) == payload


def test_theory_zero_student_regularization(capsys):
    code, out, _ = run(capsys, "theory", "--lambda-s", "0", "--gamma-s", "0.5")
    assert code == 0 and json.loads(out)["gap"] == 0.0


def test_theory_domain_error(capsys):
    code, _, err = run(capsys, "theory", "--lambda-s", "0", "--gamma-s", "2")
    assert code == 2 and "lambda" in err


def test_phase(capsys):
    code, out, _ = run(capsys, "phase", "--lambda-t", "0.05", "--gamma-t", "0.25", "--gamma-s", "0.25")
    assert code == 0
    payload = json.loads(out)
    assert payload["regime"] == "UnderParamImproves" and payload["lambda_bar"] > 0


def test_phase_overparameterized(capsys):
    code, out, _ = run(capsys, "phase", "--lambda-t", "0.05", "--gamma-s", "1.2019", "--sigma", "2")
    assert code == 0 and json.loads(out)["regime"] in ("OverParamImproves", "OverParamNeverImproves")


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "theory", "--lambda-t", "abc")[0] == 2


def test_unknown_preset(capsys, tmp_path):
    code, _, err = run(capsys, "grid", "--preset", "nope", "--out", str(tmp_path / "r.csv"))
    assert code == 2 and "fig1_left" in err
    assert not list(tmp_path.iterdir())


def test_grid_preset_rows_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "grid", "--preset", "fig1_left", "--seed", "7", "--out", str(a))[0] == 0
    assert run(capsys, "grid", "--preset", "fig1_left", "--seed", "7", "--out", str(b), "--threads", "1")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("\n") == 901


def test_progress_on_stderr(capsys, tmp_path):
    code, out, err = run(capsys, "grid", "--preset", "fig1_left", "--d", "50", "--trials", "2",
                         "--out", str(tmp_path / "r.csv"))
    assert code == 0 and out == "" and "2/2" in err


def test_kind_mismatch(capsys, tmp_path):
    code, _, err = run(capsys, "feature", "--preset", "fig1_left", "--out", str(tmp_path / "r.csv"))
    assert code == 2 and "kind" in err
    assert not list(tmp_path.iterdir())


def test_config_file_and_line_diagnostics(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"kind": "ContourGrid",\n "d": 20, "n_t": 80, "n_s": 80, "lambda_t": [0.1], "lambda_s": [0.1]}')
    code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "r.json"), "--quiet")
    assert code == 0
    assert len(read_results(str(tmp_path / "r.json"))) == 1

    cfg.write_text('{"kind": "ContourGrid",\n "d": 20,, }')
    code, _, err = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "s.json"))
    assert code == 2 and "line 2" in err

    cfg.write_text('{"kind": "ContourGrid", "d": 20, "n_t": 80, "n_s": 80, "lambda_t": [], "lambda_s": [0.1]}')
    code, _, err = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "s.json"))
    assert code == 2 and "lambda_t" in err
    assert not (tmp_path / "s.json").exists()


def test_missing_config_file_is_io_error(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "r.csv"))
    assert code == 1


def test_unwritable_output_is_io_error(capsys, tmp_path):
    code, _, _ = run(capsys, "grid", "--preset", "fig1_left", "--d", "50", "--out", str(tmp_path / "no" / "r.csv"))
    assert code == 1


def test_show_config(capsys):
    code, out, _ = run(capsys, "sweep", "--preset", "fig3", "--show-config")
    assert code == 0 and json.loads(out)["zeta"] == [0.0, 0.68, 0.89, 0.98]


def test_threads_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("W2S_THREADS", "zero")
    code, _, err = run(capsys, "grid", "--preset", "fig1_left", "--d", "50", "--out", str(tmp_path / "r.csv"))
    assert code == 2 and "W2S_THREADS" in err
    monkeypatch.setenv("W2S_THREADS", "2")
    assert run(capsys, "grid", "--preset", "fig1_left", "--d", "50", "--trials", "1",
               "--out", str(tmp_path / "r.csv"), "--quiet")[0] == 0


def test_sweep_and_feature(capsys, tmp_path):
    assert run(capsys, "sweep", "--preset", "appD_optimal", "--out", str(tmp_path / "dd.csv"), "--quiet")[0] == 0
    assert len(read_results(str(tmp_path / "dd.csv"))) == 3 * 201
    assert run(capsys, "feature", "--preset", "feature_default", "--d", "64", "--trials", "2",
               "--out", str(tmp_path / "f.json"), "--quiet")[0] == 0


def test_plot_contour_deterministic(capsys, tmp_path):
    res = tmp_path / "r.csv"
    assert run(capsys, "grid", "--preset", "fig1_left", "--seed", "7", "--out", str(res), "--quiet")[0] == 0
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert run(capsys, "plot", str(res), "--kind", "contour", "--out", str(a))[0] == 0
    assert run(capsys, "plot", str(res), "--out", str(b))[0] == 0
    svg = a.read_text()
    assert a.read_bytes() == b.read_bytes()
    assert svg.startswith("<?xml") and "<svg" in svg
    assert 'id="zero-level"' in svg and 'id="lambda-t-star"' in svg


def test_plot_curve(capsys, tmp_path):
    res = tmp_path / "r.json"
    assert run(capsys, "sweep", "--preset", "fig3", "--d", "50", "--out", str(res), "--quiet")[0] == 0
    assert run(capsys, "plot", str(res), "--out", str(tmp_path / "c.svg"))[0] == 0
    assert 'id="teacher-loss"' in (tmp_path / "c.svg").read_text()


def test_plot_empty_input(capsys, tmp_path):
    empty = tmp_path / "e.csv"
    from weak2strong.experiments import dumps_csv

    empty.write_text(dumps_csv([]))
    code, _, _ = run(capsys, "plot", str(empty), "--out", str(tmp_path / "e.svg"))
    assert code == 2 and not (tmp_path / "e.svg").exists()


def test_plot_missing_input(capsys, tmp_path):
    assert run(capsys, "plot", str(tmp_path / "none.csv"), "--out", str(tmp_path / "x.svg"))[0] == 1


def test_validate_quick(capsys):
    code, out, _ = run(capsys, "validate", "--level", "quick")
    assert code == 0 and "5/5 checks passed" in out


def test_validate_quick_catches_derivative_sign_mutation(capsys, monkeypatch):
    from weak2strong import mp_stieltjes

    original = mp_stieltjes.mp_m_derivative
    monkeypatch.setattr(mp_stieltjes, "mp_m_derivative", lambda lam, g: -original(lam, g))
    code, out, _ = run(capsys, "validate", "--level", "quick")
    assert code == 1 and "[FAIL]  2" in out


def test_atomic_write_leaves_no_temp(capsys, tmp_path):
    assert run(capsys, "grid", "--preset", "fig1_left", "--d", "50", "--trials", "1",
               "--out", str(tmp_path / "r.csv"), "--quiet")[0] == 0
    assert sorted(os.listdir(tmp_path)) == ["r.csv"]
