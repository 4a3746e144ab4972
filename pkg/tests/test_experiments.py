import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weak2strong.experiments import (
    CSV_COLUMNS,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    SchemaError,
    aggregate,
    dumps_csv,
    dumps_json,
    loads_csv,
    loads_json,
    preset,
    read_results,
    run_experiment,
    write_results,
)
from weak2strong.theory import crossing_curve


def small_grid(**kw):
    base = dict(d=40, n_t=160, n_s=120, sigma_eps=1.0, lambda_t=[0.05, 0.5], lambda_s=[0.1, 1.0], trials=3)
    base.update(kw)
    return ExperimentConfig("ContourGrid", "small", **base)


# ---- presets


def test_presets_carry_reference_parameters():
    assert set(PRESETS) == {
        "fig1_left", "fig1_right", "fig2_left", "fig2_right", "fig3",
        "appD_ridgeless", "appD_optimal", "appD_scaled015", "feature_default",
    }
    p = PRESETS["fig1_right"]
    assert (p.d, p.n_t, p.n_s, p.sigma_eps) == (500, 2000, 416, 2.0)
    assert PRESETS["fig2_left"].zeta == [0.8]
    assert PRESETS["fig2_right"].zeta == [0.88] and PRESETS["fig2_right"].sigma_eps == 1.0
    f3 = PRESETS["fig3"]
    assert f3.lambda_t == [0.25] and f3.zeta == [0.0, 0.68, 0.89, 0.98] and f3.trials == 1
    assert PRESETS["fig1_left"].trials == 10 and len(PRESETS["fig1_left"].lambda_t) == 30


def test_preset_dimension_override_keeps_ratios():
    cfg = preset("fig1_right", d=100)
    assert (cfg.d, cfg.n_t, cfg.n_s) == (100, 400, 83)
    assert PRESETS["fig1_right"].d == 500  # the registry is untouched


def test_unknown_preset_lists_valid_names():
    with pytest.raises(ConfigError, match="fig1_left"):
        preset("nope")


# ---- config validation


@pytest.mark.parametrize(
    "changes,field_name",
    [
        ({"trials": 0}, "trials"),
        ({"lambda_t": []}, "lambda_t"),
        ({"lambda_s": [-1.0]}, "lambda_s"),
        ({"zeta": [1.5]}, "zeta"),
        ({"d": 0}, "d"),
        ({"kind": "Nope"}, "kind"),
    ],
)
def test_config_validation_names_field(changes, field_name):
    cfg = dataclasses.replace(small_grid(), **changes)
    with pytest.raises(ConfigError) as info:
        cfg.validate()
    assert info.value.field == field_name


def test_config_from_dict_rejects_unknown_field():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "ContourGrid", "bogus": 1})
    assert info.value.field == "bogus"


def test_config_dict_round_trip():
    cfg = preset("fig3")
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_ridgeless_student_needs_enough_samples():
    with pytest.raises(ConfigError):
        small_grid(n_s=20, lambda_s=[0.0]).validate()


# ---- running


def test_grid_record_count_and_theory_join():
    recs = run_experiment(small_grid())
    assert len(recs) == 4
    for r in recs:
        assert r.gap_theory is not None and r.domain_error == ""
        assert r.loss_student_theory == pytest.approx(r.loss_teacher_theory + r.gap_theory)


def test_single_trial_mean_is_the_trial():
    cfg = small_grid(lambda_t=[0.1], lambda_s=[0.2], trials=1)
    (rec,) = run_experiment(cfg)
    assert rec.loss_teacher_emp_mean == rec.teacher_losses[0]
    assert rec.loss_student_emp_mean == rec.student_losses[0]
    assert rec.loss_student_emp_std == 0.0


def test_aggregate_recomputable_from_trials():
    for rec in run_experiment(small_grid()):
        assert rec.loss_student_emp_mean == pytest.approx(np.mean(rec.student_losses), rel=1e-15)
        assert rec.loss_student_emp_std == pytest.approx(np.std(rec.student_losses, ddof=1), rel=1e-13)


def test_serial_and_parallel_identical():
    cfg = small_grid(trials=6)
    a = dumps_csv(run_experiment(cfg, threads=1))
    b = dumps_csv(run_experiment(cfg, threads=4))
    assert a == b


def test_domain_errors_recorded_not_raised():
    cfg = ExperimentConfig(
        "DoubleDescent", "dd", gamma_t=[0.5, 2.0], gamma_s=0.1, lambda_s=[0.1], trials=1,
        lambda_t_rule={"kind": "fixed", "value": 0.0},
    )
    recs = run_experiment(cfg)
    assert recs[0].domain_error == "" and recs[0].loss_student_theory is not None
    assert recs[1].domain_error and recs[1].loss_student_theory is None


def test_penalty_variant_has_no_theory():
    recs = run_experiment(small_grid(zeta=[0.5], penalty_variant=True))
    assert all(r.gap_theory is None and r.domain_error for r in recs)


def test_zeta_sweep_layout():
    cfg = preset("fig3", d=50, trials=2)
    cfg = cfg.replace(lambda_s=[0.1, 1.0])
    recs = run_experiment(cfg)
    assert [r.zeta for r in recs] == [0.0, 0.0, 0.68, 0.68, 0.89, 0.89, 0.98, 0.98]


def test_phase_map_records():
    cfg = ExperimentConfig("PhaseMap", "pm", d=100, n_t=400, n_s=400, lambda_t=[0.05, 0.5], lambda_s=[0.1])
    recs = run_experiment(cfg)
    assert [r.regime for r in recs] == ["UnderParamImproves", "TeacherOverRegularized"]
    assert recs[0].improve_hi > 0


def test_feature_record():
    cfg = preset("feature_default", d=64, trials=2)
    (rec,) = run_experiment(cfg)
    assert rec.align_e_gain_teacher is not None and rec.align_h_ratio_student > 0
    assert rec.domain_error


def test_progress_reports_every_trial():
    seen = []
    run_experiment(small_grid(trials=4), threads=2, progress=lambda done, total: seen.append((done, total)))
    assert seen[-1] == (4, 4) and len(seen) == 4


def test_fig1_left_sign_boundary_near_theory():
    """The empirical zero crossing along each lambda_t column sits within one cell of the predicted one."""
    cfg = preset("fig1_left")
    cfg = cfg.replace(lambda_t=cfg.lambda_t[::3])
    recs = run_experiment(cfg, threads=4)
    grid = np.array(cfg.lambda_s)
    log_step = np.log(grid[1] / grid[0])
    curve = dict(crossing_curve(cfg.lambda_t, 0.25, 0.25, 1.0))
    for lt in cfg.lambda_t:
        col = [r for r in recs if r.lambda_t == lt]
        signs = np.sign([r.gap_emp_mean for r in col])
        flips = [math.sqrt(grid[i] * grid[i + 1]) for i in range(len(grid) - 1) if signs[i] != signs[i + 1]]
        roots = [x for x in curve[lt] if grid[0] <= x <= grid[-1]]
        assert len(flips) == len(roots)
        for f, r in zip(flips, roots):
            assert abs(np.log(f / r)) <= log_step


# ---- aggregation


def _rec(t, s, **kw):
    rec = ResultRecord("x", "ContourGrid", lambda_t=0.1, lambda_s=0.2, **kw)
    rec.teacher_losses, rec.student_losses = tuple(t), tuple(s)
    return rec


def test_aggregate_hand_oracle():
    recs = [_rec([1.0], [2.0]), _rec([2.0], [4.0]), _rec([3.0], [9.0])]
    (row,) = aggregate(recs)
    assert row["trials"] == 3
    assert row["teacher_mean"] == 2.0 and row["teacher_std"] == 1.0
    assert row["student_mean"] == 5.0
    assert row["student_std"] == pytest.approx(math.sqrt(13.0))
    assert row["gap_mean"] == 3.0 and row["gap_std"] == pytest.approx(math.sqrt(7.0))
    assert row["teacher_sem"] == pytest.approx(1.0 / math.sqrt(3))


def test_aggregate_passthrough_and_constants():
    (row,) = aggregate([_rec([1.5, 1.5, 1.5], [2.0, 2.0, 2.0])])
    assert row["teacher_mean"] == 1.5 and row["teacher_std"] == 0.0 and row["gap_mean"] == 0.5


def test_aggregate_separates_points():
    a = _rec([1.0], [1.0])
    b = _rec([1.0], [1.0])
    b.lambda_s = 0.3
    assert len(aggregate([a, b])) == 2


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


# ---- persistence


finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


@settings(max_examples=50, deadline=None)
@given(finite, finite, finite, st.text(alphabet=st.characters(blacklist_categories=["Cs"], blacklist_characters="\x00"), max_size=20))
def test_csv_round_trip_exact(a, b, c, msg):
    rec = ResultRecord("exp", "ContourGrid", d=5, lambda_t=a, lambda_s=b, gap_theory=c, domain_error=msg)
    text = dumps_csv([rec])
    back = loads_csv(text)[0]
    for col in CSV_COLUMNS:
        x, y = getattr(rec, col), getattr(back, col)
        assert x == y or (x is None and y is None), col


def test_csv_column_order_fixed():
    header = dumps_csv([]).splitlines()[0].split(",")
    assert tuple(header[: len(CSV_COLUMNS)]) == CSV_COLUMNS
    assert CSV_COLUMNS[0] == "experiment" and CSV_COLUMNS[-1] == "domain_error"


def test_csv_corrupted_header_rejected():
    text = dumps_csv([_rec([1.0], [1.0])]).replace("lambda_t", "lambda_T", 1)
    with pytest.raises(SchemaError):
        loads_csv(text)


def test_json_round_trip_and_manifest():
    cfg = small_grid()
    recs = run_experiment(cfg)
    text = dumps_json(recs, cfg)
    back, manifest = loads_json(text)
    assert back == recs
    assert manifest["schema_version"] == 1 and manifest["base_seed"] == 0 and manifest["preset"] == "small"
    assert "code_version" in manifest


def test_json_schema_version_checked():
    text = dumps_json([], small_grid()).replace('"schema_version": 1', '"schema_version": 99')
    with pytest.raises(SchemaError):
        loads_json(text)


def test_write_read_files(tmp_path):
    recs = run_experiment(small_grid())
    for fmt in ("csv", "json"):
        path = tmp_path / f"r.{fmt}"
        write_results(recs, str(path), fmt, small_grid())
        back = read_results(str(path))
        assert [r.gap_theory for r in back] == [r.gap_theory for r in recs]
        assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_rerun_is_byte_identical():
    cfg = small_grid(base_seed=7)
    assert dumps_csv(run_experiment(cfg)) == dumps_csv(run_experiment(cfg))
    assert dumps_json(run_experiment(cfg), cfg) == dumps_json(run_experiment(cfg), cfg)
