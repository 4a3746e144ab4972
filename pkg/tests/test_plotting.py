import numpy as np
import pytest

from weak2strong.experiments import preset, run_experiment
from weak2strong.plotting import PlotError, render, symmetric_levels


def test_levels_symmetric_with_zero():
    levels = symmetric_levels(np.array([-0.2, 0.05, np.nan, 0.1]))
    np.testing.assert_allclose(levels, -levels[::-1])
    assert 0.0 in levels and levels[-1] == pytest.approx(0.2)


def test_levels_degenerate_field():
    levels = symmetric_levels(np.zeros(4))
    assert levels[0] < 0 < levels[-1]


def test_render_rejects_empty_and_unknown_kind():
    with pytest.raises(PlotError):
        render([])
    recs = run_experiment(preset("fig1_left", d=40, trials=1).replace(lambda_t=[0.01, 0.1], lambda_s=[0.01, 0.1]))
    with pytest.raises(PlotError):
        render(recs, "pie")


def test_double_descent_curve_svg():
    svg = render(run_experiment(preset("appD_ridgeless")))
    assert "<svg" in svg and svg == render(run_experiment(preset("appD_ridgeless")))
