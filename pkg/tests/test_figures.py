import numpy as np
import pandas as pd
import pytest

from etadecomp import DGPParams, GridSpec, InputError, figure_data, run_grid, write_figures
from etadecomp.figures import FIGURES, T_STAT_CUTOFF, points_fit, trendline_slope
from etadecomp.simulation import stats_frame


@pytest.fixture(scope="module")
def table():
    return stats_frame(run_grid(DGPParams(n_units=2000), GridSpec(), base_seed=0))


def test_columns_and_series(table):
    for fid in FIGURES:
        fig = figure_data(table, fid)
        assert list(fig.columns) == ["figure", "series", "x", "y", "color"]
        assert set(fig["series"]) >= {"points", "trendline"}
        assert (fig["series"] == "trendline").sum() == 2


def test_f5_restricted(table):
    fig = figure_data(table, "f5")
    pts = fig[fig["series"] == "points"]
    keep = table[table["eta_T"] == table["eta_eps"]]
    assert len(pts) == len(keep) == 125
    np.testing.assert_array_equal(pts["x"], keep["diff_slope"])
    ref = fig[fig["series"] == "reference"]
    np.testing.assert_array_equal(ref["x"], ref["y"])


def test_f2_f3_slopes(table):
    # r2_pred is uncentered, so it lives in a narrow band near 1; judge by fit
    slope2, fit2 = points_fit(figure_data(table, "f2"))
    slope3, fit3 = points_fit(figure_data(table, "f3"))
    assert slope2 > 0 and fit2 > 0.5
    assert abs(slope3) < slope2 / 2 and fit3 < 0.1


def test_f4_outlier_filter():
    df = pd.DataFrame({"r2_pred": [0.1, 0.2, 0.3], "t_stat_predicted": [3.0, 80.0, -60.0],
                       "eta_T": [0.0, 0.5, 1.0]})
    fig = figure_data(df, "f4")
    pts = fig[fig["series"] == "points"]
    assert list(pts["y"]) == [3.0]
    assert (np.abs(pts["y"]) <= T_STAT_CUTOFF).all()


def test_trendline_matches_points_fit(table):
    fig = figure_data(table, "f6")
    slope, r2 = points_fit(fig)
    assert trendline_slope(fig) == pytest.approx(slope, rel=1e-9)
    assert 0 <= r2 <= 1


def test_unknown_figure(table):
    with pytest.raises(InputError):
        figure_data(table, "f7")


def test_write_figures(table, tmp_path):
    paths = write_figures(table, tmp_path)
    assert [p.rsplit("/", 1)[1] for p in paths] == [f"fig{i}.csv" for i in range(1, 7)]
    again = write_figures(table, tmp_path / "again")
    for a, b in zip(paths, again):
        assert open(a, "rb").read() == open(b, "rb").read()
