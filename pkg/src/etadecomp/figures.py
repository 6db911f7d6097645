"""Plot-ready tables for the six grid figures (no rendering)."""

from __future__ import annotations

import os

import numpy as np
import pandas as pd

from .errors import InputError
from .simulation import stats_frame

T_STAT_CUTOFF = 50.0

# figure id -> (x column, y column, color column or None, description)
FIGURES = {
    "f1": ("r2_pred", "scaled_te", "eta_T", "prediction R2 vs scaled treatment effect"),
    "f2": ("eta_mu", "r2_pred", None, "eta_mu vs prediction R2"),
    "f3": ("eta_eps", "r2_pred", None, "eta_epsilon vs prediction R2"),
    "f4": ("r2_pred", "t_stat_predicted", "eta_T", "prediction R2 vs treatment t-statistic"),
    "f5": ("diff_slope", "scaled_te", "eta_T", "diff slope vs scaled effect, eta_T = eta_eps"),
    "f6": ("diff_slope", "scaled_te", "eta_T", "diff slope vs scaled effect, all cells"),
}

FIGURE_COLUMNS = ["figure", "series", "x", "y", "color"]


def _as_frame(table) -> pd.DataFrame:
    if isinstance(table, pd.DataFrame):
        return table
    return stats_frame(table)


def _ols_line(x, y):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 0:
        return float("nan"), float("nan")
    slope = float(xc @ (y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


def figure_data(table, figure_id: str) -> pd.DataFrame:
    """
    Points, OLS trendline and (f5) y = x reference for one figure.

    Returns a frame with columns ``figure, series, x, y, color``.  ``series``
    is ``points``, ``trendline`` (two rows at the x extremes) or
    ``reference``.  Cells where x or y is not finite are dropped; f4 also
    drops cells with ``|t| > 50``.
    """
    if figure_id not in FIGURES:
        raise InputError(f"unknown figure id {figure_id!r}; expected one of {sorted(FIGURES)}")
    df = _as_frame(table)
    xcol, ycol, ccol, _ = FIGURES[figure_id]
    if figure_id == "f5":
        df = df[df["eta_T"] == df["eta_eps"]]
    x = df[xcol].to_numpy(dtype=float)
    y = df[ycol].to_numpy(dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    if figure_id == "f4":
        keep &= np.abs(y) <= T_STAT_CUTOFF
    x, y = x[keep], y[keep]
    color = df[ccol].to_numpy(dtype=float)[keep] if ccol else np.full(x.size, np.nan)

    parts = [pd.DataFrame({"figure": figure_id, "series": "points", "x": x, "y": y,
                           "color": color})]
    if x.size >= 2:
        slope, intercept = _ols_line(x, y)
        ends = np.array([x.min(), x.max()])
        parts.append(pd.DataFrame({"figure": figure_id, "series": "trendline", "x": ends,
                                   "y": intercept + slope * ends, "color": np.nan}))
        if figure_id == "f5":
            parts.append(pd.DataFrame({"figure": figure_id, "series": "reference",
                                       "x": ends, "y": ends, "color": np.nan}))
    return pd.concat(parts, ignore_index=True)[FIGURE_COLUMNS]


def trendline_slope(fig: pd.DataFrame) -> float:
    t = fig[fig["series"] == "trendline"]
    x, y = t["x"].to_numpy(), t["y"].to_numpy()
    return float((y[1] - y[0]) / (x[1] - x[0]))


def points_fit(fig: pd.DataFrame) -> tuple[float, float]:
    """(slope, R-squared) of the OLS line through a figure's points."""
    p = fig[fig["series"] == "points"]
    x, y = p["x"].to_numpy(dtype=float), p["y"].to_numpy(dtype=float)
    slope, intercept = _ols_line(x, y)
    resid = y - intercept - slope * x
    sst = float(((y - y.mean()) ** 2).sum())
    return slope, (1.0 - float(resid @ resid) / sst) if sst > 0 else 0.0


def write_figures(table, outdir) -> list[str]:
    """Write ``fig1.csv`` ... ``fig6.csv`` into ``outdir``; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for i, fid in enumerate(FIGURES, start=1):
        path = os.path.join(outdir, f"fig{i}.csv")
        figure_data(table, fid).to_csv(path, index=False, float_format="%.12g",
                                       lineterminator="\n")
        paths.append(path)
    return paths
