"""
Small single-regressor regression routines and the unit-level bootstrap.

Everything here works on one regressor at a time; the estimators never need
more than that.  Standard errors are the classical homoskedastic ones.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    BootstrapInstabilityError,
    DegenerateRegressorError,
    DimensionError,
    EtaDecompError,
    InputError,
)
from .panel import CenteredTable, PanelDataset


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    slope_se: float
    r_squared: float
    n_obs: int
    df_resid: int
    t_stat: float = field(init=False)

    def __post_init__(self):
        t = self.slope / self.slope_se if self.slope_se > 0 else float("nan")
        object.__setattr__(self, "t_stat", t)

    @property
    def t_defined(self) -> bool:
        return self.slope_se > 0


def _as_pair(x, y, min_len):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: x has {x.size}, y has {y.size}")
    if x.size < min_len:
        raise DimensionError(f"need at least {min_len} observations, got {x.size}")
    return x, y


def _r2(ssr, sst):
    if sst <= 0:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - ssr / sst)))


def _through_origin(x, y, df):
    sxx = float(x @ x)
    if not sxx > 0:
        raise DegenerateRegressorError("regressor has no variation (sum of squares is 0)")
    slope = float(x @ y) / sxx
    resid = y - slope * x
    ssr = float(resid @ resid)
    se = float(np.sqrt(ssr / df / sxx)) if df > 0 else float("nan")
    return slope, se, ssr


def ols_no_intercept(x, y) -> RegressionResult:
    """Regression of ``y`` on ``x`` through the origin.

    R-squared is the uncentered ``1 - SSR / sum(y**2)``.
    """
    x, y = _as_pair(x, y, 2)
    n = x.size
    slope, se, ssr = _through_origin(x, y, n - 1)
    return RegressionResult(slope, 0.0, se, _r2(ssr, float(y @ y)), n, n - 1)


def ols_with_intercept(x, y) -> RegressionResult:
    x, y = _as_pair(x, y, 3)
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    slope, se, ssr = _through_origin(xc, yc, n - 2)
    intercept = float(y.mean() - slope * x.mean())
    return RegressionResult(slope, intercept, se, _r2(ssr, float(yc @ yc)), n, n - 2)


def group_demean(v, groups, n_groups=None):
    """Subtract group means; ``groups`` are integer codes ``0..G-1``."""
    v = np.asarray(v, dtype=float)
    groups = np.asarray(groups)
    G = int(groups.max()) + 1 if n_groups is None else n_groups
    counts = np.bincount(groups, minlength=G)
    return v - (np.bincount(groups, weights=v, minlength=G) / np.maximum(counts, 1))[groups]


def _within_fit(xc, yc, n_units):
    n = xc.size
    df = n - n_units - 1
    slope, se, ssr = _through_origin(xc, yc, df)
    return RegressionResult(slope, 0.0, se, _r2(ssr, float(yc @ yc)), n, df)


def fe_regression(x, y, groups) -> RegressionResult:
    """Unit fixed-effects (within) regression of ``y`` on ``x``.

    ``groups`` are integer unit codes.  Degrees of freedom are
    ``n_obs - n_units - 1``.
    """
    x, y = _as_pair(x, y, 2)
    groups = np.asarray(groups)
    G = int(groups.max()) + 1
    return _within_fit(group_demean(x, groups, G), group_demean(y, groups, G), G)


def within_regression(obs: CenteredTable) -> RegressionResult:
    """Regress centered predicted on centered actual outcomes.

    The inputs are already unit-demeaned, so this is a through-origin fit with
    the fixed-effects degrees of freedom.
    """
    if obs.n_units < 2 or obs.n_periods < 2:
        raise DimensionError("within regression needs >= 2 units with >= 2 periods each")
    return _within_fit(np.asarray(obs.centered_actual),
                       np.asarray(obs.centered_predicted), obs.n_units)


# -- cluster bootstrap -------------------------------------------------------

MAX_FAILURE_SHARE = 0.05


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    se: float
    n_replicates: int
    seed: int
    n_failed: int = 0
    replicates: np.ndarray = field(default=None, repr=False, compare=False)

    def ci(self, level=0.95) -> tuple[float, float]:
        """Percentile interval from the successful replicates."""
        reps = self.replicates[np.isfinite(self.replicates)]
        lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
        return float(lo), float(hi)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one replicate; depends only on (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def cluster_bootstrap(data: PanelDataset, statistic: Callable[[PanelDataset], float],
                      n_replicates: int = 1000, seed: int = 0,
                      n_jobs: int = 1) -> BootstrapResult:
    """
    Bootstrap standard error of ``statistic`` resampling whole units.

    Parameters
    ----------
    data : PanelDataset
    statistic : callable
        Maps a dataset to a float.  Raising a package error or returning a
        non-finite value counts as a failed replicate.
    n_replicates : int
        At least 100.
    seed : int
        Replicate ``i`` draws from a stream derived from ``(seed, i)``, so the
        result does not depend on ``n_jobs``.
    n_jobs : int
        Threads used to evaluate replicates.

    Returns
    -------
    BootstrapResult
        ``se`` is the standard deviation (ddof=1) of successful replicates.
    """
    if n_replicates < 100:
        raise InputError(f"need at least 100 bootstrap replicates, got {n_replicates}")
    point = float(statistic(data))
    n_units = data.n_units

    def one(i):
        idx = replicate_rng(seed, i).integers(0, n_units, size=n_units)
        try:
            value = float(statistic(data.take_units(idx)))
        except (EtaDecompError, ArithmeticError):
            return np.nan
        return value if np.isfinite(value) else np.nan

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            reps = np.fromiter(pool.map(one, range(n_replicates)), float, n_replicates)
    else:
        reps = np.fromiter(map(one, range(n_replicates)), float, n_replicates)

    failed = int(np.isnan(reps).sum())
    if failed / n_replicates > MAX_FAILURE_SHARE:
        raise BootstrapInstabilityError(failed / n_replicates, n_replicates)
    ok = reps[~np.isnan(reps)]
    se = float(ok.std(ddof=1)) if ok.size > 1 and ok.max() > ok.min() else 0.0
    return BootstrapResult(point, se, n_replicates, seed, failed, reps)
