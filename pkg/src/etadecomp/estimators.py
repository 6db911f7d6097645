"""
Estimators of the prediction-decomposition coefficients.

A prediction is modelled as

    predicted = alpha + eta_mu * mu_i + eta_T * gamma * Treat_it + eta_eps * eps_it + nu_it

where ``mu_i`` is the unit effect, ``gamma`` the treatment effect and
``eps_it`` the period-level shock of the actual outcome.  ``eta_eps`` and
``eta_mu`` are identified from untreated panels; ``eta_T`` needs treatment
variation.  Dividing a treatment effect estimated on predictions by
``eta_eps`` corrects the attenuation when ``eta_T`` is close to ``eta_eps``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ContaminationError,
    EtaDecompError,
    InsufficientPeriodsError,
    MissingVariationError,
    NonPositiveVarianceError,
    UncorrectableError,
    UnstableRatioError,
)
from .panel import PanelDataset, WidePanel, center_matrix, center_panel, make_deltas
from .regress import (
    RegressionResult,
    cluster_bootstrap,
    fe_regression,
    ols_no_intercept,
    ols_with_intercept,
    within_regression,
)

DEFAULT_BOOTSTRAP = 1000
EXPLOSIVE_ETA = 0.1
RATIO_FLOOR = 1e-8

ASSUMPTION_FLAG = (
    "requires eta_T ~= eta_epsilon: the correction assumes the model reproduces "
    "treatment effects as well as it reproduces within-unit change over time"
)


class Eta(str, Enum):
    mu = "eta_mu"
    epsilon = "eta_epsilon"
    T = "eta_T"


class Method(str, Enum):
    diff_slope = "diff_slope"
    fe_slope = "fe_slope"
    cov_algebra_2p = "cov_algebra_2p"
    cov_algebra_Tp = "cov_algebra_Tp"
    dual_regression_ratio = "dual_regression_ratio"


_VALID_METHODS = {
    Eta.epsilon: {Method.diff_slope, Method.fe_slope},
    Eta.mu: {Method.cov_algebra_2p, Method.cov_algebra_Tp},
    Eta.T: {Method.dual_regression_ratio},
}


@dataclass(frozen=True)
class EtaEstimate:
    which: Eta
    value: float
    se: float
    method: Method
    n_units: int
    n_periods: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "which", Eta(self.which))
        object.__setattr__(self, "method", Method(self.method))
        if self.method not in _VALID_METHODS[self.which]:
            raise ValueError(f"method {self.method.value} cannot estimate {self.which.value}")
        if self.se < 0:
            raise ValueError("standard error must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["which"] = self.which.value
        d["method"] = self.method.value
        d["warnings"] = list(self.warnings)
        return d


def _range_warnings(name, value):
    if not 0.0 <= value <= 1.0:
        return (f"{name} estimate {value:.4g} outside [0, 1]",)
    return ()


def _untreated_wide(data: PanelDataset) -> WidePanel:
    if data.has_treated:
        raise ContaminationError(
            "estimator needs an untreated sample; restrict to "
            "PanelDataset.untreated() first")
    if data.n_periods < 2:
        raise InsufficientPeriodsError(
            f"need at least 2 periods, panel has {data.n_periods}")
    w = data.wide()
    if w.n_units < 2:
        raise InsufficientPeriodsError(f"need at least 2 complete units, got {w.n_units}")
    return w


def _pick_form(method, T, two_period, multi_period):
    if method in ("auto", None):
        return two_period if T == 2 else multi_period
    method = Method(method)
    if method not in (two_period, multi_period):
        raise ValueError(f"unsupported method {method.value}")
    return method


# -- eta_epsilon ---------------------------------------------------------------

def eta_epsilon_regression(data: PanelDataset, method="auto"
                           ) -> tuple[RegressionResult, Method]:
    w = _untreated_wide(data)
    form = _pick_form(method, w.n_periods, Method.diff_slope, Method.fe_slope)
    if form is Method.diff_slope:
        deltas = make_deltas(data)
        return ols_no_intercept(deltas.delta_actual, deltas.delta_predicted), form
    return within_regression(center_panel(data)), form


def estimate_eta_epsilon(data: PanelDataset, method="auto") -> EtaEstimate:
    """
    Slope of within-unit prediction changes on within-unit actual changes.

    Two periods: regress ``delta predicted`` on ``delta actual`` without an
    intercept.  More periods: the equivalent unit fixed-effects regression of
    predicted on actual outcomes.  The standard error is the regression's.

    Parameters
    ----------
    data : PanelDataset
        Untreated units only; incomplete units are ignored.
    method : {"auto", "diff_slope", "fe_slope"}
        ``auto`` picks ``diff_slope`` for T=2, ``fe_slope`` otherwise.
    """
    res, form = eta_epsilon_regression(data, method)
    return EtaEstimate(Eta.epsilon, res.slope, res.slope_se, form,
                       data.wide().n_units, data.n_periods,
                       _range_warnings("eta_epsilon", res.slope))


# -- eta_mu --------------------------------------------------------------------

def _demean(v):
    # shift by the first element so constant input demeans to exact zeros
    s = v - v[0]
    return s - s.mean()


def eta_mu_moments(w: WidePanel, form: Method) -> dict:
    """Sample moments behind the eta_mu ratio (population denominators).

    Within-unit moments are raw second moments of the deltas (or centered
    values); under the outcome model their means are zero, and this keeps the
    T=2 centered form algebraically equal to the delta form.
    """
    a = _demean(w.actual.ravel())
    p = _demean(w.predicted.ravel())
    T = w.n_periods
    if form is Method.cov_algebra_2p:
        da = w.actual[:, 1] - w.actual[:, 0]
        dp = w.predicted[:, 1] - w.predicted[:, 0]
        k = 0.5
    else:
        da = center_matrix(w.actual).ravel()
        dp = center_matrix(w.predicted).ravel()
        k = T / (T - 1)
    return {
        "cov_pooled": float(np.mean(a * p)),
        "var_pooled": float(np.mean(a * a)),
        "cov_within": float(np.mean(da * dp)),
        "var_within": float(np.mean(da * da)),
        "k": k,
    }


def _mu_form(method, T) -> Method:
    form = _pick_form(method, T, Method.cov_algebra_2p, Method.cov_algebra_Tp)
    if form is Method.cov_algebra_2p and T != 2:
        raise InsufficientPeriodsError("delta form of eta_mu needs exactly 2 periods")
    return form


def eta_mu_value(data: PanelDataset, method="auto") -> float:
    w = _untreated_wide(data)
    m = eta_mu_moments(w, _mu_form(method, w.n_periods))
    denom = m["var_pooled"] - m["k"] * m["var_within"]
    if not denom > 0:
        raise NonPositiveVarianceError(
            f"estimated unit-effect variance is {denom:.6g} <= 0; "
            "the panel is dominated by within-unit noise")
    return (m["cov_pooled"] - m["k"] * m["cov_within"]) / denom


def estimate_eta_mu(data: PanelDataset, method="auto",
                    n_bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> EtaEstimate:
    """
    Between-unit coefficient from the covariance algebra.

    ``(Cov[p, a] - k Cov_within) / (Var[a] - k Var_within)`` with ``k = 1/2`` for
    two-period deltas and ``k = T/(T-1)`` for centered outcomes.  The standard
    error is a cluster bootstrap over units; ``n_bootstrap=0`` skips it and
    reports NaN.
    """
    value = eta_mu_value(data, method)
    T = data.n_periods
    form = _mu_form(method, T)
    se = float("nan")
    if n_bootstrap:
        se = cluster_bootstrap(data, lambda d: eta_mu_value(d, form),
                               n_bootstrap, seed).se
    return EtaEstimate(Eta.mu, value, se, form, data.wide().n_units, T,
                       _range_warnings("eta_mu", value))


# -- eta_T ---------------------------------------------------------------------

@dataclass(frozen=True)
class TreatmentRegressions:
    actual: RegressionResult
    predicted: RegressionResult
    fixed_within_unit: bool


def treatment_regressions(w: WidePanel) -> TreatmentRegressions:
    """Treatment-effect regressions on actual and on predicted outcomes.

    Pooled OLS with an intercept when treatment is constant within every unit,
    unit fixed effects otherwise.
    """
    D = w.treated
    if not D.any() or D.all():
        raise MissingVariationError(
            "no treatment variation among complete units (need treated and "
            "untreated observations with both outcomes)")
    fixed = bool((D == D[:, :1]).all())
    x = D.ravel().astype(float)
    if fixed:
        return TreatmentRegressions(ols_with_intercept(x, w.actual.ravel()),
                                    ols_with_intercept(x, w.predicted.ravel()), True)
    groups = np.repeat(np.arange(w.n_units), w.n_periods)
    return TreatmentRegressions(fe_regression(x, w.actual.ravel(), groups),
                                fe_regression(x, w.predicted.ravel(), groups), False)


def eta_T_value(data: PanelDataset, rel_floor: float = RATIO_FLOOR) -> float:
    w = data.wide()
    regs = treatment_regressions(w)
    g_act, g_pred = regs.actual.slope, regs.predicted.slope
    scale = float(np.std(w.actual))
    if not abs(g_act) > rel_floor * max(scale, 1e-300):
        raise UnstableRatioError(g_pred, g_act)
    return g_pred / g_act


def estimate_eta_T(data: PanelDataset, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                   seed: int = 0, rel_floor: float = RATIO_FLOOR) -> EtaEstimate:
    """Ratio of the treatment effect on predictions to the effect on actuals."""
    value = eta_T_value(data, rel_floor)
    se = float("nan")
    if n_bootstrap:
        se = cluster_bootstrap(data, lambda d: eta_T_value(d, rel_floor),
                               n_bootstrap, seed).se
    return EtaEstimate(Eta.T, value, se, Method.dual_regression_ratio,
                       data.wide().n_units, data.n_periods,
                       _range_warnings("eta_T", value))


# -- attenuation correction ----------------------------------------------------

@dataclass(frozen=True)
class CorrectedEffect:
    raw_effect: float
    raw_se: float
    eta_epsilon_used: EtaEstimate
    corrected_effect: float
    corrected_se: float
    se_method: str = "delta_method"
    warnings: tuple[str, ...] = ()
    assumption_flag: str = field(default=ASSUMPTION_FLAG)

    def to_dict(self) -> dict:
        return {
            "raw_effect": self.raw_effect,
            "raw_se": self.raw_se,
            "eta_epsilon": self.eta_epsilon_used.value,
            "eta_epsilon_se": self.eta_epsilon_used.se,
            "corrected_effect": self.corrected_effect,
            "corrected_se": self.corrected_se,
            "se_method": self.se_method,
            "warnings": list(self.warnings),
            "assumption_flag": self.assumption_flag,
        }


def _check_correctable(eta_eps: EtaEstimate):
    if not eta_eps.value > 0:
        raise UncorrectableError(
            f"eta_epsilon estimate is {eta_eps.value:.4g} <= 0: the model does not "
            "track within-unit change and cannot be used to detect treatment "
            "effects; collect actual outcomes for a larger share of the sample")
    if eta_eps.value < EXPLOSIVE_ETA:
        return (f"eta_epsilon {eta_eps.value:.4g} < {EXPLOSIVE_ETA}: the correction "
                "multiplies the raw effect by more than 10",)
    return ()


def correct_treatment_effect(raw_effect: float, raw_se: float,
                             eta_eps: EtaEstimate) -> CorrectedEffect:
    """
    Divide an attenuated treatment effect by the eta_epsilon estimate.

    The standard error treats the two inputs as independent (delta method)::

        se = |corrected| * sqrt((raw_se / raw)**2 + (eta_se / eta)**2)

    written in a form that stays finite when ``raw_effect`` is 0.
    """
    warnings = _check_correctable(eta_eps)
    eta = eta_eps.value
    corrected = raw_effect / eta
    se = math.hypot(raw_se / eta, raw_effect * eta_eps.se / eta ** 2)
    return CorrectedEffect(raw_effect, raw_se, eta_eps, corrected, se,
                           "delta_method", warnings)


def corrected_effect_bootstrap(data: PanelDataset, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                               seed: int = 0) -> CorrectedEffect:
    """Correction with a joint unit bootstrap.

    For the case where the raw effect and eta_epsilon come from the same
    panel: the raw effect is the predicted-outcome treatment regression on all
    complete units, eta_epsilon is estimated on its never-treated units, and
    both are resampled together.
    """
    def raw(d):
        return treatment_regressions(d.wide()).predicted.slope

    def corrected(d):
        return raw(d) / estimate_eta_epsilon(d.untreated()).value

    eta_eps = estimate_eta_epsilon(data.untreated())
    warnings = _check_correctable(eta_eps)
    raw_boot = cluster_bootstrap(data, raw, n_bootstrap, seed)
    corr_boot = cluster_bootstrap(data, corrected, n_bootstrap, seed)
    return CorrectedEffect(raw_boot.point, raw_boot.se, eta_eps, corr_boot.point,
                           corr_boot.se, "joint_bootstrap", warnings)


# -- model diagnostics ---------------------------------------------------------

HIGH_R2 = 0.5
LOW_ETA_EPS = 0.2


def prediction_r2(actual, predicted) -> float:
    """R-squared of actual regressed on predicted without an intercept."""
    return ols_no_intercept(predicted, actual).r_squared


def squared_correlation(actual, predicted) -> float:
    a = _demean(np.asarray(actual, dtype=float).ravel())
    p = _demean(np.asarray(predicted, dtype=float).ravel())
    saa, spp = float(a @ a), float(p @ p)
    if saa <= 0 or spp <= 0:
        return 0.0
    return float(a @ p) ** 2 / (saa * spp)


def compression_ratio(actual, predicted) -> float:
    sa = float(np.std(actual))
    return float(np.std(predicted)) / sa if sa > 0 else float("nan")


@dataclass
class DiagnosticReport:
    eta_epsilon: float = float("nan")
    eta_epsilon_se: float = float("nan")
    eta_mu: float = float("nan")
    eta_mu_se: float = float("nan")
    r2_pred: float = float("nan")
    r2_corr: float = float("nan")
    compression: float = float("nan")
    n_units: int = 0
    n_periods: int = 0
    flags: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)
    recommendation: str = ""
    model: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _recommend(eta_eps: float) -> str:
    if math.isnan(eta_eps):
        return "eta_epsilon could not be estimated; see errors"
    if eta_eps <= 0:
        return ("predictions do not track within-unit change; the model is unlikely "
                "to detect treatment effects. Collect actual outcomes for a larger "
                "share of the sample.")
    if eta_eps >= 0.8:
        return "predictions track within-unit change well; suitable for effect estimation"
    return (f"effects estimated on these predictions are likely attenuated by roughly "
            f"a factor {eta_eps:.2f}; dividing by eta_epsilon corrects this only if "
            "eta_T ~= eta_epsilon")


def diagnose_model(data: PanelDataset, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                   seed: int = 0, model: str | None = None) -> DiagnosticReport:
    """
    Model-selection diagnostics on an untreated labeled subsample.

    Estimator failures are recorded per field in ``errors`` instead of
    raising.  Flags:

    ``high_r2_low_eta_epsilon``
        R-squared above 0.5 with eta_epsilon below 0.2: the model fits mainly
        between-unit differences.
    ``eta_epsilon_nonpositive``
        No attenuation correction is possible.
    ``<name>_out_of_range``
        Estimate outside [0, 1].
    """
    rep = DiagnosticReport(model=model, n_periods=data.n_periods)
    w = data.wide()
    rep.n_units = w.n_units
    try:
        rep.r2_pred = prediction_r2(w.actual, w.predicted)
        rep.r2_corr = squared_correlation(w.actual, w.predicted)
        rep.compression = compression_ratio(w.actual, w.predicted)
    except EtaDecompError as exc:
        rep.errors["r2_pred"] = str(exc)
    try:
        est = estimate_eta_epsilon(data)
        rep.eta_epsilon, rep.eta_epsilon_se = est.value, est.se
    except EtaDecompError as exc:
        rep.errors["eta_epsilon"] = str(exc)
    try:
        est = estimate_eta_mu(data, n_bootstrap=n_bootstrap, seed=seed)
        rep.eta_mu, rep.eta_mu_se = est.value, est.se
    except EtaDecompError as exc:
        rep.errors["eta_mu"] = str(exc)

    if rep.r2_pred > HIGH_R2 and rep.eta_epsilon < LOW_ETA_EPS:
        rep.flags.append("high_r2_low_eta_epsilon")
    if rep.eta_epsilon <= 0:
        rep.flags.append("eta_epsilon_nonpositive")
    for name in ("eta_epsilon", "eta_mu"):
        v = getattr(rep, name)
        if not math.isnan(v) and not 0.0 <= v <= 1.0:
            rep.flags.append(f"{name}_out_of_range")
    rep.recommendation = _recommend(rep.eta_epsilon)
    return rep


def rank_models(reports: dict[str, DiagnosticReport]) -> list[DiagnosticReport]:
    """Order model reports by eta_epsilon, highest first; NaN last."""
    def key(item):
        v = item[1].eta_epsilon
        return (math.isnan(v), -v if not math.isnan(v) else 0.0, item[0])
    out = []
    for name, rep in sorted(reports.items(), key=key):
        rep.model = name
        out.append(rep)
    return out
