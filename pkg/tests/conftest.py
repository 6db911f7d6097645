import numpy as np
import pytest

from etadecomp import DGPParams, PanelDataset, PredictionParams, simulate_actual, simulate_predicted

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


@pytest.fixture
def record():
    def _record(key, ok, detail):
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
    return _record


def synth_panel(eta_mu, eta_T, eta_eps, var_nu=0.0, n_units=2000, seed=0,
                n_periods=2, p_treat=0.0, **dgp):
    """Simulated panel with known coefficients (no treatment by default)."""
    params = DGPParams(n_units=n_units, n_periods=n_periods, p_treat=p_treat, **dgp)
    sim = simulate_actual(params, seed)
    return simulate_predicted(sim, PredictionParams(eta_mu, eta_T, eta_eps, var_nu), seed)


@pytest.fixture
def small_panel():
    rng = np.random.default_rng(7)
    mu = rng.normal(0, 3, 40)
    actual = 10 + mu[:, None] + rng.normal(0, 1, (40, 3))
    predicted = 10 + 0.6 * mu[:, None] + 0.4 * (actual - 10 - mu[:, None]) + rng.normal(0, 0.1, (40, 3))
    return PanelDataset.from_wide(actual, predicted)
