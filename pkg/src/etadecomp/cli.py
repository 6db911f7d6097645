"""
Command-line front end.

    etadecomp simulate  --output DIR            grid.csv, fig1..fig6.csv, calibration.json
    etadecomp figures   --input grid.csv --output DIR
    etadecomp estimate  --input panel.csv [--output est.json]
    etadecomp diagnose  --input panel.csv [--model NAME ...]
    etadecomp correct   --raw-effect X --raw-se S (--input panel.csv | --eta-eps-json est.json)

Exit codes: 0 success, 2 invalid input, 3 estimation degeneracy.  Errors are
written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import EstimationError, InputError
from .estimators import (
    DEFAULT_BOOTSTRAP,
    Eta,
    EtaEstimate,
    Method,
    correct_treatment_effect,
    corrected_effect_bootstrap,
    diagnose_model,
    estimate_eta_epsilon,
    estimate_eta_mu,
    estimate_eta_T,
    rank_models,
)
from .figures import write_figures
from .panel import export_panel, load_model_panels, load_panel
from .simulation import (
    DGPParams,
    GridSpec,
    PredictionParams,
    calibration_report,
    read_grid_csv,
    run_grid,
    simulate_actual,
    simulate_predicted,
    write_grid_csv,
)

SEED_ENV = "ETADECOMP_SEED"
EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3


def sig12(obj):
    """Round floats to 12 significant digits for output; NaN/inf become null."""
    if isinstance(obj, dict):
        return {k: sig12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig12(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.12g}") if math.isfinite(x) else None
    return obj


def _write_json(payload, path):
    text = json.dumps(sig12(payload), indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _schema(args):
    overrides = {
        "unit_id": args.col_unit, "period": args.col_period, "treated": args.col_treated,
        "actual_outcome": args.col_actual, "predicted_outcome": args.col_predicted,
    }
    return {k: v for k, v in overrides.items() if v}


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"{SEED_ENV}={env!r} is not an integer") from None


# -- commands ----------------------------------------------------------------

def estimate_payload(data, n_bootstrap: int, seed: int) -> dict:
    untreated = data.untreated()
    eps = estimate_eta_epsilon(untreated)
    mu = estimate_eta_mu(untreated, n_bootstrap=n_bootstrap, seed=seed)
    out = {
        "eta_epsilon": eps.value, "eta_epsilon_se": eps.se,
        "eta_epsilon_method": eps.method.value,
        "eta_mu": mu.value, "eta_mu_se": mu.se, "eta_mu_method": mu.method.value,
        "n_units": eps.n_units, "n_periods": eps.n_periods,
        "warnings": list(eps.warnings + mu.warnings),
    }
    if data.has_treated:
        t = estimate_eta_T(data, n_bootstrap=n_bootstrap, seed=seed)
        out.update({"eta_T": t.value, "eta_T_se": t.se,
                    "eta_T_method": t.method.value, "eta_T_n_units": t.n_units})
        out["warnings"] += list(t.warnings)
    out["data_quality"] = data.quality()
    return out


def cmd_estimate(args):
    data = load_panel(args.input, _schema(args))
    _write_json(estimate_payload(data, args.bootstrap, _seed(args)), args.output)


def cmd_diagnose(args):
    models = load_model_panels(args.input, _schema(args))
    if args.model:
        unknown = set(args.model) - set(models)
        if unknown:
            raise InputError(f"model(s) not found in input: {sorted(unknown)}")
        models = {m: models[m] for m in args.model}
    seed = _seed(args)
    reports = {name: diagnose_model(d.untreated(), n_bootstrap=args.bootstrap, seed=seed)
               for name, d in models.items()}
    ranked = []
    for rank, rep in enumerate(rank_models(reports), start=1):
        ranked.append({"rank": rank, **rep.to_dict()})
    _write_json({"ranking_key": "eta_epsilon", "models": ranked}, args.output)


def _eta_from_json(path) -> EtaEstimate:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    try:
        value = blob["eta_epsilon"]
        se = blob.get("eta_epsilon_se")
    except (KeyError, TypeError):
        raise InputError(f"{path}: expected an object with key 'eta_epsilon'") from None
    if value is None:
        raise InputError(f"{path}: eta_epsilon is null")
    return EtaEstimate(Eta.epsilon, float(value), float("nan") if se is None else float(se),
                       blob.get("eta_epsilon_method", Method.diff_slope.value),
                       int(blob.get("n_units", 0)), int(blob.get("n_periods", 2)))


def cmd_correct(args):
    have_raw = args.raw_effect is not None
    if have_raw != (args.raw_se is not None):
        raise InputError("--raw-effect and --raw-se go together")
    if args.input and args.eta_eps_json:
        raise InputError("give either --input or --eta-eps-json, not both")
    if not (args.input or args.eta_eps_json):
        raise InputError("need --input (panel) or --eta-eps-json")
    if not have_raw:
        if not args.input:
            raise InputError("without --raw-effect the panel (--input) must carry the effect")
        data = load_panel(args.input, _schema(args))
        result = corrected_effect_bootstrap(data, args.bootstrap, _seed(args))
    else:
        if args.raw_se < 0:
            raise InputError("--raw-se must be non-negative")
        if args.eta_eps_json:
            eta = _eta_from_json(args.eta_eps_json)
        else:
            eta = estimate_eta_epsilon(load_panel(args.input, _schema(args)).untreated())
        result = correct_treatment_effect(args.raw_effect, args.raw_se, eta)
    _write_json(result.to_dict(), args.output)


def _dgp(args) -> DGPParams:
    d = DGPParams()
    return DGPParams(
        n_units=args.n_units, alpha=args.alpha, sd_mu=args.sd_mu, sd_eps=args.sd_eps,
        gamma=args.gamma, p_treat=args.p_treat, n_periods=args.n_periods,
        treatment_fixed_within_unit=not args.treatment_varies,
        mu_distribution=args.mu_distribution or d.mu_distribution,
    )


def _parse_cell(text) -> PredictionParams:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"--export-cell expects 4 comma-separated numbers, got {text!r}") from None
    if len(vals) != 4:
        raise InputError(f"--export-cell expects eta_mu,eta_T,eta_eps,var_nu, got {text!r}")
    return PredictionParams(*vals)


def cmd_simulate(args):
    dgp = _dgp(args)
    grid = GridSpec.from_steps(args.grid_eta_step, args.grid_nu_max, args.nu_grid_is_sd,
                               args.repetitions)
    seed = _seed(args)
    cell = _parse_cell(args.export_cell) if args.export_cell else None
    os.makedirs(args.output, exist_ok=True)
    sim = simulate_actual(dgp, seed)
    rows = run_grid(dgp, grid, seed, actual=sim)
    write_grid_csv(rows, os.path.join(args.output, "grid.csv"))
    write_figures(rows, args.output)
    _write_json(calibration_report(dgp, seed, sim), os.path.join(args.output, "calibration.json"))
    if cell is not None:
        cells = grid.cells()
        index = cells.index(cell) if cell in cells else len(cells)
        export_panel(simulate_predicted(sim, cell, seed, index),
                     os.path.join(args.output, "panel_cell.csv"))


def cmd_figures(args):
    os.makedirs(args.output, exist_ok=True)
    write_figures(read_grid_csv(args.input), args.output)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etadecomp",
        description="Decompose ML-predicted outcomes into between-unit, within-unit "
                    "and treatment components.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True, output_required=False):
        p.add_argument("--input", required=needs_input)
        p.add_argument("--output", required=output_required,
                       help="output file (default stdout) or directory")
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (fallback: ${SEED_ENV}, then 0)")
        p.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP,
                       help="bootstrap replicates (0 disables bootstrap SEs)")
        for key in ("unit", "period", "treated", "actual", "predicted"):
            p.add_argument(f"--col-{key}", default=None,
                           help=f"column name for {key} (schema override)")

    p = sub.add_parser("estimate", help="estimate eta_epsilon, eta_mu (and eta_T)")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="rank prediction models by eta_epsilon")
    common(p)
    p.add_argument("--model", action="append", default=None,
                   help="restrict to this model (repeatable)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("correct", help="attenuation-corrected treatment effect")
    common(p, needs_input=False)
    p.add_argument("--raw-effect", type=float, default=None)
    p.add_argument("--raw-se", type=float, default=None)
    p.add_argument("--eta-eps-json", default=None,
                   help="JSON with eta_epsilon and eta_epsilon_se (as written by estimate)")
    p.set_defaults(func=cmd_correct)

    d = DGPParams()
    p = sub.add_parser("simulate", help="run the synthetic grid")
    common(p, needs_input=False, output_required=True)
    p.add_argument("--n-units", type=int, default=d.n_units)
    p.add_argument("--n-periods", type=int, default=d.n_periods)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--sd-mu", type=float, default=d.sd_mu)
    p.add_argument("--sd-eps", type=float, default=d.sd_eps)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--p-treat", type=float, default=d.p_treat)
    p.add_argument("--treatment-varies", action="store_true",
                   help="draw treatment per unit-period instead of per unit")
    p.add_argument("--mu-distribution", choices=("lognormal_shifted", "normal"), default=None)
    p.add_argument("--grid-eta-step", type=float, default=0.25)
    p.add_argument("--grid-nu-max", type=float, default=1000.0)
    p.add_argument("--nu-grid-is-sd", action="store_true",
                   help="read the nu grid as standard deviations instead of variances")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--export-cell", default=None, metavar="MU,T,EPS,VARNU",
                   help="also write panel_cell.csv for this cell")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figures", help="figure CSVs from an existing grid.csv")
    common(p, output_required=True)
    p.set_defaults(func=cmd_figures)
    return parser


def _fail(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "bootstrap", 0) and 0 < args.bootstrap < 100:
        return _fail(InputError("--bootstrap must be 0 or at least 100"), EXIT_INPUT)
    try:
        args.func(args)
    except (InputError, OSError) as exc:
        return _fail(exc, EXIT_INPUT)
    except EstimationError as exc:
        return _fail(exc, EXIT_DEGENERATE)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
