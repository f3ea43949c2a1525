"""Command-line front end.

``estimate`` runs a registered estimator on a CSV file and writes a JSON
report to stdout (or ``--output``); ``simulate`` writes synthetic datasets.
stdout carries only JSON; human diagnostics go to stderr. Exit codes:
0 success, 1 usage or data errors, 2 solver non-convergence (a report with
``converged: false`` is still emitted).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

from . import corrections as corr
from . import estimators as est
from .data import GenConfig, gen_geexex, gen_lunceford, partition_units, read_csv, write_csv
from .exceptions import MestimError
from .numderiv import DerivControl
from .rootfind import RootControl
from .sandwich import m_estimate


class UsageError(MestimError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunRequest:
    estimator: str
    data_path: str
    unit_col: str | None = None
    start: list | None = None
    roots: list | None = None
    no_solve: bool = False
    corrections: list = field(default_factory=list)
    deriv_method: str = "central"
    deriv_step: float = 1e-6
    richardson_levels: int = 4
    tol: float = 1e-10
    max_iter: int = 100
    damping: str = "backtracking"
    output: str | None = None
    options: dict = field(default_factory=dict)


def _split_floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _split_names(text):
    return tuple(n for n in text.split(",") if n)


def _parse_subset(text):
    if text is None:
        return None
    if "=" not in text:
        raise UsageError(f"subset must look like COLUMN=VALUE, got {text!r}")
    col, value = text.split("=", 1)
    try:
        return (col, float(value))
    except ValueError:
        raise UsageError(f"subset value must be numeric, got {value!r}") from None


def _model_from_options(kind, options):
    return est.ModelSpec(
        kind=kind,
        response=options["response"],
        covariates=options["covariates"],
        intercept=options["intercept"],
        subset=options["subset"],
    )


def _build_moments(options):
    return est.moments_spec(options["y"])


def _build_ratio(options):
    return est.ratio_spec(options["y1"], options["y2"])


def _build_delta(options):
    return est.delta_spec(options["y"])


def _build_linear(options):
    return est.linear_score_spec(_model_from_options("linear", options))


def _build_logistic(options):
    return est.logistic_score_spec(_model_from_options("logistic", options))


def _build_gee(options):
    kind = {"gaussian": "linear", "binomial": "logistic"}[options["family"]]
    model = _model_from_options(kind, options)
    return est.gee_spec(est.GeeConfig(model=model, alpha=options["alpha"],
                                      phi=options["phi"]))


def _build_doubly_robust(options):
    propensity = est.ModelSpec(kind="logistic", response=options["treatment"],
                               covariates=options["propensity_covariates"])
    outcome = est.ModelSpec(kind="linear", response=options["response"],
                            covariates=options["outcome_covariates"])
    return est.doubly_robust_spec(propensity, outcome, outcome)


ESTIMATORS = {
    "moments": _build_moments,
    "ratio": _build_ratio,
    "delta": _build_delta,
    "linear": _build_linear,
    "logistic": _build_logistic,
    "gee": _build_gee,
    "doubly_robust": _build_doubly_robust,
}

CORRECTIONS = {
    "fay_bias": (corr.fay_bias_correction, {"b": float}),
    "newey_west": (corr.newey_west_correction, {"lag": int}),
}


def _parse_correction(text):
    """Grammar: name[:key=value[,key=value...]]; name may carry a _suffix."""
    label, _, arg_text = text.partition(":")
    fn_entry = None
    for registered, entry in CORRECTIONS.items():
        if label == registered or label.startswith(registered + "_"):
            fn_entry = entry
            break
    if fn_entry is None:
        raise UsageError(
            f"unknown correction {label!r}; registered: {', '.join(sorted(CORRECTIONS))}"
        )
    fn, arg_types = fn_entry
    args = {}
    if arg_text:
        for pair in arg_text.split(","):
            if "=" not in pair:
                raise UsageError(f"correction argument must be key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            caster = arg_types.get(key, float)
            try:
                args[key] = caster(value)
            except ValueError:
                raise UsageError(
                    f"correction {label!r}: cannot parse {key}={value!r}"
                ) from None
    return corr.CorrectionSpec(name=label, apply=fn, args=args)


def _threads_from_env():
    raw = os.environ.get("MEST_THREADS")
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise UsageError(f"MEST_THREADS must be an integer, got {raw!r}") from None
    if threads < 1:
        raise UsageError("MEST_THREADS must be >= 1")
    return threads


def _jsonable_matrix(mat):
    return [[float(v) for v in row] for row in mat]


def _report(result) -> dict:
    diag = result.diagnostics
    residual = diag["residual_norm"]
    report = {
        "estimates": [float(v) for v in result.theta_hat],
        "vcov": _jsonable_matrix(result.sigma_hat),
        "corrections": {name: _jsonable_matrix(mat)
                        for name, mat in result.corrections.items()},
        "diagnostics": {
            "converged": bool(diag["converged"]),
            "iterations": int(diag["iterations"]),
            "residual_norm": float(residual) if math.isfinite(residual) else None,
            "m": int(diag["m"]),
            "p": int(diag["p"]),
            "solved": bool(diag["solved"]),
        },
    }
    if diag.get("correction_errors"):
        report["diagnostics"]["correction_errors"] = dict(diag["correction_errors"])
    return report


def cmd_estimate(req: RunRequest) -> tuple[dict, int]:
    """Run one estimation request; returns (JSON-ready report, exit code)."""
    if req.estimator not in ESTIMATORS:
        raise UsageError(
            f"unknown estimator {req.estimator!r}; registered: "
            f"{', '.join(sorted(ESTIMATORS))}"
        )
    if (req.start is None) == (req.roots is None):
        raise UsageError("provide exactly one of --start / --roots")
    if req.roots is not None and not req.no_solve:
        raise UsageError("--roots requires --no-solve")

    dataset = read_csv(req.data_path)
    partition = partition_units(dataset, req.unit_col)
    spec = ESTIMATORS[req.estimator](req.options)
    correction_specs = [_parse_correction(text) for text in req.corrections]
    deriv = DerivControl(method=req.deriv_method, base_step=req.deriv_step,
                         richardson_levels=req.richardson_levels)

    if req.no_solve:
        result = m_estimate(spec, partition, fixed_roots=req.roots,
                            deriv_control=deriv, corrections=correction_specs,
                            threads=_threads_from_env())
    else:
        if len(req.start) != spec.p:
            raise UsageError(f"--start has {len(req.start)} values, estimator has p={spec.p}")
        ctrl = RootControl(start=tuple(req.start), abs_tol=req.tol,
                           max_iter=req.max_iter, damping=req.damping)
        result = m_estimate(spec, partition, root_control=ctrl,
                            deriv_control=deriv, corrections=correction_specs,
                            threads=_threads_from_env())

    report = _report(result)
    return report, 0 if report["diagnostics"]["converged"] else 2


def cmd_simulate(kind: str, params: dict, seed: int, out_path: str) -> str:
    """Write a synthetic dataset to ``out_path``; deterministic per seed."""
    if kind == "geexex":
        dataset = gen_geexex(m=params["m"], seed=seed)
    elif kind == "lunceford":
        dataset = gen_lunceford(GenConfig(n=params["n"], beta=tuple(params["beta"]),
                                          nu=tuple(params["nu"]), xi=tuple(params["xi"]),
                                          seed=seed))
    else:
        raise UsageError(f"unknown dataset kind {kind!r}; choose geexex or lunceford")
    try:
        write_csv(dataset, out_path)
    except OSError as err:
        raise MestimError(f"cannot write {out_path!r}: {err}") from err
    return out_path


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mestim",
                     description="Estimating-equation fitting with sandwich covariance")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="fit an estimator on CSV data")
    p_est.add_argument("--estimator", required=True)
    p_est.add_argument("--data", required=True)
    p_est.add_argument("--unit-col")
    p_est.add_argument("--start", help="comma-separated starting values")
    p_est.add_argument("--roots", help="comma-separated fixed parameter values")
    p_est.add_argument("--no-solve", action="store_true",
                       help="skip root finding; use --roots as estimates")
    p_est.add_argument("--correction", action="append", default=[],
                       metavar="NAME:KEY=VALUE[,...]")
    p_est.add_argument("--deriv-method", choices=["central", "richardson"],
                       default="central")
    p_est.add_argument("--deriv-step", type=float, default=1e-6)
    p_est.add_argument("--richardson-levels", type=int, default=4)
    p_est.add_argument("--tol", type=float, default=1e-10)
    p_est.add_argument("--max-iter", type=int, default=100)
    p_est.add_argument("--damping", choices=["none", "backtracking"],
                       default="backtracking")
    p_est.add_argument("--output", help="write the JSON report here instead of stdout")
    p_est.add_argument("--y", default="Y1")
    p_est.add_argument("--y1", default="Y1")
    p_est.add_argument("--y2", default="Y2")
    p_est.add_argument("--response", default="Y")
    p_est.add_argument("--covariates", default="", help="comma-separated column names")
    p_est.add_argument("--no-intercept", action="store_true")
    p_est.add_argument("--subset", help="COLUMN=VALUE row mask for score models")
    p_est.add_argument("--family", choices=["gaussian", "binomial"], default="gaussian")
    p_est.add_argument("--alpha", type=float, default=0.0)
    p_est.add_argument("--phi", type=float, default=1.0)
    p_est.add_argument("--treatment", default="Z")
    p_est.add_argument("--propensity-covariates", default="")
    p_est.add_argument("--outcome-covariates", default="")

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    p_sim.add_argument("kind", choices=["geexex", "lunceford"])
    p_sim.add_argument("--m", type=int, default=100, help="rows (geexex)")
    p_sim.add_argument("--n", type=int, default=1000, help="rows (lunceford)")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--beta", default="0,0.6,-0.6,0.6")
    p_sim.add_argument("--nu", default="0,-1,1,-1,2")
    p_sim.add_argument("--xi", default="-1,1,1")
    p_sim.add_argument("--out", required=True)
    return parser


def _request_from_args(args) -> RunRequest:
    return RunRequest(
        estimator=args.estimator,
        data_path=args.data,
        unit_col=args.unit_col,
        start=_split_floats(args.start) if args.start is not None else None,
        roots=_split_floats(args.roots) if args.roots is not None else None,
        no_solve=args.no_solve,
        corrections=list(args.correction),
        deriv_method=args.deriv_method,
        deriv_step=args.deriv_step,
        richardson_levels=args.richardson_levels,
        tol=args.tol,
        max_iter=args.max_iter,
        damping=args.damping,
        output=args.output,
        options={
            "y": args.y,
            "y1": args.y1,
            "y2": args.y2,
            "response": args.response,
            "covariates": _split_names(args.covariates),
            "intercept": not args.no_intercept,
            "subset": _parse_subset(args.subset),
            "family": args.family,
            "alpha": args.alpha,
            "phi": args.phi,
            "treatment": args.treatment,
            "propensity_covariates": _split_names(args.propensity_covariates),
            "outcome_covariates": _split_names(args.outcome_covariates),
        },
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "estimate":
            req = _request_from_args(args)
            report, code = cmd_estimate(req)
            text = json.dumps(report, allow_nan=False)
            if req.output:
                with open(req.output, "w", encoding="utf-8") as handle:
                    handle.write(text + "\n")
            else:
                print(text)
            return code
        if args.command == "simulate":
            params = {"m": args.m, "n": args.n,
                      "beta": _split_floats(args.beta),
                      "nu": _split_floats(args.nu),
                      "xi": _split_floats(args.xi)}
            cmd_simulate(args.kind, params, args.seed, args.out)
            return 0
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except MestimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
