"""Command line front end for the solver, simulator, and multiplier search.

Every artifact embeds the resolved configuration and seed that produced it,
so a run can be reproduced from the artifact alone. On error, partially
written files are removed and a machine-readable error record is left in
the output directory. Exit status is 0 only when the requested computation
finished and its certificates (where the command has any) passed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dual import bisect_multiplier, duality_report
from .errors import CertificateFailed, RiskLQError
from .estimation import covariance_schedule, stationary_filter_covariance
from .evaluation import (mc_evaluate, optimal_cost, risk_consistency, risk_value,
                         state_covariance_profile)
from .model import (SystemModel, ValidatedModel, load_model, model_to_dict,
                    validate, with_epsilon)
from .riccati import solve_finite, solve_stationary
from .simulate import NoiseSpec, ensemble

try:
    from importlib.metadata import version
    _VERSION = version("risklq")
except Exception:
    _VERSION = "unknown"


def example_model(name: str) -> tuple[ValidatedModel, dict]:
    """Built-in benchmark systems with their reference run settings."""
    B_local = [[1.0, 1.0], [0.0, 1.0]]
    B_remote = [[1.0, 0.0], [1.0, 1.0]]
    C = [[1.0, 1.0], [0.0, -1.0]]
    eye = np.eye(2).tolist()
    if name == "example1":
        model = SystemModel(
            A=[[4.0, 1.0], [1.0, 0.1]], B_local=B_local, B_remote=B_remote,
            C=C, Q_w=(10.0 * np.eye(2)).tolist(), Q_v=(10.0 * np.eye(2)).tolist(),
            Q=eye, R_local=eye, R_remote=eye, G=eye, p=0.5,
            x0_mean=[1.0, 1.0], Sigma_init=eye,
        )
        defaults = {"N": 50, "mu_values": [0.0, 10.0], "samples": 1000,
                    "p_values": [0.2, 0.8]}
    elif name == "example2":
        model = SystemModel(
            A=[[2.0, 0.1], [1.0, 0.1]], B_local=B_local, B_remote=B_remote,
            C=C, Q_w=eye, Q_v=eye, Q=eye, R_local=eye, R_remote=eye, G=eye,
            p=0.5, x0_mean=[0.0, 0.0], Sigma_init=eye, epsilon=40.0,
        )
        defaults = {"N": 5, "epsilon": 40.0, "samples": 100_000}
    else:
        raise ValueError(f"unknown example {name!r}")
    return validate(model), defaults


def _resolve_model(spec: str) -> ValidatedModel:
    if spec in ("example1", "example2"):
        return example_model(spec)[0]
    return validate(load_model(spec))


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _to_builtin(dataclasses.asdict(obj))
    return obj


class _Artifacts:
    """Tracks files written by a command so failures leave no partial output."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.created: list[Path] = []

    def json(self, name: str, payload: dict) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(_to_builtin(payload), fh, indent=2)
            fh.write("\n")
        self.created.append(path)
        return path

    def csv(self, name: str, header: list[str], rows) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
        self.created.append(path)
        return path

    def discard(self):
        for path in self.created:
            path.unlink(missing_ok=True)
        self.created.clear()


def _meta(command: str, args: argparse.Namespace, model: ValidatedModel | None) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    meta = {
        "tool": f"risklq {_VERSION}",
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "resolved_args": _to_builtin(resolved),
    }
    if model is not None:
        meta["model"] = model_to_dict(model)
    return meta


def _noise_pair(model: ValidatedModel, args) -> tuple[NoiseSpec, NoiseSpec] | None:
    kind = getattr(args, "noise", None)
    if kind in (None, "gaussian"):
        return None
    extra = {"df": args.df} if kind == "scaled_student_t" else {}
    return (NoiseSpec(kind, model.Q_w, **extra), NoiseSpec(kind, model.Q_v, **extra))


def cmd_solve(args, art: _Artifacts) -> int:
    model = _resolve_model(args.model)
    solution = solve_finite(model, args.mu, args.horizon)
    schedule = covariance_schedule(model, args.horizon)
    breakdown = optimal_cost(model, solution, schedule)
    risk = risk_value(model, solution, schedule)
    profile = state_covariance_profile(model, solution, schedule)

    art.csv("gains.csv",
            ["k"] + [f"K_{i}{j}" for i in range(model.m1 + model.m2) for j in range(model.n)]
            + [f"Kbar_{i}{j}" for i in range(model.m1 + model.m2) for j in range(model.n)]
            + [f"F_{i}{j}" for i in range(model.m1) for j in range(model.n)],
            [[k, *g.K.ravel(), *g.Kbar.ravel(), *g.local_gain.ravel()]
             for k, g in enumerate(solution.gains)])
    art.csv("profile.csv",
            ["k", "stage_value", "weighted_variance", "filter_trace"],
            [[k, float(breakdown.trace_terms[k]), float(profile["weighted_variance"][k]),
              float(np.trace(schedule.Sigma_filt[k]))]
             for k in range(args.horizon + 2)])
    art.json("solve.json", {
        "meta": _meta("solve", args, model),
        "mu": args.mu, "horizon": args.horizon,
        "lagrangian_value": breakdown.total,
        "initial_term": breakdown.initial_term,
        "dual_value": breakdown.dual_value,
        "risk": risk.J_R_analytic,
        "solvable": solution.solvable,
        "files": {
            "gains.csv": "per-step gains; K/Kbar act on the remote estimate and "
                         "the mean, F on the local-remote estimate gap",
            "profile.csv": "per-step cost contribution, risk-weighted state "
                           "variance, and local filter covariance trace",
        },
    })
    return 0


def cmd_stationary(args, art: _Artifacts) -> int:
    model = _resolve_model(args.model)
    stat = solve_stationary(model, args.mu)
    filt = stationary_filter_covariance(model)
    payload = {
        "meta": _meta("stationary", args, model),
        "mu": args.mu,
        "converged": stat.converged,
        "iterations": stat.iterations,
        "ms_bounded": stat.ms_bounded,
        "spectral_value": stat.spectral_value,
        "positivity": stat.positivity,
        "filter": {"iterations": filt["iterations"], "converged": filt["converged"],
                   "Sigma_filt_trace": float(np.trace(filt["Sigma_filt"]))},
        "gains": {"K": stat.gains.K, "Kbar": stat.gains.Kbar,
                  "local_gain": stat.gains.local_gain},
    }
    art.json("stationary.json", payload)
    return 0


def cmd_bisect(args, art: _Artifacts) -> int:
    model = _resolve_model(args.model)
    epsilon = args.epsilon if args.epsilon is not None else model.epsilon
    result = bisect_multiplier(
        model, args.horizon, epsilon=epsilon, risk_eval=args.risk_eval,
        samples=args.samples, seed=args.seed)
    art.csv("bisect_trail.csv",
            ["evaluation", "mu_lo", "mu_hi", "risk_at_probe"],
            [[i, lo, hi, jr] for i, (lo, hi, jr) in enumerate(result.bracket_history)])
    certificates = None
    cert_error = None
    try:
        certificates = duality_report(model, result, args.horizon)
    except CertificateFailed as exc:
        cert_error = str(exc)
    art.json("bisect.json", {
        "meta": _meta("bisect", args, model),
        "epsilon": epsilon, "horizon": args.horizon,
        "result": result,
        "certificates": certificates,
        "certificate_error": cert_error,
        "files": {"bisect_trail.csv": "bracket endpoints and the risk measured "
                                      "at the probe point of each evaluation"},
    })
    if cert_error is not None:
        print(f"certificates failed: {cert_error}", file=sys.stderr)
        return 1
    print(f"mu_star={result.mu_star:.6g} J={result.J_at_star:.6g} "
          f"J_R={result.J_R_at_star:.6g} (epsilon={epsilon:.6g})")
    return 0


def cmd_simulate(args, art: _Artifacts) -> int:
    model = _resolve_model(args.model)
    solution = solve_finite(model, args.mu, args.horizon)
    est = ensemble(model, solution, args.horizon, noise=_noise_pair(model, args),
                   samples=args.samples, master_seed=args.seed)
    schedule = covariance_schedule(model, args.horizon)
    analytic_risk = risk_value(model, solution, schedule).J_R_analytic
    rows = []
    for k in range(args.horizon + 2):
        remote = (float(est.remote_error_trace[k]) if k <= args.horizon else float("nan"))
        rows.append([k, *(float(v) for v in est.per_step_mean[k]),
                     float(est.per_step_weighted_variance[k]), remote])
    art.csv("per_step.csv",
            ["k"] + [f"mean_x_{i}" for i in range(model.n)]
            + ["weighted_variance", "remote_error_trace"], rows)
    art.json("simulate.json", {
        "meta": _meta("simulate", args, model),
        "mu": args.mu, "horizon": args.horizon, "samples": args.samples,
        "seed": args.seed,
        "J_hat": est.J_hat, "J_R_hat": est.J_R_hat,
        "stderr_J": est.stderr_J, "stderr_JR": est.stderr_JR,
        "J_R_analytic": analytic_risk,
        "failure_rate": est.failure_rate,
        "files": {"per_step.csv": "ensemble mean state, risk-weighted variance "
                                  "about it, and remote estimation error trace"},
    })
    return 0


def cmd_example1(args, art: _Artifacts) -> int:
    model, defaults = example_model("example1")
    N = defaults["N"]
    samples = args.samples or defaults["samples"]
    runs = {}
    for mu in defaults["mu_values"]:
        solution = solve_finite(model, mu, N)
        est = ensemble(model, solution, N, samples=samples, master_seed=args.seed)
        half = 1.96 * est.stderr_JR
        runs[mu] = {
            "ensemble": est,
            "ci": (est.J_R_hat - half, est.J_R_hat + half),
        }
    lo_mu, hi_mu = defaults["mu_values"]
    separated = runs[hi_mu]["ci"][1] < runs[lo_mu]["ci"][0]

    art.csv("example1_variance.csv",
            ["k", f"weighted_variance_mu{lo_mu:g}", f"weighted_variance_mu{hi_mu:g}"],
            [[k,
              float(runs[lo_mu]["ensemble"].per_step_weighted_variance[k]),
              float(runs[hi_mu]["ensemble"].per_step_weighted_variance[k])]
             for k in range(N + 2)])

    # remote error covariance traces under two link failure rates, mu = 0
    trace_cols = {}
    for p in defaults["p_values"]:
        variant = validate(dataclasses.replace(model, p=p))
        sol = solve_finite(variant, 0.0, N)
        sched = covariance_schedule(variant, N)
        prof = state_covariance_profile(variant, sol, sched)
        trace = [float(np.trace(sched.Sigma_filt[k] + prof["P_d"][k]))
                 for k in range(N + 1)]
        trace_cols[p] = trace
    p_lo, p_hi = defaults["p_values"]
    art.csv("example1_covariance.csv",
            ["k", f"remote_trace_p{p_lo:g}", f"remote_trace_p{p_hi:g}"],
            [[k, trace_cols[p_lo][k], trace_cols[p_hi][k]] for k in range(N + 1)])

    art.json("example1.json", {
        "meta": _meta("example1", args, model),
        "horizon": N, "samples": samples, "seed": args.seed,
        "cumulative_weighted_variance": {
            f"mu={mu:g}": {
                "estimate": runs[mu]["ensemble"].J_R_hat,
                "stderr": runs[mu]["ensemble"].stderr_JR,
                "ci95": list(runs[mu]["ci"]),
            } for mu in defaults["mu_values"]
        },
        "cis_separated": bool(separated),
        "files": {
            "example1_variance.csv": "per-step risk-weighted state variance for "
                                     "the unconstrained and penalized policies",
            "example1_covariance.csv": "per-step remote estimation error "
                                       "covariance trace for two link failure "
                                       "probabilities",
        },
    })
    print(f"cumulative weighted variance: mu=0 {runs[lo_mu]['ensemble'].J_R_hat:.4g}, "
          f"mu=10 {runs[hi_mu]['ensemble'].J_R_hat:.4g}, "
          f"CIs separated: {separated}")
    return 0 if separated else 1


def cmd_example2(args, art: _Artifacts) -> int:
    model, defaults = example_model("example2")
    N = defaults["N"]
    samples = args.samples or defaults["samples"]
    epsilon = args.epsilon if args.epsilon is not None else defaults["epsilon"]
    model = with_epsilon(model, epsilon)
    result = bisect_multiplier(model, N, epsilon=epsilon, risk_eval=args.risk_eval,
                               samples=samples, seed=args.seed)
    solution = solve_finite(model, result.mu_star, N)
    schedule = covariance_schedule(model, N)
    consistency = risk_consistency(model, solution, schedule, samples=samples,
                                   seed=args.seed)
    certificates = None
    cert_error = None
    try:
        certificates = duality_report(model, result, N)
    except CertificateFailed as exc:
        cert_error = str(exc)
    art.csv("bisect_trail.csv",
            ["evaluation", "mu_lo", "mu_hi", "risk_at_probe"],
            [[i, lo, hi, jr] for i, (lo, hi, jr) in enumerate(result.bracket_history)])
    art.json("example2.json", {
        "meta": _meta("example2", args, model),
        "epsilon": epsilon, "horizon": N, "samples": samples, "seed": args.seed,
        "mu_star": result.mu_star,
        "J": result.J_at_star,
        "J_R": result.J_R_at_star,
        "risk_consistency": consistency,
        "result": result,
        "certificates": certificates,
        "certificate_error": cert_error,
        "files": {"bisect_trail.csv": "bracket endpoints and the risk measured "
                                      "at the probe point of each evaluation"},
    })
    print(f"mu_star={result.mu_star:.6g} J={result.J_at_star:.6g} "
          f"J_R={result.J_R_at_star:.6g} (epsilon={epsilon:g}); "
          f"analytic vs MC risk discrepancy "
          f"{consistency['rel_discrepancy'] * 100:.2f}%"
          + (" [flagged]" if consistency["flagged"] else ""))
    return 0 if cert_error is None else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risklq",
        description="Risk-constrained linear-quadratic control over a lossy "
                    "uplink: solve, simulate, and search the multiplier.",
    )
    parser.add_argument("--version", action="version", version=f"risklq {_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, horizon=None, mu=False, epsilon=False, mc=False):
        if model:
            p.add_argument("--model", required=True,
                           help="model config JSON path, or example1/example2")
        if horizon is not None:
            p.add_argument("--horizon", type=int, default=horizon,
                           help=f"number of controlled steps N (default {horizon})")
        if mu:
            p.add_argument("--mu", type=float, default=0.0,
                           help="risk multiplier (default 0)")
        if epsilon:
            p.add_argument("--epsilon", type=float, default=None,
                           help="risk budget (default: model config value)")
        if mc:
            p.add_argument("--samples", type=int, default=None,
                           help="Monte Carlo sample count")
            p.add_argument("--seed", type=int, default=0,
                           help="master seed (default 0)")
        p.add_argument("--out", type=Path, default=Path("risklq-out"),
                       help="output directory (default ./risklq-out)")

    p = sub.add_parser("solve", help="finite-horizon gains, cost, and risk")
    common(p, horizon=50, mu=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stationary", help="fixed-point gains and boundedness test")
    common(p, mu=True)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("bisect", help="smallest multiplier meeting the risk budget")
    common(p, horizon=50, epsilon=True, mc=True)
    p.add_argument("--risk-eval", choices=["analytic", "montecarlo"],
                   default="analytic", help="risk evaluation mode for feasibility")
    p.set_defaults(func=cmd_bisect, samples_default=100_000)

    p = sub.add_parser("simulate", help="closed-loop Monte Carlo under the "
                                        "mu-optimal policy")
    common(p, horizon=50, mu=True, mc=True)
    p.add_argument("--noise", choices=["gaussian", "scaled_student_t",
                                       "shifted_exponential"], default="gaussian")
    p.add_argument("--df", type=float, default=5.0,
                   help="degrees of freedom for scaled_student_t (default 5)")
    p.set_defaults(func=cmd_simulate, samples_default=1000)

    p = sub.add_parser("example1", help="variance comparison benchmark "
                                        "(unstable pair, N=50)")
    common(p, model=False, mc=True)
    p.set_defaults(func=cmd_example1, samples_default=1000)

    p = sub.add_parser("example2", help="multiplier search benchmark "
                                        "(budget 40, N=5)")
    common(p, model=False, epsilon=True, mc=True)
    p.add_argument("--risk-eval", choices=["analytic", "montecarlo"],
                   default="analytic", help="risk evaluation mode for feasibility")
    p.set_defaults(func=cmd_example2, samples_default=100_000)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "samples", None) is None and hasattr(args, "samples"):
        args.samples = getattr(args, "samples_default", 1000)
    art = _Artifacts(args.out)
    try:
        return args.func(args, art)
    except (RiskLQError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        art.discard()
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
            "resolved_args": _to_builtin({k: v for k, v in vars(args).items()
                                          if k not in ("func",)}),
        }
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "error.json", "w") as fh:
            json.dump(_to_builtin(record), fh, indent=2)
            fh.write("\n")
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception:
        art.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
