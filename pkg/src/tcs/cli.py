"""Command-line front end.

Subcommands ``score``, ``compare``, ``bounds``, ``uniqueness`` and ``cohort``
write a JSON report (or CSV tables) holding the inputs, library versions,
tolerances and results.  Exit status: 0 success, 1 bad input, 2 numerical
failure or non-convergence (the partial result is still written).
Set ``TCS_LOG`` (e.g. ``INFO``, ``DEBUG``) for log output on stderr.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import gramian, reduction, scores
from .core_model import SystemMatrix, TargetSpec, canonicalize
from .errors import NumericalError, ValidationError
from .gramian import assemble, gramian_set, output_controllability_rank
from .ingest import (
    build_system,
    cohort_run,
    load_matrix,
    load_system,
    node_scores,
    summary_dict,
    top_m,
    write_cohort,
)
from .reduction import bound_inputs, comparison_report, delta_quantities, gramian_gap, integral_gap
from .scores import SolverOptions, solve_score, uniqueness_certificate
from .serialize import dumps, environment_versions, write_csv, write_text

log = logging.getLogger("tcs")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not a number") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a positive finite number, got {s}")
    return v


def _add_common(p, targets=True):
    d = SolverOptions()
    p.add_argument("--input", required=True, help="matrix file (.csv dense, .mtx Matrix Market) or cohort directory")
    if targets:
        p.add_argument("--targets", required=True,
                       help="comma-separated 1-based node indices, or top:<m> to pick by all-nodes score")
    p.add_argument("--T", dest="T", type=_positive_float, required=True, help="time horizon")
    p.add_argument("--kind", choices=["vcs", "aecs"], default="vcs")
    p.add_argument("--method", choices=["block-exp", "quadrature"], default="block-exp")
    p.add_argument("--laplacian", action="store_true",
                   help="treat the input as connectivity and use A = -L")
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--rho", type=float, default=d.rho)
    p.add_argument("--alpha0", type=float, default=d.alpha0)
    p.add_argument("--eps", type=float, default=d.epsilon_stop, help="stopping tolerance on ||p_k - p_{k+1}||")
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="json")


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcs", description="Target controllability scores")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("score", help="target VCS/AECS of one system")
    _add_common(p)
    p.add_argument("--reduced", action="store_true", help="score the target-only system A11")
    p = sub.add_parser("compare", help="target vs reduced scores with error bounds")
    _add_common(p)
    p = sub.add_parser("bounds", help="Gramian gap and its analytic bound")
    _add_common(p)
    p = sub.add_parser("uniqueness", help="uniqueness certificate and rank test")
    _add_common(p)
    p.add_argument("--reduced", action="store_true", help="certify the reduced problem instead")
    p = sub.add_parser("cohort", help="two-stage cohort pipeline over a directory of connectivity matrices")
    _add_common(p, targets=False)
    p.add_argument("--m", type=int, required=True, help="number of targets")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--ranking", choices=["score", "degree"], default="score")
    return parser


def _options(args) -> SolverOptions:
    return SolverOptions(args.sigma, args.rho, args.alpha0, args.eps, args.max_iters)


def _tolerances() -> dict:
    return {
        "feasibility_rtol": scores.FEAS_RTOL,
        "uniqueness_tau": scores.TAU_UNIQUE,
        "max_halvings": scores.MAX_HALVINGS,
        "psd_rtol": gramian.TAU_PSD,
        "rank_rtol": gramian.RANK_RTOL,
        "quadrature_rtol": gramian.QUAD_RTOL,
        "phi_switch": reduction.PHI_SWITCH,
        "mu_strong_floor": reduction.MU_STRONG_FLOOR,
        "segment_points": reduction.SEGMENT_POINTS,
    }


def _load(args) -> SystemMatrix:
    if args.laplacian:
        return build_system(load_matrix(args.input))
    return load_system(args.input)


def _targets(args, system, options) -> list[int]:
    spec = args.targets.strip()
    if spec.startswith("top:"):
        try:
            m = int(spec[4:])
        except ValueError:
            raise ValidationError(f"bad --targets value {spec!r}") from None
        res = node_scores(system, args.T, args.kind, options, args.method)
        if not res.converged:
            raise NumericalError("all-nodes scoring for top:m selection did not converge")
        return top_m(res.p_star, m)
    try:
        return [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"bad --targets value {spec!r}; expected e.g. 1,2,5 or top:3") from None


def _result_dict(res) -> dict:
    return {
        "kind": res.kind.value,
        "p_star": res.p_star,
        "objective_value": res.objective_value,
        "iterations": res.iterations,
        "converged": res.converged,
        "feasibility_margin": res.feasibility_margin,
        "stationarity_residual": res.stationarity_residual,
        "uniqueness": res.uniqueness,
        "objective_trace_first": res.objective_trace[0],
        "objective_trace_last": res.objective_trace[-1],
        "objective_trace_length": len(res.objective_trace),
    }


def _cmd_score(args, system, targets, options):
    canon = canonicalize(system, TargetSpec(tuple(targets)))
    flavor = "reduced" if args.reduced else "full"
    gset = gramian_set(canon, args.T, flavor, args.method)
    res = solve_score(args.kind, gset, options)
    out = {"flavor": flavor, "gramian_tolerance": gset.tolerance, **_result_dict(res)}
    rows = [[t, canon.labels[k], res.p_star[k]] for k, t in enumerate(targets)]
    return out, (rows, ["node", "label", "p_star"]), res.converged


def _cmd_compare(args, system, targets, options):
    canon = canonicalize(system, TargetSpec(tuple(targets)))
    rep = comparison_report(args.kind, canon, args.T, options, args.method)
    out = {
        "kind": rep.kind.value,
        "p_target": rep.p_target,
        "p_reduced": rep.p_reduced,
        "diff_norm": rep.diff_norm,
        "delta_w_norms": rep.delta_w_norms,
        "epsilon_T": rep.epsilon_T,
        "epsilon_bound": rep.epsilon_bound,
        "phi": rep.phi,
        "phi_overflow": rep.phi_overflow,
        "mu": rep.inputs.mu,
        "mu11": rep.inputs.mu11,
        "a12_norm": rep.inputs.a12_norm,
        "delta_star": rep.delta_star,
        "delta_at": rep.delta_at,
        "margin": rep.margin,
        "objective_gap_bound": rep.objective_gap_bound,
        "gamma": rep.gamma,
        "mu_strong_estimate": rep.mu_strong_estimate,
        "mu_strong_note": "sampled minimum Hessian eigenvalue on [p_target, p_reduced]; an estimate",
        "p_diff_bound": rep.p_diff_bound,
        "bound_holds": rep.bound_holds,
        "reduced_feasible_in_full": rep.reduced_feasible_in_full,
        "sandwich_slack": rep.sandwich_slack,
        "sandwich_upper_applies": rep.sandwich_upper_applies,
        "target": _result_dict(rep.target_result),
        "reduced": _result_dict(rep.reduced_result),
    }
    rows = [[t, canon.labels[k], rep.p_target[k], rep.p_reduced[k], rep.delta_w_norms[k]]
            for k, t in enumerate(targets)]
    return out, (rows, ["node", "label", "p_target", "p_reduced", "delta_w_norm"]), rep.converged


def _cmd_bounds(args, system, targets, options):
    canon = canonicalize(system, TargetSpec(tuple(targets)))
    full = gramian_set(canon, args.T, "full", args.method)
    red = gramian_set(canon, args.T, "reduced", args.method)
    gap = gramian_gap(full, red)
    inputs = bound_inputs(canon, args.T)
    integral = integral_gap(canon, args.T)
    scale = max(float(np.max(np.abs(gap.delta_w))), 1e-300)
    uniform = np.full(canon.m, 1.0 / canon.m)
    out = {
        "mu": inputs.mu,
        "mu11": inputs.mu11,
        "a12_norm": inputs.a12_norm,
        "phi": reduction.phi(inputs.mu, args.T),
        "epsilon_bound": inputs.epsilon_bound,
        "delta_w_norms": gap.delta_w_norms,
        "bound_holds": bool(np.all(gap.delta_w_norms <= inputs.epsilon_bound + 1e-12)),
        "integral_representation_max_abs_diff": float(np.max(np.abs(integral - gap.delta_w))),
        "integral_representation_rel_diff": float(np.max(np.abs(integral - gap.delta_w))) / scale,
    }
    try:
        dq = delta_quantities(full, [uniform], inputs, gap.delta_w_norms)
        out.update({"delta_at_uniform": dq.delta_at[0], "epsilon_at_uniform": dq.epsilon_at[0],
                    "delta_star_uniform": dq.delta_star, "lambda_min_uniform": dq.margin})
    except NumericalError as exc:
        out["delta_at_uniform"] = None
        out["note"] = str(exc)
    rows = [[t, canon.labels[k], gap.delta_w_norms[k], inputs.epsilon_bound] for k, t in enumerate(targets)]
    return out, (rows, ["node", "label", "delta_w_norm", "epsilon_bound"]), True


def _cmd_uniqueness(args, system, targets, options):
    canon = canonicalize(system, TargetSpec(tuple(targets)))
    flavor = "reduced" if args.reduced else "full"
    gset = gramian_set(canon, args.T, flavor, args.method)
    cert = uniqueness_certificate(gset)
    rank = output_controllability_rank(canon, range(1, canon.m + 1))
    uniform = np.full(canon.m, 1.0 / canon.m)
    ev = np.linalg.eigvalsh(assemble(uniform, gset))
    out = {
        "flavor": flavor,
        "verdict": cert.verdict,
        "smallest_normalized_singular_value": cert.smallest_normalized_singular_value,
        "det_R": cert.det_R,
        "rank_uniform_support": rank.rank,
        "full_row_rank": rank.full_row_rank,
        "lambda_min_uniform": float(ev[0]),
    }
    rows = [[k, v] for k, v in out.items()]
    return out, (rows, ["field", "value"]), True


COMMANDS = {
    "score": _cmd_score,
    "compare": _cmd_compare,
    "bounds": _cmd_bounds,
    "uniqueness": _cmd_uniqueness,
}


def _inputs(args) -> dict:
    keep = ("input", "targets", "T", "kind", "method", "laplacian", "reduced", "m", "jobs", "ranking", "format")
    return {k: getattr(args, k) for k in keep if hasattr(args, k)}


def _emit(text, path):
    if path:
        write_text(text, path)
    else:
        sys.stdout.write(text)


def run(args) -> int:
    options = _options(args)
    header = {"command": args.command, "inputs": _inputs(args), "options": options,
              "tolerances": _tolerances()}
    if args.command == "cohort":
        summary = cohort_run(args.input, args.T, args.m, args.kind, options, args.jobs,
                             args.ranking, args.method)
        if args.format == "csv" and not args.out:
            raise ValidationError("cohort --format csv needs --out (used as the file prefix)")
        if args.out:
            write_cohort(summary, args.out, args.format, header)
        else:
            doc = dict(header)
            doc["versions"] = environment_versions()
            doc["result"] = summary_dict(summary)
            _emit(dumps(doc), None)
        return EXIT_OK if summary.per_subject else EXIT_NUMERIC

    system = _load(args)
    targets = _targets(args, system, options)
    header["inputs"]["target_indices"] = targets
    result, (rows, cols), ok = COMMANDS[args.command](args, system, targets, options)
    if args.format == "json":
        doc = dict(header)
        doc["versions"] = environment_versions()
        doc["result"] = result
        _emit(dumps(doc), args.out)
    else:
        _emit(write_csv(rows, cols), args.out)
    if not ok:
        log.error("solver did not converge within max_iters = %d; partial result written", options.max_iters)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("TCS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ValidationError as exc:
        print(f"tcs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"tcs: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"tcs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
