"""Command-line interface.

Subcommands: analyze, newton, pfnewton, optcheck, conlag, tangent, list.
Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 problem-definition error.

Vectors are comma-separated constant expressions evaluated in double
precision (``--x0 "1e-5+1e-15,1e-5"``).  A vector starting with ``-`` must
be attached to its flag: ``--h=-1,1``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

import numpy as np

from . import report as rpt
from .conlag import classify, build_h, lemma_certificate, two_factor_solve
from .errors import (
    DecompositionIncomplete,
    DimensionError,
    NondegenerateKKT,
    OrderError,
    ParseError,
    ProblemDefinitionError,
    SingularFactorMatrix,
    TooFewIterates,
)
from .expr import parse_expression
from .optimality import (
    certify,
    classical_multiplier,
    second_order_check,
    solve_multiplier,
)
from .pfactor import (
    build_decomposition,
    build_newton_chain,
    factor_operator,
    hp_sample,
    kernel_criterion,
    strong_regularity_estimate,
)
from .problems import EQUALITY, INEQUALITY, get_builtin, load_problem_file, load_registry
from .solvers import CONVERGED, classical_newton, convergence_ratio, pfactor_newton
from .tangent import compute_cone, distance_estimate_check, trace_curves

COMMANDS = ("analyze", "newton", "pfnewton", "optcheck", "conlag", "tangent", "list")
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_PROBLEM = 0, 2, 3, 4
ROOT_WARN = 1e-8

DEFAULTS = {
    "tol": 1e-12,
    "rank_tol": None,
    "max_iter": 50,
    "alpha": 0.1,
    "budget": 200,
    "kernel_tol": 1e-8,
    "classify_tol": 1e-8,
}


class UsageError(Exception):
    pass


def parse_vector(text: str) -> list:
    try:
        return [parse_expression(part, []).evaluate([]) for part in text.split(",")]
    except ParseError as exc:
        raise UsageError(f"cannot parse vector {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--builtin", metavar="NAME", help="built-in problem name")
    src.add_argument("--problem", metavar="FILE", help="JSON problem file")
    common.add_argument("--x0", help="starting point, comma separated")
    common.add_argument("--h", help="direction, comma separated")
    common.add_argument("--p", type=int, help="order p (analyze: maximal order)")
    common.add_argument("--tol", type=float, help="stopping tolerance (default 1e-12)")
    common.add_argument("--rank-tol", type=float, dest="rank_tol", help="relative rank cutoff")
    common.add_argument("--max-iter", type=int, dest="max_iter", help="iteration cap (default 50)")
    common.add_argument("--alpha", type=float, help="H_alpha band width for strong regularity (default 0.1)")
    common.add_argument("--budget", type=int, help="H_p sampling budget (default 200)")
    common.add_argument("--seed", type=int, help="random seed (default: $PFACTOR_SEED or 0)")
    common.add_argument("--format", choices=("json", "table", "csv"), default="json")
    common.add_argument("--output", metavar="FILE", help="write the report here instead of stdout")
    parser = argparse.ArgumentParser(prog="pfactor", description="p-factor analysis of singular nonlinear systems")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "decomposition, p-regularity and H_p at the declared point",
        "newton": "classical Newton iteration",
        "pfnewton": "p-factor Newton iteration with convergence ratios",
        "optcheck": "p-factor Lagrange optimality certificates",
        "conlag": "modified-Lagrangian 2-factor method for inequality constraints",
        "tangent": "tangent cone, curve tracing and distance estimates",
        "list": "list built-in problems",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _resolve(args, problem):
    tols = problem.tolerances if problem is not None else {}

    def pick(key):
        val = getattr(args, key, None)
        if val is not None:
            return val
        if key in tols:
            return tols[key]
        return DEFAULTS[key]

    seed = args.seed
    if seed is None:
        env = os.environ.get("PFACTOR_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError as exc:
                raise UsageError(f"PFACTOR_SEED must be an integer, got {env!r}") from exc
        elif problem is not None and problem.seed is not None:
            seed = problem.seed
        else:
            seed = 0
    cfg = {
        "command": args.command,
        "builtin": args.builtin,
        "problem_file": args.problem,
        "x0": parse_vector(args.x0) if args.x0 else (list(problem.x0) if problem and problem.x0 else None),
        "h": parse_vector(args.h) if args.h else None,
        "p": args.p,
        "tol": pick("tol"),
        "rank_tol": pick("rank_tol"),
        "max_iter": pick("max_iter"),
        "alpha": pick("alpha"),
        "budget": pick("budget"),
        "kernel_tol": tols.get("kernel_tol", DEFAULTS["kernel_tol"]),
        "classify_tol": tols.get("classify_tol", DEFAULTS["classify_tol"]),
        "seed": seed,
    }
    return cfg


def argv_from_config(cfg: dict) -> list:
    """Command line that reproduces a report from its configuration echo."""
    argv = [cfg["command"]]
    if cfg.get("builtin"):
        argv += ["--builtin", cfg["builtin"]]
    elif cfg.get("problem_file"):
        argv += ["--problem", cfg["problem_file"]]
    for key in ("x0", "h"):
        if cfg.get(key) is not None:
            argv.append(f"--{key}=" + ",".join(rpt.format_float(v) for v in cfg[key]))
    if cfg.get("p") is not None:
        argv += ["--p", str(cfg["p"])]
    for key, flag in (("tol", "--tol"), ("rank_tol", "--rank-tol"), ("alpha", "--alpha")):
        if cfg.get(key) is not None:
            argv += [flag, rpt.format_float(cfg[key])]
    for key, flag in (("max_iter", "--max-iter"), ("budget", "--budget"), ("seed", "--seed")):
        argv += [flag, str(cfg[key])]
    return argv


# ---------------------------------------------------------------------------
# report fragments
# ---------------------------------------------------------------------------


def _history(report):
    return [
        {"k": r.index, "x": r.x, "residual": r.residual, "step_norm": r.step_norm,
         "error": r.error, "condition": r.condition}
        for r in report.history
    ]


def _solve_summary(report, root=None):
    out = {
        "method": report.method,
        "status": report.status,
        "iterations": report.iterations,
        "x": report.x,
        "final_residual": report.history[-1].residual,
        "rate_constant": report.rate_constant,
        "history": _history(report),
    }
    if root is not None:
        try:
            cr = convergence_ratio(report, root)
            out["ratios"] = {"per_step": list(cr.ratios), "stabilized": list(cr.stabilized), "c": cr.c}
        except TooFewIterates:
            out["ratios"] = None
    return out


def _decomposition_summary(D):
    return {
        "p": D.p,
        "dims": D.dims(),
        "bases": [s.basis.T for s in D.subspaces],
        "projectors": list(D.projectors),
        "sample_size": D.sample_size,
    }


def _factor_summary(D, h):
    op = factor_operator(D, h)
    return {
        "h": h,
        "matrix": op.matrix,
        "rank": op.rank,
        "surjective": op.surjective,
        "kernel_criterion": kernel_criterion(D, h),
        "singular_values": op.singular_values,
    }


def _root_warning(model, point, warn):
    r = float(np.linalg.norm(model.evaluate(point)))
    if r > ROOT_WARN:
        warn(f"||F(x*)|| = {r:.3e} exceeds {ROOT_WARN:g}; the point is not a root")
    return r


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _need_h(cfg, problem):
    h = cfg["h"] if cfg["h"] is not None else (list(problem.h) if problem.h else None)
    if h is None:
        raise ProblemDefinitionError(f"{problem.name}: no direction h given (use --h)")
    return h


def cmd_analyze(problem, cfg, out, warn):
    model, point = problem.mapping()
    out["point"] = point
    out["point_residual"] = _root_warning(model, point, warn)
    info = model.is_singular_at(point, rtol=cfg["rank_tol"])
    out["jacobian"] = {
        "matrix": model.jacobian(point), "rank": info.rank, "singular": info.singular,
        "image": info.image.basis.T, "singular_values": info.singular_values,
    }
    D = build_decomposition(model, point, p_cap=cfg["p"], rank_rtol=cfg["rank_tol"], seed=cfg["seed"])
    out["decomposition"] = _decomposition_summary(D)
    hp = hp_sample(D, budget=cfg["budget"], seed=cfg["seed"], tol=cfg["kernel_tol"])
    out["hp"] = {
        "count": len(hp),
        "directions": hp,
        "regular": [bool(factor_operator(D, h).surjective) for h in hp],
    }
    dirs = []
    if problem.h:
        dirs.append(list(problem.h))
    if cfg["h"] is not None and cfg["h"] not in dirs:
        dirs.append(cfg["h"])
    out["factor_operators"] = [_factor_summary(D, h) for h in dirs]
    sr = strong_regularity_estimate(D, cfg["alpha"], seed=cfg["seed"])
    out["strong_regularity"] = {
        "alpha": sr.alpha, "estimate": sr.estimate, "accepted": sr.accepted,
        "sampled": sr.sampled, "empty": sr.empty,
    }
    return EXIT_OK


def cmd_newton(problem, cfg, out, warn):
    model, root = problem.mapping()
    if cfg["x0"] is None:
        raise ProblemDefinitionError(f"{problem.name}: no starting point (use --x0)")
    rep = classical_newton(model, cfg["x0"], tol=cfg["tol"], max_iter=cfg["max_iter"],
                           root=root, rank_tol=cfg["rank_tol"])
    out["solve"] = _solve_summary(rep, root)
    if len(rep.history) > 1:
        x1 = rep.history[1].x
        out["first_step"] = {"x1": x1, "norm": float(np.linalg.norm(x1 - root))}
    return EXIT_OK if rep.status == CONVERGED else EXIT_NUMERIC


def cmd_pfnewton(problem, cfg, out, warn):
    model, root = problem.mapping()
    if model.m != model.n:
        raise DimensionError(f"{problem.name}: p-factor Newton needs a square system, got m={model.m}, n={model.n}")
    _root_warning(model, root, warn)
    h = _need_h(cfg, problem)
    p = cfg["p"] or problem.p
    if p is None:
        p = build_decomposition(model, root, rank_rtol=cfg["rank_tol"], seed=cfg["seed"]).p
    if cfg["x0"] is None:
        raise ProblemDefinitionError(f"{problem.name}: no starting point (use --x0)")
    chain = build_newton_chain(model, root, h, p, rank_rtol=cfg["rank_tol"], check=False)
    out["chain"] = {
        "h": chain.h,
        "p": chain.p,
        "image_dims": [s.dim for s in chain.images],
        "pbar": list(chain.pbar),
        "combined": list(chain.combined),
        "factor_matrix": chain.factor_matrix,
        "nonsingular": chain.nonsingular,
        "iteration_matrix_at_root": chain.iteration_matrix(model, root),
        "modified_residual_at_root": chain.modified_residual(model, root),
    }
    if not chain.nonsingular:
        warn(f"p-factor matrix is singular for h={list(h)}")
        return EXIT_NUMERIC
    rep = pfactor_newton(model, cfg["x0"], chain, tol=cfg["tol"], max_iter=cfg["max_iter"],
                         root=root, rank_tol=cfg["rank_tol"])
    out["solve"] = _solve_summary(rep, root)
    return EXIT_OK if rep.status == CONVERGED else EXIT_NUMERIC


def _certificate(c):
    return {
        "h": c.h, "lambda": c.lam, "residual": c.residual, "necessary": c.necessary,
        "in_hp": c.in_hp, "regular": c.regular, "value": c.value, "ratio": c.ratio,
        "sufficient": c.sufficient,
    }


def cmd_optcheck(problem, cfg, out, warn):
    if problem.kind != EQUALITY:
        raise ProblemDefinitionError(f"{problem.name}: optcheck needs an objective with equality constraints")
    P = problem.equality_problem()
    D = None
    if P.constraints is not None:
        D = build_decomposition(P.constraints, P.x_star, p_cap=cfg["p"], rank_rtol=cfg["rank_tol"],
                                seed=cfg["seed"])
        out["decomposition"] = _decomposition_summary(D)
        lam, res = classical_multiplier(P)
        out["classical"] = {"lambda": lam, "residual": res}
        h = cfg["h"] if cfg["h"] is not None else (list(problem.h) if problem.h else None)
        if h is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                cert = solve_multiplier(P, D, h)
            for w in caught:
                warn(str(w.message))
            if cert.necessary:
                cert = second_order_check(P, D, cert)
            out["certificate"] = _certificate(cert)
    result = certify(P, D, sample_budget=cfg["budget"], seed=cfg["seed"])
    out["certification"] = {
        "verdict": result.verdict,
        "sufficiency_basis": result.sufficiency_basis,
        "alpha": result.alpha,
        "certificates": [_certificate(c) for c in result.certificates],
    }
    return EXIT_OK


def cmd_conlag(problem, cfg, out, warn):
    if problem.kind != INEQUALITY:
        raise ProblemDefinitionError(f"{problem.name}: conlag needs inequality constraints")
    S = problem.modlag_system()
    x = problem.root()
    lam = np.asarray(problem.multipliers if problem.multipliers is not None else [0.0] * S.m, float)
    w_star = np.concatenate([x, lam])
    out["system"] = {
        "variables": list(S.model.names), "G": S.model.system.to_strings(),
        "G_at_point": S.model.evaluate(w_star),
    }
    kkt = classify(S, x, lam, cfg["classify_tol"])
    out["classification"] = {
        "index_base": 1,
        "active": [j + 1 for j in kkt.active],
        "weakly_active": [j + 1 for j in kkt.weak],
        "strongly_active": [j + 1 for j in kkt.strong],
    }
    try:
        h = np.asarray(cfg["h"], float) if cfg["h"] is not None else build_h(S, kkt)
        out["nondegenerate"] = False
    except NondegenerateKKT as exc:
        warn(str(exc))
        h = np.zeros(S.n + S.m)
        out["nondegenerate"] = True
    out["h"] = h
    cert = lemma_certificate(S, kkt, h, seed=cfg["seed"])
    out["lemma"] = {
        "cqc": cert.cqc, "cone_positive": cert.cone_positive, "cone_alpha": cert.cone_alpha,
        "cone_samples": cert.cone_samples, "phi_prime": cert.phi_prime, "rank": cert.rank,
        "determinant": cert.determinant, "nonsingular": cert.nonsingular, "V": cert.V,
        "Q": cert.Q, "D_N": cert.D_N, "blocks_match": cert.blocks_match,
    }
    if cfg["x0"] is None:
        raise ProblemDefinitionError(f"{problem.name}: no starting point (use --x0)")
    rep = two_factor_solve(S, cfg["x0"], h, tol=cfg["tol"], max_iter=cfg["max_iter"], root=w_star,
                           rank_tol=cfg["rank_tol"])
    out["solve"] = _solve_summary(rep, w_star)
    lam_final = rep.x[S.n:]
    out["multiplier_signs_ok"] = bool(np.all(lam_final >= -cfg["classify_tol"]))
    return EXIT_OK if rep.status == CONVERGED else EXIT_NUMERIC


def cmd_tangent(problem, cfg, out, warn):
    model, point = problem.mapping()
    _root_warning(model, point, warn)
    D = build_decomposition(model, point, p_cap=cfg["p"], rank_rtol=cfg["rank_tol"], seed=cfg["seed"])
    out["decomposition"] = _decomposition_summary(D)
    cone = compute_cone(D, budget=cfg["budget"], seed=cfg["seed"], tol=cfg["kernel_tol"])
    out["cone"] = {"directions": cone.directions, "residuals": cone.residuals}
    dirs = [d for d in cone.directions]
    if cfg["h"] is not None:
        dirs.append(np.asarray(cfg["h"], float))
    traces = trace_curves(model, point, dirs) if dirs else []
    out["traces"] = [
        {"direction": t.direction, "confirmed": t.confirmed, "ratios": list(t.ratios),
         "t": [s.t for s in t.samples], "max_residual": max(s.residual for s in t.samples)}
        for t in traces
    ]
    dc = distance_estimate_check(model, D, seed=cfg["seed"])
    out["distance"] = {
        "radii": list(dc.radii), "delta1": list(dc.delta1), "delta2": list(dc.delta2),
        "stable1": dc.stable1, "stable2": dc.stable2, "samples": len(dc.samples),
        "dropped": dc.dropped,
    }
    return EXIT_OK


def cmd_list(problem, cfg, out, warn):
    out["problems"] = [
        dict(pr.to_dict(), kind=pr.kind, aliases=list(pr.aliases), description=pr.description)
        for pr in load_registry().values()
    ]
    return EXIT_OK


HANDLERS = {
    "analyze": cmd_analyze, "newton": cmd_newton, "pfnewton": cmd_pfnewton,
    "optcheck": cmd_optcheck, "conlag": cmd_conlag, "tangent": cmd_tangent, "list": cmd_list,
}


def execute(args) -> tuple:
    """Run parsed arguments; returns ``(report, exit_code)``."""
    start = time.perf_counter()
    messages = []
    problem = None
    if args.command != "list":
        if args.builtin is None and args.problem is None:
            raise UsageError("one of --builtin or --problem is required")
        problem = get_builtin(args.builtin) if args.builtin else load_problem_file(args.problem)
    cfg = _resolve(args, problem)
    out = {"command": args.command}
    if problem is not None:
        out["problem"] = problem.to_dict()
    out["config"] = {k: v for k, v in cfg.items() if k != "command"}
    out["warnings"] = messages
    try:
        code = HANDLERS[args.command](problem, cfg, out, messages.append)
    except (SingularFactorMatrix, DecompositionIncomplete) as exc:
        messages.append(str(exc))
        code = EXIT_NUMERIC
    out["exit_code"] = code
    out[rpt.TIMINGS] = {"total_s": time.perf_counter() - start}
    return out, code


def run(argv) -> tuple:
    """Execute a command line in-process; argparse usage errors raise ``SystemExit(2)``."""
    return execute(build_parser().parse_args(list(argv)))


def render(report, fmt):
    if fmt == "table":
        return rpt.render_table(report)
    if fmt == "csv":
        return rpt.render_csv(report)
    return rpt.dumps(report)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report, code = execute(args)
    except UsageError as exc:
        print(f"pfactor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProblemDefinitionError, ParseError, DimensionError, OrderError) as exc:
        print(f"pfactor: problem error: {exc}", file=sys.stderr)
        return EXIT_PROBLEM
    for msg in report["warnings"]:
        print(f"pfactor: warning: {msg}", file=sys.stderr)
    text = render(report, args.format)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
