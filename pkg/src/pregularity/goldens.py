"""Golden cases: expected values from the worked examples, checked through the CLI.

Every expectation carries a provenance tag:

* ``[PUBLISHED]`` a number printed in the published worked examples,
* ``[DERIVED]``   a value computed independently (hand arithmetic, closed forms),
* ``[TRIVIAL]``   an enumeration or degenerate case.

Run ``python -m pregularity.goldens --write DIR`` from the repository root to
regenerate the stored report files; two cases read problem files by a path
relative to that root.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import subspace_angles

from . import report as rpt
from .cli import run

EXACT = 1e-12
S2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Expect:
    path: str
    value: object
    provenance: str
    tol: float = EXACT
    op: str = "eq"  # eq | rel | le | ge | span | dirset | len


@dataclass(frozen=True)
class GoldenCase:
    id: str
    argv: tuple
    expectations: tuple
    exit_code: int = 0


@dataclass
class GoldenResult:
    id: str
    passed: bool
    failures: list = field(default_factory=list)
    report: dict | None = None


def lookup(obj, path: str):
    for part in path.split("."):
        obj = obj[int(part)] if isinstance(obj, list) else obj[part]
    return obj


def _check(actual, e: Expect):
    """Return ``None`` when the expectation holds, else a diff message."""
    if e.op == "len":
        ok = len(actual) == e.value
        return None if ok else f"len {len(actual)} != {e.value}"
    symbolic = isinstance(e.value, list) and any(isinstance(v, str) for v in e.value)
    if isinstance(e.value, (str, bool)) or e.value is None or symbolic:
        return None if actual == e.value else f"{actual!r} != {e.value!r}"
    a = np.asarray(actual, dtype=float)
    v = np.asarray(e.value, dtype=float)
    if e.op in ("eq", "rel"):
        if a.shape != v.shape:
            return f"shape {a.shape} != {v.shape}: {actual}"
        diff = float(np.max(np.abs(a - v))) if a.size else 0.0
        if e.op == "rel":
            diff /= max(float(np.max(np.abs(v))), np.finfo(float).tiny)
        return None if diff <= e.tol else f"max diff {diff:.3e} > {e.tol:g}: got {a.tolist()}, want {v.tolist()}"
    if e.op == "le":
        return None if np.all(a <= v) else f"{a.tolist()} not <= {e.value}"
    if e.op == "ge":
        return None if np.all(a >= v) else f"{a.tolist()} not >= {e.value}"
    if e.op == "span":
        a = np.atleast_2d(a)
        v = np.atleast_2d(v)
        if a.shape != v.shape:
            return f"dimension {a.shape[0]} != {v.shape[0]}"
        ang = float(np.max(subspace_angles(a.T, v.T))) if a.size else 0.0
        return None if ang <= e.tol else f"principal angle {ang:.3e} > {e.tol:g}"
    if e.op == "dirset":
        a = np.atleast_2d(a) if a.size else np.zeros((0, v.shape[1]))
        v = np.atleast_2d(v)
        if a.shape[0] != v.shape[0]:
            return f"{a.shape[0]} directions, expected {v.shape[0]}: {a.tolist()}"
        for w in v:
            w = w / np.linalg.norm(w)
            best = min(2 * math.asin(min(1.0, np.linalg.norm(d - w) / 2)) for d in a)
            if best > e.tol:
                return f"direction {w.tolist()} missing (closest at {best:.3e} rad)"
        return None
    raise ValueError(f"unknown comparison {e.op!r}")


P = "[PUBLISHED]"
D = "[DERIVED]"
T = "[TRIVIAL]"

GOLDEN_CASES = (
    GoldenCase("ex1-decomposition", ("analyze", "--builtin", "ex1", "--h=1,1"), (
        Expect("problem.equations", ["x1 + x2", "x1*x2"], P),
        Expect("point_residual", 1e-14, P, op="le"),
        Expect("jacobian.matrix", [[1, 1], [0, 0]], P),
        Expect("jacobian.singular", True, P),
        Expect("jacobian.rank", 1, P),
        Expect("jacobian.image", [[1, 0]], P, op="span"),
        Expect("decomposition.p", 2, P),
        Expect("decomposition.bases.0", [[1, 0]], P, op="span"),
        Expect("decomposition.bases.1", [[0, 1]], P, op="span"),
        Expect("factor_operators.0.matrix", [[1, 1], [-1, 1]], P),
        Expect("factor_operators.0.surjective", True, P),
        Expect("factor_operators.0.kernel_criterion", True, D),
        Expect("factor_operators.1.matrix", [[1, 1], [1, 1]], P),
        Expect("factor_operators.1.rank", 1, P),
        Expect("hp.count", 0, P),
        Expect("strong_regularity.empty", True, D),
    )),
    GoldenCase("eq20a-analyze", ("analyze", "--builtin", "eq20a_F"), (
        Expect("point_residual", 1e-14, P, op="le"),
        Expect("jacobian.matrix", [[0, 0, 0], [0, 0, 0]], P),
        Expect("jacobian.singular", True, P),
        Expect("jacobian.rank", 0, P),
        Expect("decomposition.p", 2, D),
        Expect("decomposition.dims", [0, 2], D),
        Expect("hp.directions", [[S2, S2, 0], [-S2, -S2, 0], [S2, -S2, 0], [-S2, S2, 0]], P, tol=1e-6, op="dirset"),
        Expect("factor_operators.0.rank", 2, P),
        Expect("factor_operators.0.surjective", True, P),
        Expect("strong_regularity.estimate", 1e6, D, op="le"),
    )),
    GoldenCase("reddien-analyze", ("analyze", "--builtin", "reddien"), (
        Expect("decomposition.p", 2, D),
        Expect("jacobian.matrix", [[1, 0], [-2, 0]], D),
        Expect("decomposition.bases.0", [[1, -2]], P, op="span"),
        Expect("factor_operators.0.matrix", [[1.8, 2.4], [-1.6, 1.2]], D),
        Expect("hp.count", 0, D),
    )),
    GoldenCase("ex1-2factor-matrix", ("pfnewton", "--builtin", "ex1", "--h=1,-1", "--x0=0.05,0.03"), (
        Expect("chain.pbar.0", [[0, 0], [0, 1]], P),
        Expect("chain.factor_matrix", [[1, 1], [-1, 1]], P),
        Expect("chain.iteration_matrix_at_root", [[1, 1], [-1, 1]], P),
        Expect("solve.status", "converged", P),
        Expect("solve.x", [0, 0], P),
        Expect("solve.iterations", 8, P, op="le"),
        # c* = max over the 0.05-ball of ||J(x)^{-1}|| / 2 for J = [[1,1],[x2-1,x1+1]]
        Expect("solve.ratios.c", 0.38, D, op="le"),
    )),
    GoldenCase("phi3-factor-matrix", ("pfnewton", "--builtin", "phi3"), (
        Expect("chain.pbar.0", [[0, 0], [0, 1]], P),
        Expect("chain.pbar.1", [[0.5, -0.5], [-0.5, 0.5]], P),
        Expect("chain.combined.0", [[0.5, -0.5], [-0.5, 1.5]], P),
        Expect("chain.combined.1", [[0, -0.5], [0, 0.5]], P),
        Expect("chain.factor_matrix", [[2, -11], [2, 11]], P),
        Expect("chain.nonsingular", True, P),
        Expect("chain.modified_residual_at_root", [0, 0], P),
        Expect("solve.status", "converged", P),
        Expect("solve.ratios.c", 10.0, P, op="le"),
    )),
    GoldenCase("ex1-newton-singular", ("newton", "--builtin", "ex1", "--x0=0.3,0.3"), (
        Expect("solve.status", "singular-matrix", P),
        Expect("solve.iterations", 0, P),
    ), exit_code=3),
    GoldenCase("ex1-newton-rejection", ("newton", "--builtin", "ex1", "--x0=1e-5+1e-15,1e-5"), (
        Expect("first_step.x1", [-1e5 - 1e-5, 1e5 + 1e-5], P, tol=1e-6, op="rel"),
        Expect("first_step.norm", math.sqrt(2) * (1e5 + 1e-5), P, tol=1e-6, op="rel"),
    )),
    GoldenCase("eq20a-multipliers", ("optcheck", "--builtin", "eq20a"), (
        Expect("certificate.lambda", [1, -1], P, tol=1e-9),
        Expect("certificate.residual", 1e-10, P, op="le"),
        Expect("classical.residual", 0.5, P, op="ge"),
        Expect("certification.verdict", "necessary+sufficient", P),
    )),
    GoldenCase("eq20a-sufficiency", ("optcheck", "--builtin", "eq20a"), (
        Expect("certificate.value", 4.0 / 3.0, P, tol=1e-9),
    )),
    GoldenCase("ex9-modlag", ("conlag", "--builtin", "ex_9"), (
        Expect("system.G", ["-0.5*lam1^2 + 2*x1 + 4*x2", "-0.5*lam2^2 + 4*x1 + 2*x2", "-x1*lam1", "-x2*lam2"], P),
        Expect("system.G_at_point", [0, 0, 0, 0], P),
        Expect("classification.weakly_active", [1, 2], P),
        Expect("h", [0, 0, 1, 1], P),
        Expect("lemma.phi_prime", [[2, 4, -1, 0], [4, 2, 0, -1], [-1, 0, 0, 0], [0, -1, 0, 0]], D),
        Expect("lemma.determinant", 1.0, D),
        Expect("lemma.nonsingular", True, D),
        Expect("lemma.blocks_match", True, D),
        Expect("lemma.cqc", True, D),
        Expect("lemma.cone_positive", True, D),
        Expect("solve.status", "converged", P),
        Expect("solve.x", [0, 0, 0, 0], P),
    )),
    GoldenCase("eq20a-tangent", ("tangent", "--builtin", "eq20a", "--h=0,0,1"), (
        Expect("cone.directions", [[S2, S2, 0], [-S2, -S2, 0], [S2, -S2, 0], [-S2, S2, 0]], P, tol=1e-6, op="dirset"),
        Expect("traces.0.confirmed", True, D),
        Expect("traces.1.confirmed", True, D),
        Expect("traces.2.confirmed", True, D),
        Expect("traces.3.confirmed", True, D),
        Expect("traces.4.confirmed", False, D),
        Expect("distance.stable1", True, D),
        Expect("distance.stable2", True, D),
    )),
    GoldenCase("planar-cone", ("tangent", "--builtin", "planar"), (
        Expect("cone.directions", [[S2, S2], [-S2, -S2], [S2, -S2], [-S2, S2]], P, tol=1e-6, op="dirset"),
    )),
    GoldenCase("ex1-constraints-vacuous", ("optcheck", "--problem", "tests/goldens/problems/ex1_optimality.json"), (
        Expect("certification.verdict", "vacuous", P),
        Expect("certification.certificates", 0, P, op="len"),
    )),
    GoldenCase("affine-regular-cone", ("tangent", "--problem", "tests/goldens/problems/affine_line.json"), (
        Expect("decomposition.p", 1, T),
        Expect("cone.directions", [[2, -1], [-2, 1]], P, tol=1e-6, op="dirset"),
        Expect("traces.0.confirmed", True, T),
        Expect("traces.0.ratios", [0.0] * 18, T),
        # distance from xi to the line x1 + 2 x2 = 0 is |F(xi)| / sqrt(5)
        Expect("distance.delta1", [1 / math.sqrt(5)] * 4, D, tol=1e-12),
    )),
    GoldenCase("registry", ("list",), (
        Expect("problems", 6, T, op="len"),
        Expect("problems.0.name", "ex1", P),
        Expect("problems.0.point", [0, 0], P),
        Expect("problems.0.h", [1, -1], P),
        Expect("problems.2.name", "phi3", P),
        Expect("problems.2.point", [0, 0], P),
        Expect("problems.2.h", [1, 1], P),
        Expect("problems.2.p", 3, P),
    )),
)


def run_case(case: GoldenCase) -> GoldenResult:
    report, code = run(list(case.argv))
    plain = rpt.to_plain(rpt.payload(report))
    failures = []
    if code != case.exit_code:
        failures.append(f"exit code {code} != {case.exit_code}")
    for e in case.expectations:
        try:
            actual = lookup(plain, e.path)
        except (KeyError, IndexError, TypeError):
            failures.append(f"{e.path} {e.provenance}: missing from report")
            continue
        msg = _check(actual, e)
        if msg is not None:
            failures.append(f"{e.path} {e.provenance}: {msg}")
    return GoldenResult(case.id, not failures, failures, report)


def run_goldens(cases=GOLDEN_CASES) -> list:
    """Execute every case through the CLI pipeline and compare."""
    return [run_case(c) for c in cases]


def write_goldens(directory, cases=GOLDEN_CASES):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for case in cases:
        report, _ = run(list(case.argv))
        (out / f"{case.id}.json").write_bytes(rpt.payload_bytes(report))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m pregularity.goldens")
    parser.add_argument("--write", metavar="DIR", help="regenerate the stored golden reports")
    args = parser.parse_args(argv)
    if args.write:
        write_goldens(args.write)
        return 0
    failed = 0
    for res in run_goldens():
        print(f"{'PASS' if res.passed else 'FAIL'} {res.id}")
        for f in res.failures:
            print(f"    {f}")
        failed += not res.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
