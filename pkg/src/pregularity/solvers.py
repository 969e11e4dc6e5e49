"""Classical Newton and p-factor Newton iterations with per-step diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DimensionError, TooFewIterates
from .linalg import rank_tolerance
from .mapping import MappingModel
from .pfactor import NewtonChain

CONVERGED = "converged"
DIVERGED = "diverged"
SINGULAR = "singular-matrix"
MAX_ITER = "max-iterations"

DIVERGENCE_NORM = 1e150
STABLE_ERROR = 1e-8  # below this, ratios are roundoff dominated


@dataclass(frozen=True)
class IterationRecord:
    index: int
    x: np.ndarray
    residual: float
    step_norm: float | None  # norm of the step that produced x; None at k = 0
    error: float | None  # distance to the declared root
    condition: float | None  # 2-norm condition number of the iteration matrix


@dataclass(frozen=True)
class SolveReport:
    status: str
    history: tuple
    x: np.ndarray
    method: str
    tol: float
    root: np.ndarray | None = None
    rate_constant: float | None = None

    @property
    def converged(self):
        return self.status == CONVERGED

    @property
    def iterations(self):
        return self.history[-1].index if self.history else 0

    def iterates(self):
        return [r.x for r in self.history]


def _fit_rate(errors) -> float | None:
    """``exp(mean(log e_{k+1} - 2 log e_k))`` over stabilized, nonzero pairs."""
    logs = [
        math.log(b) - 2.0 * math.log(a)
        for a, b in zip(errors, errors[1:])
        if a is not None and b is not None and a >= STABLE_ERROR and b > 0
    ]
    return math.exp(sum(logs) / len(logs)) if logs else None


def newton_loop(matrix: Callable, residual: Callable, x0, *, tol: float, max_iter: int,
                root=None, require_small_step: bool = False, rank_tol=None,
                method: str = "newton") -> SolveReport:
    """Iterate ``x <- x - A(x)^{-1} r(x)``.

    The rank decision and condition number come from an SVD of ``A``; the
    step itself is a partial-pivoted LU solve.  With ``require_small_step``
    convergence also needs the last step to be within ``tol`` (or an exactly
    zero residual at the start).
    """
    x = np.array(x0, dtype=float).ravel()
    root = None if root is None else np.asarray(root, dtype=float).ravel()
    history = []
    prev_step = None
    status = MAX_ITER
    for k in range(max_iter + 1):
        r = np.asarray(residual(x), dtype=float)
        rn = float(np.linalg.norm(r))
        err = None if root is None else float(np.linalg.norm(x - root))
        if not np.isfinite(rn) or not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            history.append(IterationRecord(k, x, rn, prev_step, err, None))
            status = DIVERGED
            break
        A = np.asarray(matrix(x), dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != x.size:
            raise DimensionError(f"iteration matrix has shape {A.shape}, expected square of size {x.size}")
        s = np.linalg.svd(A, compute_uv=False)
        cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
        history.append(IterationRecord(k, x, rn, prev_step, err, cond))
        small_step = (prev_step <= tol) if prev_step is not None else rn == 0.0
        if rn <= tol and (small_step or not require_small_step):
            status = CONVERGED
            break
        if k == max_iter:
            break
        if int(np.sum(s > rank_tolerance(A, tol=rank_tol, scale=s[0]))) < A.shape[0]:
            status = SINGULAR
            break
        step = lu_solve(lu_factor(A, check_finite=False), r, check_finite=False)
        prev_step = float(np.linalg.norm(step))
        x = x - step
    rate = _fit_rate([h.error for h in history]) if root is not None else None
    return SolveReport(status, tuple(history), history[-1].x, method, tol, root, rate)


def classical_newton(model: MappingModel, x0, tol: float = 1e-12, max_iter: int = 50,
                     root=None, rank_tol=None) -> SolveReport:
    """``x_{k+1} = x_k - F'(x_k)^{-1} F(x_k)``; stops when ``||F(x_k)|| <= tol``."""
    if model.m != model.n:
        raise DimensionError(f"classical Newton needs a square system, got m={model.m}, n={model.n}")
    return newton_loop(model.jacobian, model.evaluate, x0, tol=tol, max_iter=max_iter,
                       root=root, rank_tol=rank_tol, method="classical-newton")


def pfactor_newton(model: MappingModel, x0, chain: NewtonChain, tol: float = 1e-12,
                   max_iter: int = 50, root=None, rank_tol=None) -> SolveReport:
    """p-factor Newton iteration with the chain's projectors and ``h`` frozen at ``x*``.

    Each step solves with ``F'(x_k) + sum_j P_j F^(j+1)(x_k)[h]^j`` against
    the modified residual ``F(x_k) + sum_j P_j F^(j)(x_k)[h]^j``.
    """
    if model.m != model.n:
        raise DimensionError(f"p-factor Newton needs a square system, got m={model.m}, n={model.n}")
    return newton_loop(
        lambda x: chain.iteration_matrix(model, x),
        lambda x: chain.modified_residual(model, x),
        x0, tol=tol, max_iter=max_iter, root=root, require_small_step=True,
        rank_tol=rank_tol, method=f"{chain.p}-factor-newton",
    )


@dataclass(frozen=True)
class ConvergenceRatios:
    ratios: tuple  # e_{k+1} / e_k^2 for every pair with e_k > 0
    stabilized: tuple  # the subset with e_k >= 1e-8
    c: float | None  # max of the stabilized ratios

    def bounded_by(self, bound: float) -> bool:
        return all(r <= bound for r in self.stabilized)


def convergence_ratio(report_or_iterates, root) -> ConvergenceRatios:
    """Per-step quadratic ratios ``||e_{k+1}|| / ||e_k||^2`` and their stabilized max."""
    if isinstance(report_or_iterates, SolveReport):
        iterates = report_or_iterates.iterates()
    else:
        iterates = list(report_or_iterates)
    if len(iterates) < 3:
        raise TooFewIterates(f"need at least 3 iterates, got {len(iterates)}")
    root = np.asarray(root, dtype=float).ravel()
    errs = [float(np.linalg.norm(np.asarray(x, dtype=float).ravel() - root)) for x in iterates]
    ratios, stable = [], []
    for a, b in zip(errs, errs[1:]):
        if a == 0.0:
            continue
        q = b / a**2
        ratios.append(q)
        if a >= STABLE_ERROR:
            stable.append(q)
    return ConvergenceRatios(tuple(ratios), tuple(stable), max(stable) if stable else None)
