"""Dense linear algebra with explicit, reproducible rank decisions.

All complements are orthogonal complements and all norms are Euclidean
(operator 2-norm for matrices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

EPS = np.finfo(float).eps


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of R^ambient with an orthonormal basis (ambient x dim)."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError("basis must be a 2-D array (ambient x dim)")
        object.__setattr__(self, "basis", _frozen(b))

    @classmethod
    def zero(cls, ambient):
        return cls(np.zeros((ambient, 0)))

    @classmethod
    def full(cls, ambient):
        return cls(np.eye(ambient))

    @property
    def ambient(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace.full(self.ambient)
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(u[:, self.dim:])

    def contains(self, v, tol=1e-10) -> bool:
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v - self.projector() @ v) <= tol * max(1.0, np.linalg.norm(v))

    def __repr__(self):
        return f"Subspace(ambient={self.ambient}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class Projector:
    matrix: np.ndarray
    target: Subspace

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def default_tolerance(shape, sigma_max) -> float:
    """``max(m, k) * eps * sigma_max``."""
    return max(shape) * EPS * sigma_max if len(shape) and max(shape) else 0.0


def rank_tolerance(A, tol=None, rtol=None, scale=None) -> float:
    """Absolute singular-value cutoff.

    ``tol`` wins when given.  Otherwise the cutoff is relative to ``scale``
    (default: the largest singular value of ``A``) with factor ``rtol``
    (default ``max(m, k) * eps``).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if tol is not None:
        return float(tol)
    if scale is None:
        scale = np.linalg.norm(A, 2) if A.size else 0.0
    if rtol is None:
        return default_tolerance(A.shape, scale)
    return float(rtol) * scale


def singular_values(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not A.size:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def matrix_rank(A, tol=None, rtol=None) -> int:
    s = singular_values(A)
    if not s.size:
        return 0
    cutoff = rank_tolerance(A, tol, rtol, scale=s[0])
    return int(np.sum(s > cutoff))


def column_space(A, tol=None, rtol=None, scale=None) -> Subspace:
    """Span of the columns of ``A`` (singular values above the cutoff)."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    m = A.shape[0]
    if A.shape[1] == 0:
        return Subspace.zero(m)
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    cutoff = rank_tolerance(A, tol, rtol, scale=s[0] if scale is None else scale)
    r = int(np.sum(s > cutoff))
    return Subspace(u[:, :r])


def null_space(A, tol=None, rtol=None) -> Subspace:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return Subspace.full(n)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    cutoff = rank_tolerance(A, tol, rtol, scale=s[0] if s.size else 0.0)
    r = int(np.sum(s > cutoff))
    return Subspace(vt[r:].T)


def orthoprojector(S: Subspace, onto_complement: bool = False) -> Projector:
    P = S.projector()
    if onto_complement:
        return Projector(np.eye(S.ambient) - P, S.complement())
    return Projector(P, S)


def direct_sum(*spaces: Subspace) -> Subspace:
    if not spaces:
        raise ValueError("direct_sum needs at least one subspace")
    return column_space(np.hstack([s.basis for s in spaces]), rtol=1e-10)


def right_inverse_norm(A, tol=None, rtol=None) -> float:
    """Norm of the minimal-norm right inverse, ``1 / sigma_m``.

    Returns ``math.inf`` when ``A`` is not surjective under the rank cutoff.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m = A.shape[0]
    if m == 0:
        return 0.0
    s = singular_values(A)
    if s.size < m:
        return math.inf
    cutoff = rank_tolerance(A, tol, rtol, scale=s[0])
    if s[m - 1] <= cutoff:
        return math.inf
    return float(1.0 / s[m - 1])


def least_squares(A, b):
    """Minimal-norm least-squares solution and the residual norm ``||Ax - b||``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] == 0:
        return np.zeros(0), float(np.linalg.norm(b))
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    return x, float(np.linalg.norm(A @ x - b))


def principal_angles(S1: Subspace, S2: Subspace) -> np.ndarray:
    if S1.dim == 0 or S2.dim == 0:
        return np.zeros(0)
    return subspace_angles(S1.basis, S2.basis)


def same_subspace(S1: Subspace, S2: Subspace, tol=1e-8) -> bool:
    if S1.dim != S2.dim or S1.ambient != S2.ambient:
        return False
    angles = principal_angles(S1, S2)
    return bool(np.all(angles <= tol))


def gauss_newton(residual, jacobian, x0, *, max_iter=50, tol=0.0, max_step=None,
                 backtrack=12):
    """Damped Gauss-Newton with minimal-norm steps.

    Each step is halved until the residual norm decreases.  Returns the final
    point, its residual norm and the number of iterations used.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(residual(x), dtype=float)
    rn = float(np.linalg.norm(r))
    it = 0
    for it in range(1, max_iter + 1):
        if rn <= tol:
            return x, rn, it - 1
        J = np.atleast_2d(jacobian(x))
        step = -np.linalg.lstsq(J, r, rcond=None)[0]
        sn = np.linalg.norm(step)
        if max_step is not None and sn > max_step:
            step *= max_step / sn
        lam = 1.0
        improved = False
        for _ in range(backtrack):
            trial = x + lam * step
            rt = np.asarray(residual(trial), dtype=float)
            rtn = float(np.linalg.norm(rt))
            if np.isfinite(rtn) and rtn < rn:
                x, r, rn = trial, rt, rtn
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    return x, rn, it
