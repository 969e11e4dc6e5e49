"""p-factor Lagrange certificates for ``min phi(x)`` subject to ``F(x) = 0``.

For a direction ``h`` in ``H_p(x*)`` along which ``F`` is p-regular, the
first-order condition asks for ``lambda(h)`` with
``phi'(x*) + Psi_p(h)^T lambda = 0``.  The second-order test evaluates the
weighted Lagrangian

    Lbar_p(x, lambda, h) = phi(x) + < sum_k 2/(k(k+1)) F_k^(k-1)(x)[h]^(k-1), lambda >

and asks for ``h^T Lbar_xx h >= alpha ||h||^2`` over ``H_p``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError
from .expr import Polynomial
from .linalg import least_squares
from .mapping import MappingModel
from .pfactor import Decomposition, factor_operator, hp_membership, hp_sample

NECESSARY_ONLY = "necessary-only"
SUFFICIENT = "necessary+sufficient"
FAILS_NECESSARY = "fails-necessary"
VACUOUS = "vacuous"


@dataclass(frozen=True, eq=False)
class EqualityProblem:
    objective: MappingModel  # m = 1
    constraints: MappingModel | None  # None for an unconstrained problem
    x_star: np.ndarray
    feasibility_tol: float = 1e-8

    def __post_init__(self):
        if self.objective.m != 1:
            raise DimensionError("objective must be scalar")
        x = np.asarray(self.x_star, dtype=float).ravel()
        if x.size != self.objective.n:
            raise DimensionError(f"point has {x.size} entries, expected {self.objective.n}")
        if self.constraints is not None:
            if self.constraints.n != self.objective.n:
                raise DimensionError("objective and constraints use different variable counts")
            if np.linalg.norm(self.constraints.evaluate(x)) > self.feasibility_tol:
                raise DimensionError("candidate point is not feasible")
        object.__setattr__(self, "x_star", x)

    @classmethod
    def from_strings(cls, objective: str, equations, names, x_star, **kw):
        obj = MappingModel.from_strings([objective], names)
        cons = MappingModel.from_strings(list(equations), names) if equations else None
        return cls(obj, cons, np.asarray(x_star, dtype=float), **kw)

    @property
    def n(self):
        return self.objective.n

    def gradient(self) -> np.ndarray:
        return self.objective.jacobian(self.x_star)[0]

    def hessian(self) -> np.ndarray:
        return self.objective.tensor(2, self.x_star)[0]


@dataclass(frozen=True, eq=False)
class LagrangeCertificate:
    h: np.ndarray
    lam: np.ndarray
    residual: float  # ||phi'(x*) + Psi_p(h)^T lam||
    lagrangian_gradient: np.ndarray  # gradient of the assembled p-factor Lagrangian at x*
    necessary: bool
    in_hp: bool
    regular: bool
    value: float | None = None  # h^T Lbar_xx h
    ratio: float | None = None  # value / ||h||^2
    sufficient: bool | None = None


def _weighted_lagrangian(P: EqualityProblem, D: Decomposition, lam, h, weights) -> Polynomial:
    """``phi + sum_k w_k <P_{Y_k} F^(k-1)(x)[h]^(k-1), lam>`` as a polynomial in x."""
    L = P.objective.system.components[0]
    comps = P.constraints.system.components
    for k, (Pk, w) in enumerate(zip(D.projectors, weights), start=1):
        mu = Pk.T @ lam
        for i, c in enumerate(comps):
            if mu[i] != 0.0 and w != 0.0:
                L = L + c.directional(h, k - 1) * float(w * mu[i])
    return L


def _gradient(poly: Polynomial, x) -> np.ndarray:
    return np.array([poly.diff(i).evaluate(x) for i in range(poly.nvars)])


def _hessian(poly: Polynomial, x) -> np.ndarray:
    n = poly.nvars
    H = np.empty((n, n))
    for i in range(n):
        di = poly.diff(i)
        for j in range(n):
            H[i, j] = di.diff(j).evaluate(x)
    return H


def lagrangian_weights(p: int, weighted: bool) -> list:
    """``1`` for every band, or ``2/(k(k+1))`` for the second-order Lagrangian."""
    return [2.0 / (k * (k + 1)) if weighted else 1.0 for k in range(1, p + 1)]


def classical_multiplier(P: EqualityProblem):
    """Classical ``F'(x*)^T lam = -phi'(x*)`` solve; returns ``(lam, residual)``."""
    J = P.constraints.jacobian(P.x_star)
    return least_squares(J.T, -P.gradient())


def solve_multiplier(P: EqualityProblem, D: Decomposition, h, tol: float = 1e-10,
                     membership_tol: float = 1e-8) -> LagrangeCertificate:
    """Minimal-norm ``lambda(h)`` solving ``Psi_p(h)^T lambda = -phi'(x*)``.

    The reported residual is the gradient norm of the independently assembled
    p-factor Lagrangian ``phi(x) + <sum_k F_k^(k-1)(x)[h]^(k-1), lambda>``.
    """
    h = np.asarray(h, dtype=float).ravel()
    op = factor_operator(D, h)
    in_hp = hp_membership(D, h, membership_tol)
    if not in_hp:
        warnings.warn(f"direction {h.tolist()} is not in H_p(x*)", RuntimeWarning, stacklevel=2)
    if not op.surjective:
        warnings.warn(f"mapping is not p-regular along {h.tolist()}", RuntimeWarning, stacklevel=2)
    lam, _ = least_squares(op.matrix.T, -P.gradient())
    L = _weighted_lagrangian(P, D, lam, h, lagrangian_weights(D.p, weighted=False))
    grad = _gradient(L, P.x_star)
    res = float(np.linalg.norm(grad))
    return LagrangeCertificate(h, lam, res, grad, res <= tol, in_hp, op.surjective)


def second_order_check(P: EqualityProblem, D: Decomposition | None, cert: LagrangeCertificate,
                       alpha_floor: float = 1e-8) -> LagrangeCertificate:
    """Attach ``v(h) = h^T Lbar_xx(x*, lambda(h), h) h`` and the per-direction verdict."""
    h = cert.h
    if D is None:
        H = P.hessian()
    else:
        L = _weighted_lagrangian(P, D, cert.lam, h, lagrangian_weights(D.p, weighted=True))
        H = _hessian(L, P.x_star)
    v = float(h @ H @ h)
    ratio = v / float(h @ h)
    return replace(cert, value=v, ratio=ratio, sufficient=ratio >= alpha_floor)


@dataclass(frozen=True, eq=False)
class Certification:
    verdict: str
    certificates: tuple
    alpha: float | None  # min v(h)/||h||^2 over the sampled directions
    sufficiency_basis: str = "sampled"


def certify(P: EqualityProblem, D: Decomposition | None, sample_budget: int = 200,
            seed: int = 0, tol: float = 1e-10, alpha_floor: float = 1e-8,
            directions=None) -> Certification:
    """Run both checks over sampled ``H_p`` directions and aggregate.

    Without constraints every unit direction is admissible and the
    directions are seeded sphere samples.  Sufficiency is only ever claimed
    for the sampled set.
    """
    if directions is not None:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    elif D is None:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((min(sample_budget, 64), P.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    else:
        dirs = hp_sample(D, budget=sample_budget, seed=seed)
    if not len(dirs):
        return Certification(VACUOUS, (), None)
    certs = []
    for h in dirs:
        if D is None:
            g = P.gradient()
            res = float(np.linalg.norm(g))
            cert = LagrangeCertificate(h, np.zeros(0), res, g, res <= tol, True, True)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cert = solve_multiplier(P, D, h, tol)
        if cert.necessary:
            cert = second_order_check(P, D, cert, alpha_floor)
        certs.append(cert)
    if not all(c.necessary for c in certs):
        return Certification(FAILS_NECESSARY, tuple(certs), None)
    alpha = min(c.ratio for c in certs)
    verdict = SUFFICIENT if all(c.sufficient for c in certs) else NECESSARY_ONLY
    return Certification(verdict, tuple(certs), alpha)
