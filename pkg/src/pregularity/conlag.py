"""Modified-Lagrangian treatment of ``min phi(x)`` subject to ``g_i(x) <= 0``.

With ``L_E(x, lam) = phi(x) + 1/2 sum_i lam_i^2 g_i(x)`` the KKT conditions
become the square system

    G(x, lam) = ( grad phi(x) + 1/2 sum_i lam_i^2 grad g_i(x) ;  D(lam) g(x) ) = 0,

which is singular at points with weakly active constraints (``g_i = 0`` and
``lam_i = 0``).  The 2-factor method runs Newton on
``Phi(w) = G(w) + G'(w) h`` where ``h`` has ones at the weakly active
multiplier positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, NondegenerateKKT, ProblemDefinitionError
from .expr import PolySystem, Polynomial, parse_expression
from .linalg import matrix_rank, null_space
from .mapping import MappingModel
from .solvers import SolveReport, newton_loop


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """Objective and constraints over named variables, constraints as ``g_i <= 0``."""

    names: tuple
    objective: Polynomial
    constraints: tuple  # Polynomials g_i with g_i(x) <= 0

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.constraints:
            raise ProblemDefinitionError("a constrained problem needs at least one constraint")

    @classmethod
    def from_strings(cls, objective: str, constraints, names):
        """``constraints`` holds strings (read as ``expr <= 0``) or ``(expr, sense)`` pairs."""
        names = list(names)
        gs = []
        for c in constraints:
            expr, sense = (c, "<=") if isinstance(c, str) else c
            poly = parse_expression(expr, names).to_polynomial(len(names))
            if sense == ">=":
                poly = -poly
            elif sense != "<=":
                raise ProblemDefinitionError(f"constraint sense must be '<=' or '>=', got {sense!r}")
            gs.append(poly)
        obj = parse_expression(objective, names).to_polynomial(len(names))
        return cls(tuple(names), obj, tuple(gs))

    @property
    def n(self):
        return len(self.names)

    @property
    def m(self):
        return len(self.constraints)

    def g(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return np.array([c.evaluate(x) for c in self.constraints])

    def g_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        return np.array([[c.diff(j).evaluate(x) for j in range(self.n)] for c in self.constraints])

    def lagrangian_hessian(self, x, lam) -> np.ndarray:
        """``grad^2_xx L_E(x, lam)``."""
        x = np.asarray(x, dtype=float).ravel()
        lam = np.asarray(lam, dtype=float).ravel()
        L = self.objective
        for li, c in zip(lam, self.constraints):
            if li != 0.0:
                L = L + c * (0.5 * float(li) ** 2)
        return np.array([[L.diff(i).diff(j).evaluate(x) for j in range(self.n)] for i in range(self.n)])


@dataclass(frozen=True)
class KKTPoint:
    x: np.ndarray
    lam: np.ndarray
    active: tuple
    weak: tuple
    strong: tuple

    @property
    def w(self):
        return np.concatenate([self.x, self.lam])


@dataclass(frozen=True, eq=False)
class ModLagSystem:
    problem: ConstrainedProblem
    model: MappingModel  # G over (x, lam)

    @property
    def n(self):
        return self.problem.n

    @property
    def m(self):
        return self.problem.m

    def phi_map(self, w, h) -> np.ndarray:
        """``Phi(w) = G(w) + G'(w) h``."""
        return self.model.evaluate(w) + self.model.jacobian(w) @ h

    def phi_jacobian(self, w, h) -> np.ndarray:
        """``Phi'(w) = G'(w) + G''(w) h``."""
        return self.model.jacobian(w) + self.model.contract(2, w, h, 1)


def _multiplier_names(names, m):
    base, taken = "lam", set(names)
    while any(f"{base}{i}" in taken for i in range(1, m + 1)):
        base = "_" + base
    return [f"{base}{i}" for i in range(1, m + 1)]


def build_system(P: ConstrainedProblem, p_max: int = 3) -> ModLagSystem:
    """Assemble ``G(x, lam)`` symbolically over the ``n + m`` variables ``(x, lam)``."""
    n, m = P.n, P.m
    N = n + m
    xs = list(range(n))
    lam = [Polynomial.variable(N, n + i) for i in range(m)]
    phi = P.objective.embed(N, xs)
    gs = [g.embed(N, xs) for g in P.constraints]
    half = Fraction(1, 2)
    comps = []
    for j in range(n):
        comp = phi.diff(j)
        for li, g in zip(lam, gs):
            comp = comp + li * li * g.diff(j) * half
        comps.append(comp)
    for li, g in zip(lam, gs):
        comps.append(li * g)
    names = list(P.names) + _multiplier_names(P.names, m)
    return ModLagSystem(P, MappingModel(PolySystem(tuple(names), tuple(comps)), p_max))


def classify(S: ModLagSystem, x, lam, tol: float = 1e-8) -> KKTPoint:
    """Active, weakly active and strongly active index sets (0-based)."""
    x = np.asarray(x, dtype=float).ravel()
    lam = np.asarray(lam, dtype=float).ravel()
    if x.size != S.n or lam.size != S.m:
        raise DimensionError(f"expected x in R^{S.n} and lam in R^{S.m}")
    g = S.problem.g(x)
    if np.any(g > tol):
        raise ProblemDefinitionError(f"candidate violates constraints: g = {g.tolist()}")
    if np.any(lam < -tol):
        raise ProblemDefinitionError(f"candidate has negative multipliers: {lam.tolist()}")
    active = tuple(int(j) for j in np.flatnonzero(np.abs(g) <= tol))
    weak = tuple(j for j in active if abs(lam[j]) <= tol)
    strong = tuple(j for j in active if j not in weak)
    return KKTPoint(x, lam, active, weak, strong)


def build_h(S: ModLagSystem, kkt: KKTPoint) -> np.ndarray:
    """``h = (0_n, indicator of weakly active multipliers)``.

    Written directly in the original index order, which is the same vector
    as reordering weakly active indices to the front, using ``(0, 1_s, 0)``
    and permuting back.
    """
    if not kkt.weak:
        raise NondegenerateKKT("no weakly active constraints; Newton on G applies directly")
    h = np.zeros(S.n + S.m)
    h[[S.n + j for j in kkt.weak]] = 1.0
    return h


def classify_and_build_h(S: ModLagSystem, x, lam, tol: float = 1e-8):
    kkt = classify(S, x, lam, tol)
    return kkt, build_h(S, kkt)


def two_factor_solve(S: ModLagSystem, w0, h, tol: float = 1e-12, max_iter: int = 50,
                     root=None, rank_tol=None) -> SolveReport:
    """``w_{k+1} = w_k - [G'(w_k) + G''(w_k) h]^{-1} (G(w_k) + G'(w_k) h)``.

    Multiplier signs are not enforced while iterating.  With ``h = 0`` this is
    classical Newton on ``G`` with the classical stopping rule.
    """
    h = np.asarray(h, dtype=float).ravel()
    if h.size != S.n + S.m:
        raise DimensionError(f"h has {h.size} entries, expected {S.n + S.m}")
    return newton_loop(
        lambda w: S.phi_jacobian(w, h), lambda w: S.phi_map(w, h), w0, tol=tol,
        max_iter=max_iter, root=root, require_small_step=bool(np.any(h)),
        rank_tol=rank_tol, method="2-factor-newton" if np.any(h) else "classical-newton",
    )


@dataclass(frozen=True, eq=False)
class LemmaCertificate:
    cqc: bool
    cone_positive: bool
    cone_alpha: float  # min z^T V z / ||z||^2 over sampled cone directions
    cone_samples: int
    phi_prime: np.ndarray
    rank: int
    determinant: float
    nonsingular: bool
    V: np.ndarray
    Q: np.ndarray
    D_N: np.ndarray
    block_matrix: np.ndarray  # the lemma's layout assembled from V, Q, D_N
    permutation: tuple  # w-index order matching the block layout
    blocks_match: bool


def _cone_directions(A: np.ndarray, n: int, count: int, rng) -> np.ndarray:
    """Directions ``z`` with ``A z <= 0``: sampled points plus generating rays."""
    if A.shape[0] == 0:
        Z = rng.standard_normal((count, n))
        return Z / np.linalg.norm(Z, axis=1, keepdims=True)
    if matrix_rank(A) == A.shape[0]:
        # {A z <= 0} = Ker A + cone(columns of -A^+)
        K = null_space(A).basis
        R = -np.linalg.pinv(A)
        y = np.abs(rng.standard_normal((count, A.shape[0])))
        k = rng.standard_normal((count, K.shape[1]))
        Z = y @ R.T + k @ K.T
        rays = [R[:, i] for i in range(R.shape[1])] + [s * K[:, i] for i in range(K.shape[1]) for s in (1, -1)]
        Z = np.vstack([Z] + [np.atleast_2d(r) for r in rays]) if rays else Z
    else:
        Z = rng.standard_normal((20 * count, n))
        Z = Z[np.all(Z @ A.T <= 0, axis=1)][:count]
    norms = np.linalg.norm(Z, axis=1)
    Z = Z[norms > 0]
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def lemma_certificate(S: ModLagSystem, kkt: KKTPoint, h=None, cone_samples: int = 1000,
                      seed: int = 0, tol: float = 1e-10) -> LemmaCertificate:
    """Hypotheses and conclusion of the nonsingularity lemma at ``(x*, lam*)``.

    Checks linear independence of the active gradients, positivity of the
    Hessian of ``L_E`` over the linearized cone ``{z : <grad g_j, z> <= 0, j active}``
    by sampling, and the rank of ``Phi'(w*)``.  Also assembles the block
    matrix ``[[V, Q, 0], [Q^T, 0, 0], [0, 0, D_N]]`` and compares it with
    ``Phi'(w*)`` after permuting ``w`` to ``(x, weak, strong, inactive)``.
    """
    P = S.problem
    n, m = S.n, S.m
    x, lam = kkt.x, kkt.lam
    if h is None:
        h = build_h(S, kkt)
    grads = P.g_jacobian(x)
    A = grads[list(kkt.active)] if kkt.active else np.zeros((0, n))
    cqc = matrix_rank(A) == A.shape[0] if A.shape[0] else True
    V = P.lagrangian_hessian(x, lam)
    rng = np.random.default_rng(seed)
    Z = _cone_directions(A, n, cone_samples, rng)
    quad = np.einsum("bi,ij,bj->b", Z, V, Z)
    alpha = float(quad.min()) if quad.size else float("nan")
    W = np.concatenate([x, lam])
    Phi = S.phi_jacobian(W, h)
    rank = matrix_rank(Phi)
    det = float(np.linalg.det(Phi))
    inactive = [j for j in range(m) if j not in kkt.active]
    Q = np.column_stack(
        [grads[j] for j in kkt.weak] + [lam[j] * grads[j] for j in kkt.strong]
    ) if kkt.active else np.zeros((n, 0))
    g = P.g(x)
    D_N = np.diag(g[inactive]) if inactive else np.zeros((0, 0))
    q, l = Q.shape[1], len(inactive)
    block = np.zeros((n + q + l, n + q + l))
    block[:n, :n] = V
    block[:n, n:n + q] = Q
    block[n:n + q, :n] = Q.T
    block[n + q:, n + q:] = D_N
    perm = tuple(range(n)) + tuple(n + j for j in list(kkt.weak) + list(kkt.strong) + inactive)
    permuted = Phi[np.ix_(perm, perm)]
    match = bool(np.allclose(permuted, block, rtol=0.0, atol=1e-12))
    return LemmaCertificate(
        cqc=bool(cqc), cone_positive=bool(quad.size and alpha > tol), cone_alpha=alpha,
        cone_samples=int(Z.shape[0]), phi_prime=Phi, rank=rank, determinant=det,
        nonsingular=rank == n + m, V=V, Q=Q, D_N=D_N, block_matrix=block,
        permutation=perm, blocks_match=match,
    )
