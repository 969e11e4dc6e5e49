"""p-factor constructions at a point ``x*``.

Two independent constructions live here:

* the direct-sum decomposition ``R^m = Y_1 + ... + Y_p`` with banded maps
  ``F_i = P_{Y_i} F`` and the p-factor operator
  ``Psi_p(h) = sum_i P_{Y_i} F^(i)(x*)[h]^(i-1)``;
* the cumulative-image chain used by the p-factor Newton scheme, with
  complement projectors ``Pbar_k`` and combined projectors ``P_k`` built from
  ordered products of them.

They are cross-checked rather than assumed to coincide.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .errors import (
    DecompositionIncomplete,
    DimensionError,
    OrderError,
    PRegularityError,
    SingularFactorMatrix,
    ZeroDirectionError,
)
from .linalg import (
    Subspace,
    column_space,
    direct_sum,
    gauss_newton,
    matrix_rank,
    null_space,
    right_inverse_norm,
    singular_values,
)
from .mapping import MappingModel, ProjectedMapping

KERNEL_TOL = 1e-8
DEDUP_ANGLE = 1e-3


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _unit(h, what="direction"):
    h = np.asarray(h, dtype=float).ravel()
    nh = np.linalg.norm(h)
    if nh == 0.0:
        raise ZeroDirectionError(f"{what} must be nonzero")
    return h


def sample_directions(n: int, size: int, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-random unit vectors: scrambled Sobol points mapped
    through the normal quantile function and normalized."""
    m = max(0, math.ceil(math.log2(max(size, 1))))
    pts = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)
    z = _normal.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z


def _contract_batch(T: np.ndarray, H: np.ndarray, copies: int) -> np.ndarray:
    """Contract the last ``copies`` slots of ``T`` with each row of ``H``."""
    out = np.broadcast_to(T, (H.shape[0],) + T.shape)
    for _ in range(copies):
        out = np.einsum("b...j,bj->b...", out, H)
    return out


# ---------------------------------------------------------------------------
# Direct-sum decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Decomposition:
    """``Y_1 + ... + Y_p = R^m`` at ``x_star`` with band projectors."""

    order: int
    subspaces: tuple
    projectors: tuple
    model: MappingModel
    x_star: np.ndarray
    band_tensors: tuple  # P_{Y_k} F^(k)(x*), k = 1..p
    rank_rtol: float | None = None
    sample_size: int = 64
    seed: int = 0

    @property
    def p(self):
        return self.order

    @property
    def n(self):
        return self.model.n

    @property
    def m(self):
        return self.model.m

    def band(self, i: int) -> ProjectedMapping:
        """The map ``F_i = P_{Y_i} F`` (1-based band index)."""
        return ProjectedMapping(self.model, self.projectors[i - 1])

    def dims(self):
        return [s.dim for s in self.subspaces]

    def band_forms(self, h) -> list:
        """``[F_k^(k)(x*)[h]^k for k = 1..p]``."""
        h = np.asarray(h, dtype=float).ravel()
        out = []
        for k, T in enumerate(self.band_tensors, start=1):
            v = T
            for _ in range(k):
                v = v @ h
            out.append(v)
        return out

    def band_forms_batch(self, H: np.ndarray, chunk=2048) -> list:
        H = np.atleast_2d(H)
        parts = [[] for _ in self.band_tensors]
        for start in range(0, H.shape[0], chunk):
            block = H[start:start + chunk]
            for k, T in enumerate(self.band_tensors, start=1):
                parts[k - 1].append(_contract_batch(T, block, k))
        return [np.concatenate(p, axis=0) for p in parts]


def build_decomposition(model: MappingModel, x_star, p_cap: int | None = None,
                        rank_rtol: float | None = None, sample_size: int | None = None,
                        seed: int = 0) -> Decomposition:
    """Build the minimal-order decomposition at ``x_star``.

    ``Y_1`` is the image of ``F'(x*)``.  For ``i >= 2`` the span of the image
    of the projected i-form ``P_{Z_i} F^(i)(x*)[.]^i`` is estimated from its
    values on ``max(3 n m, 64)`` quasi-random unit directions, where ``Z_i``
    is the orthogonal complement of the subspaces found so far.
    """
    x = np.asarray(x_star, dtype=float).ravel()
    if x.size != model.n:
        raise DimensionError(f"point has {x.size} entries, expected {model.n}")
    p_cap = model.p_max if p_cap is None else p_cap
    if p_cap > model.p_max:
        raise OrderError(f"p_cap={p_cap} exceeds the model's p_max={model.p_max}")
    m, n = model.m, model.n
    size = sample_size or max(3 * n * m, 64)

    J = model.jacobian(x)
    spaces = [column_space(J, rtol=rank_rtol)]
    achieved = spaces[0]
    if achieved.dim < m:
        dirs = sample_directions(n, size, seed)
        for i in range(2, p_cap + 1):
            Z = achieved.complement()
            PZ = Z.projector()
            values = _contract_batch(model.tensor(i, x), dirs, i).T  # m x N
            projected = PZ @ values
            scale = np.linalg.norm(values, 2) if values.size else 0.0
            Yi = column_space(projected, rtol=rank_rtol, scale=scale)
            # re-orthogonalize against earlier bands
            Yi = column_space(PZ @ Yi.basis, rtol=1e-10) if Yi.dim else Yi
            spaces.append(Yi)
            achieved = direct_sum(*spaces) if any(s.dim for s in spaces) else achieved
            if achieved.dim == m:
                break
        else:
            raise DecompositionIncomplete(
                f"direct sum has dimension {achieved.dim} < {m} at p_cap={p_cap}",
                achieved=achieved, subspaces=spaces,
            )
    projectors = tuple(_ro(s.projector()) for s in spaces)
    bands = tuple(
        _ro(np.tensordot(P, model.tensor(k, x), axes=(1, 0)))
        for k, P in enumerate(projectors, start=1)
    )
    return Decomposition(
        order=len(spaces), subspaces=tuple(spaces), projectors=projectors, model=model,
        x_star=_ro(x), band_tensors=bands, rank_rtol=rank_rtol, sample_size=size, seed=seed,
    )


# ---------------------------------------------------------------------------
# p-factor operator and regularity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorOperator:
    h: np.ndarray
    matrix: np.ndarray
    terms: tuple
    rank: int
    surjective: bool
    singular_values: np.ndarray


def factor_operator(D: Decomposition, h) -> FactorOperator:
    """``Psi_p(h) = F_1'(x*) + F_2''(x*)h + ... + F_p^(p)(x*)[h]^(p-1)``."""
    h = _unit(h)
    if h.size != D.n:
        raise DimensionError(f"direction has {h.size} entries, expected {D.n}")
    terms = []
    for k, T in enumerate(D.band_tensors, start=1):
        v = T
        for _ in range(k - 1):
            v = v @ h
        terms.append(_ro(v))
    psi = sum(terms)
    rank = matrix_rank(psi, rtol=D.rank_rtol)
    return FactorOperator(_ro(h), _ro(psi), tuple(terms), rank, rank == D.m, singular_values(psi))


def kernel_criterion(D: Decomposition, h) -> bool:
    """Regularity along ``h`` via the kernel of the lower-order operator.

    ``F_p^(p)(x*)[h]^(p-1)`` restricted to ``Ker Psi_{p-1}(h)`` must map onto
    ``Y_p``.  For ``p >= 3`` the lower operator must also map onto
    ``Y_1 + ... + Y_{p-1}``; for ``p = 2`` that holds by construction.
    """
    op = factor_operator(D, h)
    if D.p == 1:
        return op.surjective
    lower = sum(op.terms[:-1])
    W = direct_sum(*D.subspaces[:-1]) if any(s.dim for s in D.subspaces[:-1]) else Subspace.zero(D.m)
    lower_ok = matrix_rank(lower, rtol=D.rank_rtol) == W.dim
    K = null_space(lower, rtol=D.rank_rtol)
    top = op.terms[-1] @ K.basis
    reached = column_space(top, rtol=D.rank_rtol).dim if top.size else 0
    return bool(lower_ok and reached == D.subspaces[-1].dim)


class RegularityMismatch(PRegularityError):
    pass


def is_p_regular_along(D: Decomposition, h, cross_check: bool = False) -> bool:
    """Surjectivity of ``Psi_p(h)``; optionally confirmed by :func:`kernel_criterion`."""
    direct = factor_operator(D, h).surjective
    if cross_check:
        alt = kernel_criterion(D, h)
        if alt != direct:
            raise RegularityMismatch(
                f"surjectivity test says {direct}, kernel criterion says {alt} for h={h}"
            )
    return direct


# ---------------------------------------------------------------------------
# H_p: intersection of k-kernels
# ---------------------------------------------------------------------------


def hp_membership(D: Decomposition, h, tol: float = KERNEL_TOL) -> bool:
    h = _unit(h)
    nh = np.linalg.norm(h)
    return all(
        np.linalg.norm(v) <= tol * nh**k for k, v in enumerate(D.band_forms(h), start=1)
    )


def _hp_system(D: Decomposition):
    # each band is normalized so the solve does not depend on the scale of F
    weights = [1.0 / n if n > 0 else 1.0 for n in (np.linalg.norm(T) for T in D.band_tensors)]

    def residual(h):
        forms = [w * v for w, v in zip(weights, D.band_forms(h))]
        return np.concatenate(forms + [np.array([0.5 * (h @ h - 1.0)])])

    def jac(h):
        rows = []
        for k, (T, w) in enumerate(zip(D.band_tensors, weights), start=1):
            v = T
            for _ in range(k - 1):
                v = v @ h
            rows.append(k * w * v)
        rows.append(h[None, :])
        return np.vstack(rows)

    return residual, jac


def _angle(u, v):
    return 2.0 * math.asin(min(1.0, np.linalg.norm(u - v) / 2.0))


def dedup_directions(dirs, threshold=DEDUP_ANGLE) -> np.ndarray:
    kept = []
    for d in dirs:
        if all(_angle(d, k) > threshold for k in kept):
            kept.append(d)
    return canonical_order(kept, dirs[0].size if len(dirs) else 0)


def canonical_order(dirs, n) -> np.ndarray:
    if not len(dirs):
        return np.zeros((0, n))
    arr = np.array(dirs, dtype=float)
    keys = np.round(arr, 9)
    idx = np.lexsort(tuple(-keys[:, j] for j in reversed(range(arr.shape[1]))))
    return arr[idx]


def hp_sample(D: Decomposition, budget: int = 200, seed: int = 0, tol: float = KERNEL_TOL,
              dedup: float = DEDUP_ANGLE, max_iter: int = 60) -> np.ndarray:
    """Unit directions in ``H_p(x*)``.

    Seeded starting points on the sphere are refined by Gauss-Newton on the
    band forms restricted to the sphere; refined points passing
    :func:`hp_membership` are kept together with their antipodes (the k-forms
    are homogeneous) and deduplicated by angular distance.
    """
    rng = np.random.default_rng(seed)
    starts = rng.standard_normal((budget, D.n))
    starts /= np.linalg.norm(starts, axis=1, keepdims=True)
    residual, jac = _hp_system(D)
    accepted = []
    for s in starts:
        h, _, _ = gauss_newton(residual, jac, s, max_iter=max_iter, tol=1e-15)
        nh = np.linalg.norm(h)
        if not np.isfinite(nh) or nh == 0.0:
            continue
        h = h / nh
        if hp_membership(D, h, tol):
            for cand in (h, -h):
                if all(_angle(cand, k) > dedup for k in accepted):
                    accepted.append(cand)
    return canonical_order(accepted, D.n)


# ---------------------------------------------------------------------------
# Strong p-regularity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StrongRegularity:
    alpha: float
    estimate: float | None  # None when no sample fell in H_alpha
    accepted: int
    sampled: int

    @property
    def empty(self):
        return self.accepted == 0 and self.estimate is None

    @property
    def bounded(self):
        return self.estimate is not None and math.isfinite(self.estimate)


def strong_regularity_estimate(D: Decomposition, alpha: float, sample_budget: int = 20000,
                               seed: int = 0, refine: bool = True) -> StrongRegularity:
    """Sampled ``sup ||Psi_p(h)^{-1}||`` over ``H_alpha``.

    Uniform sphere samples are complemented (``refine=True``) by jittered
    copies of the :func:`hp_sample` directions at several radii, which is how
    thin bands around measure-zero sets such as unions of lines get populated.

    When ``p = 1`` the operator does not depend on ``h`` and the estimate is
    the right-inverse norm of ``F'(x*)`` whatever ``alpha`` is.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((sample_budget, D.n))
    if refine:
        centers = hp_sample(D, seed=seed)
        jitter = []
        for c in centers:
            for r in (3e-1, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3):
                jitter.append(c + r * rng.standard_normal((16, D.n)))
        if jitter:
            H = np.vstack([H, centers] + jitter)
    H /= np.linalg.norm(H, axis=1, keepdims=True)
    forms = D.band_forms_batch(H)
    mask = np.ones(H.shape[0], dtype=bool)
    for v in forms:
        mask &= np.linalg.norm(v.reshape(v.shape[0], -1), axis=1) <= alpha
    accepted = H[mask]
    if D.p == 1:
        value = right_inverse_norm(D.band_tensors[0], rtol=D.rank_rtol)
        return StrongRegularity(alpha, value, int(mask.sum()), H.shape[0])
    if not accepted.shape[0]:
        return StrongRegularity(alpha, None, 0, H.shape[0])
    worst = 0.0
    for h in accepted:
        worst = max(worst, right_inverse_norm(factor_operator(D, h).matrix, rtol=D.rank_rtol))
        if math.isinf(worst):
            break
    return StrongRegularity(alpha, worst, int(accepted.shape[0]), H.shape[0])


# ---------------------------------------------------------------------------
# Cumulative-image chain for the Newton scheme
# ---------------------------------------------------------------------------


def ordered_product_sum(pbars, j: int) -> np.ndarray:
    """``sum over i_j > ... > i_1`` of ``Pbar_{i_j} ... Pbar_{i_1}``."""
    size = pbars[0].shape[0]
    total = np.zeros((size, size))
    for combo in itertools.combinations(range(len(pbars)), j):
        prod = np.eye(size)
        for idx in reversed(combo):
            prod = prod @ pbars[idx]
        total += prod
    return total


@dataclass(frozen=True, eq=False)
class NewtonChain:
    h: np.ndarray
    p: int
    images: tuple  # Y_1..Y_{p-1}
    pbar: tuple  # Pbar_1..Pbar_{p-1}
    combined: tuple  # P_1..P_{p-1}
    factor_matrix: np.ndarray
    x_star: np.ndarray
    nonsingular: bool

    def iteration_matrix(self, model: MappingModel, x) -> np.ndarray:
        """``F'(x) + P_1 F''(x)h + ... + P_{p-1} F^(p)(x)[h]^(p-1)``."""
        A = model.jacobian(x)
        for j, P in enumerate(self.combined, start=1):
            A = A + P @ model.contract(j + 1, x, self.h, j)
        return A

    def modified_residual(self, model: MappingModel, x) -> np.ndarray:
        """``F(x) + P_1 F'(x)h + ... + P_{p-1} F^(p-1)(x)[h]^(p-1)``."""
        r = model.evaluate(x)
        for j, P in enumerate(self.combined, start=1):
            r = r + P @ model.contract(j, x, self.h, j)
        return r


def build_newton_chain(model: MappingModel, x_star, h, p: int,
                       rank_rtol: float | None = None, check: bool = True) -> NewtonChain:
    """Projector chain and p-factor matrix at ``x_star`` for direction ``h``.

    ``Y_1 = Im F'(x*)`` and, for ``k = 1..p-2``,
    ``Y_{k+1} = Im(F'(x*) + sum_j S_j^(k) F^(j+1)(x*)[h]^j)`` where ``S_j^(k)``
    sums the ordered products of ``j`` distinct projectors among
    ``Pbar_1..Pbar_k``.  Each ``Pbar`` projects onto the orthogonal
    complement of its image.
    """
    if p < 2:
        raise ValueError("the Newton chain needs p >= 2")
    if p > model.p_max:
        raise OrderError(f"p={p} exceeds the model's p_max={model.p_max}")
    x = np.asarray(x_star, dtype=float).ravel()
    if x.size != model.n:
        raise DimensionError(f"point has {x.size} entries, expected {model.n}")
    h = _unit(h)
    if h.size != model.n:
        raise DimensionError(f"direction has {h.size} entries, expected {model.n}")
    m = model.m
    J = model.jacobian(x)
    images = [column_space(J, rtol=rank_rtol)]
    pbars = [np.eye(m) - images[0].projector()]
    contractions = {j: model.contract(j + 1, x, h, j) for j in range(1, p)}
    for k in range(1, p - 1):
        A = J.copy()
        for j in range(1, k + 1):
            A = A + ordered_product_sum(pbars[:k], j) @ contractions[j]
        images.append(column_space(A, rtol=rank_rtol))
        pbars.append(np.eye(m) - images[-1].projector())
    combined = [ordered_product_sum(pbars, j) for j in range(1, p)]
    factor = J.copy()
    for j, P in enumerate(combined, start=1):
        factor = factor + P @ contractions[j]
    nonsingular = m == model.n and matrix_rank(factor, rtol=rank_rtol) == m
    if check and not nonsingular:
        raise SingularFactorMatrix(f"p-factor matrix is singular for h={h.tolist()}")
    return NewtonChain(
        h=_ro(h), p=p, images=tuple(images), pbar=tuple(_ro(P) for P in pbars),
        combined=tuple(_ro(P) for P in combined), factor_matrix=_ro(factor), x_star=_ro(x),
        nonsingular=bool(nonsingular),
    )
