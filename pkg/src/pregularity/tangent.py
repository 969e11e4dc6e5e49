"""Numerical evidence for the tangent-cone description ``T_1 M(x*) = H_p(x*)``.

``compute_cone`` samples ``H_p``; ``trace_curves`` walks out along each
direction and pulls ``x* + t h`` back onto ``{F = 0}`` inside the hyperplane
orthogonal to ``h``; ``distance_estimate_check`` fits the constants of the
two distance-to-solution-set estimates built from the banded maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import gauss_newton, null_space
from .mapping import MappingModel
from .pfactor import DEDUP_ANGLE, KERNEL_TOL, Decomposition, hp_sample

TINY = np.finfo(float).tiny
RHS_FLOOR = 1e-300


@dataclass(frozen=True)
class ConeDescription:
    directions: np.ndarray  # unit rows
    residuals: np.ndarray  # max_k ||F_k^(k)(x*)[h]^k|| per direction

    def __len__(self):
        return self.directions.shape[0]


def compute_cone(D: Decomposition, budget: int = 200, seed: int = 0, tol: float = KERNEL_TOL,
                 dedup: float = DEDUP_ANGLE) -> ConeDescription:
    dirs = hp_sample(D, budget=budget, seed=seed, tol=tol, dedup=dedup)
    res = np.array([max(np.linalg.norm(v) for v in D.band_forms(h)) for h in dirs])
    return ConeDescription(dirs, res)


@dataclass(frozen=True)
class CurveSample:
    t: float
    x: np.ndarray
    residual: float
    secant: np.ndarray  # (x(t) - x*) / t
    converged: bool


@dataclass(frozen=True)
class CurveTrace:
    direction: np.ndarray
    samples: tuple
    ratios: tuple  # ||x(t) - (x* + t h)|| / t per grid point
    confirmed: bool


def default_t_grid():
    return tuple(2.0 ** -j for j in range(3, 21))


def _correct(model: MappingModel, base, h, t, rtol, max_steps):
    """Gauss-Newton for ``F(base + B y) = 0`` with ``B`` spanning ``h``'s orthogonal complement."""
    B = null_space(h[None, :]).basis
    f0 = np.linalg.norm(model.evaluate(base))
    tol = rtol * max(f0, TINY)

    def residual(y):
        return model.evaluate(base + B @ y)

    def jac(y):
        return model.jacobian(base + B @ y) @ B

    y, rn, _ = gauss_newton(residual, jac, np.zeros(B.shape[1]), max_iter=max_steps,
                            tol=tol, max_step=t)
    return base + B @ y, rn, rn <= tol


def trace_curves(model: MappingModel, x_star, cone, t_grid=None, rtol: float = 1e-12,
                 max_steps: int = 50, confirm_ratio: float = 1e-3) -> list:
    """Trace solution curves along each cone direction.

    A direction is confirmed when every correction reaches its tolerance,
    the deviation ratio at the smallest ``t`` is below ``confirm_ratio`` and
    it has dropped at least tenfold from the largest ``t``.
    """
    x_star = np.asarray(x_star, dtype=float).ravel()
    dirs = cone.directions if isinstance(cone, ConeDescription) else np.atleast_2d(cone)
    grid = default_t_grid() if t_grid is None else tuple(t_grid)
    traces = []
    for h in np.asarray(dirs, dtype=float):
        h = h / np.linalg.norm(h)
        samples, ratios = [], []
        for t in grid:
            base = x_star + t * h
            x, rn, ok = _correct(model, base, h, t, rtol, max_steps)
            samples.append(CurveSample(t, x, rn, (x - x_star) / t, ok))
            ratios.append(float(np.linalg.norm(x - base) / t))
        confirmed = (
            all(s.converged for s in samples)
            and ratios[-1] < confirm_ratio
            and ratios[-1] <= ratios[0] / 10.0
        )
        traces.append(CurveTrace(h, tuple(samples), tuple(ratios), bool(confirmed)))
    return traces


@dataclass(frozen=True)
class DistanceSample:
    radius: float
    xi: np.ndarray
    found: bool
    lhs: float | None = None  # ||x(xi)||
    rhs1: float | None = None
    rhs2: float | None = None

    def margins(self, delta1, delta2):
        """``delta * RHS - LHS`` for both estimates (nonnegative when they hold)."""
        return delta1 * self.rhs1 - self.lhs, delta2 * self.rhs2 - self.lhs


@dataclass(frozen=True)
class DistanceCheck:
    radii: tuple
    delta1: tuple  # per radius: max ||x(xi)|| / RHS1
    delta2: tuple  # per radius: max ||x(xi)|| / RHS2
    samples: tuple
    stable1: bool
    stable2: bool

    @property
    def fitted(self):
        return max(self.delta1), max(self.delta2)

    @property
    def dropped(self):
        return sum(not s.found for s in self.samples)


def _spread(values):
    vals = [v for v in values if v > 0]
    if len(vals) != len(values) or not vals:
        return math.inf
    return max(vals) / min(vals)


def nearest_root(model: MappingModel, xi, rtol: float = 1e-10, max_iter: int = 100):
    """Minimal-norm Gauss-Newton from ``xi``; returns ``(root, ok)``."""
    f0 = np.linalg.norm(model.evaluate(xi))
    if f0 == 0.0:
        return np.array(xi, dtype=float), True
    x, rn, _ = gauss_newton(model.evaluate, model.jacobian, xi, max_iter=max_iter, tol=rtol * f0 * 1e-4)
    return x, rn <= rtol * f0


def distance_estimate_check(model: MappingModel, D: Decomposition, radii=(1e-2, 1e-3, 1e-4, 1e-5),
                            per_radius: int = 16, seed: int = 0, points=None,
                            stability_factor: float = 2.0) -> DistanceCheck:
    """Fit ``delta_1`` and ``delta_2`` in

        ||x(xi)|| <= delta_1 sum_i ||f_i(xi) - f_i(x*)|| / ||xi - x*||^(i-1)
        ||x(xi)|| <= delta_2 sum_i ||f_i(xi) - f_i(x*)||^(1/i)

    where ``xi + x(xi)`` is the root reached from ``xi`` by minimal-norm
    Gauss-Newton and ``f_i = P_{Y_i} F``.  The same seeded unit directions
    are reused at every radius; ``points`` overrides them.  Constants are
    stable when their spread across radii is below ``stability_factor``.
    """
    x_star = D.x_star
    if points is None:
        rng = np.random.default_rng(seed)
        U = rng.standard_normal((per_radius, D.n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    else:
        U = np.atleast_2d(np.asarray(points, dtype=float))
    f_star = [P @ model.evaluate(x_star) for P in D.projectors]
    d1, d2, records = [], [], []
    for r in radii:
        best1 = best2 = 0.0
        for u in U:
            xi = x_star + r * u
            root, ok = nearest_root(model, xi)
            if not ok:
                records.append(DistanceSample(float(r), xi, False))
                continue
            lhs = float(np.linalg.norm(root - xi))
            fx = model.evaluate(xi)
            dist = np.linalg.norm(xi - x_star)
            terms = [np.linalg.norm(P @ fx - fs) for P, fs in zip(D.projectors, f_star)]
            rhs1 = sum(v / dist ** (i - 1) for i, v in enumerate(terms, start=1))
            rhs2 = sum(v ** (1.0 / i) for i, v in enumerate(terms, start=1))
            records.append(DistanceSample(float(r), xi, True, lhs, float(rhs1), float(rhs2)))
            best1 = max(best1, lhs / max(rhs1, RHS_FLOOR))
            best2 = max(best2, lhs / max(rhs2, RHS_FLOOR))
        d1.append(float(best1))
        d2.append(float(best2))
    return DistanceCheck(
        tuple(float(r) for r in radii), tuple(d1), tuple(d2), tuple(records),
        bool(_spread(d1) < stability_factor), bool(_spread(d2) < stability_factor),
    )
