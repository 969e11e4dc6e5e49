import math

import numpy as np
import pytest

from pregularity.mapping import MappingModel
from pregularity.pfactor import build_decomposition
from pregularity.tangent import (
    compute_cone,
    default_t_grid,
    distance_estimate_check,
    nearest_root,
    trace_curves,
)

S2 = 1 / math.sqrt(2)
EQ20A_LINES = np.array([[S2, S2, 0], [-S2, -S2, 0], [S2, -S2, 0], [-S2, S2, 0]])
PLANAR_LINES = np.array([[S2, S2], [-S2, -S2], [S2, -S2], [-S2, S2]])


def angle(u, v):
    return 2 * math.asin(min(1.0, np.linalg.norm(u / np.linalg.norm(u) - v / np.linalg.norm(v)) / 2))


def matches(found, expected, tol):
    return (len(found) == len(expected)
            and all(min(angle(d, w) for d in found) <= tol for w in expected)
            and all(min(angle(d, w) for w in expected) <= tol for d in found))


@pytest.fixture(scope="module")
def eq20a_cone(eq20a_decomp):
    return compute_cone(eq20a_decomp)


def test_eq20a_cone(eq20a_cone):
    assert matches(eq20a_cone.directions, EQ20A_LINES, 1e-6)
    assert np.all(eq20a_cone.residuals <= 1e-8)


def test_planar_cone(planar_model):
    cone = compute_cone(build_decomposition(planar_model, np.zeros(2)))
    assert matches(cone.directions, PLANAR_LINES, 1e-6)


def test_regular_cone_is_kernel_sphere():
    model = MappingModel.from_strings(["x1 + 2*x2 - x3"], ["x1", "x2", "x3"])
    cone = compute_cone(build_decomposition(model, np.zeros(3)))
    assert len(cone) > 4
    np.testing.assert_allclose(cone.directions @ [1, 2, -1], 0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(cone.directions, axis=1), 1, atol=1e-12)


def test_empty_cone_is_allowed(ex1_decomp):
    assert len(compute_cone(ex1_decomp)) == 0


@pytest.mark.parametrize("scale", [-3.0, 1e-4, 250.0])
def test_cone_invariant_under_scaling(eq20a_model, eq20a_cone, scale):
    scaled = eq20a_model.scaled([scale, scale])
    cone = compute_cone(build_decomposition(scaled, np.zeros(3)))
    assert matches(cone.directions, eq20a_cone.directions, 1e-3)


def test_diagonal_line_needs_no_correction(eq20a_model):
    # F(t, t, 0) = 0 exactly
    (tr,) = trace_curves(eq20a_model, np.zeros(3), [[1, 1, 0]])
    assert tr.confirmed
    assert all(r == 0.0 for r in tr.ratios)


def test_vertical_direction_is_rejected(eq20a_model):
    (tr,) = trace_curves(eq20a_model, np.zeros(3), [[0, 0, 1]])
    assert not tr.confirmed


def test_no_roots_near_the_vertical_axis(eq20a_model):
    # brute-force oracle: scan a thin cone around (0, 0, 1) for near-roots
    rng = np.random.default_rng(4)
    r = 10 ** rng.uniform(-4, -2, 20000)
    u = rng.standard_normal((20000, 3)) * 0.05
    u[:, 2] = 1.0
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = r[:, None] * u
    F = np.array([eq20a_model.evaluate(x) for x in X])
    assert np.min(np.linalg.norm(F, axis=1) / r**2) > 0.5


def test_affine_trace_has_zero_correction():
    model = MappingModel.from_strings(["x1 + 2*x2 - 1"], ["x1", "x2"])
    x_star = np.array([1.0, 0.0])
    (tr,) = trace_curves(model, x_star, [[2, -1]])
    assert tr.confirmed
    for s in tr.samples:
        np.testing.assert_allclose(s.x, x_star + s.t * np.array([2, -1]) / math.sqrt(5), atol=1e-15)


def test_trace_grid():
    grid = default_t_grid()
    assert grid[0] == 2.0**-3 and grid[-1] == 2.0**-20 and len(grid) == 18


@pytest.mark.parametrize("fixture", ["eq20a_model", "planar_model"])
def test_cone_and_traces_agree(request, fixture):
    model = request.getfixturevalue(fixture)
    x_star = np.zeros(model.n)
    cone = compute_cone(build_decomposition(model, x_star))
    rng = np.random.default_rng(9)
    probes = rng.standard_normal((24, model.n))
    traces = trace_curves(model, x_star, np.vstack([cone.directions, probes]))
    confirmed = [tr.direction for tr in traces if tr.confirmed]
    assert all(tr.confirmed for tr in traces[:len(cone)])
    for d in confirmed:
        assert min(angle(d, c) for c in cone.directions) <= 1e-3
    for tr in traces:
        if tr.confirmed:
            assert tr.ratios[-1] < tr.ratios[0] / 10 or tr.ratios[-1] == 0.0


def test_nearest_root_keeps_exact_roots(eq20a_model):
    x = np.array([0.3, 0.3, 0.0])
    root, ok = nearest_root(eq20a_model, x)
    assert ok and np.array_equal(root, x)


def test_distance_check_on_the_solution_set(eq20a_model, eq20a_decomp):
    pts = EQ20A_LINES
    chk = distance_estimate_check(eq20a_model, eq20a_decomp, points=pts)
    assert chk.dropped == 0
    for s in chk.samples:
        assert s.lhs == 0.0
        m1, m2 = s.margins(1.0, 1.0)
        assert m1 >= 0 and m2 >= 0


def test_distance_check_off_the_vertical_axis(eq20a_model, eq20a_decomp):
    radii = (1e-2, 1e-3, 1e-4, 1e-5)
    chk = distance_estimate_check(eq20a_model, eq20a_decomp, radii=radii, points=[[0, 0, 1]])
    assert chk.dropped == 0
    for s in chk.samples:
        # the zero set is the pair of lines x3 = 0, x1 = +-x2, at distance eps from (0, 0, eps)
        assert s.lhs >= s.radius * (1 - 1e-6)
    assert chk.stable2


def test_affine_distance_constant():
    model = MappingModel.from_strings(["x1 + 2*x2"], ["x1", "x2"])
    D = build_decomposition(model, np.zeros(2))
    chk = distance_estimate_check(model, D, per_radius=8, seed=1)
    # distance to the line is |x1 + 2 x2| / sqrt(5)
    np.testing.assert_allclose(chk.delta1, [1 / math.sqrt(5)] * 4, rtol=1e-9)
    assert chk.stable1


def test_random_directions_give_stable_constants(eq20a_model, eq20a_decomp):
    chk = distance_estimate_check(eq20a_model, eq20a_decomp, seed=3)
    assert chk.stable1 and chk.stable2
