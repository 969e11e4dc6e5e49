import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pregularity.errors import (
    DecompositionIncomplete,
    DimensionError,
    OrderError,
    SingularFactorMatrix,
    ZeroDirectionError,
)
from pregularity.linalg import principal_angles, right_inverse_norm
from pregularity.mapping import MappingModel
from pregularity.pfactor import (
    DEDUP_ANGLE,
    build_decomposition,
    build_newton_chain,
    factor_operator,
    hp_membership,
    hp_sample,
    is_p_regular_along,
    kernel_criterion,
    ordered_product_sum,
    sample_directions,
    strong_regularity_estimate,
)
from pregularity.problems import load_registry

S2 = 1 / math.sqrt(2)
EQUATION_PROBLEMS = [name for name, pr in load_registry().items() if pr.equations]


@pytest.fixture(scope="module")
def cubic_chain_model():
    # bands e1, e2, e3 appear at orders 1, 2, 3
    return MappingModel.from_strings(["x1", "x2^2", "x3^3"], ["x1", "x2", "x3"])


@pytest.fixture(scope="module")
def identity_model():
    return MappingModel.from_strings(["x1", "x2"], ["x1", "x2"])


def decomposition_of(name):
    pr = load_registry()[name]
    return build_decomposition(pr.equation_model(), pr.root())


# -- decomposition -------------------------------------------------------------


def test_ex1_bands(ex1_decomp):
    assert ex1_decomp.p == 2
    np.testing.assert_allclose(np.abs(ex1_decomp.subspaces[0].basis[:, 0]), [1, 0], atol=1e-15)
    np.testing.assert_allclose(np.abs(ex1_decomp.subspaces[1].basis[:, 0]), [0, 1], atol=1e-15)


def test_eq20a_second_band_is_everything(eq20a_model, eq20a_decomp):
    assert eq20a_decomp.p == 2
    assert eq20a_decomp.dims() == [0, 2]
    # brute-force oracle: the values F''(0)[h]^2 over random h span R^2
    rng = np.random.default_rng(4)
    vals = np.array([eq20a_model.contract(2, np.zeros(3), h, 2) for h in rng.standard_normal((50, 3))])
    assert np.linalg.matrix_rank(vals) == 2


def test_regular_system_has_one_band(identity_model):
    D = build_decomposition(identity_model, np.zeros(2))
    assert D.p == 1 and D.dims() == [2]


def test_cubic_chain_bands(cubic_chain_model):
    D = build_decomposition(cubic_chain_model, np.zeros(3))
    assert D.p == 3 and D.dims() == [1, 1, 1]


@pytest.mark.parametrize("name", EQUATION_PROBLEMS)
def test_bands_are_orthogonal_and_complete(name):
    D = decomposition_of(name)
    assert sum(D.dims()) == D.m
    for i, Pi in enumerate(D.projectors):
        for j, Pj in enumerate(D.projectors):
            if i != j:
                assert np.max(np.abs(Pi @ Pj)) <= 1e-10
    np.testing.assert_allclose(sum(D.projectors), np.eye(D.m), atol=1e-10)


@pytest.mark.parametrize("name", EQUATION_PROBLEMS)
def test_first_band_is_jacobian_image(name):
    D = decomposition_of(name)
    J = D.model.jacobian(D.x_star)
    P1 = D.projectors[0]
    np.testing.assert_allclose(P1 @ J, J, atol=1e-12)
    assert D.dims()[0] == np.linalg.matrix_rank(J)


@pytest.mark.parametrize("name", EQUATION_PROBLEMS)
def test_band_maps_are_projected_components(name):
    D = decomposition_of(name)
    rng = np.random.default_rng(8)
    for x in rng.uniform(-1, 1, (10, D.n)):
        for i in range(1, D.p + 1):
            np.testing.assert_allclose(D.band(i).evaluate(x), D.projectors[i - 1] @ D.model.evaluate(x),
                                       atol=1e-14)


@pytest.mark.parametrize("name", EQUATION_PROBLEMS)
@pytest.mark.parametrize("seed", [1, 77, 2024])
def test_decomposition_is_seed_stable(name, seed):
    pr = load_registry()[name]
    a = build_decomposition(pr.equation_model(), pr.root(), seed=0)
    b = build_decomposition(pr.equation_model(), pr.root(), seed=seed)
    assert a.dims() == b.dims()
    for Sa, Sb in zip(a.subspaces, b.subspaces):
        if Sa.dim:
            assert principal_angles(Sa, Sb).max() <= 1e-8


def test_decomposition_errors(ex1_model):
    with pytest.raises(OrderError):
        build_decomposition(ex1_model, np.zeros(2), p_cap=ex1_model.p_max + 1)
    with pytest.raises(DimensionError):
        build_decomposition(ex1_model, np.zeros(3))
    cubic = MappingModel.from_strings(["x1^3"], ["x1"])
    with pytest.raises(DecompositionIncomplete) as info:
        build_decomposition(cubic, np.zeros(1), p_cap=2)
    assert info.value.achieved.dim == 0


def test_sample_directions_are_deterministic_unit_vectors():
    a = sample_directions(3, 64, seed=5)
    np.testing.assert_array_equal(a, sample_directions(3, 64, seed=5))
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)


# -- factor operator and regularity --------------------------------------------


def test_ex1_factor_operators(ex1_decomp):
    op = factor_operator(ex1_decomp, [1, -1])
    np.testing.assert_allclose(op.matrix, [[1, 1], [-1, 1]], atol=1e-15)
    assert op.surjective
    op = factor_operator(ex1_decomp, [1, 1])
    np.testing.assert_allclose(op.matrix, [[1, 1], [1, 1]], atol=1e-15)
    assert op.rank == 1 and not op.surjective


def test_eq20a_factor_operator(eq20a_decomp):
    assert factor_operator(eq20a_decomp, [1, 1, 0]).rank == 2
    assert is_p_regular_along(eq20a_decomp, [1, 1, 0], cross_check=True)


def test_regularity_flags(ex1_decomp):
    assert is_p_regular_along(ex1_decomp, [1, -1], cross_check=True)
    assert not is_p_regular_along(ex1_decomp, [1, 1], cross_check=True)


def test_zero_direction_rejected(ex1_decomp):
    with pytest.raises(ZeroDirectionError):
        factor_operator(ex1_decomp, [0, 0])


@pytest.mark.parametrize("name", EQUATION_PROBLEMS)
def test_kernel_criterion_agrees_on_builtins(name):
    D = decomposition_of(name)
    pr = load_registry()[name]
    rng = np.random.default_rng(11)
    dirs = list(rng.standard_normal((40, D.n))) + [np.asarray(pr.h, float)]
    dirs += list(hp_sample(D, budget=50))
    for h in dirs:
        assert kernel_criterion(D, h) == factor_operator(D, h).surjective


@pytest.mark.parametrize("h, regular", [
    ([1, 1, 1], True),
    ([0.3, -2, 0.5], True),
    ([1, 0, 1], False),
    ([1, 1, 0], False),
    ([0, 1, 1], True),
])
def test_kernel_criterion_on_third_order_chain(cubic_chain_model, h, regular):
    D = build_decomposition(cubic_chain_model, np.zeros(3))
    # Psi_3(h) = diag(1, 2 h2, 6 h3^2)
    np.testing.assert_allclose(factor_operator(D, h).matrix,
                               np.diag([1, 2 * h[1], 6 * h[2] ** 2]), atol=1e-14)
    assert is_p_regular_along(D, h, cross_check=True) is regular


@pytest.mark.parametrize("name", ["ex1", "reddien", "eq20a", "planar"])
def test_factor_operator_and_chain_matrix_have_equal_rank(name):
    D = decomposition_of(name)
    assert D.p == 2
    rng = np.random.default_rng(12)
    for h in rng.standard_normal((30, D.n)):
        chain = build_newton_chain(D.model, D.x_star, h, 2, check=False)
        assert np.linalg.matrix_rank(chain.factor_matrix) == factor_operator(D, h).rank


# -- H_p -----------------------------------------------------------------------


def test_eq20a_kernel_lines(eq20a_decomp):
    assert hp_membership(eq20a_decomp, [S2, -S2, 0])
    assert hp_membership(eq20a_decomp, [S2, S2, 0])
    assert not hp_membership(eq20a_decomp, [0, 0, 1])


def test_ex1_has_no_directions(ex1_decomp):
    assert hp_sample(ex1_decomp, budget=200).shape == (0, 2)


def test_eq20a_sampler_finds_four_unit_directions(eq20a_decomp):
    dirs = hp_sample(eq20a_decomp, budget=200)
    assert dirs.shape == (4, 3)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-14)
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.linalg.norm(dirs[i] - dirs[j]) > DEDUP_ANGLE
    np.testing.assert_array_equal(dirs, hp_sample(eq20a_decomp, budget=200))


@settings(max_examples=50, deadline=None)
@given(
    st.sampled_from([[S2, S2, 0], [S2, -S2, 0], [0, 0, 1], [1, 2, 3], [1e-3, 1, 0]]),
    st.one_of(st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3)),
)
def test_membership_is_scale_invariant(direction, c):
    D = _EQ20A
    h = np.array(direction, dtype=float)
    assert hp_membership(D, h) == hp_membership(D, c * h)


_EQ20A = decomposition_of("eq20a")


# -- strong regularity ---------------------------------------------------------


def test_strong_regularity_regular_case(identity_model):
    D = build_decomposition(identity_model, np.zeros(2))
    for alpha in (0.01, 0.5, 3.0):
        assert strong_regularity_estimate(D, alpha, sample_budget=500).estimate == pytest.approx(1.0)


def test_strong_regularity_empty_for_ex1(ex1_decomp):
    sr = strong_regularity_estimate(ex1_decomp, 0.05, sample_budget=5000)
    assert sr.empty and not sr.bounded


def test_strong_regularity_matches_sphere_grid(eq20a_decomp):
    alpha = 0.1
    sr = strong_regularity_estimate(eq20a_decomp, alpha, seed=0)
    assert sr.bounded and sr.accepted > 0
    th, ph = np.meshgrid(np.linspace(0, math.pi, 601), np.linspace(0, 2 * math.pi, 1201, endpoint=False))
    H = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)
    q = 2 * H[:, 0] ** 2 - 2 * H[:, 1] ** 2 + 2 * H[:, 2] ** 2
    band = H[np.hypot(q, q + 2 * H[:, 1] * H[:, 2]) <= alpha]
    lines = np.array([[S2, S2, 0], [S2, -S2, 0]])
    assert np.arccos(np.clip(np.abs(band @ lines.T), 0, 1)).min(axis=1).max() < 0.15

    def psi(h):
        return np.array([[2 * h[0], -2 * h[1], 2 * h[2]], [2 * h[0], h[2] - 2 * h[1], h[1] + 2 * h[2]]])

    grid_sup = max(right_inverse_norm(psi(h)) for h in band)
    assert sr.estimate == pytest.approx(grid_sup, rel=0.02)


def test_strong_regularity_rejects_bad_alpha(eq20a_decomp):
    with pytest.raises(ValueError):
        strong_regularity_estimate(eq20a_decomp, 0.0)


# -- Newton chain --------------------------------------------------------------


def test_ex1_chain(ex1_model):
    chain = build_newton_chain(ex1_model, np.zeros(2), [1, -1], 2)
    np.testing.assert_allclose(chain.pbar[0], np.diag([0, 1]), atol=1e-15)
    np.testing.assert_allclose(chain.factor_matrix, [[1, 1], [-1, 1]], atol=1e-15)
    # away from the root the matrix is [[1, 1], [x2 - 1, x1 + 1]]
    x = np.array([0.02, -0.03])
    np.testing.assert_allclose(chain.iteration_matrix(ex1_model, x), [[1, 1], [x[1] - 1, x[0] + 1]],
                               atol=1e-15)
    assert chain.nonsingular


def test_chain_on_regular_system_degenerates(identity_model):
    chain = build_newton_chain(identity_model, np.zeros(2), [0.3, 0.7], 2)
    np.testing.assert_array_equal(chain.pbar[0], np.zeros((2, 2)))
    np.testing.assert_allclose(chain.factor_matrix, np.eye(2))


def test_phi3_chain_and_root_of_modified_residual(phi3_model):
    chain = build_newton_chain(phi3_model, np.zeros(2), [1, 1], 3)
    np.testing.assert_allclose(chain.factor_matrix, [[2, -11], [2, 11]], atol=1e-12)
    np.testing.assert_allclose(chain.modified_residual(phi3_model, np.zeros(2)), 0, atol=1e-14)
    np.testing.assert_allclose(chain.iteration_matrix(phi3_model, np.zeros(2)), chain.factor_matrix,
                               atol=1e-14)


def test_singular_factor_matrix(ex1_model):
    with pytest.raises(SingularFactorMatrix):
        build_newton_chain(ex1_model, np.zeros(2), [1, 1], 2)
    assert not build_newton_chain(ex1_model, np.zeros(2), [1, 1], 2, check=False).nonsingular


def test_chain_argument_errors(ex1_model):
    with pytest.raises(ValueError):
        build_newton_chain(ex1_model, np.zeros(2), [1, -1], 1)
    with pytest.raises(ZeroDirectionError):
        build_newton_chain(ex1_model, np.zeros(2), [0, 0], 2)


def test_ordered_product_sum():
    rng = np.random.default_rng(3)
    A, B, C = (rng.standard_normal((3, 3)) for _ in range(3))
    np.testing.assert_allclose(ordered_product_sum([A, B, C], 1), A + B + C)
    np.testing.assert_allclose(ordered_product_sum([A, B, C], 2), B @ A + C @ A + C @ B)
    np.testing.assert_allclose(ordered_product_sum([A, B, C], 3), C @ B @ A)
