import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from qmcpricer.brownian import (
    Bridge,
    BridgePerBlock,
    Forward,
    InverseHaar,
    Orthogonal,
    Pca,
    TimeGrid,
    bridge_path,
    build_bridge_tables,
    check_orthogonal,
    covariance,
    cumsum_map,
    dyadic_order,
    forward_path,
    inverse_haar,
    inverse_haar_matrix,
    orthogonal_path,
    pca_factors,
    rescale_to_grid,
    vdc_order,
)

DIMS = [1, 2, 4, 8, 16, 32]


def random_orthogonal(d, seed=0):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def all_constructions(d):
    g = TimeGrid.even(d)
    return [
        Forward(g),
        Bridge(g),
        Bridge(g, dyadic_order(d)),
        Pca(g),
        InverseHaar(g),
        BridgePerBlock(g, 2 if d > 1 else 1),
        Orthogonal(g, random_orthogonal(d)),
    ]


class TestGrid:
    def test_even_grid(self):
        g = TimeGrid.even(4, 2.0)
        assert_allclose(g.nodes, [0.5, 1.0, 1.5, 2.0])
        assert g.is_even and g.T == 2.0 and g.d == 4
        assert_allclose(g.steps, 0.5)

    @pytest.mark.parametrize("nodes", [[0.0, 1.0], [0.5, 0.5, 1.0], [1.0, 0.5], [-1.0]])
    def test_rejects_bad_nodes(self, nodes):
        with pytest.raises(ValueError):
            TimeGrid(nodes)

    def test_covariance_even(self):
        d = 6
        j = np.arange(1, d + 1)
        assert_allclose(covariance(TimeGrid.even(d)), np.minimum.outer(j, j) / d, atol=1e-15)


class TestCumsum:
    def test_small_cases(self):
        assert_allclose(cumsum_map([2.5]), [2.5])
        assert_allclose(cumsum_map([1.0, 1.0]), [1 / math.sqrt(2), 2 / math.sqrt(2)])

    def test_matches_dense_s(self):
        d = 16
        S = np.tril(np.ones((d, d))) / math.sqrt(d)
        y = np.random.default_rng(1).standard_normal(d)
        assert_allclose(cumsum_map(y), S @ y, atol=1e-14)


class TestForward:
    def test_single_node(self):
        assert_allclose(forward_path(TimeGrid([1.0]), [0.7]), [0.7])

    def test_two_nodes(self):
        a, b = 0.3, -1.1
        assert_allclose(forward_path(TimeGrid.even(2), [a, b]), [a / math.sqrt(2), (a + b) / math.sqrt(2)])

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            forward_path(TimeGrid.even(3), np.zeros(2))


class TestBridgeTables:
    def test_identity_order_is_forward(self):
        g = TimeGrid([0.1, 0.35, 0.4, 0.9, 1.3])
        tab = build_bridge_tables(g, np.arange(5))
        assert np.all(tab.right == -1)
        assert_array_equal(tab.left, np.arange(5))
        x = np.random.default_rng(2).standard_normal((10, 5))
        assert_allclose(bridge_path(tab, x), forward_path(g, x), atol=1e-14)

    def test_hand_example(self):
        tab = build_bridge_tables(TimeGrid.even(3), [2, 0, 1])
        assert (tab.left[1], tab.right[1]) == (0, 3)
        assert (tab.left[2], tab.right[2]) == (1, 3)
        assert tab.right[0] == -1

    def test_midpoint_mean(self):
        # B_1 = b, then B_1/2 with zero noise lands on b / 2
        tab = build_bridge_tables(TimeGrid.even(2), [1, 0])
        b = 1.7
        assert_allclose(bridge_path(tab, [b, 0.0]), [b / 2, b])

    def test_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            build_bridge_tables(TimeGrid.even(3), [0, 0, 1])

    def test_operation_count(self):
        d = 1024
        adds, mults = build_bridge_tables(TimeGrid.even(d), vdc_order(d)).op_count()
        assert adds <= 2 * d and mults <= 3 * d

    def test_vdc_order_prefix(self):
        assert_array_equal(vdc_order(8), [7, 3, 1, 5, 0, 4, 2, 6])
        assert_array_equal(dyadic_order(8), [7, 3, 1, 5, 0, 2, 4, 6])

    @pytest.mark.parametrize("d", [3, 5, 8, 13])
    def test_orders_are_permutations(self, d):
        assert sorted(vdc_order(d)) == list(range(d))
        assert sorted(dyadic_order(d)) == list(range(d))


class TestCovarianceIdentity:
    @pytest.mark.parametrize("d", DIMS)
    def test_every_construction(self, d):
        sigma = covariance(TimeGrid.even(d))
        for c in all_constructions(d):
            A = c.matrix()
            assert np.abs(A @ A.T - sigma).max() <= 1e-10, type(c).__name__

    def test_uneven_grid(self):
        g = TimeGrid([0.05, 0.3, 0.31, 0.7, 1.0, 2.5])
        for c in (Forward(g), Bridge(g), Pca(g)):
            A = c.matrix()
            assert_allclose(A @ A.T, covariance(g), atol=1e-12)

    @pytest.mark.parametrize("d", [8, 16])
    def test_any_orthogonal(self, d):
        A = orthogonal_path(random_orthogonal(d, seed=d), np.eye(d)).T
        assert_allclose(A @ A.T, covariance(TimeGrid.even(d)), atol=1e-12)

    def test_normals_are_standardized_increments(self):
        d = 16
        for c in all_constructions(d):
            x = np.random.default_rng(3).standard_normal((5, d))
            assert_allclose(cumsum_map(c.normals(x)), c.path(x), atol=1e-13)


class TestOrthogonalTransforms:
    def test_identity_is_forward(self):
        g = TimeGrid.even(8)
        x = np.random.default_rng(4).standard_normal((3, 8))
        assert_allclose(orthogonal_path(np.eye(8), x, g), forward_path(g, x), atol=1e-14)

    def test_inverse_haar_is_dyadic_bridge(self):
        d = 8
        g = TimeGrid.even(d)
        A_haar = orthogonal_path(inverse_haar_matrix(d), np.eye(d)).T
        A_bridge = bridge_path(build_bridge_tables(g, dyadic_order(d)), np.eye(d)).T
        assert np.abs(A_haar - A_bridge).max() <= 1e-12

    @pytest.mark.parametrize("d", [1, 2, 16, 256])
    def test_inverse_haar_orthogonal(self, d):
        check_orthogonal(inverse_haar_matrix(d), tol=1e-13)

    def test_inverse_haar_needs_power_of_two(self):
        with pytest.raises(ValueError):
            inverse_haar(np.zeros(6))

    def test_rejects_non_orthogonal(self):
        with pytest.raises(ValueError):
            Orthogonal(TimeGrid.even(2), [[1.0, 0.1], [0.0, 1.0]])
        with pytest.raises(ValueError):
            orthogonal_path(2 * np.eye(3), np.zeros(3))

    def test_blocks_contiguous_and_interleaved(self):
        d = 8
        g = TimeGrid.even(d)
        x = np.random.default_rng(5).standard_normal(d)
        blocked = BridgePerBlock(g, 2).normals(x)
        assert_allclose(blocked[:4], inverse_haar(x[:4]))
        assert_allclose(blocked[4:], inverse_haar(x[4:]))
        inter = BridgePerBlock(g, 2, interleaved=True).normals(x)
        assert_allclose(inter[0::2], inverse_haar(x[0::2]))
        assert_allclose(inter[1::2], inverse_haar(x[1::2]))

    def test_block_count_must_divide(self):
        with pytest.raises(ValueError):
            BridgePerBlock(TimeGrid.even(6), 4)


class TestPca:
    def test_one_dimension(self):
        assert_allclose(pca_factors(1), [[1.0]])

    def test_two_dimensions(self):
        A = pca_factors(2)
        assert_allclose(A @ A.T, [[0.5, 0.5], [0.5, 1.0]], atol=1e-12)

    def test_closed_form_eigenvalues(self):
        d = 16
        A = pca_factors(d)
        k = np.arange(1, d + 1)
        expected = 1 / (4 * d * np.sin((2 * k - 1) * np.pi / (2 * (2 * d + 1))) ** 2)
        assert_allclose(np.sum(A * A, axis=0), expected, atol=1e-10)
        numeric = np.linalg.eigvalsh(covariance(TimeGrid.even(d)))[::-1]
        assert_allclose(expected, numeric, atol=1e-10)

    def test_columns_orthogonal_and_sorted(self):
        A = pca_factors(32)
        G = A.T @ A
        assert_allclose(G - np.diag(np.diag(G)), 0.0, atol=1e-12)
        assert np.all(np.diff(np.diag(G)) <= 0)

    def test_orthogonal_factor(self):
        c = Pca(TimeGrid.even(16, 2.0))
        check_orthogonal(c.orthogonal_factor(), tol=1e-12)


class TestRescale:
    def test_even_target_is_identity(self):
        b = np.random.default_rng(6).standard_normal(8)
        assert_allclose(rescale_to_grid(b, TimeGrid.even(8)), b, atol=1e-14)

    def test_two_node_example(self):
        a, b = 0.4, -0.9
        target = TimeGrid([0.25, 1.0])
        out = rescale_to_grid([a, b], target)
        inc = np.array([a, b - a]) * math.sqrt(2) * np.sqrt([0.25, 0.75])
        assert_allclose(out, np.cumsum(inc))
        A = rescale_to_grid(Forward(TimeGrid.even(2)).matrix().T, target).T
        assert_allclose(A @ A.T, covariance(target), atol=1e-12)

    def test_rescaled_forward_matches_law(self):
        d = 16
        target = TimeGrid(np.sort(np.random.default_rng(7).uniform(0.01, 3.0, d)))
        even = Forward(TimeGrid.even(d)).matrix()
        A = rescale_to_grid(even.T, target).T
        assert_allclose(A @ A.T, covariance(target), atol=1e-12)
        B = Forward(target).matrix()
        assert_allclose(B @ B.T, covariance(target), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from([2, 4, 8, 16]),
    arrays(float, 16, elements=st.floats(-5, 5)),
    arrays(float, 16, elements=st.floats(-5, 5)),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_constructions_are_linear(d, x, y, a, b):
    x, y = x[:d], y[:d]
    for c in all_constructions(d):
        lhs = c.path(a * x + b * y)
        rhs = a * c.path(x) + b * c.path(y)
        assert_allclose(lhs, rhs, atol=1e-11)
