import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qmcpricer.dist import (
    U_MIN,
    Density,
    GammaParams,
    RejectionSpec,
    acceptance_rejection,
    acceptance_rejection_batch,
    box_muller,
    clamp_unit,
    exponential_density,
    gamma_cdf,
    gamma_density,
    gamma_inv_cdf,
    importance_estimate,
    marsaglia_bray,
    marsaglia_bray_batch,
    normal_cdf,
    normal_density,
    normal_inv_cdf,
)
from qmcpricer.lowdisc import UniformRng, sobol_points

mpmath.mp.dps = 40


def mp_normal_cdf(x):
    return float(mpmath.ncdf(x))


def mp_gamma_inv(u, shape):
    """Bisection on the regularized lower incomplete gamma at 40 digits."""
    lo, hi = mpmath.mpf(0), mpmath.mpf(shape) + 20 * mpmath.sqrt(shape) + 60
    target = mpmath.mpf(u)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mpmath.gammainc(shape, 0, mid, regularized=True) < target:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def moment_checks(x, y):
    n = len(x)
    for z in (x, y):
        assert abs(z.mean()) <= 3 / math.sqrt(n)
        assert abs(z.var() - 1) <= 3 * math.sqrt(2 / n)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 3 / math.sqrt(n)


class TestNormal:
    def test_cdf_values(self):
        assert normal_cdf(0.0) == 0.5
        assert abs(normal_cdf(1.959964) - 0.975) <= 1e-6

    @pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.1, 0.4, 2.5, 6.0])
    def test_cdf_against_high_precision(self, x):
        assert abs(normal_cdf(x) - mp_normal_cdf(x)) <= 1e-12

    @given(st.floats(-30, 30))
    def test_cdf_symmetry(self, x):
        assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) <= 1e-14

    def test_inverse_values(self):
        assert normal_inv_cdf(0.5) == 0.0
        assert abs(normal_inv_cdf(0.975) - 1.959964) <= 1e-6

    @pytest.mark.parametrize("u", [1e-12, 1e-7, 0.01, 0.3, 0.5, 0.77, 0.99, 1 - 1e-9])
    def test_inverse_against_high_precision(self, u):
        ref = float(mpmath.findroot(lambda z: mpmath.ncdf(z) - u, float(normal_inv_cdf(u))))
        assert abs(normal_inv_cdf(u) - ref) <= 1e-9 * max(1.0, abs(ref))

    @settings(max_examples=300)
    @given(st.floats(1e-12, 1 - 1e-12))
    def test_round_trip(self, u):
        assert abs(normal_cdf(normal_inv_cdf(u)) - u) <= 1e-10

    @settings(max_examples=300)
    @given(st.floats(1e-12, 0.5))
    def test_inverse_antisymmetry(self, u):
        # pick u so that 1 - u is exact in floating point
        u = 1.0 - (1.0 - u)
        assert abs(normal_inv_cdf(u) + normal_inv_cdf(1.0 - u)) <= 1e-12

    def test_inverse_vectorized_and_monotone(self):
        u = np.linspace(1e-10, 1 - 1e-10, 10001)
        z = normal_inv_cdf(u)
        assert z.shape == u.shape
        assert np.all(np.diff(z) > 0)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_inverse_domain(self, u):
        with pytest.raises(ValueError):
            normal_inv_cdf(u)

    def test_clamp_maps_zero(self):
        assert clamp_unit(0.0) == U_MIN
        assert np.isfinite(normal_inv_cdf(clamp_unit(np.zeros(3)))).all()


class TestBoxMuller:
    def test_zero_radius(self):
        assert box_muller(0.0, 0.37) == (0.0, 0.0)

    def test_unit_radius(self):
        x, y = box_muller(1 - math.exp(-0.5), 0.0)
        assert_allclose((x, y), (1.0, 0.0), atol=1e-15)

    def test_moments(self):
        uv = UniformRng(7).random((2, 10**5))
        x, y = box_muller(uv[0], uv[1])
        moment_checks(np.asarray(x), np.asarray(y))


class TestMarsagliaBray:
    def test_centre_gives_zero(self):
        assert marsaglia_bray(iter([(0.5, 0.5)])) == (0.0, 0.0)

    def test_formula(self):
        x, y = marsaglia_bray(iter([(0.5, 0.9)]))
        s = 0.64
        assert x == 0.0
        assert_allclose(y, 0.8 * math.sqrt(-2 * math.log(s) / s), rtol=1e-14)

    def test_rejection_uses_next_pair(self):
        assert marsaglia_bray(iter([(0.99, 0.99), (0.5, 0.5)])) == (0.0, 0.0)

    def test_moments(self):
        uv = UniformRng(8).random((2, 130_000))
        x, y = marsaglia_bray_batch(uv[0], uv[1])
        assert len(x) > 10**5
        moment_checks(x[: 10**5], y[: 10**5])

    def test_batch_matches_scalar(self):
        uv = UniformRng(3).random((2, 50))
        xb, yb = marsaglia_bray_batch(uv[0], uv[1])
        pairs = iter(zip(uv[0], uv[1]))
        for xi, yi in zip(xb, yb):
            assert_allclose(marsaglia_bray(pairs), (xi, yi), rtol=1e-15)


class TestGamma:
    def test_exponential_case(self):
        assert_allclose(gamma_inv_cdf(0.5, GammaParams(1.0)), math.log(2), rtol=1e-14)

    def test_scale_equivariance(self):
        u = np.linspace(0.01, 0.99, 33)
        assert_allclose(gamma_inv_cdf(u, GammaParams(1.0, 2.0)), 2 * gamma_inv_cdf(u, GammaParams(1.0)), rtol=1e-15)

    @pytest.mark.parametrize("shape", [0.05, 0.5, 1.2, 2.0, 7.5, 150.0])
    @pytest.mark.parametrize("u", [1e-8, 0.01, 0.5, 0.9, 0.999999])
    def test_against_incomplete_gamma_oracle(self, shape, u):
        ref = mp_gamma_inv(u, shape)
        assert abs(gamma_inv_cdf(u, GammaParams(shape)) - ref) <= 1e-9 * max(1.0, ref)

    @settings(max_examples=200)
    @given(st.floats(0.05, 50.0), st.floats(1e-9, 1 - 1e-9))
    def test_round_trip(self, shape, u):
        p = GammaParams(shape)
        assert abs(gamma_cdf(gamma_inv_cdf(u, p), p) - u) <= 1e-9

    def test_monotone_and_shape_preserving(self):
        u = np.linspace(0.001, 0.999, 999).reshape(27, 37)
        x = gamma_inv_cdf(u, GammaParams(1.8))
        assert x.shape == u.shape
        assert np.all(np.diff(x.ravel()) > 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            gamma_inv_cdf(0.0, GammaParams(2.0))
        with pytest.raises(ValueError):
            GammaParams(0.0)

    def test_density_round_trip(self):
        dens = gamma_density(2.5, 1.5)
        x = np.linspace(0.05, 20, 50)
        assert_allclose(dens.inv_cdf(dens.cdf(x)), x, rtol=1e-9)


class TestRoundTrips:
    @pytest.mark.parametrize("dens", [normal_density(1.0, 2.0), exponential_density(0.7), gamma_density(3.0)])
    def test_inv_cdf_of_cdf(self, dens):
        x = np.linspace(0.1, 6.0, 40)
        assert_allclose(dens.inv_cdf(dens.cdf(x)), x, rtol=1e-9)
        assert np.all(np.diff(dens.cdf(x)) >= 0)


class TestRejection:
    def paper_like_spec(self):
        b = 0.85
        return RejectionSpec(gamma_density(1.2).pdf, exponential_density(b), 1 / b, grid=(1e-6, 50.0))

    def test_identical_densities_accept_first(self):
        dens = exponential_density(1.0)
        spec = RejectionSpec(dens.pdf, dens, 1.0)
        pairs = iter(UniformRng(0).random((10, 2)))
        for _ in range(10):
            _, consumed = acceptance_rejection(spec, pairs)
            assert consumed == 1

    def test_bound_valid_on_grid(self):
        spec = self.paper_like_spec()
        xs = np.linspace(1e-6, 50, 10_000)
        assert np.all(spec.target_pdf(xs) <= spec.bound * spec.proposal.pdf(xs))

    def test_invalid_bound_rejected(self):
        with pytest.raises(ValueError):
            RejectionSpec(gamma_density(1.2).pdf, exponential_density(0.85), 1.0)

    def test_sample_mean(self):
        spec = self.paper_like_spec()
        x, _ = acceptance_rejection_batch(spec, 10**5, UniformRng(1))
        sd = math.sqrt(1.2 / 10**5)
        assert abs(x.mean() - 1.2) <= 3 * sd

    def test_acceptance_frequency(self):
        spec = self.paper_like_spec()
        n = 10**5
        _, consumed = acceptance_rejection_batch(spec, n, UniformRng(2))
        # consumed trials for n successes; compare the success frequency with 1/c
        p = 1 / spec.bound
        freq = n / consumed
        assert abs(freq - p) <= 3 * math.sqrt((1 - p) * p / consumed)

    def test_batch_matches_scalar_stream(self):
        spec = self.paper_like_spec()
        rng = UniformRng(4)
        x_batch, consumed = acceptance_rejection_batch(spec, 25, rng, block=7)
        pairs = iter(UniformRng(4).random((consumed + 20, 2)))
        total = 0
        for xb in x_batch:
            xs, used = acceptance_rejection(spec, pairs)
            total += used
            assert xs == xb
        assert total == consumed

    def test_non_finite_ratio(self):
        dens = exponential_density(1.0)

        def target(x):
            x = np.asarray(x, dtype=float)
            return np.where(x < 1e-3, np.inf, dens.pdf(x))

        spec = RejectionSpec(target, dens, 1.0, grid=(0.01, 50.0))
        with pytest.raises(FloatingPointError):
            acceptance_rejection(spec, iter([(1e-6, 0.5)]))


class TestImportance:
    def test_total_mass(self):
        pts = sobol_points(1, 2**14, skip_zero=True)[:, 0]
        est = importance_estimate(lambda x: np.ones_like(x), gamma_density(2.0), exponential_density(0.5), pts)
        assert abs(est - 1.0) < 1e-3

    def test_equal_densities_is_plain_mean(self):
        dens = normal_density()
        u = UniformRng(5).random(1000)
        h = np.cos
        assert_allclose(importance_estimate(h, dens, dens, u), np.mean(h(dens.inv_cdf(u))), rtol=1e-14)

    def test_odd_function(self):
        pts = sobol_points(1, 2**14, skip_zero=True)[:, 0]
        est = importance_estimate(lambda x: x, normal_density(), normal_density(0.0, 2.0), pts)
        assert abs(est) < 5e-3

    def test_agrees_with_direct_inversion(self):
        u = UniformRng(9).random(20_000)
        target, proposal = normal_density(), normal_density(0.5, 1.5)
        h = lambda x: x**2
        a = importance_estimate(h, target, proposal, u)
        b = np.mean(h(target.inv_cdf(u)))
        assert abs(a - b) <= 3 * math.sqrt(2 / len(u)) * 2.5

    def test_missing_support(self):
        base = normal_density()
        # proposal that claims zero density on the negative half line yet samples there
        leaky = Density(lambda x: np.where(np.asarray(x) > 0, 2 * base.pdf(x), 0.0), base.cdf, base.inv_cdf)
        with pytest.raises(ValueError):
            importance_estimate(lambda x: np.ones_like(x), base, leaky, np.array([0.25, 0.75]))

    def test_density_type(self):
        assert isinstance(normal_density(), Density)
