"""Discrete Lévy paths by inversion of the increment distribution.

Supported families are closed under convolution, so the law of an increment
over any step ``dt`` is known in closed form:

* ``GammaProcess(shape_rate, scale)``: ``L_t ~ Gamma(t * shape_rate, scale)``.
* ``NormalInverseGaussian(alpha, beta, delta)``: ``L_t ~ NIG(alpha, beta, t * delta)``.
* ``VarianceGamma(nu, theta, sigma)``: Brownian motion with drift run on a
  gamma clock of unit mean rate; two inputs per step.

A ``BrownianMotion`` family is included so the same path code can be checked
against the Gaussian constructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .brownian import TimeGrid, _as_grid, check_orthogonal
from .dist import GammaParams, clamp_unit, gamma_inv_cdf, normal_cdf, normal_inv_cdf

__all__ = [
    "GammaProcess",
    "NormalInverseGaussian",
    "VarianceGamma",
    "BrownianMotion",
    "NigInverter",
    "increment_inv",
    "levy_forward_path",
    "levy_transformed_path",
]


class LevyFamily:
    inputs_per_step = 1

    def increment(self, dt: float, u):
        """Inverse CDF of ``L_dt`` evaluated at uniforms ``u``."""
        raise NotImplementedError

    def increment_from_normal(self, dt: float, y):
        """Increment driven by standard normal input(s) ``y`` (via ``Phi``)."""
        return self.increment(dt, clamp_unit(normal_cdf(y)))


@dataclass(frozen=True)
class GammaProcess(LevyFamily):
    shape_rate: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape_rate > 0 and self.scale > 0):
            raise ValueError("gamma process parameters must be positive")

    def increment(self, dt, u):
        return gamma_inv_cdf(u, GammaParams(dt * self.shape_rate, self.scale))

    def mean(self, t):
        return t * self.shape_rate * self.scale

    def variance(self, t):
        return t * self.shape_rate * self.scale**2


@dataclass(frozen=True)
class NormalInverseGaussian(LevyFamily):
    alpha: float
    beta: float
    delta: float

    def __post_init__(self):
        if not (self.alpha > abs(self.beta) and self.delta > 0):
            raise ValueError("NIG needs alpha > |beta| and delta > 0")

    @property
    def gamma(self) -> float:
        return math.sqrt(self.alpha**2 - self.beta**2)

    def increment(self, dt, u):
        return NigInverter.get(self.alpha, self.beta, self.delta * dt).inv(u)

    def mean(self, t):
        return t * self.delta * self.beta / self.gamma

    def variance(self, t):
        return t * self.delta * self.alpha**2 / self.gamma**3


@dataclass(frozen=True)
class VarianceGamma(LevyFamily):
    """``X_t = theta G_t + sigma W(G_t)`` with ``G_t ~ Gamma(t / nu, nu)``.

    Inputs per step: ``(subordinator, brownian)``, i.e. even 0-based
    coordinates drive the gamma clock, odd ones the Brownian evaluation.
    """

    nu: float
    theta: float
    sigma: float
    inputs_per_step = 2

    def __post_init__(self):
        if not (self.nu > 0 and self.sigma > 0):
            raise ValueError("VG needs nu > 0 and sigma > 0")

    def _combine(self, g, z):
        return self.theta * g + self.sigma * np.sqrt(g) * z

    def increment(self, dt, u):
        u = np.asarray(u, dtype=float)
        g = gamma_inv_cdf(u[..., 0], GammaParams(dt / self.nu, self.nu))
        return self._combine(g, normal_inv_cdf(u[..., 1]))

    def increment_from_normal(self, dt, y):
        y = np.asarray(y, dtype=float)
        g = gamma_inv_cdf(clamp_unit(normal_cdf(y[..., 0])), GammaParams(dt / self.nu, self.nu))
        return self._combine(g, y[..., 1])

    def mean(self, t):
        return self.theta * t

    def variance(self, t):
        return t * (self.sigma**2 + self.theta**2 * self.nu)


@dataclass(frozen=True)
class BrownianMotion(LevyFamily):
    def increment(self, dt, u):
        return math.sqrt(dt) * normal_inv_cdf(u)

    def increment_from_normal(self, dt, y):
        return math.sqrt(dt) * np.asarray(y, dtype=float)


def _nig_pdf(x, alpha, beta, delta):
    q = np.sqrt(delta * delta + x * x)
    gamma = math.sqrt(alpha * alpha - beta * beta)
    # k1e(z) = K1(z) e^z keeps the exponent bounded in the tails
    log_rest = delta * gamma + beta * x - alpha * q
    return alpha * delta * special.k1e(alpha * q) / (math.pi * q) * np.exp(log_rest)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class NigInverter:
    """Numeric inverse CDF of ``NIG(alpha, beta, delta)`` (location 0).

    The CDF is tabulated on ``knots`` points spaced uniformly in
    ``asinh((x - mean) / delta)`` (dense near the centre, sparse in the
    exponential tails), integrating the density with 16-point Gauss-Legendre
    on each cell. Inversion locates the cell by table lookup, starts from the
    monotone (PCHIP) interpolant, and polishes with safeguarded Newton steps
    on the exact within-cell integral.
    """

    def __init__(self, alpha: float, beta: float, delta: float, knots: int = 2048):
        self.alpha, self.beta, self.delta = float(alpha), float(beta), float(delta)
        gamma = math.sqrt(alpha * alpha - beta * beta)
        mean = delta * beta / gamma
        sd = math.sqrt(delta * alpha * alpha / gamma**3)
        # tail mass beyond the range is below ~1e-15
        decay = alpha - abs(beta)
        width = 12.0 * sd + (36.0 + math.log1p(alpha * delta)) / decay
        s_max = math.asinh(width / delta)
        s = np.linspace(-s_max, s_max, knots)
        self.center = mean
        self.x = mean + delta * np.sinh(s)
        cell = self._cell_integral(self.x[:-1], self.x[1:])
        F = np.concatenate(([0.0], np.cumsum(cell)))
        self.mass = F[-1]
        self.F = F / self.mass
        rising = np.concatenate(([True], np.diff(self.F) > 0.0))
        self._guess = PchipInterpolator(self.F[rising], self.x[rising])

    @classmethod
    def get(cls, alpha, beta, delta) -> "NigInverter":
        return _nig_inverter(float(alpha), float(beta), float(delta))

    def pdf(self, x):
        return _nig_pdf(np.asarray(x, dtype=float), self.alpha, self.beta, self.delta) / self.mass

    def _cell_integral(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        pts = mid[..., None] + half[..., None] * _GL_NODES
        vals = _nig_pdf(pts, self.alpha, self.beta, self.delta)
        return half * (vals @ _GL_WEIGHTS)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.x[0], self.x[-1])
        k = np.clip(np.searchsorted(self.x, xc, side="right") - 1, 0, len(self.x) - 2)
        return np.clip(self.F[k] + self._cell_integral(self.x[k], xc) / self.mass, 0.0, 1.0)

    def inv(self, u, iters: int = 8):
        u_arr = np.asarray(u, dtype=float)
        if np.any(~(u_arr > 0.0) | ~(u_arr < 1.0)):
            raise ValueError("NIG inverse requires 0 < u < 1")
        k = np.clip(np.searchsorted(self.F, u_arr, side="right") - 1, 0, len(self.x) - 2)
        lo, hi = self.x[k], self.x[k + 1]
        x = np.clip(self._guess(u_arr), lo, hi)
        for _ in range(iters):
            f = self.F[k] + self._cell_integral(lo, x) / self.mass - u_arr
            dens = self.pdf(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = x - f / dens
            bad = ~np.isfinite(cand) | (cand < lo) | (cand > hi)
            x = np.where(bad, np.where(f > 0, 0.5 * (lo + x), 0.5 * (x + hi)), cand)
        return x


@lru_cache(maxsize=256)
def _nig_inverter(alpha, beta, delta):
    return NigInverter(alpha, beta, delta)


def increment_inv(family: LevyFamily, dt: float, u):
    """``F_dt^{-1}(u)``; for two-input families ``u`` has a trailing axis of length 2."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return family.increment(dt, u)


def _per_step(family, grid, x):
    g = _as_grid(grid)
    k = family.inputs_per_step
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != k * g.d:
        raise ValueError(f"expected {k * g.d} inputs, got {x.shape[-1]}")
    if k > 1:
        x = x.reshape(x.shape[:-1] + (g.d, k))
    return g, x


def levy_forward_path(family: LevyFamily, grid, u) -> np.ndarray:
    """``L_{t_k} = L_{t_{k-1}} + F_{dt_k}^{-1}(u_k)``."""
    g, u = _per_step(family, grid, u)
    inc = np.empty(u.shape[: u.ndim - (family.inputs_per_step > 1)])
    for j, dt in enumerate(g.steps):
        inc[..., j] = family.increment(float(dt), u[..., j, :] if family.inputs_per_step > 1 else u[..., j])
    return np.cumsum(inc, axis=-1)


def levy_transformed_path(family: LevyFamily, grid, V, x) -> np.ndarray:
    """Forward construction driven by ``Phi(V x)`` instead of independent uniforms.

    ``V`` is a dense orthogonal matrix or a callable acting on the last axis
    (e.g. :func:`~qmcpricer.brownian.inverse_haar`).
    """
    x = np.asarray(x, dtype=float)
    y = V(x) if callable(V) else x @ check_orthogonal(V).T
    g, y = _per_step(family, grid, y)
    multi = family.inputs_per_step > 1
    inc = np.empty(y.shape[: y.ndim - multi])
    for j, dt in enumerate(g.steps):
        inc[..., j] = family.increment_from_normal(float(dt), y[..., j, :] if multi else y[..., j])
    return np.cumsum(inc, axis=-1)
