"""Payoffs, reference prices and the randomly shifted QMC estimator."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .brownian import BridgePerBlock, Forward, InverseHaar, Orthogonal, PathConstruction, Pca, TimeGrid
from .dist import clamp_unit, normal_cdf, normal_inv_cdf
from .lowdisc import UniformRng, apply_shift, sobol_points
from .sde import HestonParams, heston_euler

__all__ = [
    "BsMarket",
    "bs_call",
    "bs_put",
    "binomial_one_step",
    "gbm_path",
    "EuropeanCall",
    "EuropeanPut",
    "DigitalCall",
    "DigitalPut",
    "AsianFixed",
    "AsianFloat",
    "Basket",
    "Ratchet",
    "payoff_eval",
    "BlackScholesModel",
    "BasketModel",
    "HestonModel",
    "Householder",
    "regression_transform",
    "make_construction",
    "CONSTRUCTIONS",
    "PriceEstimate",
    "qmc_price",
    "to_normals",
]


@dataclass(frozen=True)
class BsMarket:
    r: float
    sigma: float
    s0: float
    T: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.T > 0 and self.s0 > 0):
            raise ValueError("Black-Scholes market needs sigma, T, s0 > 0")

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.T)


def bs_call(m: BsMarket, K: float) -> float:
    if K <= 0:
        raise ValueError("strike must be positive")
    vol = m.sigma * math.sqrt(m.T)
    d1 = (math.log(m.s0 / K) + (m.r + 0.5 * m.sigma**2) * m.T) / vol
    d2 = d1 - vol
    return float(m.s0 * normal_cdf(d1) - m.discount * K * normal_cdf(d2))


def bs_put(m: BsMarket, K: float) -> float:
    return bs_call(m, K) - m.s0 + K * m.discount


def binomial_one_step(r: float, u: float, d: float, s0: float, K: float, p: float = 0.5):
    """One-period call price: ``(arbitrage_free, naive)``.

    The naive price discounts the expectation under the physical probability
    ``p``; the arbitrage-free one uses ``p* = (1 + r - d) / (u - d)``.
    """
    if not 0 < d < 1 + r < u:
        raise ValueError("need 0 < d < 1 + r < u")
    up, down = max(s0 * u - K, 0.0), max(s0 * d - K, 0.0)
    p_star = (1 + r - d) / (u - d)
    arbitrage_free = (p_star * up + (1 - p_star) * down) / (1 + r)
    naive = (p * up + (1 - p) * down) / (1 + r)
    return arbitrage_free, naive


def gbm_path(B, m: BsMarket, times) -> np.ndarray:
    """Risk-neutral prices ``S_t = S_0 exp((r - sigma^2/2) t + sigma B_t)``."""
    t = np.asarray(times, dtype=float)
    return m.s0 * np.exp((m.r - 0.5 * m.sigma**2) * t + m.sigma * np.asarray(B, dtype=float))


# Payoffs take prices on the grid nodes (last axis), the node times and S_0.


@dataclass(frozen=True)
class EuropeanCall:
    K: float

    def __call__(self, prices, times=None, s0=None):
        return np.maximum(prices[..., -1] - self.K, 0.0)


@dataclass(frozen=True)
class EuropeanPut:
    K: float

    def __call__(self, prices, times=None, s0=None):
        return np.maximum(self.K - prices[..., -1], 0.0)


@dataclass(frozen=True)
class DigitalCall:
    K: float
    cash: float = 1.0

    def __call__(self, prices, times=None, s0=None):
        return np.where(prices[..., -1] > self.K, self.cash, 0.0)


@dataclass(frozen=True)
class DigitalPut:
    K: float
    cash: float = 1.0

    def __call__(self, prices, times=None, s0=None):
        return np.where(prices[..., -1] < self.K, self.cash, 0.0)


def _window_mean(prices, times, window):
    if window is None or times is None:
        return prices.mean(axis=-1)
    t = np.asarray(times, dtype=float)
    lo, hi = window
    mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if not mask.any():
        raise ValueError("averaging window contains no grid node")
    return prices[..., mask].mean(axis=-1)


@dataclass(frozen=True)
class AsianFixed:
    """``max(mean(S over window nodes) - K, 0)``; the window defaults to every node."""

    K: float
    window: Optional[tuple[float, float]] = None

    def __call__(self, prices, times=None, s0=None):
        return np.maximum(_window_mean(prices, times, self.window) - self.K, 0.0)


@dataclass(frozen=True)
class AsianFloat:
    window: Optional[tuple[float, float]] = None

    def __call__(self, prices, times=None, s0=None):
        return np.maximum(_window_mean(prices, times, self.window) - prices[..., -1], 0.0)


@dataclass(frozen=True)
class Basket:
    """``max(sum_j w_j S^j_T - K, 0)`` on terminal prices of several assets."""

    weights: tuple
    K: float

    def __call__(self, prices, times=None, s0=None):
        w = np.asarray(self.weights, dtype=float)
        if prices.shape[-1] != len(w):
            raise ValueError(f"basket expects {len(w)} terminal prices, got {prices.shape[-1]}")
        return np.maximum(prices @ w - self.K, 0.0)


@dataclass(frozen=True)
class Ratchet:
    """``(1/d) sum_j 1{S_j - S_{j-1} >= 0} S_j`` with ``S_0`` as the first left value."""

    def __call__(self, prices, times=None, s0=None):
        if s0 is None:
            raise ValueError("ratchet payoff needs S_0")
        prev = np.concatenate([np.broadcast_to(s0, prices.shape[:-1] + (1,)), prices[..., :-1]], axis=-1)
        return np.mean(np.where(prices - prev >= 0.0, prices, 0.0), axis=-1)


def payoff_eval(p: Callable, prices, s0: float, times=None):
    prices = np.asarray(prices, dtype=float)
    if prices.shape[-1] == 0:
        raise ValueError("empty price path")
    return p(prices, times, s0)


class BlackScholesModel:
    """GBM observed on ``steps`` equally spaced nodes in ``(0, T]``."""

    def __init__(self, market: BsMarket, steps: int):
        self.market = market
        self.steps = steps
        self.grid = TimeGrid.even(steps, market.T)
        self.times = self.grid.nodes
        self.discount = market.discount
        self.s0 = market.s0

    @property
    def input_dim(self) -> int:
        return self.steps

    def prices(self, y):
        """Prices from standardized Brownian increments ``y`` (``(..., steps)``)."""
        B = np.cumsum(y, axis=-1) * math.sqrt(self.market.T / self.steps)
        return gbm_path(B, self.market, self.times)


class BasketModel:
    """Terminal prices of correlated GBM assets; ``chol`` is a user-supplied Cholesky factor."""

    def __init__(self, s0, sigmas, r: float, T: float, chol=None):
        self.s0_vec = np.asarray(s0, dtype=float)
        self.sigmas = np.asarray(sigmas, dtype=float)
        n = len(self.s0_vec)
        self.chol = np.eye(n) if chol is None else np.asarray(chol, dtype=float)
        self.r, self.T = r, T
        self.discount = math.exp(-r * T)
        self.times = np.array([T])
        self.s0 = self.s0_vec
        vol = self.sigmas[:, None] * self.chol
        self._vol_t = vol.T
        self._drift = (r - 0.5 * np.sum(vol * vol, axis=1)) * T

    @property
    def input_dim(self) -> int:
        return len(self.s0_vec)

    def prices(self, y):
        return self.s0_vec * np.exp(self._drift + math.sqrt(self.T) * (y @ self._vol_t))


class HestonModel:
    """Heston Euler scheme on ``steps`` steps driven by ``2 * steps`` standardized normals.

    ``layout="blocked"`` (default): inputs ``0..steps-1`` are the increments of
    the price-only driver ``W2``, inputs ``steps..2*steps-1`` those of the
    variance driver ``W1``. ``layout="interleaved"``: ``(W1_k, W2_k)`` pairs.
    """

    def __init__(
        self,
        params: HestonParams,
        steps: int,
        T: float = 1.0,
        scheme: str = "full_truncation",
        layout: str = "blocked",
    ):
        if layout not in ("blocked", "interleaved"):
            raise ValueError(f"unknown input layout {layout!r}")
        self.params = params
        self.steps, self.T, self.scheme, self.layout = steps, T, scheme, layout
        self.h = T / steps
        self.times = self.h * np.arange(1, steps + 1)
        self.discount = math.exp(-params.r * T)
        self.s0 = params.s0

    @property
    def input_dim(self) -> int:
        return 2 * self.steps

    def drivers(self, y):
        """Standardized increments ``(W1, W2)`` from the input vector."""
        y = np.asarray(y, dtype=float)
        if self.layout == "blocked":
            return y[..., self.steps :], y[..., : self.steps]
        return y[..., 0::2], y[..., 1::2]

    def prices(self, y):
        w1, w2 = self.drivers(y)
        sq = math.sqrt(self.h)
        sol = heston_euler(self.params, self.h, self.steps, sq * w1, sq * w2, self.scheme)
        return sol.values[..., 1:]


def _discounted(model, payoff, y):
    return model.discount * payoff(model.prices(y), model.times, model.s0)


class Householder:
    """Reflection ``I - 2 u u^T`` (identity when ``u`` is ``None``); applied in O(d)."""

    def __init__(self, d: int, u=None):
        self.d = d
        self.u = None if u is None else np.asarray(u, dtype=float) / np.linalg.norm(u)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if self.u is None:
            return x
        return x - 2.0 * np.multiply.outer(x @ self.u, self.u)

    __call__ = apply

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.d)).T


def regression_transform(x, values) -> Householder:
    """Householder ``V`` with ``V^T w = |w| e_1`` for the least-squares fit ``a + w^T x``.

    ``x`` is an ``(n, d)`` pilot design with ``n >= d + 1``.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    n, d = x.shape
    if n < d + 1:
        raise ValueError(f"regression needs at least d + 1 = {d + 1} pilot points, got {n}")
    design = np.column_stack([np.ones(n), x])
    coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < d + 1:
        raise ValueError("pilot design matrix is rank deficient")
    w = coef[1:]
    norm = np.linalg.norm(w)
    # relative to the fitted level so round-off on constant data counts as flat
    if norm <= 1e-12 * max(1.0, abs(coef[0])):
        warnings.warn("regression slope is zero; using the identity transform", RuntimeWarning, stacklevel=2)
        return Householder(d)
    v = w / norm
    v[0] -= 1.0
    if np.linalg.norm(v) < 1e-14:
        return Householder(d)
    return Householder(d, v)


def to_normals(u):
    return normal_inv_cdf(clamp_unit(u))


PILOT_LOG2 = 9


def _pilot_transform(integrand, d: int, pilot_log2: int = PILOT_LOG2) -> Householder:
    n = max(2**pilot_log2, 1 << int(math.ceil(math.log2(2 * (d + 1)))))
    x = to_normals(sobol_points(d, n, skip_zero=True))
    return regression_transform(x, integrand(x))


CONSTRUCTIONS = ("forward", "bb", "bb2", "pca", "regression")


def make_construction(
    name: str, d: int, T: float = 1.0, integrand=None, interleaved: bool = False
) -> PathConstruction:
    """Construction by name; ``regression`` needs the forward-parametrized integrand.

    ``interleaved`` only affects ``bb2`` and selects round-robin blocks.
    """
    grid = TimeGrid.even(d, T)
    if name == "forward":
        return Forward(grid)
    if name == "bb":
        return InverseHaar(grid)
    if name == "bb2":
        return BridgePerBlock(grid, 2, interleaved=interleaved)
    if name == "pca":
        return Pca(grid)
    if name == "regression":
        if integrand is None:
            raise ValueError("regression construction needs an integrand for the pilot fit")
        return Orthogonal(grid, _pilot_transform(integrand, d))
    raise ValueError(f"unknown construction {name!r}; choose from {', '.join(CONSTRUCTIONS)}")


@dataclass(frozen=True)
class PriceEstimate:
    mean: float
    stddev: float
    shifts: int
    points_per_shift: int
    elapsed: float
    per_shift: tuple = ()


def qmc_price(
    model,
    payoff: Callable,
    construction="forward",
    shifts: int = 16,
    points: int = 2**10,
    seed: int = 0,
    skip_zero: bool = False,
    chunk: int = 2**20,
) -> PriceEstimate:
    """Randomly shifted Sobol estimate of ``E[discount * payoff]``.

    Each shift maps the same ``points`` Sobol points through ``(u + delta) mod 1``,
    ``Phi^{-1}``, the construction's orthogonal factor and the model. The
    estimate is the mean of the per-shift averages; ``stddev`` is their
    sample standard deviation.
    """
    d = model.input_dim
    start = time.perf_counter()
    if isinstance(construction, str):
        T = getattr(model, "T", None) or getattr(model.market, "T", 1.0)
        construction = make_construction(
            construction,
            d,
            T,
            integrand=lambda y: _discounted(model, payoff, y),
            interleaved=getattr(model, "layout", "blocked") == "interleaved",
        )
    if construction.d != d:
        raise ValueError(f"construction dimension {construction.d} != model input dimension {d}")
    pts = sobol_points(d, points, skip_zero=skip_zero)
    deltas = UniformRng(seed).random((shifts, d))
    rows = max(1, chunk // d)
    estimates = np.empty(shifts)
    for i, delta in enumerate(deltas):
        total = 0.0
        for lo in range(0, points, rows):
            x = to_normals(apply_shift(pts[lo : lo + rows], delta))
            total += float(np.sum(_discounted(model, payoff, construction.normals(x))))
        estimates[i] = total / points
    stddev = float(np.std(estimates, ddof=1)) if shifts > 1 else 0.0
    return PriceEstimate(
        mean=float(estimates.mean()),
        stddev=stddev,
        shifts=shifts,
        points_per_shift=points,
        elapsed=time.perf_counter() - start,
        per_shift=tuple(estimates),
    )
