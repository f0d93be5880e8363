"""Multilevel (quasi-)Monte Carlo estimation with coarsened normal inputs.

Level ``l`` integrands take ``m**l`` standard normals. Level ``l >= 1``
evaluates the coupled difference ``f_l(x) - f_{l-1}(coarsen(x))``, so fine and
coarse estimates share their input. The point source decides where those
inputs come from: pseudo-random normals, or a randomly shifted Sobol rule per
level.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .brownian import Orthogonal, Pca, TimeGrid
from .lowdisc import UniformRng, apply_shift, sobol_points
from .pricing import AsianFixed, BlackScholesModel, BsMarket, _pilot_transform, to_normals

__all__ = [
    "LevelSpec",
    "MlEstimate",
    "coarsen",
    "coarsening_matrix",
    "level_difference",
    "McSource",
    "QmcSource",
    "CommonSource",
    "ml_estimate",
    "allocate_doubling",
    "allocate_cost_optimal",
    "difference_integrands",
    "bs_asian_family",
    "AsianMultilevel",
    "METHODS",
]


@dataclass(frozen=True)
class LevelSpec:
    level: int
    m: int
    samples: int
    cost: float = 1.0

    def __post_init__(self):
        if self.level < 0 or self.m < 2:
            raise ValueError("need level >= 0 and m >= 2")
        if self.samples < 1:
            raise ValueError("each level needs at least one sample")
        if not self.cost > 0:
            raise ValueError("unit cost must be positive")

    @property
    def dimension(self) -> int:
        return self.m**self.level


@dataclass
class MlEstimate:
    """Telescoped estimate; level statistics are taken across runs."""

    level_means: np.ndarray
    level_stddevs: np.ndarray
    total: float
    total_stddev: float
    runs: int
    elapsed: float
    totals: np.ndarray = field(repr=False, default=None)


def _power_of(n: int, m: int) -> bool:
    while n > 1 and n % m == 0:
        n //= m
    return n == 1


def coarsen(x, m: int = 2) -> np.ndarray:
    """Block sums over ``m`` neighbours scaled by ``1 / sqrt(m)`` (last axis)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if m < 2 or n < m or not _power_of(n, m):
        raise ValueError(f"input length {n} is not a positive power of {m}")
    return x.reshape(x.shape[:-1] + (n // m, m)).sum(axis=-1) / math.sqrt(m)


def coarsening_matrix(m: int, level: int) -> np.ndarray:
    """Dense ``m**level x m**(level + 1)`` matrix of :func:`coarsen`."""
    return np.kron(np.eye(m**level), np.full((1, m), 1.0 / math.sqrt(m)))


def level_difference(f_fine: Callable, f_coarse: Callable, x, m: int = 2):
    """``f_fine(x) - f_coarse(coarsen(x))`` on the same input ``x``."""
    return f_fine(x) - f_coarse(coarsen(x, m))


def difference_integrands(family: Sequence[Callable], m: int = 2) -> list:
    """Per-level integrands ``[f_0, f_1 - f_0 o C, ..., f_L - f_{L-1} o C]``."""
    out = [family[0]]
    for fine, coarse in zip(family[1:], family[:-1]):
        out.append(lambda x, fine=fine, coarse=coarse: level_difference(fine, coarse, x, m))
    return out


class McSource:
    """Independent pseudo-random normals; one PCG64 stream per run."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def start(self, run: int):
        self._gen = UniformRng(np.random.SeedSequence([self.seed, run]).generate_state(1)[0]).generator

    def draw(self, level: int, n: int, d: int) -> np.ndarray:
        return self._gen.standard_normal((n, d))


class QmcSource:
    """First ``n`` Sobol points of dimension ``d`` with an independent shift per level and run."""

    def __init__(self, seed: int = 0, skip_zero: bool = False):
        self.seed = seed
        self.skip_zero = skip_zero

    def start(self, run: int):
        self._rng = UniformRng(np.random.SeedSequence([self.seed, run]).generate_state(1)[0])

    def draw(self, level: int, n: int, d: int) -> np.ndarray:
        delta = self._rng.random(d)
        return to_normals(apply_shift(sobol_points(d, n, skip_zero=self.skip_zero), delta))


class CommonSource:
    """One fine-level sample reused at every level through repeated coarsening.

    Only meaningful when all levels use the same sample count; this forces
    the telescoping sum to collapse to the fine-level estimate.
    """

    def __init__(self, x_fine, m: int = 2):
        self.x_fine = np.asarray(x_fine, dtype=float)
        self.m = m

    def start(self, run: int):
        pass

    def draw(self, level: int, n: int, d: int) -> np.ndarray:
        x = self.x_fine
        while x.shape[-1] > d:
            x = coarsen(x, self.m)
        if x.shape != (n, d):
            raise ValueError(f"common sample has shape {x.shape}, level asks for {(n, d)}")
        return x


def ml_estimate(levels: Sequence[LevelSpec], integrands: Sequence[Callable], source, runs: int = 1) -> MlEstimate:
    """Telescoped estimator ``sum_l mean(integrands[l](x_l))`` over ``runs`` replications.

    ``integrands[0]`` is ``f_0``; ``integrands[l]`` for ``l >= 1`` must already
    be the coupled difference (see :func:`difference_integrands`).
    """
    if len(levels) != len(integrands):
        raise ValueError("one integrand per level required")
    for i, spec in enumerate(levels):
        if spec.level != i:
            raise ValueError("levels must be numbered 0..L in order")
    if runs < 1:
        raise ValueError("runs must be positive")
    means = np.empty((runs, len(levels)))
    start = time.perf_counter()
    for r in range(runs):
        source.start(r)
        for spec, f in zip(levels, integrands):
            x = source.draw(spec.level, spec.samples, spec.dimension)
            means[r, spec.level] = float(np.mean(f(x)))
    elapsed = (time.perf_counter() - start) / runs
    totals = means.sum(axis=1)
    if runs == 1:
        warnings.warn("a single run gives no spread estimate; stddev reported as 0", RuntimeWarning, stacklevel=2)
        level_sd = np.zeros(len(levels))
        total_sd = 0.0
    else:
        level_sd = means.std(axis=0, ddof=1)
        total_sd = float(totals.std(ddof=1))
    return MlEstimate(
        level_means=means.mean(axis=0),
        level_stddevs=level_sd,
        total=float(totals.mean()),
        total_stddev=total_sd,
        runs=runs,
        elapsed=elapsed,
        totals=totals,
    )


def allocate_doubling(N_L: int, L: int) -> list[int]:
    """``N_l = N_L * 2**(L - l)`` for ``l = 0..L``."""
    if N_L < 1 or L < 0:
        raise ValueError("need N_L >= 1 and L >= 0")
    return [N_L * 2 ** (L - l) for l in range(L + 1)]


def allocate_cost_optimal(variances, costs, eps: float) -> list[int]:
    """Minimize ``sum N_l c_l`` subject to ``sum V_l / N_l <= eps**2``.

    The Lagrangian solution is ``N_l = eps**-2 sqrt(V_l / c_l) sum_k sqrt(V_k c_k)``,
    rounded up.
    """
    if not eps > 0:
        raise ValueError("target error must be positive")
    V = np.asarray(variances, dtype=float)
    c = np.asarray(costs, dtype=float)
    if V.shape != c.shape or V.ndim != 1 or V.size == 0:
        raise ValueError("variances and costs must be equal-length 1-d sequences")
    if np.any(V <= 0) or np.any(c <= 0):
        raise ValueError("variances and costs must be positive")
    N = np.sqrt(V / c) * np.sum(np.sqrt(V * c)) / eps**2
    # guard the ceiling against a product that lands a hair above an integer
    return [int(math.ceil(n * (1 - 1e-15))) for n in N]


def bs_asian_family(market: BsMarket, K: float, L: int, m: int = 2) -> list:
    """Discounted fixed-strike Asian payoff on ``m**l`` steps, as functions of standardized increments."""
    payoff = AsianFixed(K)
    family = []
    for level in range(L + 1):
        model = BlackScholesModel(market, m**level)
        family.append(lambda y, model=model: model.discount * payoff(model.prices(y), model.times, model.s0))
    return family


METHODS = ("mc", "qmc-forward", "qmc-pca", "qmc-regression")


class AsianMultilevel:
    """The multilevel Black-Scholes Asian call experiment.

    Each level integrand is the coupled difference written in standardized
    increments (forward parametrization, so the coarse path is the fine path
    sampled at every ``m``-th node). The QMC methods compose it with an
    orthogonal transform of that level's dimension: the identity, the PCA
    factor, or the Householder reflection fitted to a pilot sample of the
    difference. Transforms are built once and reused across runs.
    """

    def __init__(self, market: BsMarket, K: float, L: int = 10, m: int = 2):
        self.market, self.K, self.L, self.m = market, K, L, m
        self.family = bs_asian_family(market, K, L, m)
        self.differences = difference_integrands(self.family, m)
        self.setup_seconds: dict[str, float] = {}

    def _transformed(self, method: str) -> list:
        if method in ("mc", "qmc-forward"):
            return self.differences
        out = []
        for level, f in enumerate(self.differences):
            grid = TimeGrid.even(self.m**level, self.market.T)
            if method == "qmc-pca":
                construction = Pca(grid)
            elif method == "qmc-regression":
                construction = Orthogonal(grid, _pilot_transform(f, grid.d))
            else:
                raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
            out.append(lambda z, f=f, c=construction: f(c.normals(z)))
        return out

    @cached_property
    def _pca(self):
        return self._timed("qmc-pca")

    @cached_property
    def _regression(self):
        return self._timed("qmc-regression")

    def _timed(self, method):
        t0 = time.perf_counter()
        out = self._transformed(method)
        self.setup_seconds[method] = time.perf_counter() - t0
        return out

    def integrands(self, method: str) -> list:
        if method == "qmc-pca":
            return self._pca
        if method == "qmc-regression":
            return self._regression
        if method in ("mc", "qmc-forward"):
            return self.differences
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")

    def levels(self, N_L: int) -> list[LevelSpec]:
        return [
            LevelSpec(level, self.m, n, float(self.m**level))
            for level, n in enumerate(allocate_doubling(N_L, self.L))
        ]

    def run(self, method: str, N_L: int, runs: int = 100, seed: int = 0, skip_zero: bool = False) -> MlEstimate:
        integrands = self.integrands(method)
        source = McSource(seed) if method == "mc" else QmcSource(seed, skip_zero)
        return ml_estimate(self.levels(N_L), integrands, source, runs)
