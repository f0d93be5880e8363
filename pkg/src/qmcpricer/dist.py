"""Non-uniform variate generation.

Inversion (normal, exponential, gamma), Box-Muller, Marsaglia-Bray,
acceptance-rejection and importance sampling. All inverse CDFs accept numpy
arrays and work elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

import numpy as np
from scipy import special

__all__ = [
    "U_MIN",
    "clamp_unit",
    "normal_cdf",
    "normal_pdf",
    "normal_inv_cdf",
    "box_muller",
    "marsaglia_bray",
    "marsaglia_bray_batch",
    "Density",
    "normal_density",
    "exponential_density",
    "gamma_density",
    "GammaParams",
    "gamma_cdf",
    "gamma_inv_cdf",
    "RejectionSpec",
    "acceptance_rejection",
    "acceptance_rejection_batch",
    "importance_estimate",
]

# smallest input handed to an inverse CDF; Sobol points can be exactly 0
U_MIN = 2.0**-53

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def clamp_unit(u):
    """Map exact zeros to ``U_MIN``; leaves everything else untouched."""
    return np.maximum(u, U_MIN)


def normal_cdf(x):
    return special.ndtr(x)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT2PI


# Acklam's rational approximation, |rel err| < 1.15e-9 before refinement
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coeffs, x):
    out = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        out = out * x + c
    return out


def normal_inv_cdf(u):
    """Inverse standard normal CDF.

    Rational initial guess followed by one Halley step against
    :func:`normal_cdf`. Raises ``ValueError`` for inputs outside ``(0, 1)``.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0.0) | ~(u_arr < 1.0)):
        raise ValueError("normal_inv_cdf requires 0 < u < 1")
    scalar = u_arr.ndim == 0
    u_arr = np.atleast_1d(u_arr)
    x = np.empty_like(u_arr)

    low = u_arr < _P_LOW
    high = u_arr > 1.0 - _P_LOW
    mid = ~(low | high)

    q = np.sqrt(-2.0 * np.log(u_arr[low]))
    x[low] = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = np.sqrt(-2.0 * np.log1p(-u_arr[high]))
    x[high] = -_poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = u_arr[mid] - 0.5
    r = q * q
    x[mid] = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)

    # Halley refinement; upper tail measured from the right to keep digits
    err = np.where(high, -(0.5 * special.erfc(x / _SQRT2) - (1.0 - u_arr)),
                   0.5 * special.erfc(-x / _SQRT2) - u_arr)
    t = err * _SQRT2PI * np.exp(0.5 * x * x)
    x = x - t / (1.0 + 0.5 * x * t)
    return x[0] if scalar else x


def box_muller(u, v):
    """Box-Muller pair from uniforms; uses ``log(1 - u)`` so ``u = 0`` is safe."""
    r = np.sqrt(-2.0 * np.log1p(-np.asarray(u, dtype=float)))
    angle = 2.0 * np.pi * np.asarray(v, dtype=float)
    return r * np.cos(angle), r * np.sin(angle)


def marsaglia_bray(pairs: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Polar method: consume uniform pairs until one lands inside the unit disc."""
    for u, v in pairs:
        u1, v1 = 2.0 * u - 1.0, 2.0 * v - 1.0
        s = u1 * u1 + v1 * v1
        if s >= 1.0:
            continue
        if s == 0.0:
            return 0.0, 0.0
        factor = math.sqrt(-2.0 * math.log(s) / s)
        return u1 * factor, v1 * factor
    raise StopIteration("uniform supply exhausted before acceptance")


def marsaglia_bray_batch(u, v):
    """Vectorised polar method; returns only the accepted pairs, in stream order."""
    u1 = 2.0 * np.asarray(u, dtype=float) - 1.0
    v1 = 2.0 * np.asarray(v, dtype=float) - 1.0
    s = u1 * u1 + v1 * v1
    keep = s < 1.0
    u1, v1, s = u1[keep], v1[keep], s[keep]
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(s > 0.0, np.sqrt(-2.0 * np.log(s) / s), 0.0)
    return u1 * factor, v1 * factor


@dataclass(frozen=True)
class Density:
    """A univariate distribution given by its pdf, cdf and (optionally) inverse cdf."""

    pdf: Callable
    cdf: Callable
    inv_cdf: Optional[Callable] = None
    name: str = ""


def normal_density(mean: float = 0.0, sd: float = 1.0) -> Density:
    if sd <= 0:
        raise ValueError("sd must be positive")
    return Density(
        pdf=lambda x: normal_pdf((np.asarray(x) - mean) / sd) / sd,
        cdf=lambda x: normal_cdf((np.asarray(x) - mean) / sd),
        inv_cdf=lambda u: mean + sd * normal_inv_cdf(u),
        name=f"N({mean}, {sd}^2)",
    )


def exponential_density(rate: float) -> Density:
    if rate <= 0:
        raise ValueError("rate must be positive")

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, rate * np.exp(-rate * np.maximum(x, 0.0)), 0.0)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)

    def inv_cdf(u):
        return -np.log1p(-np.asarray(u, dtype=float)) / rate

    return Density(pdf, cdf, inv_cdf, name=f"Exp({rate})")


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("gamma shape and scale must be positive")


def gamma_density(shape: float, scale: float = 1.0) -> Density:
    p = GammaParams(shape, scale)
    log_norm = special.gammaln(p.shape) + p.shape * math.log(p.scale)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        xs = np.where(pos, x, 1.0)
        val = np.exp((p.shape - 1.0) * np.log(xs) - xs / p.scale - log_norm)
        return np.where(pos, val, 0.0)

    return Density(
        pdf=pdf,
        cdf=lambda x: gamma_cdf(x, p),
        inv_cdf=lambda u: gamma_inv_cdf(u, p),
        name=f"Gamma({shape}, {scale})",
    )


def gamma_cdf(x, p: GammaParams):
    x = np.asarray(x, dtype=float)
    return special.gammainc(p.shape, np.maximum(x, 0.0) / p.scale)


def gamma_inv_cdf(u, p: GammaParams, tol: float = 1e-14, max_iter: int = 200):
    """Inverse gamma CDF by bracketed Newton iteration with bisection fallback.

    Works on the standardized variable ``x / scale``; the bracket ``[lo, hi]``
    always contains the root, and any Newton step that leaves it is replaced
    by a bisection step.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0.0) | ~(u_arr < 1.0)):
        raise ValueError("gamma_inv_cdf requires 0 < u < 1")
    a = float(p.shape)
    shape = u_arr.shape
    u_arr = u_arr.ravel().astype(float)
    lga = special.gammaln(a)

    # Wilson-Hilferty start, small-u power series start where it is better
    z = normal_inv_cdf(u_arr)
    c = 1.0 / (9.0 * a)
    x = a * np.maximum(1.0 - c + z * math.sqrt(c), 1e-3) ** 3
    small = np.log(u_arr) + special.gammaln(a + 1.0) < math.log(0.5) * a
    x = np.where(small, np.exp((np.log(u_arr) + special.gammaln(a + 1.0)) / a), x)

    lo = np.zeros_like(x)
    hi = np.maximum(2.0 * x, a + 40.0 * math.sqrt(a) + 40.0)
    while True:
        under = special.gammainc(a, hi) < u_arr
        if not under.any():
            break
        hi = np.where(under, 2.0 * hi, hi)

    x = np.clip(x, lo, hi)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        xa = x[active]
        f = special.gammainc(a, xa) - u_arr[active]
        lo[active] = np.where(f < 0.0, xa, lo[active])
        hi[active] = np.where(f > 0.0, xa, hi[active])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            dens = np.exp((a - 1.0) * np.log(xa) - xa - lga)
            step = f / dens
            cand = xa - step
        bad = ~np.isfinite(cand) | (cand <= lo[active]) | (cand >= hi[active])
        cand = np.where(bad, 0.5 * (lo[active] + hi[active]), cand)
        done = (np.abs(cand - xa) <= tol * np.maximum(xa, 1e-300)) | (f == 0.0)
        done |= (hi[active] - lo[active]) <= tol * np.maximum(hi[active], 1e-300)
        x[active] = np.where(f == 0.0, xa, cand)
        idx = np.flatnonzero(active)
        active[idx[done]] = False

    x = x.reshape(shape) * p.scale
    return float(x) if not shape else x


@dataclass(frozen=True)
class RejectionSpec:
    """Target density ``f``, proposal ``g`` (with inverse cdf) and bound ``c``.

    The bound ``f <= c g`` is checked on ``grid_points`` points spanning
    ``grid`` when the spec is built; a violation raises ``ValueError``.
    """

    target_pdf: Callable
    proposal: Density
    bound: float
    grid: tuple[float, float] = (1e-6, 50.0)
    grid_points: int = 10_000

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        if self.proposal.inv_cdf is None:
            raise ValueError("proposal needs an inverse cdf")
        xs = np.linspace(self.grid[0], self.grid[1], self.grid_points)
        f = np.asarray(self.target_pdf(xs), dtype=float)
        g = np.asarray(self.proposal.pdf(xs), dtype=float)
        if np.any(f > self.bound * g * (1.0 + 1e-12)):
            worst = xs[np.argmax(f - self.bound * g)]
            raise ValueError(f"bound f <= c g violated near x = {worst:.6g}")

    @property
    def acceptance_probability(self) -> float:
        return 1.0 / self.bound


def _accept_ratio(spec: RejectionSpec, y):
    f = np.asarray(spec.target_pdf(y), dtype=float)
    g = np.asarray(spec.proposal.pdf(y), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = f / (spec.bound * g)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite density ratio in acceptance-rejection")
    return ratio


def acceptance_rejection(spec: RejectionSpec, pairs: Iterator[tuple[float, float]]):
    """Draw one sample; returns ``(sample, pairs_consumed)``.

    Each pair is ``(u_proposal, u_accept)``; the proposal is generated by
    inversion of ``spec.proposal``.
    """
    consumed = 0
    for u_prop, u_acc in pairs:
        consumed += 1
        y = float(spec.proposal.inv_cdf(u_prop))
        if u_acc <= float(_accept_ratio(spec, y)):
            return y, consumed
    raise StopIteration("uniform supply exhausted before acceptance")


def acceptance_rejection_batch(spec: RejectionSpec, n: int, rng, block: int | None = None):
    """``n`` samples from a uniform generator, consumed pairwise in stream order.

    Equivalent to calling :func:`acceptance_rejection` ``n`` times on the pair
    stream ``(rng.random(), rng.random())``; returns ``(samples, pairs_consumed)``.
    """
    out = np.empty(n)
    filled, consumed = 0, 0
    block = block or max(64, int(1.25 * n * spec.bound) + 16)
    while filled < n:
        uv = rng.random((block, 2))
        y = spec.proposal.inv_cdf(uv[:, 0])
        ok = np.flatnonzero(uv[:, 1] <= _accept_ratio(spec, y))
        take = ok[: n - filled]
        out[filled : filled + len(take)] = y[take]
        filled += len(take)
        consumed += int(take[-1]) + 1 if filled == n else block
    return out, consumed


def importance_estimate(h: Callable, target: Density, proposal: Density, points) -> float:
    """Equal-weight estimate of ``E[h(X)]``, ``X ~ target``, sampling from ``proposal``."""
    if proposal.inv_cdf is None:
        raise ValueError("proposal needs an inverse cdf")
    y = proposal.inv_cdf(clamp_unit(np.asarray(points, dtype=float)))
    hv = np.asarray(h(y), dtype=float)
    f = np.asarray(target.pdf(y), dtype=float)
    g = np.asarray(proposal.pdf(y), dtype=float)
    if np.any((g == 0.0) & (f * hv != 0.0)):
        raise ValueError("proposal density vanishes where h * target does not")
    w = np.divide(f, g, out=np.zeros_like(f), where=g != 0.0)
    return float(np.mean(hv * w))
