"""Strong-sense discretization of scalar SDEs and the Heston model.

All schemes take the Brownian increments ``dW`` as input (shape ``(..., n)``)
instead of drawing normals, so any path construction or point set can drive
them. Paths are vectorized over the leading axes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "NonFiniteStateError",
    "Sde1D",
    "SolvedPath",
    "euler_maruyama",
    "milstein",
    "runge_kutta_strong1",
    "HestonParams",
    "heston_euler",
    "gbm_sde",
]


class NonFiniteStateError(ArithmeticError):
    def __init__(self, step: int, scheme: str):
        super().__init__(f"{scheme}: non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class Sde1D:
    """``dS = drift(t, S) dt + diffusion(t, S) dW``, ``S_0 = s0``.

    ``diffusion_prime(s)`` is only needed by the Milstein scheme.
    """

    drift: Callable
    diffusion: Callable
    s0: float
    diffusion_prime: Optional[Callable] = None


@dataclass
class SolvedPath:
    times: np.ndarray
    values: np.ndarray
    variance: Optional[np.ndarray] = None

    @property
    def terminal(self) -> np.ndarray:
        return self.values[..., -1]


def gbm_sde(r: float, sigma: float, s0: float) -> Sde1D:
    return Sde1D(
        drift=lambda t, s: r * s,
        diffusion=lambda t, s: sigma * s,
        s0=s0,
        diffusion_prime=lambda s: sigma * np.ones_like(s),
    )


def _prepare(h, n, dW):
    if h <= 0:
        raise ValueError("step size must be positive")
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1] != n:
        raise ValueError(f"expected {n} increments, got {dW.shape[-1]}")
    return dW


def _solve(sde: Sde1D, h: float, n: int, dW, step, scheme: str) -> SolvedPath:
    dW = _prepare(h, n, dW)
    out = np.empty(dW.shape[:-1] + (n + 1,))
    out[..., 0] = sde.s0
    s = np.full(dW.shape[:-1], float(sde.s0))
    for k in range(n):
        s = step(k * h, s, dW[..., k])
        if not np.all(np.isfinite(s)):
            raise NonFiniteStateError(k + 1, scheme)
        out[..., k + 1] = s
    return SolvedPath(times=h * np.arange(n + 1), values=out)


def euler_maruyama(sde: Sde1D, h: float, n: int, dW) -> SolvedPath:
    def step(t, s, dw):
        return s + sde.drift(t, s) * h + sde.diffusion(t, s) * dw

    return _solve(sde, h, n, dW, step, "euler")


def milstein(sde: Sde1D, h: float, n: int, dW) -> SolvedPath:
    if sde.diffusion_prime is None:
        raise ValueError("Milstein needs the derivative of the diffusion coefficient")

    def step(t, s, dw):
        sig = sde.diffusion(t, s)
        return s + sde.drift(t, s) * h + sig * dw + 0.5 * sig * sde.diffusion_prime(s) * (dw * dw - h)

    return _solve(sde, h, n, dW, step, "milstein")


def runge_kutta_strong1(sde: Sde1D, h: float, n: int, dW) -> SolvedPath:
    """Derivative-free order-1 scheme with supporting value ``Y = S + sigma(S) sqrt(h)``."""
    sqh = math.sqrt(h)

    def step(t, s, dw):
        sig = sde.diffusion(t, s)
        support = s + sig * sqh
        return s + sde.drift(t, s) * h + sig * dw + 0.5 * (sde.diffusion(t, support) - sig) * (dw * dw - h) / sqh

    return _solve(sde, h, n, dW, step, "runge-kutta")


@dataclass(frozen=True)
class HestonParams:
    r: float
    kappa: float
    theta: float
    xi: float
    rho: float
    s0: float
    v0: float

    def __post_init__(self):
        for name in ("r", "kappa", "theta", "xi", "s0", "v0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Heston parameter {name} must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if 2.0 * self.kappa * self.theta < self.xi**2:
            warnings.warn("Feller condition 2 kappa theta >= xi^2 violated", RuntimeWarning, stacklevel=2)


def heston_euler(p: HestonParams, h: float, n: int, dW1, dW2, scheme: str = "full_truncation") -> SolvedPath:
    """Euler-Maruyama for price and variance.

    ``dW1`` drives the variance, the price sees ``rho dW1 + sqrt(1 - rho^2) dW2``.
    ``scheme="full_truncation"`` evaluates the square roots at ``max(V, 0)``
    while ``V`` itself evolves untruncated; ``"absorption"`` also resets
    ``V`` to ``max(V, 0)`` after each step.
    """
    if scheme not in ("full_truncation", "absorption"):
        raise ValueError(f"unknown variance scheme {scheme!r}")
    dW1 = _prepare(h, n, dW1)
    dW2 = _prepare(h, n, dW2)
    if dW1.shape != dW2.shape:
        raise ValueError("driver shapes differ")
    rho_bar = math.sqrt(1.0 - p.rho * p.rho)
    shape = dW1.shape[:-1]
    S = np.empty(shape + (n + 1,))
    V = np.empty(shape + (n + 1,))
    s = np.full(shape, float(p.s0))
    v = np.full(shape, float(p.v0))
    S[..., 0], V[..., 0] = s, v
    for k in range(n):
        root = np.sqrt(np.maximum(v, 0.0))
        s_next = s + p.r * s * h + root * s * (p.rho * dW1[..., k] + rho_bar * dW2[..., k])
        v = v + p.kappa * (p.theta - v) * h + p.xi * root * dW1[..., k]
        if scheme == "absorption":
            v = np.maximum(v, 0.0)
        s = s_next
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
            raise NonFiniteStateError(k + 1, "heston")
        S[..., k + 1], V[..., k + 1] = s, v
    return SolvedPath(times=h * np.arange(n + 1), values=S, variance=V)
