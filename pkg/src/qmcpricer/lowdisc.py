"""Low-discrepancy point generation and uniform pseudo-random streams.

The Sobol generator uses the Gray-code recurrence with the Joe & Kuo
``new-joe-kuo-6`` direction numbers (shipped for the first 2048 dimensions in
``data/joe_kuo_6.txt``). Points live in ``[0, 1)``; the first point is the
origin, which is kept by default.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = [
    "MAX_SOBOL_DIMENSION",
    "SobolGenerator",
    "sobol_next",
    "sobol_points",
    "van_der_corput",
    "RandomShift",
    "apply_shift",
    "UniformRng",
    "uniform_stream",
]

BITS = 32
_SCALE = 2.0**-BITS
_MAX_INDEX = 2**BITS


@lru_cache(maxsize=1)
def _joe_kuo_table():
    rows = []
    text = resources.files("qmcpricer").joinpath("data/joe_kuo_6.txt").read_text()
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("d "):
            continue
        parts = [int(tok) for tok in line.split()]
        s, a = parts[1], parts[2]
        rows.append((s, a, parts[3 : 3 + s]))
    return rows


MAX_SOBOL_DIMENSION = 1 + 2047


@lru_cache(maxsize=64)
def _direction_numbers(dimension: int) -> np.ndarray:
    """Direction integers ``V[j, k]`` (``k`` = bit position from the top)."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if dimension > MAX_SOBOL_DIMENSION:
        raise ValueError(f"Sobol table supports at most {MAX_SOBOL_DIMENSION} dimensions")
    table = _joe_kuo_table()
    V = np.zeros((dimension, BITS), dtype=np.uint64)
    V[0] = [1 << (BITS - 1 - k) for k in range(BITS)]
    for j in range(1, dimension):
        s, a, m_init = table[j - 1]
        m = list(m_init)
        for k in range(s, BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        V[j] = [m[k] << (BITS - 1 - k) for k in range(BITS)]
    V.setflags(write=False)
    return V


def _ctz(i: np.ndarray) -> np.ndarray:
    low = i & (-i)
    return np.log2(low.astype(np.float64)).astype(np.int64)


class SobolGenerator:
    """Sequential Sobol generator in Gray-code order.

    Parameters
    ----------
    dimension : int
        Number of coordinates per point (1 .. ``MAX_SOBOL_DIMENSION``).
    skip_zero : bool
        Start at index 1 instead of the all-zeros point.
    """

    def __init__(self, dimension: int, skip_zero: bool = False):
        self.dimension = int(dimension)
        self._V = _direction_numbers(self.dimension)
        self.index = 0
        self._state = np.zeros(self.dimension, dtype=np.uint64)
        if skip_zero:
            self.next()

    def clone(self) -> "SobolGenerator":
        return copy.deepcopy(self)

    def next(self) -> np.ndarray:
        """Return the point at the current index and advance by one."""
        if self.index >= _MAX_INDEX:
            raise OverflowError("Sobol index exhausted (2^32 points)")
        point = self._state * _SCALE
        self.index += 1
        if self.index < _MAX_INDEX:
            self._state = self._state ^ self._V[:, _ctz(np.array(self.index))]
        return point

    def take(self, n: int) -> np.ndarray:
        """Next ``n`` points as an ``(n, dimension)`` array."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if self.index + n > _MAX_INDEX:
            raise OverflowError("Sobol index exhausted (2^32 points)")
        if n == 0:
            return np.empty((0, self.dimension))
        idx = np.arange(self.index + 1, self.index + n, dtype=np.int64)
        steps = np.empty((n, self.dimension), dtype=np.uint64)
        steps[0] = self._state
        if n > 1:
            steps[1:] = self._V[:, _ctz(idx)].T
        states = np.bitwise_xor.accumulate(steps, axis=0)
        self.index += n
        if self.index < _MAX_INDEX:
            self._state = states[-1] ^ self._V[:, _ctz(np.array(self.index))]
        return states * _SCALE


def sobol_next(gen: SobolGenerator) -> np.ndarray:
    return gen.next()


@lru_cache(maxsize=32)
def _cached_points(dimension: int, n: int, start: int) -> np.ndarray:
    gen = SobolGenerator(dimension)
    if start:
        gen.take(start)
    pts = gen.take(n)
    pts.setflags(write=False)
    return pts


def sobol_points(dimension: int, n: int, skip_zero: bool = False) -> np.ndarray:
    """First ``n`` Sobol points (read-only, cached)."""
    return _cached_points(int(dimension), int(n), int(bool(skip_zero)))


def van_der_corput(n: int, base: int = 2) -> float:
    """Radical inverse of ``n`` in ``base``."""
    if base < 2:
        raise ValueError("base must be >= 2")
    if n < 0:
        raise ValueError("n must be non-negative")
    value, denom = 0.0, 1.0
    while n:
        n, digit = divmod(n, base)
        denom *= base
        value += digit / denom
    return value


@dataclass(frozen=True)
class RandomShift:
    """Additive shift modulo one used to randomize a point set."""

    delta: np.ndarray
    seed: int | None = None

    @classmethod
    def from_seed(cls, dimension: int, seed: int) -> "RandomShift":
        delta = UniformRng(seed).random(dimension)
        return cls(delta=delta, seed=seed)

    @property
    def dimension(self) -> int:
        return len(self.delta)


def apply_shift(points, shift: RandomShift | np.ndarray) -> np.ndarray:
    """``(p + delta) mod 1`` componentwise; works on one point or a batch."""
    delta = shift.delta if isinstance(shift, RandomShift) else np.asarray(shift, dtype=float)
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != delta.shape[-1]:
        raise ValueError(f"dimension mismatch: points {p.shape[-1]}, shift {delta.shape[-1]}")
    out = p + delta
    out -= np.floor(out)
    return out


@dataclass
class UniformRng:
    """Seeded uniform stream on ``[0, 1)`` backed by numpy's PCG64 (period 2^128)."""

    seed: int
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def uniform_stream(rng: UniformRng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.random(n)
