"""Discrete Brownian paths from standard normal input.

Every construction is a linear map ``x -> A x`` with ``A A^T = Sigma``,
``Sigma[j, k] = min(t_j, t_k)``. On the even grid ``t_j = j/d`` each such map
factors as ``A = S V`` with ``S`` the scaled cumulative sum and ``V``
orthogonal; the constructions below expose both the path and the
standardized increments ``V x`` that SDE solvers consume.

Arrays carry the path coordinate on the last axis, so a batch of ``n``
paths is an ``(n, d)`` array.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lowdisc import van_der_corput

__all__ = [
    "TimeGrid",
    "covariance",
    "cumsum_map",
    "forward_path",
    "BridgeTables",
    "build_bridge_tables",
    "bridge_path",
    "vdc_order",
    "dyadic_order",
    "pca_factors",
    "inverse_haar",
    "inverse_haar_matrix",
    "check_orthogonal",
    "orthogonal_path",
    "rescale_to_grid",
    "PathConstruction",
    "Forward",
    "Bridge",
    "Pca",
    "Orthogonal",
    "InverseHaar",
    "BridgePerBlock",
]


class TimeGrid:
    """Strictly increasing positive time nodes ``0 < t_1 < ... < t_d``."""

    def __init__(self, nodes):
        t = np.asarray(nodes, dtype=float).ravel()
        if t.size == 0:
            raise ValueError("time grid needs at least one node")
        if not np.all(np.isfinite(t)) or t[0] <= 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("time nodes must be finite, positive and strictly increasing")
        t.setflags(write=False)
        self.nodes = t

    @classmethod
    def even(cls, d: int, T: float = 1.0) -> "TimeGrid":
        return cls(T * np.arange(1, d + 1) / d)

    def __len__(self):
        return len(self.nodes)

    @property
    def d(self) -> int:
        return len(self.nodes)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes, prepend=0.0)

    @property
    def is_even(self) -> bool:
        return bool(np.allclose(self.nodes, self.T * np.arange(1, self.d + 1) / self.d, rtol=0, atol=1e-14 * self.T))

    def __repr__(self):
        return f"TimeGrid(d={self.d}, T={self.T})"


def _as_grid(grid) -> TimeGrid:
    return grid if isinstance(grid, TimeGrid) else TimeGrid(grid)


def covariance(grid) -> np.ndarray:
    t = _as_grid(grid).nodes
    return np.minimum.outer(t, t)


def cumsum_map(y) -> np.ndarray:
    """Multiply by ``S``: cumulative sum along the last axis divided by ``sqrt(d)``."""
    y = np.asarray(y, dtype=float)
    return np.cumsum(y, axis=-1) / math.sqrt(y.shape[-1])


def forward_path(grid, x) -> np.ndarray:
    g = _as_grid(grid)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.d:
        raise ValueError(f"expected {g.d} inputs, got {x.shape[-1]}")
    return np.cumsum(np.sqrt(g.steps) * x, axis=-1)


@dataclass(frozen=True)
class BridgeTables:
    """Precomputed bridge recursion for one grid and visiting order.

    Positions index a padded path whose slot 0 holds ``B_0 = 0`` and slot
    ``k`` holds ``B_{t_k}``. ``right[j] == -1`` encodes an unbounded right
    neighbour, in which case ``w_right[j]`` is 0.
    """

    grid: TimeGrid
    order: np.ndarray  # 0-based node filled at step j
    left: np.ndarray
    right: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    sd: np.ndarray

    @property
    def d(self) -> int:
        return self.grid.d

    def op_count(self) -> tuple[int, int]:
        """(additions, multiplications) for one path, excluding normal generation."""
        interior = int(np.count_nonzero(self.right >= 0))
        ends = self.d - interior
        return 2 * interior + ends, 3 * interior + ends


def build_bridge_tables(grid, order) -> BridgeTables:
    g = _as_grid(grid)
    d = g.d
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(d)):
        raise ValueError("order must be a permutation of 0..d-1")
    t = np.concatenate(([0.0], g.nodes))
    done = [0]  # sorted padded positions already constructed, origin included
    left = np.empty(d, dtype=np.int64)
    right = np.empty(d, dtype=np.int64)
    w_left = np.empty(d)
    w_right = np.empty(d)
    sd = np.empty(d)
    for j, node in enumerate(order):
        pos = int(node) + 1
        at = bisect.bisect_left(done, pos)
        l = done[at - 1]
        r = done[at] if at < len(done) else -1
        left[j] = l
        right[j] = r
        if r < 0:
            w_left[j], w_right[j] = 1.0, 0.0
            sd[j] = math.sqrt(t[pos] - t[l])
        else:
            span = t[r] - t[l]
            w_left[j] = (t[r] - t[pos]) / span
            w_right[j] = (t[pos] - t[l]) / span
            sd[j] = math.sqrt((t[pos] - t[l]) * (t[r] - t[pos]) / span)
        done.insert(at, pos)
    for arr in (order, left, right, w_left, w_right, sd):
        arr.setflags(write=False)
    return BridgeTables(g, order, left, right, w_left, w_right, sd)


def bridge_path(tables: BridgeTables, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = tables.d
    if x.shape[-1] != d:
        raise ValueError(f"expected {d} inputs, got {x.shape[-1]}")
    b = np.zeros(x.shape[:-1] + (d + 1,))
    for j in range(d):
        pos = tables.order[j] + 1
        l, r = tables.left[j], tables.right[j]
        if r < 0:
            b[..., pos] = b[..., l] + tables.sd[j] * x[..., j]
        else:
            b[..., pos] = tables.w_left[j] * b[..., l] + tables.w_right[j] * b[..., r] + tables.sd[j] * x[..., j]
    return b[..., 1:]


def _vdc_ranked(d: int):
    """Nodes in van der Corput order with the counter that produced each."""
    taken = np.zeros(d, dtype=bool)
    order, rank = [d - 1], [0]
    taken[d - 1] = True
    n = 1
    while len(order) < d:
        node = max(math.ceil(van_der_corput(n) * d) - 1, 0)
        if not taken[node]:
            taken[node] = True
            order.append(node)
            rank.append(n)
        n += 1
    return order, rank


def vdc_order(d: int) -> np.ndarray:
    """Terminal node first, then nodes hit by the base-2 van der Corput sequence."""
    return np.asarray(_vdc_ranked(d)[0])


def dyadic_order(d: int) -> np.ndarray:
    """Coarse-to-fine, left to right within each level: ``B_1, B_1/2, B_1/4, B_3/4, B_1/8, ...``."""
    order, rank = _vdc_ranked(d)
    level = [0 if n == 0 else n.bit_length() for n in rank]
    return np.asarray([node for _, node in sorted(zip(level, order))])


def pca_factors(grid) -> np.ndarray:
    """``A = V D^(1/2)`` with columns in descending eigenvalue order.

    ``grid`` may be an integer ``d`` (even grid on ``[0, 1]``) or a
    :class:`TimeGrid`. Even grids use the closed-form sine eigenbasis of
    ``min(j, k)``; other grids fall back to a symmetric eigensolver. Column
    signs are fixed so the first row is positive.
    """
    g = TimeGrid.even(grid) if isinstance(grid, (int, np.integer)) else _as_grid(grid)
    d = g.d
    if g.is_even:
        k = np.arange(1, d + 1)
        j = np.arange(1, d + 1)
        arg = (2 * k - 1) * math.pi / (2 * d + 1)
        eig = g.T / (4.0 * d * np.sin(arg / 2.0) ** 2)
        vecs = (2.0 / math.sqrt(2 * d + 1)) * np.sin(np.outer(j, arg))
    else:
        eig, vecs = np.linalg.eigh(covariance(g))
        eig, vecs = eig[::-1], vecs[:, ::-1]
        vecs = vecs * np.where(vecs[0] < 0, -1.0, 1.0)
    return vecs * np.sqrt(eig)


def inverse_haar(x) -> np.ndarray:
    """Orthonormal inverse Haar transform along the last axis, ``d = 2^k``.

    Coefficient layout: scaling coefficient, then wavelet coefficients from
    coarse to fine, left to right within a level.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if d & (d - 1):
        raise ValueError("inverse Haar transform needs a power-of-two length")
    y = x[..., :1]
    n = 1
    s = 1.0 / math.sqrt(2.0)
    while n < d:
        w = x[..., n : 2 * n]
        out = np.empty(x.shape[:-1] + (2 * n,))
        out[..., 0::2] = (y + w) * s
        out[..., 1::2] = (y - w) * s
        y = out
        n *= 2
    return y


def inverse_haar_matrix(d: int) -> np.ndarray:
    return inverse_haar(np.eye(d)).T


def check_orthogonal(V, tol: float = 1e-10) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError("orthogonal matrix must be square")
    err = np.abs(V @ V.T - np.eye(len(V))).max()
    if err > tol:
        raise ValueError(f"matrix is not orthogonal (max |V V^T - I| = {err:.3g})")
    return V


def orthogonal_path(V, x, grid=None) -> np.ndarray:
    """``S V x`` on the even grid; ``V`` is a matrix or a callable acting on the last axis."""
    x = np.asarray(x, dtype=float)
    y = V(x) if callable(V) else x @ check_orthogonal(V).T
    path = cumsum_map(y)
    if grid is not None:
        g = _as_grid(grid)
        if g.d != x.shape[-1]:
            raise ValueError("grid and input dimension differ")
        path = path * math.sqrt(g.T)
    return path


def rescale_to_grid(even_path, target) -> np.ndarray:
    """Map a path on ``j/d`` to an arbitrary grid by rescaling increments and re-summing."""
    g = _as_grid(target)
    b = np.asarray(even_path, dtype=float)
    d = b.shape[-1]
    if d != g.d:
        raise ValueError("dimension mismatch")
    inc = np.diff(b, axis=-1, prepend=0.0)
    return np.cumsum(math.sqrt(d) * np.sqrt(g.steps) * inc, axis=-1)


class PathConstruction:
    """Linear map from ``d`` standard normals to a discrete Brownian path.

    Subclasses implement :meth:`path`. :meth:`normals` returns the
    standardized increments ``(B_k - B_{k-1}) / sqrt(t_k - t_{k-1})``, which
    are again i.i.d. standard normal and are what SDE solvers take.
    """

    name = "construction"

    def __init__(self, grid):
        self.grid = _as_grid(grid)

    @property
    def d(self) -> int:
        return self.grid.d

    def path(self, x) -> np.ndarray:
        raise NotImplementedError

    def normals(self, x) -> np.ndarray:
        inc = np.diff(self.path(x), axis=-1, prepend=0.0)
        return inc / np.sqrt(self.grid.steps)

    def matrix(self) -> np.ndarray:
        """Construction matrix ``A`` (column ``k`` is the image of ``e_k``)."""
        return self.path(np.eye(self.d)).T

    def __call__(self, x):
        return self.path(x)

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d})"


class Forward(PathConstruction):
    name = "forward"

    def path(self, x):
        return forward_path(self.grid, x)

    def normals(self, x):
        return np.asarray(x, dtype=float)


class Bridge(PathConstruction):
    """Brownian bridge in a given visiting order (default: van der Corput)."""

    name = "bridge"

    def __init__(self, grid, order=None):
        super().__init__(grid)
        self.order = vdc_order(self.d) if order is None else np.asarray(order)
        self.tables = build_bridge_tables(self.grid, self.order)

    def path(self, x):
        return bridge_path(self.tables, x)


class Pca(PathConstruction):
    name = "pca"

    def __init__(self, grid):
        super().__init__(grid)
        self.A = pca_factors(self.grid)
        self._At = np.ascontiguousarray(self.A.T)

    def path(self, x):
        return np.asarray(x, dtype=float) @ self._At

    def orthogonal_factor(self) -> np.ndarray:
        """``V = S^{-1} A`` (even grids)."""
        inc = np.diff(self.A, axis=0, prepend=0.0)
        return inc * math.sqrt(self.d / self.grid.T)

    def normals(self, x):
        if not self.grid.is_even:
            return super().normals(x)
        return np.asarray(x, dtype=float) @ self._Vt

    @cached_property
    def _Vt(self):
        return np.ascontiguousarray(self.orthogonal_factor().T)


class Orthogonal(PathConstruction):
    """``B = sqrt(T) S V x`` on an even grid for an orthogonal ``V``.

    ``V`` is a dense matrix (checked once) or an object with an ``apply``
    method acting on the last axis.
    """

    name = "orthogonal"

    def __init__(self, grid, V):
        super().__init__(grid)
        if not self.grid.is_even:
            raise ValueError("orthogonal transforms need an even grid")
        if hasattr(V, "apply"):
            self._apply = V.apply
        else:
            Vm = check_orthogonal(V)
            if len(Vm) != self.d:
                raise ValueError("transform and grid dimension differ")
            Vt = np.ascontiguousarray(Vm.T)
            self._apply = lambda x: np.asarray(x, dtype=float) @ Vt
        self.V = V

    def normals(self, x):
        return self._apply(x)

    def path(self, x):
        return cumsum_map(self.normals(x)) * math.sqrt(self.grid.T)


class InverseHaar(Orthogonal):
    """Bridge construction in dyadic order, computed by the O(d) inverse Haar butterfly."""

    name = "bb"

    def __init__(self, grid):
        PathConstruction.__init__(self, grid)
        if not self.grid.is_even:
            raise ValueError("orthogonal transforms need an even grid")
        self._apply = inverse_haar
        self.V = None


class BridgePerBlock(Orthogonal):
    """Independent dyadic bridges on ``blocks`` coordinate blocks.

    By default block ``b`` is the contiguous slice ``[b * d / blocks, (b + 1) * d / blocks)``;
    with ``interleaved=True`` coordinate ``i`` belongs to block ``i % blocks``.
    Each block's standardized increments come from its own bridge and are
    written back to the same coordinates.
    """

    name = "bb2"

    def __init__(self, grid, blocks: int = 2, interleaved: bool = False):
        PathConstruction.__init__(self, grid)
        if not self.grid.is_even:
            raise ValueError("orthogonal transforms need an even grid")
        if self.d % blocks:
            raise ValueError("dimension must be divisible by the number of blocks")
        self.blocks = blocks
        self.interleaved = interleaved
        sub = self.d // blocks
        if sub & (sub - 1):
            sub_bridge = Bridge(TimeGrid.even(sub), dyadic_order(sub))
            self._block = sub_bridge.normals
        else:
            self._block = inverse_haar
        if interleaved:
            self._slices = [slice(b, None, blocks) for b in range(blocks)]
        else:
            self._slices = [slice(b * sub, (b + 1) * sub) for b in range(blocks)]
        self.V = None

    def _apply(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for sl in self._slices:
            out[..., sl] = self._block(x[..., sl])
        return out
