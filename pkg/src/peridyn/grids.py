"""Uniform lattices for the bounded macro domain and the periodic unit cell.

Macro fields live on a uniform lattice over the box domain with one
quadrature weight h^d per node (each node owns one cell of the
partition). Cell fields live on a uniform lattice over the periodic unit
cube, nodes at -1/2 + j/m, with weight (1/m)^d. Vector fields carry a
trailing component axis, so a macro field has shape grid.shape + (d,)
and a two-scale field macro.shape + cell.shape + (d,).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidArgumentError


def _offsets_within(radius: float, h: float, dim: int) -> list[tuple[int, ...]]:
    """Integer lattice offsets with 0 < |o|*h < radius (strict cutoff)."""
    if radius <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {radius}")
    reach = int(np.ceil(radius / h)) + 1
    out = []
    r2 = (radius / h) ** 2
    for off in itertools.product(range(-reach, reach + 1), repeat=dim):
        n2 = sum(o * o for o in off)
        if 0 < n2 < r2:
            out.append(off)
    return out


def shift_slices(shape: tuple[int, ...], offset: tuple[int, ...]):
    """Destination and source slice tuples for a lattice shift.

    ``u[src] - u[dst]`` is the difference u(x + offset*h) - u(x) over all
    nodes x whose shifted neighbor stays on the grid.
    """
    dst, src = [], []
    for n_k, o in zip(shape, offset):
        lo = max(0, -o)
        hi = n_k - max(0, o)
        dst.append(slice(lo, hi))
        src.append(slice(lo + o, hi + o))
    return tuple(dst), tuple(src)


@dataclass(frozen=True)
class MacroGrid:
    """Uniform lattice over the box domain prod_k [lo_k, hi_k]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)
        if not len(lo) == len(hi) == len(n):
            raise InvalidArgumentError("lo, hi, and n must have one entry per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise InvalidArgumentError("domain box must have positive extent on every axis")
        if any(k < 2 for k in n):
            raise InvalidArgumentError("need at least 2 nodes per axis")
        spacings = [(b - a) / k for a, b, k in zip(lo, hi, n)]
        if max(spacings) - min(spacings) > 1e-12 * max(spacings):
            raise InvalidArgumentError(
                f"node spacing must be uniform across axes, got {spacings}"
            )

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / self.n[0]

    @property
    def weight(self) -> float:
        return self.h ** self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axis_nodes(self, k: int) -> np.ndarray:
        return self.lo[k] + np.arange(self.n[k]) * self.h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape grid.shape + (dim,)."""
        if "nodes" not in self._cache:
            grids = np.meshgrid(*(self.axis_nodes(k) for k in range(self.dim)), indexing="ij")
            self._cache["nodes"] = np.stack(grids, axis=-1)
        return self._cache["nodes"]

    def offsets_within(self, radius: float) -> list[tuple[int, ...]]:
        key = ("off", radius)
        if key not in self._cache:
            self._cache[key] = _offsets_within(radius, self.h, self.dim)
        return self._cache[key]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape + (self.dim,))

    def window_mask(self, lo: Iterable[float], hi: Iterable[float]) -> np.ndarray:
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        x = self.nodes()
        mask = np.ones(self.shape, dtype=bool)
        for k in range(self.dim):
            mask &= (x[..., k] >= lo[k]) & (x[..., k] <= hi[k])
        return mask


@dataclass(frozen=True)
class CellGrid:
    """Uniform periodic lattice over the centered unit cube."""

    dim: int
    m: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidArgumentError(f"dimension must be 1, 2, or 3, got {self.dim}")
        if self.m < 2:
            raise InvalidArgumentError("need at least 2 cell nodes per axis")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.dim

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def weight(self) -> float:
        return self.h ** self.dim

    @property
    def size(self) -> int:
        return self.m ** self.dim

    def axis_nodes(self) -> np.ndarray:
        return -0.5 + np.arange(self.m) * self.h

    def nodes(self) -> np.ndarray:
        if "nodes" not in self._cache:
            axis = self.axis_nodes()
            grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
            self._cache["nodes"] = np.stack(grids, axis=-1)
        return self._cache["nodes"]

    def offsets_within(self, radius: float) -> list[tuple[int, ...]]:
        if radius > 0.5 + 1e-12:
            raise InvalidArgumentError(
                "cell horizon must not exceed half the cell width (nearest-image metric)"
            )
        key = ("off", radius)
        if key not in self._cache:
            self._cache[key] = _offsets_within(radius, self.h, self.dim)
        return self._cache[key]

    def node_index(self, y, tol: float = 1e-9) -> np.ndarray:
        """Flat lattice index of each (wrapped) point; points must be on-lattice."""
        yw = (np.asarray(y, dtype=float) + 0.5) % 1.0
        idx_f = yw * self.m
        idx = np.rint(idx_f).astype(int)
        if np.max(np.abs(idx_f - idx)) > tol * self.m:
            raise InvalidArgumentError(
                "point is not a cell lattice node; epsilon and the grids are incommensurate"
            )
        idx %= self.m
        lin = np.zeros(idx.shape[:-1], dtype=int)
        for k in range(self.dim):
            lin = lin * self.m + idx[..., k]
        return lin
