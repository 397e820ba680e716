"""Periodic unit-cell microstructure: phase geometry and coefficient fields.

The unit cell is the d-dimensional unit cube centered at the origin. A
single inclusion (ball, axis-aligned fiber, or slab) sits at the cell
center and the complement is the matrix phase. Density and bond-strength
coefficients are piecewise constant in the phase indicator, extended
periodically, and every evaluation reduces its arguments to the cell by
nearest-image wrapping. An optional mollified variant replaces the sharp
indicators by smoothed ones sampled on a cell lattice.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError

BALL = "ball"
FIBER = "fiber"
SLAB = "slab"
SHAPES = (BALL, FIBER, SLAB)


def wrap_cell(y):
    """Reduce coordinates to the centered unit cell [-1/2, 1/2)^d."""
    return (np.asarray(y, dtype=float) + 0.5) % 1.0 - 0.5


def nearest_image_distance(y, yhat):
    """Distance between two points on the periodic unit torus."""
    diff = wrap_cell(np.asarray(yhat, dtype=float) - np.asarray(y, dtype=float))
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class CellGeometry:
    """Inclusion geometry inside the unit cell, all lengths in cell units."""

    dim: int
    shape: str
    r_f: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidArgumentError(f"dimension must be 1, 2, or 3, got {self.dim}")
        if self.shape not in SHAPES:
            raise InvalidArgumentError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.shape == FIBER and self.dim < 2:
            raise InvalidArgumentError("fiber inclusions need dimension >= 2")
        if not 0.0 <= self.r_f < 0.5:
            raise InvalidArgumentError(
                f"inclusion radius must lie in [0, 0.5) so the inclusion stays "
                f"strictly interior to the cell, got {self.r_f}"
            )


@dataclass(frozen=True)
class PhaseParams:
    """Material constants of the two-phase bond model.

    c_f, c_m, c_i are bond strengths for inclusion-inclusion,
    matrix-matrix, and cross-interface bonds; rho_f and rho_m are phase
    densities; delta is the short-range horizon in cell units; lam and
    gamma are the long-range bond constant and horizon in macro units;
    beta is the optional mollification width.
    """

    c_f: float
    c_m: float
    c_i: float
    rho_f: float
    rho_m: float
    delta: float
    lam: float
    gamma: float
    beta: Optional[float] = None

    def __post_init__(self):
        if self.rho_f <= 0 or self.rho_m <= 0:
            raise InvalidArgumentError("phase densities must be positive")
        if self.delta <= 0:
            raise InvalidArgumentError("short-range horizon delta must be positive")
        if self.delta > 0.5:
            raise InvalidArgumentError(
                "short-range horizon delta must not exceed half the cell width"
            )
        if self.gamma <= 0:
            raise InvalidArgumentError("long-range horizon gamma must be positive")
        if self.lam <= 0:
            raise InvalidArgumentError("long-range bond constant must be positive")
        if self.beta is not None and not 0.0 < self.beta < self.delta:
            raise InvalidArgumentError("mollification width must satisfy 0 < beta < delta")
        if not (self.c_f > self.c_i > self.c_m > 0):
            warnings.warn(
                "bond strengths do not follow the recommended ordering "
                f"c_f > c_i > c_m > 0 (got c_f={self.c_f}, c_i={self.c_i}, c_m={self.c_m})",
                stacklevel=3,
            )


@dataclass(frozen=True)
class Violation:
    severity: str  # "error" or "warning"
    message: str


def _cell_lattice(dim: int, resolution: int):
    """Node coordinates of the uniform periodic cell lattice, shape (res,)*dim + (dim,)."""
    axis = -0.5 + np.arange(resolution) / resolution
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack(grids, axis=-1)


class Microstructure:
    """Two-phase periodic microstructure with sharp phase boundaries."""

    def __init__(self, geometry: CellGeometry, params: PhaseParams):
        self.geometry = geometry
        self.params = params

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def indicator(self, y) -> np.ndarray:
        """True where the (wrapped) point lies in the inclusion phase."""
        yw = wrap_cell(y)
        g = self.geometry
        if g.shape == BALL:
            radial = np.sqrt(np.sum(yw * yw, axis=-1))
        elif g.shape == FIBER:
            radial = np.sqrt(np.sum(yw[..., 1:] * yw[..., 1:], axis=-1))
        else:  # slab normal to the first axis
            radial = np.abs(yw[..., 0])
        return radial < g.r_f

    def density(self, y) -> np.ndarray:
        chi = self.indicator(y)
        return np.where(chi, self.params.rho_f, self.params.rho_m)

    def bond_strength(self, y, yhat) -> np.ndarray:
        """Bond coefficient for a pair of points, by phase combination."""
        chi_a = self.indicator(y)
        chi_b = self.indicator(yhat)
        p = self.params
        return np.where(
            chi_a & chi_b, p.c_f, np.where(~chi_a & ~chi_b, p.c_m, p.c_i)
        ).astype(float)

    def bond_strength_cutoff(self, y, yhat, horizon: float) -> np.ndarray:
        """Bond coefficient with the sharp range cutoff applied.

        Zero whenever the nearest-image separation reaches the horizon.
        """
        if horizon <= 0:
            raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
        alpha = self.bond_strength(y, yhat)
        dist = nearest_image_distance(y, yhat)
        return np.where(dist < horizon, alpha, 0.0)

    def indicator_field(self, resolution: int) -> np.ndarray:
        """Inclusion indicator sampled on the cell lattice, as floats in {0, 1}."""
        return self.indicator(_cell_lattice(self.dim, resolution)).astype(float)

    def volume_fractions(self, resolution: int = 64):
        """Inclusion and matrix volume fractions by cell-lattice quadrature."""
        theta_f = float(np.mean(self.indicator_field(resolution)))
        return theta_f, 1.0 - theta_f

    def mollify(self, beta: Optional[float] = None, resolution: int = 64):
        """Smoothed variant with indicators convolved against a compact bump.

        The bump exp(-1/(1-|s|^2)) on |s| < 1, scaled to width beta and
        normalized so its lattice sum is exactly one, is convolved
        periodically with the sharp indicator on the cell lattice.
        """
        p = self.params
        beta = p.beta if beta is None else beta
        if beta is None:
            raise InvalidArgumentError("no mollification width given")
        if not 0.0 < beta < p.delta:
            raise InvalidArgumentError(
                f"mollification width must satisfy 0 < beta < delta, got beta={beta}"
            )
        h = 1.0 / resolution
        reach = int(np.ceil(beta / h))
        offsets = []
        weights = []
        for off in itertools.product(range(-reach, reach + 1), repeat=self.dim):
            s2 = sum((o * h) ** 2 for o in off) / beta**2
            if s2 < 1.0:
                offsets.append(off)
                weights.append(np.exp(-1.0 / (1.0 - s2)))
        weights = np.asarray(weights)
        weights /= weights.sum()
        chi = self.indicator_field(resolution)
        chi_beta = np.zeros_like(chi)
        for off, w in zip(offsets, weights):
            chi_beta += w * np.roll(chi, shift=tuple(-o for o in off), axis=range(self.dim))
        return MollifiedMicrostructure(self, beta, resolution, chi_beta)

    def validate(self, delta: Optional[float] = None) -> list[Violation]:
        """Report admissibility violations; empty list means admissible.

        Checks that inclusion boundaries keep a 2*delta nearest-image
        margin from their periodic copies (so short bonds cross at most
        one interface), that the inclusion is not thinner than the
        horizon, and that bond strengths follow the recommended ordering.
        Ordering problems are reported as warnings, not errors.
        """
        p = self.params
        delta = p.delta if delta is None else delta
        out: list[Violation] = []
        r = self.geometry.r_f
        if r > 0.0:
            gap = 1.0 - 2.0 * r
            if gap < 2.0 * delta:
                out.append(
                    Violation(
                        "error",
                        f"periodic copies of the inclusion come within {gap:.6g} "
                        f"< 2*delta = {2 * delta:.6g} of each other",
                    )
                )
            if 2.0 * r < delta:
                out.append(
                    Violation(
                        "error",
                        f"inclusion thickness {2 * r:.6g} is below the horizon "
                        f"delta = {delta:.6g}; bonds could cross two interfaces",
                    )
                )
        if not (p.c_f > p.c_i > p.c_m > 0):
            out.append(
                Violation(
                    "warning",
                    f"bond strengths do not satisfy c_f > c_i > c_m > 0 "
                    f"(c_f={p.c_f}, c_i={p.c_i}, c_m={p.c_m})",
                )
            )
        return out


class MollifiedMicrostructure:
    """Microstructure with lattice-sampled smoothed indicators.

    Coefficient fields are rebuilt from the smoothed indicators, so they
    vary continuously across interfaces. Evaluation points must land on
    the mollification lattice (interpolation is out of scope); solvers
    only ever ask at commensurate points.
    """

    def __init__(self, base: Microstructure, beta: float, resolution: int, chi_f: np.ndarray):
        self.base = base
        self.geometry = base.geometry
        self.params = base.params
        self.beta = beta
        self.resolution = resolution
        self.chi_f_grid = chi_f

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def _lookup(self, y) -> np.ndarray:
        yw = wrap_cell(y)
        m = self.resolution
        idx_f = (yw + 0.5) * m
        idx = np.rint(idx_f).astype(int)
        if np.max(np.abs(idx_f - idx)) > 1e-9 * m:
            raise InvalidArgumentError(
                "evaluation point is off the mollified cell lattice; use a grid "
                "commensurate with the mollification resolution"
            )
        idx %= m
        flat = self.chi_f_grid.reshape(-1)
        lin = np.zeros(idx.shape[:-1], dtype=int)
        for k in range(self.dim):
            lin = lin * m + idx[..., k]
        return flat[lin]

    def chi_f(self, y) -> np.ndarray:
        return self._lookup(y)

    def chi_m(self, y) -> np.ndarray:
        return 1.0 - self._lookup(y)

    def indicator_field(self, resolution: int) -> np.ndarray:
        if resolution != self.resolution:
            raise InvalidArgumentError(
                f"mollified fields are sampled at resolution {self.resolution}"
            )
        return self.chi_f_grid

    def density(self, y) -> np.ndarray:
        chi = self._lookup(y)
        p = self.params
        return chi * p.rho_f + (1.0 - chi) * p.rho_m

    def bond_strength(self, y, yhat) -> np.ndarray:
        a = self._lookup(y)
        b = self._lookup(yhat)
        p = self.params
        return p.c_f * a * b + p.c_m * (1 - a) * (1 - b) + p.c_i * (a * (1 - b) + (1 - a) * b)

    def bond_strength_cutoff(self, y, yhat, horizon: float) -> np.ndarray:
        if horizon <= 0:
            raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
        alpha = self.bond_strength(y, yhat)
        dist = nearest_image_distance(y, yhat)
        return np.where(dist < horizon, alpha, 0.0)

    def volume_fractions(self, resolution: Optional[int] = None):
        theta_f = float(np.mean(self.chi_f_grid))
        return theta_f, 1.0 - theta_f

    def validate(self, delta: Optional[float] = None) -> list[Violation]:
        return self.base.validate(delta)
