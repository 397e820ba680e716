"""Time integration of second-order linear systems u'' = L u + g(t).

Two engines are provided. The series propagator evaluates the truncated
even and odd operator power series of the solution formula; it is exact
for the homogeneous part up to the truncation tail and handles the
forcing with a product trapezoid rule (the source is interpolated
linearly over each panel and the series kernel is integrated exactly
term by term, so constant-in-time forcing is integrated exactly). It
serves as the validation oracle on assembled small systems. Velocity
Verlet is the matrix-free production path for larger grids.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, StepTooLargeError
from .trajectory import Trajectory

STABILITY_SAFETY = 0.5
SERIES_TOL = 1e-13
SERIES_MAX_TERMS = 200


def series_terms_needed(
    norm: float, t: float, tol: float = SERIES_TOL, max_terms: int = SERIES_MAX_TERMS
) -> int:
    """Smallest truncation order with factorial tail below tol.

    The tail after n terms of each series used here is bounded by
    (norm * t^2)^(n+1) / (n+1)!.
    """
    x = norm * t * t
    tail = 1.0
    for n in range(max_terms + 1):
        tail *= x / (n + 1)
        if tail <= tol:
            return n
    raise StepTooLargeError(
        f"operator series cannot reach tol={tol} within {max_terms} terms "
        f"(norm*t^2 = {x:.3g}); use a smaller step"
    )


def series_coefficients(kind: str, t: float, n_terms: int) -> np.ndarray:
    """Scalar coefficients c_n of the operator series sum_n c_n L^n.

    Kinds: 'even' and 'odd' are the solution kernels; 'p0' and 'p1' are
    the kernel integrals int_0^t odd(s) ds and int_0^t s odd(s) ds; 'q1'
    is int_0^t s even(s) ds. Together they integrate a linear-in-time
    source against the kernels exactly.
    """
    c = np.empty(n_terms + 1)
    t2 = t * t
    if kind == "even":
        c[0] = 1.0
        for n in range(1, n_terms + 1):
            c[n] = c[n - 1] * t2 / ((2 * n - 1) * (2 * n))
    elif kind == "odd":
        c[0] = t
        for n in range(1, n_terms + 1):
            c[n] = c[n - 1] * t2 / ((2 * n) * (2 * n + 1))
    elif kind == "p0":
        c[0] = t2 / 2.0
        for n in range(1, n_terms + 1):
            c[n] = c[n - 1] * t2 / ((2 * n + 1) * (2 * n + 2))
    elif kind == "p1":
        c[0] = t2 * t / 3.0
        for n in range(1, n_terms + 1):
            c[n] = c[n - 1] * t2 / ((2 * n) * (2 * n + 3))
    elif kind == "q1":
        c[0] = t2 / 2.0
        for n in range(1, n_terms + 1):
            c[n] = c[n - 1] * t2 / ((2 * n - 1) * (2 * n + 2))
    else:
        raise InvalidArgumentError(f"unknown series kind {kind!r}")
    return c


def series_apply(apply_fn: Callable, v: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate sum_n coeffs[n] L^n v with a matrix-free operator."""
    acc = coeffs[0] * v
    term = v
    for c in coeffs[1:]:
        term = apply_fn(term)
        acc = acc + c * term
    return acc


def even_series_apply(apply_fn, v, t, n_terms):
    return series_apply(apply_fn, v, series_coefficients("even", t, n_terms))


def odd_series_apply(apply_fn, v, t, n_terms):
    return series_apply(apply_fn, v, series_coefficients("odd", t, n_terms))


def _series_matrix(matrix: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    acc = coeffs[0] * np.eye(n)
    term = np.eye(n)
    for c in coeffs[1:]:
        term = matrix @ term
        acc += c * term
    return acc


class SeriesPropagator:
    """Truncated operator series of one time step, precomputed as matrices.

    Construction fails if the factorial tail bound cannot reach the
    tolerance within the term cap; callers then have to reduce the step.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        t: float,
        tol: float = SERIES_TOL,
        max_terms: int = SERIES_MAX_TERMS,
    ):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError("series propagator needs a square matrix")
        norm = float(np.linalg.norm(matrix, 1))
        self.n_terms = series_terms_needed(norm, t, tol, max_terms)
        self.matrix = matrix
        self.t = t
        self.even = _series_matrix(matrix, series_coefficients("even", t, self.n_terms))
        self.odd = _series_matrix(matrix, series_coefficients("odd", t, self.n_terms))
        self.l_odd = matrix @ self.odd
        self._p0 = None
        self._p1 = None
        self._q1 = None

    def _source_matrices(self):
        if self._p0 is None:
            self._p0 = _series_matrix(
                self.matrix, series_coefficients("p0", self.t, self.n_terms)
            )
            self._p1 = _series_matrix(
                self.matrix, series_coefficients("p1", self.t, self.n_terms)
            )
            self._q1 = _series_matrix(
                self.matrix, series_coefficients("q1", self.t, self.n_terms)
            )
        return self._p0, self._p1, self._q1

    def step(self, u: np.ndarray, v: np.ndarray):
        """Advance (u, v) by one homogeneous step of length t."""
        return self.even @ u + self.odd @ v, self.l_odd @ u + self.even @ v

    def source_increment(self, g0: np.ndarray, g1: np.ndarray):
        """Forced contribution of one panel with linearly interpolated source."""
        p0, p1, q1 = self._source_matrices()
        slope = (g0 - g1) / self.t
        du = p0 @ g1 + p1 @ slope
        dv = self.odd @ g1 + q1 @ slope
        return du, dv


def propagate_series(
    matrix: np.ndarray,
    u0: np.ndarray,
    v0: np.ndarray,
    g: Optional[Callable[[float], np.ndarray]],
    t: float,
    samples: int = 128,
    tol: float = SERIES_TOL,
):
    """Solution at time t from the operator-series formula.

    The homogeneous part is advanced exactly (to the series tolerance)
    through equal sub-steps; the forcing uses the product trapezoid rule
    with ``samples`` panels. Returns (u(t), v(t)) as flat vectors.
    """
    if t < 0:
        raise InvalidArgumentError("propagation time must be nonnegative")
    u = np.asarray(u0, dtype=float).reshape(-1).copy()
    v = np.asarray(v0, dtype=float).reshape(-1).copy()
    if t == 0:
        return u, v
    samples = max(1, int(samples))
    dt = t / samples
    prop = SeriesPropagator(matrix, dt, tol=tol)
    gk = None if g is None else np.asarray(g(0.0), dtype=float).reshape(-1)
    for k in range(samples):
        un, vn = prop.step(u, v)
        if g is not None:
            gk1 = np.asarray(g((k + 1) * dt), dtype=float).reshape(-1)
            du, dv = prop.source_increment(gk, gk1)
            un += du
            vn += dv
            gk = gk1
        u, v = un, vn
    return u, v


def stability_budget(norm_estimate: float) -> float:
    """Largest admissible Verlet step for an operator norm estimate."""
    if norm_estimate <= 0:
        return np.inf
    return STABILITY_SAFETY * 2.0 / np.sqrt(norm_estimate)


def step_count(T: float, dt: float) -> int:
    if dt <= 0 or T <= 0:
        raise InvalidArgumentError("final time and step must be positive")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-8 * max(T, 1.0):
        raise InvalidArgumentError(f"dt = {dt} does not divide the final time T = {T}")
    return n


def propagate_verlet(
    apply_fn: Callable[[np.ndarray], np.ndarray],
    u0: np.ndarray,
    v0: np.ndarray,
    g: Optional[Callable[[float], np.ndarray]],
    dt: float,
    T: float,
    norm_estimate: float,
    stride: int = 1,
    meta: Optional[dict] = None,
) -> Trajectory:
    """Velocity Verlet march with forces sampled at integer steps.

    Rejects steps beyond the stability budget. Records every stride-th
    state plus the initial and final ones.
    """
    budget = stability_budget(norm_estimate)
    if dt > budget:
        raise InvalidArgumentError(
            f"dt = {dt:.3g} exceeds the stability budget {budget:.3g} "
            f"(norm estimate {norm_estimate:.3g})"
        )
    n_steps = step_count(T, dt)
    stride = max(1, int(stride))

    u = np.array(u0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)

    def accel(uu, tt):
        a = apply_fn(uu)
        if g is not None:
            a = a + g(tt)
        return a

    times = [0.0]
    states = [u.copy()]
    velocities = [v.copy()]
    a = accel(u, 0.0)
    for k in range(n_steps):
        u = u + dt * v + (0.5 * dt * dt) * a
        t_next = (k + 1) * dt
        a_next = accel(u, t_next)
        v = v + (0.5 * dt) * (a + a_next)
        a = a_next
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            times.append(t_next)
            states.append(u.copy())
            velocities.append(v.copy())
    return Trajectory(
        times=np.asarray(times),
        states=np.stack(states),
        velocities=np.stack(velocities),
        meta=dict(meta or {}, integrator="verlet", dt=dt, stride=stride),
    )
