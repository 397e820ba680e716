"""Macro/micro decomposition of the two-scale dynamics and the equivalent
homogenized descriptions.

The two-scale field splits into its cell average (the homogenized,
gauge-measurable part) and a zero-cell-mean corrector carrying the
microstructural oscillation. The coupled solver marches both components
together; eliminating the corrector turns its feedback on the average
into a time convolution against operator functions of the corrector
generator, which the memory solver evaluates directly. The force the
homogenized deformation generates then follows a history-dependent
constitutive law.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .grids import CellGrid, MacroGrid
from .nonlocal_ops import (
    cell_average,
    cell_short_range_operator,
    corrector_generator,
    long_range_operator,
    short_range_norm_bound,
    truncated_kernel_moment,
)
from .propagators import (
    SERIES_TOL,
    series_apply,
    series_coefficients,
    series_terms_needed,
    stability_budget,
    step_count,
)
from .solvers import ProblemSpec, norm_budget, product_coordinates
from .trajectory import Trajectory


def split(U: np.ndarray, macro: MacroGrid, cell: CellGrid):
    """Separate a two-scale field into cell average and zero-mean corrector."""
    u_h = cell_average(U, macro, cell)
    r = U - u_h.reshape(macro.shape + (1,) * cell.dim + (macro.dim,))
    return u_h, r


@dataclass
class _Pieces:
    """Operators and coefficient fields shared by the homogenized solvers."""

    micro: object
    macro: MacroGrid
    cell: CellGrid
    kl: object
    bs: object
    cgen: object
    w: np.ndarray
    rho_inv_b: np.ndarray  # inverse density, broadcastable over the product shape
    rho_inv_mean: float
    rho_fluct_b: np.ndarray

    def corrector_feedback(self, s: np.ndarray) -> np.ndarray:
        """Macro force the corrector exerts on the homogenized component."""
        t1 = cell_average(self.rho_inv_b * self.bs.apply(s), self.macro, self.cell)
        t2 = cell_average(self.rho_inv_b * s, self.macro, self.cell)
        d = self.macro.dim
        wterm = np.einsum(
            "nab,nb->na",
            self.w.reshape(self.macro.size, d, d),
            t2.reshape(self.macro.size, d),
        ).reshape(t1.shape)
        return t1 - wterm

    def corrector_source(self, kl_u: np.ndarray) -> np.ndarray:
        """Density-fluctuation forcing of the corrector by the macro force."""
        return self.rho_fluct_b * kl_u.reshape(
            self.macro.shape + (1,) * self.cell.dim + (self.macro.dim,)
        )

    def generator_norm_estimate(self) -> float:
        ms = short_range_norm_bound(self.micro)
        d = self.macro.dim
        w_flat = self.w.reshape(-1, d, d)
        w_max = float(np.max(np.linalg.norm(w_flat, ord=2, axis=(1, 2))))
        rho_inv_max = float(np.max(self.rho_inv_b))
        return 4.0 * ms.scalar + 2.0 * w_max * rho_inv_max


def _build_pieces(micro, macro: MacroGrid, cell: CellGrid) -> _Pieces:
    p = micro.params
    rho_inv_cell = 1.0 / micro.density(cell.nodes())
    rho_inv_mean = float(np.mean(rho_inv_cell))
    bshape = (1,) * macro.dim + cell.shape + (1,)
    return _Pieces(
        micro=micro,
        macro=macro,
        cell=cell,
        kl=long_range_operator(macro, p.lam, p.gamma),
        bs=cell_short_range_operator(macro, cell, micro),
        cgen=corrector_generator(macro, cell, micro, p.lam, p.gamma),
        w=truncated_kernel_moment(macro, p.lam, p.gamma),
        rho_inv_b=rho_inv_cell.reshape(bshape),
        rho_inv_mean=rho_inv_mean,
        rho_fluct_b=(rho_inv_cell - rho_inv_mean).reshape(bshape),
    )


def _fluct(prod: np.ndarray, macro: MacroGrid, cell: CellGrid) -> np.ndarray:
    return prod - cell_average(prod, macro, cell, keepdims=True)


@dataclass
class CoupledTrajectory:
    """Stored evolution of the homogenized component and the corrector."""

    times: np.ndarray
    u_h: np.ndarray
    v_h: np.ndarray
    r: np.ndarray
    r_dot: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def reconstruct(self) -> Trajectory:
        """Reassemble the two-scale field u_h + r at the stored times."""
        macro: MacroGrid = self.meta["macro"]
        cell: CellGrid = self.meta["cell"]
        shape = (len(self.times),) + macro.shape + (1,) * cell.dim + (macro.dim,)
        states = self.u_h.reshape(shape) + self.r
        return Trajectory(times=self.times.copy(), states=states, meta=dict(self.meta))


def _initial_split_data(spec: ProblemSpec, pieces: _Pieces):
    xb, yb = product_coordinates(spec.macro, spec.cell)
    shape = pieces.cgen.field_shape
    U0 = np.broadcast_to(spec.u0(xb, yb, 0.0), shape).copy()
    V0 = np.broadcast_to(spec.v0(xb, yb, 0.0), shape).copy()
    u_h0, r0 = split(U0, spec.macro, spec.cell)
    v_h0, rd0 = split(V0, spec.macro, spec.cell)
    return u_h0, v_h0, r0, rd0


def _body_force_terms(spec: ProblemSpec, pieces: _Pieces):
    """Callables for the cell average and fluctuation of rho^-1 times the force."""
    if spec.b is None:
        return None, None
    xb, yb = product_coordinates(spec.macro, spec.cell)
    shape = pieces.cgen.field_shape
    b = spec.b

    def weighted(t):
        return np.broadcast_to(b(xb, yb, t), shape) * pieces.rho_inv_b

    def avg(t):
        return cell_average(weighted(t), spec.macro, spec.cell)

    def fluct(t):
        return _fluct(weighted(t), spec.macro, spec.cell)

    return avg, fluct


class _GeneratorStepper:
    """One-step even/odd series advance of a corrector-generator system.

    Matrix-free: only integer powers of the generator are applied. The
    source enters through the product trapezoid rule (linear interpolant
    integrated exactly against the kernels), so unrolling the recursion
    reproduces the trapezoid discretization of the memory integral over
    the whole history.
    """

    def __init__(self, pieces: _Pieces, dt: float):
        self.apply = pieces.cgen.apply
        self.dt = dt
        n_terms = series_terms_needed(pieces.generator_norm_estimate(), dt, SERIES_TOL)
        self.c_even = series_coefficients("even", dt, n_terms)
        self.c_odd = series_coefficients("odd", dt, n_terms)
        self.c_p0 = series_coefficients("p0", dt, n_terms)
        self.c_p1 = series_coefficients("p1", dt, n_terms)
        self.c_q1 = series_coefficients("q1", dt, n_terms)

    def step(self, z, zd, g0, g1):
        """Advance (z, zd) with z'' = C z + g, g linear over the panel."""
        z_new = series_apply(self.apply, z, self.c_even) + series_apply(
            self.apply, zd, self.c_odd
        )
        zd_new = self.apply(series_apply(self.apply, z, self.c_odd)) + series_apply(
            self.apply, zd, self.c_even
        )
        if g0 is not None:
            slope = (g0 - g1) / self.dt
            z_new += series_apply(self.apply, g1, self.c_p0) + series_apply(
                self.apply, slope, self.c_p1
            )
            zd_new += series_apply(self.apply, g1, self.c_odd) + series_apply(
                self.apply, slope, self.c_q1
            )
        return z_new, zd_new


def _check_step(spec: ProblemSpec):
    budget = stability_budget(norm_budget(spec.micro))
    if spec.dt > budget:
        raise InvalidArgumentError(
            f"dt = {spec.dt:.3g} exceeds the stability budget {budget:.3g}"
        )
    return step_count(spec.final_time, spec.dt), max(1, int(spec.stride))


def solve_coupled(spec: ProblemSpec) -> CoupledTrajectory:
    """March the coupled system for the homogenized component and corrector.

    Velocity Verlet on the stacked state. The two accelerations are the
    cell average and the cell fluctuation of the two-scale acceleration,
    so the reconstruction u_h + r reproduces the two-scale solve at
    matched discretization, and the corrector keeps zero cell mean.
    """
    pieces = _build_pieces(spec.micro, spec.macro, spec.cell)
    u_h, v_h, r, r_dot = _initial_split_data(spec, pieces)
    b_avg, b_fluct = _body_force_terms(spec, pieces)

    def accel(u_h_now, r_now, t):
        kl_u = pieces.kl.apply(u_h_now)
        a_h = pieces.rho_inv_mean * kl_u + pieces.corrector_feedback(r_now)
        a_r = pieces.corrector_source(kl_u) + pieces.cgen.apply(r_now)
        if b_avg is not None:
            a_h = a_h + b_avg(t)
            a_r = a_r + b_fluct(t)
        return a_h, a_r

    dt = spec.dt
    n_steps, stride = _check_step(spec)

    times = [0.0]
    u_hs, v_hs, rs, r_dots = [u_h.copy()], [v_h.copy()], [r.copy()], [r_dot.copy()]
    a_h, a_r = accel(u_h, r, 0.0)
    for k in range(n_steps):
        u_h = u_h + dt * v_h + (0.5 * dt * dt) * a_h
        r = r + dt * r_dot + (0.5 * dt * dt) * a_r
        t_next = (k + 1) * dt
        a_h_next, a_r_next = accel(u_h, r, t_next)
        v_h = v_h + (0.5 * dt) * (a_h + a_h_next)
        r_dot = r_dot + (0.5 * dt) * (a_r + a_r_next)
        a_h, a_r = a_h_next, a_r_next
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            times.append(t_next)
            u_hs.append(u_h.copy())
            v_hs.append(v_h.copy())
            rs.append(r.copy())
            r_dots.append(r_dot.copy())
    meta = dict(
        spec.meta,
        kind="coupled",
        macro=spec.macro,
        cell=spec.cell,
        micro=spec.micro,
        dt=dt,
    )
    return CoupledTrajectory(
        times=np.asarray(times),
        u_h=np.stack(u_hs),
        v_h=np.stack(v_hs),
        r=np.stack(rs),
        r_dot=np.stack(r_dots),
        meta=meta,
    )


@dataclass
class MemoryHistory:
    """Per-step source samples driving the memory convolution.

    The corrector source is rank-one in the cell variable, the density
    fluctuation profile times the macro long-range force, so the history
    keeps the macro force samples once per step plus the fixed profile.
    Sample times are strictly increasing with spacing dt.
    """

    times: np.ndarray
    kl_samples: np.ndarray  # (n_steps + 1,) + macro.shape + (d,)
    rho_fluct: np.ndarray  # cell-shaped profile of rho^-1 minus its mean

    def __len__(self):
        return len(self.times)


@dataclass
class MemoryRun:
    """Output of the memory-kernel march for the homogenized component."""

    times: np.ndarray
    u_h: np.ndarray
    v_h: np.ndarray
    accel: np.ndarray
    corrector_memory: np.ndarray  # memory part of the corrector at stored times
    forced_corrector: np.ndarray  # data and body-force part of the corrector
    history: MemoryHistory
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


def solve_memory(spec: ProblemSpec) -> MemoryRun:
    """March the homogenized component under its history-dependent law.

    The corrector's feedback splits into two auxiliary paths: one driven
    by the stored history of the macro long-range force (the memory
    convolution) and one carrying the corrector initial data and the
    body-force fluctuation, independent of the march. Both are advanced
    with the one-step even/odd series of the corrector generator plus a
    per-step trapezoid source increment; by the semigroup identity this
    equals the global trapezoid rule over the whole stored history. Only
    integer powers of the generator are ever formed.
    """
    pieces = _build_pieces(spec.micro, spec.macro, spec.cell)
    dt = spec.dt
    n_steps, stride = _check_step(spec)

    u_h, v_h, r0, rd0 = _initial_split_data(spec, pieces)
    b_avg, b_fluct = _body_force_terms(spec, pieces)

    stepper = _GeneratorStepper(pieces, dt)

    # memory path: zero data, driven by the force history
    v_mem = np.zeros(pieces.cgen.field_shape)
    vd_mem = np.zeros_like(v_mem)
    # forced path: corrector data plus body-force fluctuation
    w_path = r0.copy()
    wd_path = rd0.copy()

    kl_u = pieces.kl.apply(u_h)
    kl_samples = [kl_u.copy()]
    s_now = pieces.corrector_source(kl_u)
    bf_now = b_fluct(0.0) if b_fluct is not None else None

    def accel_of(kl_field, corr, t):
        a = pieces.rho_inv_mean * kl_field + pieces.corrector_feedback(corr)
        if b_avg is not None:
            a = a + b_avg(t)
        return a

    a_now = accel_of(kl_u, v_mem + w_path, 0.0)

    times = [0.0]
    u_hs, v_hs = [u_h.copy()], [v_h.copy()]
    accels = [a_now.copy()]
    v_mems, w_paths = [v_mem.copy()], [w_path.copy()]

    for k in range(n_steps):
        t_next = (k + 1) * dt
        u_h = u_h + dt * v_h + (0.5 * dt * dt) * a_now
        kl_u = pieces.kl.apply(u_h)
        kl_samples.append(kl_u.copy())
        s_next = pieces.corrector_source(kl_u)

        v_mem, vd_mem = stepper.step(v_mem, vd_mem, s_now, s_next)
        s_now = s_next

        if b_fluct is not None:
            bf_next = b_fluct(t_next)
            w_path, wd_path = stepper.step(w_path, wd_path, bf_now, bf_next)
            bf_now = bf_next
        else:
            w_path, wd_path = stepper.step(w_path, wd_path, None, None)

        a_next = accel_of(kl_u, v_mem + w_path, t_next)
        v_h = v_h + (0.5 * dt) * (a_now + a_next)
        a_now = a_next
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            times.append(t_next)
            u_hs.append(u_h.copy())
            v_hs.append(v_h.copy())
            accels.append(a_now.copy())
            v_mems.append(v_mem.copy())
            w_paths.append(w_path.copy())

    history = MemoryHistory(
        times=np.arange(n_steps + 1) * dt,
        kl_samples=np.stack(kl_samples),
        rho_fluct=np.asarray(pieces.rho_fluct_b).reshape(spec.cell.shape),
    )
    meta = dict(
        spec.meta,
        kind="memory",
        macro=spec.macro,
        cell=spec.cell,
        micro=spec.micro,
        dt=dt,
        final_time=spec.final_time,
    )
    return MemoryRun(
        times=np.asarray(times),
        u_h=np.stack(u_hs),
        v_h=np.stack(v_hs),
        accel=np.stack(accels),
        corrector_memory=np.stack(v_mems),
        forced_corrector=np.stack(w_paths),
        history=history,
        meta=meta,
    )


def constitutive_force(run: MemoryRun, times: Optional[np.ndarray] = None) -> Trajectory:
    """History-dependent force generated by the homogenized deformation.

    Standalone post-processing: the instantaneous long-range force plus
    the memory feedback of the convolution of the stored force history
    against the odd series of the corrector generator, rebuilt from the
    stored samples with the same trapezoid-in-history rule the march
    used. Requested times must sit on the stored history grid.
    """
    hist = run.history
    if len(hist) == 0:
        raise InvalidArgumentError("memory run carries no stored history")
    macro: MacroGrid = run.meta["macro"]
    cell: CellGrid = run.meta["cell"]
    micro = run.meta["micro"]
    dt = run.meta["dt"]
    if times is None:
        times = run.times
    times = np.asarray(times, dtype=float)
    t_max = hist.times[-1]
    if np.any(times > t_max + 1e-9) or np.any(times < -1e-12):
        raise InvalidArgumentError(f"requested time outside the stored history [0, {t_max}]")

    pieces = _build_pieces(micro, macro, cell)
    steps = []
    for t in times:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidArgumentError(f"time {t} is not on the history grid")
        steps.append(k)
    order = np.argsort(steps)

    stepper = _GeneratorStepper(pieces, dt)
    v_hat = np.zeros(pieces.cgen.field_shape)
    vd_hat = np.zeros_like(v_hat)
    sources = [pieces.corrector_source(s) for s in hist.kl_samples]
    forces: dict[int, np.ndarray] = {}
    k_now = 0
    for idx in order:
        k_target = steps[idx]
        while k_now < k_target:
            v_hat, vd_hat = stepper.step(v_hat, vd_hat, sources[k_now], sources[k_now + 1])
            k_now += 1
        mem = pieces.corrector_feedback(v_hat) / pieces.rho_inv_mean
        forces[idx] = hist.kl_samples[k_target] + mem
    return Trajectory(
        times=times.copy(),
        states=np.stack([forces[i] for i in range(len(times))]),
        meta=dict(run.meta, kind="constitutive_force"),
    )
