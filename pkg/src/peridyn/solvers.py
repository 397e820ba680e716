"""Initial-value solvers for the heterogeneous medium and its two-scale limit.

The fine-scale solve marches the displacement on the macro grid under the
combined long-range and oscillatory short-range bond forces at a given
microstructure scale. The two-scale solve marches a field of both the
macro and the cell variable under the averaged long-range force and the
cell-local short-range force; sampling it along the rescaling diagonal
y = x/eps gives the strong approximation of the fine-scale field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidArgumentError
from .expressions import as_vector_data
from .grids import CellGrid, MacroGrid
from .microstructure import Microstructure, MollifiedMicrostructure, wrap_cell
from .nonlocal_ops import (
    OperatorHandle,
    acceleration_operator,
    cell_short_range_operator,
    epsilon_denominator,
    long_range_norm_bound,
    oscillating_density,
    short_range_norm_bound,
    twoscale_long_range_operator,
)
from .propagators import SeriesPropagator, propagate_verlet, step_count
from .trajectory import Trajectory

AnyMicro = Union[Microstructure, MollifiedMicrostructure]


@dataclass
class ProblemSpec:
    """Everything one initial-value solve needs.

    Initial data and the body force are functions of the macro point, the
    cell point, and time; they may be expression strings (one component
    per ';'), callables, or None for zero forcing.
    """

    micro: AnyMicro
    macro: MacroGrid
    cell: CellGrid
    u0: object
    v0: object
    b: object = None
    final_time: float = 1.0
    dt: float = 1e-3
    stride: int = 1
    epsilon: Optional[float] = None
    integrator: str = "verlet"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.macro.dim != self.cell.dim or self.macro.dim != self.micro.dim:
            raise InvalidArgumentError("microstructure and grids must share the dimension")
        if self.integrator not in ("verlet", "series"):
            raise InvalidArgumentError(
                f"integrator must be 'verlet' or 'series', got {self.integrator!r}"
            )
        self.u0 = as_vector_data(self.u0, self.macro.dim)
        self.v0 = as_vector_data(self.v0, self.macro.dim)
        self.b = as_vector_data(self.b, self.macro.dim)
        step_count(self.final_time, self.dt)

    def with_epsilon(self, eps: float) -> "ProblemSpec":
        return replace(self, epsilon=eps, meta=dict(self.meta))


def norm_budget(micro: AnyMicro) -> float:
    """Conservative norm estimate for stability budgets: both force parts,
    gain and loss term each, using the larger closed-form reading."""
    return 2.0 * (
        short_range_norm_bound(micro).scalar + long_range_norm_bound(micro).scalar
    )


def _series_march(
    matrix: np.ndarray,
    u0: np.ndarray,
    v0: np.ndarray,
    g: Optional[Callable[[float], np.ndarray]],
    dt: float,
    T: float,
    stride: int,
    meta: dict,
) -> Trajectory:
    """March with the exact one-step series propagator and product-trapezoid forcing.

    Unrolling the per-step increments through the semigroup identity
    reproduces the global product trapezoid rule of the solution
    formula's memory integral, so this is the series solution sampled on
    the step grid.
    """
    n_steps = step_count(T, dt)
    stride = max(1, int(stride))
    shape = u0.shape
    prop = SeriesPropagator(matrix, dt)
    u = u0.reshape(-1).copy()
    v = v0.reshape(-1).copy()
    times = [0.0]
    states = [u.copy()]
    velocities = [v.copy()]
    g_flat = None if g is None else (lambda t: np.asarray(g(t), dtype=float).reshape(-1))
    gk = None if g is None else g_flat(0.0)
    for k in range(n_steps):
        un, vn = prop.step(u, v)
        if g is not None:
            gk1 = g_flat((k + 1) * dt)
            du, dv = prop.source_increment(gk, gk1)
            un += du
            vn += dv
            gk = gk1
        u, v = un, vn
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            times.append((k + 1) * dt)
            states.append(u.copy())
            velocities.append(v.copy())
    return Trajectory(
        times=np.asarray(times),
        states=np.stack(states).reshape((-1,) + shape),
        velocities=np.stack(velocities).reshape((-1,) + shape),
        meta=dict(meta, integrator="series", dt=dt, stride=stride),
    )


def _march(spec: ProblemSpec, op: OperatorHandle, u0, v0, g, meta: dict) -> Trajectory:
    if spec.integrator == "series":
        return _series_march(
            op.as_matrix(), u0, v0, g, spec.dt, spec.final_time, spec.stride, meta
        )
    return propagate_verlet(
        op.apply,
        u0,
        v0,
        g,
        spec.dt,
        spec.final_time,
        norm_budget(spec.micro),
        stride=spec.stride,
        meta=meta,
    )


def solve_fine(spec: ProblemSpec) -> Trajectory:
    """March the fine-scale heterogeneous displacement field.

    Initial data and forcing are sampled along the rescaling diagonal,
    u(x, x/eps). Zero data with zero forcing stays exactly zero.
    """
    if spec.epsilon is None:
        raise InvalidArgumentError("fine-scale solve needs epsilon")
    n = epsilon_denominator(spec.epsilon)
    macro, micro = spec.macro, spec.micro
    x = macro.nodes()
    y_diag = wrap_cell(x * n)
    rho_inv = (1.0 / oscillating_density(macro, micro, spec.epsilon))[..., None]
    op = acceleration_operator(macro, micro, spec.epsilon)
    u0 = spec.u0(x, y_diag, 0.0)
    v0 = spec.v0(x, y_diag, 0.0)
    g = None
    if spec.b is not None:
        b = spec.b
        g = lambda t: b(x, y_diag, t) * rho_inv  # noqa: E731
    meta = dict(
        spec.meta,
        kind="fine",
        epsilon=spec.epsilon,
        macro=macro,
        cell=spec.cell,
        micro=micro,
    )
    return _march(spec, op, u0, v0, g, meta)


def twoscale_operator(spec: ProblemSpec) -> OperatorHandle:
    """Acceleration map of the two-scale dynamics (inverse density included)."""
    micro, macro, cell = spec.micro, spec.macro, spec.cell
    p = micro.params
    bl = twoscale_long_range_operator(macro, cell, p.lam, p.gamma)
    bs = cell_short_range_operator(macro, cell, micro)
    rho_inv = (1.0 / micro.density(cell.nodes())).reshape(
        (1,) * macro.dim + cell.shape + (1,)
    )

    def apply(U: np.ndarray) -> np.ndarray:
        return (bl.apply(U) + bs.apply(U)) * rho_inv

    return OperatorHandle("twoscale_acceleration", bl.field_shape, apply, {})


def product_coordinates(macro: MacroGrid, cell: CellGrid):
    """Macro and cell coordinate arrays broadcastable to the product shape."""
    d = macro.dim
    xb = macro.nodes().reshape(macro.shape + (1,) * cell.dim + (d,))
    yb = cell.nodes().reshape((1,) * d + cell.shape + (d,))
    return xb, yb


def solve_twoscale(spec: ProblemSpec) -> Trajectory:
    """March the two-scale field over the macro-by-cell product grid."""
    macro, cell, micro = spec.macro, spec.cell, spec.micro
    xb, yb = product_coordinates(macro, cell)
    rho_inv = (1.0 / micro.density(cell.nodes())).reshape(
        (1,) * macro.dim + cell.shape + (1,)
    )
    op = twoscale_operator(spec)
    shape = op.field_shape
    u0 = np.broadcast_to(spec.u0(xb, yb, 0.0), shape).copy()
    v0 = np.broadcast_to(spec.v0(xb, yb, 0.0), shape).copy()
    g = None
    if spec.b is not None:
        b = spec.b
        g = lambda t: np.broadcast_to(b(xb, yb, t), shape) * rho_inv  # noqa: E731
    meta = dict(spec.meta, kind="twoscale", macro=macro, cell=cell, micro=micro)
    return _march(spec, op, u0, v0, g, meta)


def rescale_field(U: np.ndarray, macro: MacroGrid, cell: CellGrid, eps: float) -> np.ndarray:
    """Sample a two-scale field along the rescaling diagonal y = x/eps.

    Every x/eps must land exactly on a cell lattice node (commensurate
    scale); otherwise the call is rejected.
    """
    n = epsilon_denominator(eps)
    d = macro.dim
    slots = cell.node_index(macro.nodes() * n).reshape(-1)
    flat = U.reshape(macro.size, cell.size, d)
    out = flat[np.arange(macro.size), slots]
    return out.reshape(macro.shape + (d,))


def rescale(traj: Trajectory, eps: float) -> Trajectory:
    """Apply the rescaling diagonal to every stored state of a two-scale run."""
    macro: MacroGrid = traj.meta["macro"]
    cell: CellGrid = traj.meta["cell"]
    states = np.stack([rescale_field(s, macro, cell, eps) for s in traj.states])
    velocities = None
    if traj.velocities is not None:
        velocities = np.stack(
            [rescale_field(s, macro, cell, eps) for s in traj.velocities]
        )
    meta = dict(traj.meta, kind="rescaled", epsilon=eps)
    return Trajectory(times=traj.times.copy(), states=states, velocities=velocities, meta=meta)
