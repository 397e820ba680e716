"""Run-configuration parsing and validation.

Configurations are sectioned key-value text files (INI style, readable
and diffable from any environment). Parsing collects every problem it
finds, not just the first, and reports each with a section.key path. No
physics coefficient has a silent default: every constant of the bond and
density model must be spelled out.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidArgumentError, PeridynError
from .expressions import VectorData
from .grids import CellGrid, MacroGrid
from .microstructure import CellGeometry, Microstructure, PhaseParams, SHAPES
from .solvers import ProblemSpec

MODES = ("fine", "twoscale", "homog-coupled", "homog-memory", "convergence")

_REQUIRED_PHYSICS = ("c_f", "c_m", "c_i", "rho_f", "rho_m", "delta", "lambda", "gamma")


@dataclass
class RunConfig:
    """A fully validated run request."""

    mode: str
    spec: ProblemSpec
    out_dir: Path
    epsilon: Optional[float] = None
    epsilons: tuple = ()
    p: float = 2.0
    window: Optional[tuple] = None
    forcing_times: Optional[tuple] = None
    config_hash: str = ""
    raw_text: str = ""
    source_path: Optional[Path] = None
    resolved: dict = field(default_factory=dict)


class _Collector:
    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []

    def fail(self, where: str, message: str):
        self.errors.append(f"{where}: {message}")

    def get(self, section: str, key: str, cast, required=True, default=None):
        if not self.parser.has_section(section):
            if required:
                self.fail(section, "missing section")
            return default
        if not self.parser.has_option(section, key):
            if required:
                self.fail(f"{section}.{key}", "missing required key")
            return default
        raw = self.parser.get(section, key)
        try:
            return cast(raw)
        except (ValueError, InvalidArgumentError) as exc:
            self.fail(f"{section}.{key}", str(exc))
            return default


def _float_list(raw: str):
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _int_list(raw: str):
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _check_epsilon(eps: float, where: str, collector: _Collector, spec: ProblemSpec | None):
    n = round(1.0 / eps) if eps > 0 else 0
    if eps <= 0 or n < 1 or abs(n * eps - 1.0) > 1e-9:
        collector.fail(where, f"epsilon must be 1/n for an integer n, got {eps}")
        return
    if spec is not None:
        try:
            spec.cell.node_index(spec.macro.nodes() * n)
        except InvalidArgumentError:
            collector.fail(
                where,
                f"epsilon = {eps} is incommensurate with the macro and cell grids "
                "(x/epsilon must land on cell nodes)",
            )


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file; raises with all errors found."""
    path = Path(path)
    try:
        raw_text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(raw_text)
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc

    c = _Collector(parser)

    mode = c.get("run", "mode", str)
    if mode is not None and mode not in MODES:
        c.fail("run.mode", f"must be one of {', '.join(MODES)}; got {mode!r}")
    out_dir = c.get("run", "out", str, required=False, default="out")
    integrator = c.get("run", "integrator", str, required=False, default="verlet")
    if integrator not in ("verlet", "series"):
        c.fail("run.integrator", f"must be 'verlet' or 'series', got {integrator!r}")

    dim = c.get("grid", "dimension", int)
    lo = c.get("grid", "lo", _float_list)
    hi = c.get("grid", "hi", _float_list)
    macro_n = c.get("grid", "macro_n", _int_list)
    cell_n = c.get("grid", "cell_n", int)

    shape = c.get("microstructure", "shape", str)
    if shape is not None and shape not in SHAPES:
        c.fail("microstructure.shape", f"must be one of {SHAPES}, got {shape!r}")
    r_f = c.get("microstructure", "r_f", float)
    physics = {}
    for key in _REQUIRED_PHYSICS:
        physics[key] = c.get("microstructure", key, float)
    beta = c.get("microstructure", "beta", float, required=False)

    u0 = c.get("problem", "u0", str)
    v0 = c.get("problem", "v0", str)
    b = c.get("problem", "b", str, required=False)
    final_time = c.get("problem", "T", float)
    dt = c.get("problem", "dt", float)
    stride = c.get("problem", "stride", int, required=False, default=1)

    if c.errors:
        raise ConfigError(c.errors)

    micro = None
    macro = None
    cell = None
    try:
        geometry = CellGeometry(dim=dim, shape=shape, r_f=r_f)
        params = PhaseParams(
            c_f=physics["c_f"],
            c_m=physics["c_m"],
            c_i=physics["c_i"],
            rho_f=physics["rho_f"],
            rho_m=physics["rho_m"],
            delta=physics["delta"],
            lam=physics["lambda"],
            gamma=physics["gamma"],
            beta=beta,
        )
        micro = Microstructure(geometry, params)
        if beta is not None:
            micro = micro.mollify(beta, resolution=cell_n)
    except PeridynError as exc:
        c.fail("microstructure", str(exc))
    try:
        if len(lo) == 1 and dim > 1:
            lo = lo * dim
        if len(hi) == 1 and dim > 1:
            hi = hi * dim
        if len(macro_n) == 1 and dim > 1:
            macro_n = macro_n * dim
        macro = MacroGrid(lo, hi, macro_n)
        if macro.dim != dim:
            c.fail("grid", f"extents have {macro.dim} axes but dimension = {dim}")
        cell = CellGrid(dim, cell_n)
    except PeridynError as exc:
        c.fail("grid", str(exc))

    spec = None
    if micro is not None and macro is not None and cell is not None:
        try:
            spec = ProblemSpec(
                micro=micro,
                macro=macro,
                cell=cell,
                u0=VectorData(u0, dim),
                v0=VectorData(v0, dim),
                b=VectorData(b, dim) if b is not None else None,
                final_time=final_time,
                dt=dt,
                stride=stride,
                integrator=integrator,
            )
        except PeridynError as exc:
            c.fail("problem", str(exc))

    epsilon = None
    epsilons = ()
    p = 2.0
    window = None
    forcing_times = None
    if mode in ("fine",):
        epsilon = c.get("fine", "epsilon", float)
        if epsilon is not None:
            _check_epsilon(epsilon, "fine.epsilon", c, spec)
    if mode == "convergence":
        epsilons = c.get("convergence", "epsilons", _float_list) or ()
        for eps in epsilons:
            _check_epsilon(eps, "convergence.epsilons", c, spec)
        if any(b2 >= a2 for a2, b2 in zip(epsilons, epsilons[1:])):
            c.fail("convergence.epsilons", "must be strictly decreasing")
        p = c.get("convergence", "p", float, required=False, default=2.0)
        if p is not None and p <= 1.5:
            c.fail("convergence.p", f"needs p > 3/2, got {p}")
        wlo = c.get("convergence", "window_lo", _float_list, required=False)
        whi = c.get("convergence", "window_hi", _float_list, required=False)
        if (wlo is None) != (whi is None):
            c.fail("convergence", "window_lo and window_hi must be given together")
        elif wlo is not None:
            window = (wlo, whi)
        forcing_times = c.get("convergence", "forcing_times", _float_list, required=False)

    if c.errors:
        raise ConfigError(c.errors)

    if spec is not None and epsilon is not None:
        spec = spec.with_epsilon(epsilon)

    resolved = {
        "mode": mode,
        "dimension": dim,
        "macro_n": list(macro_n),
        "cell_n": cell_n,
        "shape": shape,
        "r_f": r_f,
        **physics,
        "beta": beta,
        "T": final_time,
        "dt": dt,
        "stride": stride,
        "integrator": integrator,
        "u0": u0,
        "v0": v0,
        "b": b,
    }
    return RunConfig(
        mode=mode,
        spec=spec,
        out_dir=Path(out_dir),
        epsilon=epsilon,
        epsilons=tuple(epsilons),
        p=p if p is not None else 2.0,
        window=window,
        forcing_times=tuple(forcing_times) if forcing_times else None,
        config_hash=hashlib.sha256(raw_text.encode()).hexdigest(),
        raw_text=raw_text,
        source_path=path,
        resolved=resolved,
    )


def derived_constants(config: RunConfig) -> dict:
    """Volume fractions, norm constants, and the kernel moment for the manifest."""
    from .nonlocal_ops import (
        kernel_moment_matrix,
        long_range_norm_bound,
        short_range_norm_bound,
    )

    spec = config.spec
    micro = spec.micro
    theta_f, theta_m = micro.volume_fractions(spec.cell.m)
    ms = short_range_norm_bound(micro, spec.cell.m)
    ml = long_range_norm_bound(micro, spec.cell.m)
    kmat = kernel_moment_matrix(
        micro.params.lam, micro.params.gamma, spec.macro.dim, spec.macro.h
    )
    return {
        "theta_f": theta_f,
        "theta_m": theta_m,
        "M_S": {"tensor_average": ms.tensor_average, "scalar": ms.scalar},
        "M_L": {"tensor_average": ml.tensor_average, "scalar": ml.scalar},
        "kernel_moment": np.asarray(kmat).tolist(),
    }
