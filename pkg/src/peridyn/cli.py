"""Batch front end: parse a config, dispatch one run mode, write outputs.

Environment variables: PERIDYN_OUT overrides the output directory,
PERIDYN_THREADS caps the linear-algebra thread count (it must be set
before the process starts numerical work; the launcher exports it to the
standard BLAS/OpenMP variables). Identical configurations produce
byte-identical CSV outputs on the same platform.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

__version__ = "0.1.0"


def _apply_thread_env():
    threads = os.environ.get("PERIDYN_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


_apply_thread_env()


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peridyn",
        description=(
            "Multiscale peridynamic composite simulator: fine-scale, two-scale, "
            "homogenized coupled, homogenized memory-kernel, and convergence modes."
        ),
        epilog=(
            "Environment: PERIDYN_OUT overrides the output directory; "
            "PERIDYN_THREADS caps the BLAS/OpenMP thread count (set before launch)."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute the configured run and write trajectories and manifests"),
        ("validate", "parse and validate a configuration, reporting every problem"),
        ("constants", "print derived constants (volume fractions, norm bounds, kernel moment)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run configuration file")
        if name == "run":
            p.add_argument("--out", help="output directory (overrides the config)")
            p.add_argument("--mode", help="override the configured run mode")
    return parser


def _macro_coords(grid):
    return grid.nodes().reshape(-1, grid.dim)


def _product_coords(macro, cell):
    import numpy as np

    x = macro.nodes().reshape(-1, macro.dim)
    y = cell.nodes().reshape(-1, cell.dim)
    xs = np.repeat(x, len(y), axis=0)
    ys = np.tile(y, (len(x), 1))
    return np.concatenate([xs, ys], axis=1)


def _coord_names(dim, prefix):
    return [f"{prefix}{k + 1}" for k in range(dim)]


def _run(config, out_dir: Path):
    """Dispatch one mode; returns the files written and manifest extras."""
    from . import analysis, homogenization, solvers
    from .trajectory import write_field_csv

    spec = config.spec
    macro, cell = spec.macro, spec.cell
    d = macro.dim
    xcols = _coord_names(d, "x")
    ycols = _coord_names(d, "y")
    ucols = _coord_names(d, "u")
    written: list[str] = []
    extra: dict = {}

    def emit(name, traj, coords, coord_names, comp_names):
        path = out_dir / name
        write_field_csv(path, traj, coords, coord_names, comp_names)
        written.append(name)

    if config.mode == "fine":
        traj = solvers.solve_fine(spec)
        emit("trajectory.csv", traj, _macro_coords(macro), xcols, ucols)
    elif config.mode == "twoscale":
        traj = solvers.solve_twoscale(spec)
        emit("trajectory.csv", traj, _product_coords(macro, cell), xcols + ycols, ucols)
    elif config.mode == "homog-coupled":
        run = homogenization.solve_coupled(spec)
        from .trajectory import Trajectory

        u_traj = Trajectory(times=run.times, states=run.u_h, meta={})
        r_traj = Trajectory(times=run.times, states=run.r, meta={})
        emit("u_h.csv", u_traj, _macro_coords(macro), xcols, ucols)
        emit("corrector.csv", r_traj, _product_coords(macro, cell), xcols + ycols, ucols)
    elif config.mode == "homog-memory":
        run = homogenization.solve_memory(spec)
        from .trajectory import Trajectory

        u_traj = Trajectory(times=run.times, states=run.u_h, meta={})
        f_traj = homogenization.constitutive_force(run)
        emit("u_h.csv", u_traj, _macro_coords(macro), xcols, ucols)
        emit("constitutive_force.csv", f_traj, _macro_coords(macro), xcols,
             _coord_names(d, "f"))
    elif config.mode == "convergence":
        report = analysis.convergence_study(
            spec,
            config.epsilons,
            p=config.p,
            window=config.window,
            forcing_times=config.forcing_times,
        )
        analysis.report_to_csv(report, out_dir / "report.csv")
        written.append("report.csv")
        extra["wall_times_s"] = {
            "twoscale": report.twoscale_runtime_s,
            **{str(row.epsilon): row.runtime_s for row in report.rows},
        }
        failed = [row.status for row in report.rows if row.status != "ok"]
        if failed:
            raise RuntimeError("; ".join(failed))
    else:
        raise ValueError(f"unknown mode {config.mode!r}")
    return written, extra


def main(argv=None) -> int:
    _apply_thread_env()
    args = _build_parser().parse_args(argv)

    from .config import derived_constants, parse_config
    from .errors import ConfigError
    from .trajectory import write_manifest

    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2

    if args.command == "validate":
        violations = config.spec.micro.validate()
        for v in violations:
            print(f"{v.severity}: {v.message}")
        if any(v.severity == "error" for v in violations):
            return 1
        print("configuration ok")
        return 0

    if args.command == "constants":
        import json

        print(json.dumps(derived_constants(config), indent=2, sort_keys=True))
        return 0

    # run
    if getattr(args, "mode", None):
        from .config import MODES

        if args.mode not in MODES:
            print(f"unknown mode override {args.mode!r}", file=sys.stderr)
            return 2
        config.mode = args.mode
    out_dir = Path(
        os.environ.get("PERIDYN_OUT") or getattr(args, "out", None) or config.out_dir
    )
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "artifact_version": __version__,
        "config_hash": config.config_hash,
        "mode": config.mode,
        "resolved": config.resolved,
        "derived_constants": derived_constants(config),
        "started_at": _timestamp(),
        "status": "running",
    }
    write_manifest(out_dir / "manifest.json", manifest)
    try:
        written, extra = _run(config, out_dir)
    except Exception as exc:  # noqa: BLE001 - surfaced with mode context below
        manifest["status"] = f"failed: {exc}"
        manifest["finished_at"] = _timestamp()
        write_manifest(out_dir / "manifest.json", manifest)
        print(f"{config.mode} run failed: {exc}", file=sys.stderr)
        return 1
    manifest["status"] = "ok"
    manifest["outputs"] = written
    manifest.update(extra)
    manifest["finished_at"] = _timestamp()
    write_manifest(out_dir / "manifest.json", manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
