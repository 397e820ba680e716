"""Time-stamped field sequences and their CSV serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class Trajectory:
    """Stored samples of a field evolution plus run provenance.

    ``states`` has shape (n_times,) + field_shape; ``velocities`` matches
    when recorded. ``meta`` carries the run configuration and grids.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def field_shape(self) -> tuple[int, ...]:
        return self.states.shape[1:]

    def index_of(self, t: float) -> int:
        hits = np.nonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))[0]
        if len(hits) == 0:
            raise InvalidArgumentError(
                f"time {t} is not stored (stored times: {self.times[:4]}...{self.times[-1]})"
            )
        return int(hits[0])

    def state_at(self, t: float) -> np.ndarray:
        return self.states[self.index_of(t)]

    def final(self) -> np.ndarray:
        return self.states[-1]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_field_csv(path, traj: Trajectory, coords: np.ndarray, coord_names, comp_names):
    """One row per (time, node): t, node coordinates, field components.

    Floats carry 17 significant digits so values round-trip exactly and
    reruns of the same configuration are byte-identical.
    """
    n_nodes = coords.shape[0]
    d = traj.states.shape[-1]
    flat_states = traj.states.reshape(len(traj), -1, d)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["t", *coord_names, *comp_names]) + "\n")
        for it, t in enumerate(traj.times):
            block = flat_states[it]
            for i in range(n_nodes):
                row = [_fmt(t)]
                row.extend(_fmt(c) for c in coords[i])
                row.extend(_fmt(v) for v in block[i])
                fh.write(",".join(row) + "\n")


def write_manifest(path, manifest: dict):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)
