"""CSV/JSON writers for simulation traces, field snapshots and run manifests."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .mesh import CHANNEL, GATE, REGION_NAMES
from .state import FieldState, SimulationTrace

TRACE_HEADER = ["t_s", "V_gate_V", "I_W_A", "G_ch_S"]
SNAPSHOT_HEADER = ["x_m", "y_m", "region", "phi_eon_V", "phi_ion_V", "c_v"]
FAILURE_MARKER = "# FAILED:"


def fmt(x: float) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def write_trace(path, trace: SimulationTrace) -> Path:
    """Write the four-column trace; a failed run ends with a ``# FAILED:`` line."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in zip(trace.time, trace.gate_voltage, trace.write_current, trace.conductance):
            w.writerow([fmt(v) for v in row])
        if trace.failed:
            fh.write(f"{FAILURE_MARKER} {trace.failure}\n")
    return path


def read_trace(path) -> dict:
    """Read a trace CSV into arrays keyed by header name; ``failed`` flags a marker line."""
    cols: dict = {k: [] for k in TRACE_HEADER}
    failed = False
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        for row in reader:
            if row and row[0].startswith("#"):
                failed = True
                continue
            for k, v in zip(TRACE_HEADER, row):
                cols[k].append(float(v))
    out = {k: np.asarray(v) for k, v in cols.items()}
    out["failed"] = failed
    return out


def write_snapshot(path, state: FieldState, veq=None) -> Path:
    """Dump every cell; undefined quantities are written as ``nan``.

    Inside the electrodes ``phi_ion`` is the local-equilibrium ionic
    potential ``phi_eon - V_eq(c_v)`` when ``veq`` is supplied.
    """
    mesh = state.mesh
    path = Path(path)
    electrode = (mesh.region == CHANNEL) | (mesh.region == GATE)
    phi_eon = np.where(electrode, state.phi, np.nan)
    phi_ion = np.where(electrode, np.nan, state.phi)
    if veq is not None:
        phi_ion = np.where(electrode, state.phi - veq(np.where(electrode, state.c_v, 0.1)), phi_ion)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for j, y in enumerate(mesh.yc):
            for i, x in enumerate(mesh.xc):
                w.writerow(
                    [fmt(x), fmt(y), REGION_NAMES[int(mesh.region[j, i])],
                     fmt(phi_eon[j, i]), fmt(phi_ion[j, i]), fmt(state.c_v[j, i])]
                )
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
