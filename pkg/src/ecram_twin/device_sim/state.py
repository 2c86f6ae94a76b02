"""Field state and simulation trace containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .mesh import CHANNEL, ELECTROLYTE, GATE, VACUUM, Mesh


@dataclass
class FieldState:
    """Potential and vacancy fields on a :class:`Mesh`.

    ``phi`` holds the electronic potential on electrode cells and the ionic
    potential on electrolyte cells (NaN in vacuum); ``c_v`` is defined on
    electrode cells only (NaN elsewhere).
    """

    mesh: Mesh
    phi: np.ndarray
    c_v: np.ndarray
    time: float = 0.0
    gate_voltage: float = 0.0

    @classmethod
    def uniform(cls, mesh: Mesh, c_v: float, time: float = 0.0) -> "FieldState":
        electrode = (mesh.region == CHANNEL) | (mesh.region == GATE)
        phi = np.where(mesh.region == VACUUM, np.nan, 0.0)
        c = np.where(electrode, float(c_v), np.nan)
        return cls(mesh, phi, c, time)

    def copy(self) -> "FieldState":
        return FieldState(self.mesh, self.phi.copy(), self.c_v.copy(), self.time, self.gate_voltage)

    @property
    def electrode_mask(self) -> np.ndarray:
        return (self.mesh.region == CHANNEL) | (self.mesh.region == GATE)

    @property
    def phi_eon(self) -> np.ndarray:
        return np.where(self.electrode_mask, self.phi, np.nan)

    def vacancy_count(self, tag: int, unit_cell_volume: float) -> float:
        """Number of vacancies in region ``tag``."""
        vol = self.mesh.cell_areas() * self.mesh.depth
        mask = self.mesh.region == tag
        return float(np.sum(self.c_v[mask] * vol[mask]) / unit_cell_volume)

    def mean_c(self, tag: int) -> float:
        area = self.mesh.cell_areas()
        mask = self.mesh.region == tag
        return float(np.sum(self.c_v[mask] * area[mask]) / area[mask].sum())


@dataclass
class SimulationTrace:
    """Time series recorded after every accepted step.

    The first row is the initial equilibrium state at ``t = 0``.  Extra
    diagnostic channels live in ``extras`` and field snapshots in
    ``snapshots``.
    """

    time: np.ndarray
    gate_voltage: np.ndarray
    write_current: np.ndarray
    conductance: np.ndarray
    segment: np.ndarray
    extras: Dict[str, np.ndarray] = field(default_factory=dict)
    snapshots: List[FieldState] = field(default_factory=list)
    failed: bool = False
    failure: Optional[str] = None

    def __len__(self) -> int:
        return self.time.size

    def segment_rows(self, index: int) -> np.ndarray:
        return np.flatnonzero(self.segment == index)

    def segment_end_values(self, key: str) -> np.ndarray:
        """Value of ``key`` at the last row of each segment, in segment order."""
        data = self.extras[key] if key in self.extras else getattr(self, key)
        segs = np.unique(self.segment[self.segment >= 0])
        return np.array([data[self.segment_rows(s)[-1]] for s in segs])


class TraceRecorder:
    """Accumulates rows and freezes them into a :class:`SimulationTrace`."""

    def __init__(self):
        self.rows: Dict[str, List[float]] = {}
        self.snapshots: List[FieldState] = []

    def append(self, **values):
        for k, v in values.items():
            self.rows.setdefault(k, []).append(float(v))

    def freeze(self, failed: bool = False, failure: Optional[str] = None) -> SimulationTrace:
        r = {k: np.asarray(v) for k, v in self.rows.items()}
        core = ("time", "gate_voltage", "write_current", "conductance", "segment")
        if not r:
            r = {k: np.zeros(0) for k in core}
        extras = {k: v for k, v in r.items() if k not in core}
        return SimulationTrace(
            r["time"],
            r["gate_voltage"],
            r["write_current"],
            r["conductance"],
            r["segment"].astype(int),
            extras,
            list(self.snapshots),
            failed,
            failure,
        )
