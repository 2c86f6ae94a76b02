"""Structured tensor-product mesh of the device cross-section.

The x axis runs gate | gap | channel, the y axis runs upward from the bottom
of the electrolyte.  Cell edges coincide with every material boundary so the
region map is exact; lateral cells are clustered toward the gap, where the
ionic current concentrates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..core.geometry import DeviceGeometry

VACUUM = 0
ELECTROLYTE = 1
CHANNEL = 2
GATE = 3
REGION_NAMES = {VACUUM: "vacuum", ELECTROLYTE: "electrolyte", CHANNEL: "channel", GATE: "gate"}


class MeshError(ValueError):
    """Geometry cannot be resolved with the requested mesh parameters."""


def _clustered(length: float, n: int, left: bool, right: bool, beta: float) -> np.ndarray:
    """Interior node positions on ``[0, length]`` clustered toward the chosen ends."""
    xi = np.linspace(0.0, 1.0, n + 1)
    if beta <= 0 or not (left or right):
        s = xi
    elif left and right:
        s = 0.5 * (1 + np.tanh(beta * (2 * xi - 1)) / np.tanh(beta))
    elif left:
        s = 1 - np.tanh(beta * (1 - xi)) / np.tanh(beta)
    else:
        s = np.tanh(beta * xi) / np.tanh(beta)
    s[0], s[-1] = 0.0, 1.0
    return s * length


@dataclass(frozen=True)
class Mesh:
    """Cell-centred rectangular grid with a region tag per cell.

    Attributes
    ----------
    x_edges, y_edges : ndarray
        Cell boundaries (m).
    region : ndarray of int, shape (ny, nx)
        One of ``VACUUM``, ``ELECTROLYTE``, ``CHANNEL``, ``GATE``.
    depth : float
        Out-of-plane extent (channel length, m) used to turn areas into volumes.
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    region: np.ndarray
    depth: float

    @property
    def nx(self) -> int:
        return self.x_edges.size - 1

    @property
    def ny(self) -> int:
        return self.y_edges.size - 1

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x_edges)

    @property
    def dy(self) -> np.ndarray:
        return np.diff(self.y_edges)

    @property
    def xc(self) -> np.ndarray:
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def yc(self) -> np.ndarray:
        return 0.5 * (self.y_edges[1:] + self.y_edges[:-1])

    def cell_areas(self) -> np.ndarray:
        return np.outer(self.dy, self.dx)

    def region_area(self, tag: int) -> float:
        return float(self.cell_areas()[self.region == tag].sum())

    def region_columns(self, tag: int) -> np.ndarray:
        return np.flatnonzero(np.any(self.region == tag, axis=0))

    def interface_faces(self, tag: int) -> List[Tuple[int, int]]:
        """``(row, col)`` of ``tag`` cells whose lower neighbour is electrolyte."""
        out = []
        for j in range(1, self.ny):
            for i in range(self.nx):
                if self.region[j, i] == tag and self.region[j - 1, i] == ELECTROLYTE:
                    out.append((j, i))
        return out

    def probe_cells(self, tag: int = CHANNEL) -> Dict[str, Tuple[int, int]]:
        """Cells adjacent to the electrolyte interface and to the free surface.

        Both probes sit in the column containing the lateral midpoint of the
        electrode.
        """
        cols = self.region_columns(tag)
        x_mid = 0.5 * (self.x_edges[cols[0]] + self.x_edges[cols[-1] + 1])
        col = int(np.clip(np.searchsorted(self.x_edges, x_mid) - 1, cols[0], cols[-1]))
        rows = np.flatnonzero(self.region[:, col] == tag)
        return {"near_interface": (int(rows[0]), col), "near_surface": (int(rows[-1]), col)}

    def stats(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "n_cells": self.n_cells,
            "n_active": int(np.count_nonzero(self.region != VACUUM)),
            "min_dx_m": float(self.dx.min()),
            "min_dy_m": float(self.dy.min()),
            "channel_area_m2": self.region_area(CHANNEL),
            "gate_area_m2": self.region_area(GATE),
            "electrolyte_area_m2": self.region_area(ELECTROLYTE),
        }


def build_mesh(
    geometry: DeviceGeometry,
    resolution: int = 6,
    lateral_factor: int = 4,
    clustering: float = 2.5,
    min_cell: float = 0.2e-9,
) -> Mesh:
    """Discretise ``geometry``.

    Parameters
    ----------
    resolution : int
        Cells across each vertical feature (electrolyte body, etch band,
        electrode); lateral segments get ``resolution * lateral_factor``.
    clustering : float
        tanh stretching strength toward the gap edges (0 gives uniform cells).
    min_cell : float
        Smallest admissible cell size (m).
    """
    if int(resolution) != resolution or resolution < 2:
        raise MeshError(f"resolution must be an integer >= 2 cells per feature, got {resolution}")
    if lateral_factor < 1:
        raise MeshError("lateral_factor must be >= 1")
    g = geometry
    r = int(resolution)
    nlat = r * int(lateral_factor)

    lower = g.electrolyte_thickness - g.electrolyte_etch_gap
    t_lo, t_hi = sorted((g.channel_thickness, g.gate_thickness))
    y_features = [
        ("electrolyte_thickness", lower),
        ("electrolyte_etch_gap", g.electrolyte_etch_gap),
        ("channel_thickness" if g.channel_thickness <= g.gate_thickness else "gate_thickness", t_lo),
    ]
    if t_hi > t_lo * (1 + 1e-12):
        y_features.append(
            ("gate_thickness" if g.gate_thickness > g.channel_thickness else "channel_thickness", t_hi - t_lo)
        )
    x_features = [("gate_width", g.gate_width), ("gap", g.gap), ("channel_width", g.channel_width)]
    for name, size in y_features:
        if size / r < min_cell:
            raise MeshError(f"{name} ({size:.3g} m) too thin for {r} cells of at least {min_cell:.3g} m")
    for name, size in x_features:
        if size / nlat < min_cell:
            raise MeshError(f"{name} ({size:.3g} m) too narrow for {nlat} cells of at least {min_cell:.3g} m")

    xs = [np.zeros(1)]
    x0 = 0.0
    for (name, size), (left, right) in zip(x_features, [(False, True), (True, True), (True, False)]):
        nodes = _clustered(size, nlat, left, right, clustering)
        xs.append(x0 + nodes[1:])
        x0 += size
    x_edges = np.concatenate(xs)
    x_edges[-1] = g.total_width

    ys = [np.zeros(1)]
    y0 = 0.0
    for _, size in y_features:
        ys.append(y0 + np.linspace(0.0, size, r + 1)[1:])
        y0 += size
    y_edges = np.concatenate(ys)

    xc = 0.5 * (x_edges[1:] + x_edges[:-1])
    yc = 0.5 * (y_edges[1:] + y_edges[:-1])
    in_gate_x = xc < g.gate_width
    in_chan_x = xc > g.gate_width + g.gap
    in_gap_x = ~(in_gate_x | in_chan_x)
    base = g.electrolyte_thickness
    region = np.full((yc.size, xc.size), VACUUM, dtype=np.int8)
    Y, _ = np.meshgrid(yc, xc, indexing="ij")
    region[Y < lower] = ELECTROLYTE
    etch = (Y >= lower) & (Y < base)
    region[etch & ~in_gap_x[None, :]] = ELECTROLYTE
    above = Y >= base
    region[above & in_gate_x[None, :] & (Y < base + g.gate_thickness)] = GATE
    region[above & in_chan_x[None, :] & (Y < base + g.channel_thickness)] = CHANNEL
    return Mesh(x_edges, y_edges, region, float(g.channel_length))
