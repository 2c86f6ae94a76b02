"""2D transient simulation of the planar device cross-section."""

from .mesh import CHANNEL, ELECTROLYTE, GATE, VACUUM, Mesh, MeshError, build_mesh
from .solver import (
    ConvergenceError,
    DeviceSimulator,
    IonicConductionWarning,
    PotentialSolution,
    SimulationError,
    SolverSettings,
    StepRejected,
    channel_conductance,
    run_program,
)
from .state import FieldState, SimulationTrace

__all__ = [
    "CHANNEL",
    "ELECTROLYTE",
    "GATE",
    "VACUUM",
    "Mesh",
    "MeshError",
    "build_mesh",
    "ConvergenceError",
    "DeviceSimulator",
    "IonicConductionWarning",
    "PotentialSolution",
    "SimulationError",
    "SolverSettings",
    "StepRejected",
    "channel_conductance",
    "run_program",
    "FieldState",
    "SimulationTrace",
]
