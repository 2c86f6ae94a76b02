"""Finite-volume transient solver for the planar device.

Unknowns per time step are the potential of every non-vacuum cell (electronic
in the electrodes, ionic in the electrolyte), the vacancy concentration of
every electrode cell and, for current-controlled pulses, the gate voltage.

Charge transport is quasi-static: each cell balances its currents.  An
electrode/electrolyte face carries the ionic current::

    I = g * (phi_E - V_eq(c_E) - phi_L),    g = A / (h_E/s_E + h_L/s_L + r_int)

with ``I`` positive from electrode to electrolyte.  Each coulomb of such
current fills ``1/(2e)`` vacancies in the electrode cell.  Inside the
electrodes vacancies obey Fick's law with ``D_chem = Gamma_v * D_v``.

Backward Euler couples everything into one Newton solve per step; the
``split`` scheme solves potentials at the old concentration and then
diffuses with that injection held fixed, as an independent cross-check.
Conductivity and diffusivity are evaluated at the concentration at the start
of each step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..core.constants import ELEMENTARY_CHARGE
from ..core.geometry import DeviceGeometry
from ..core.materials import LsfModel, MaterialSet
from ..core.program import CURRENT, PulseProgram, Segment
from .mesh import CHANNEL, ELECTROLYTE, GATE, VACUUM, Mesh, build_mesh
from .state import FieldState, SimulationTrace, TraceRecorder

IMPLICIT = "implicit"
SPLIT = "split"


class ConvergenceError(RuntimeError):
    """Newton iteration did not converge; carries the last residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class StepRejected(RuntimeError):
    """A time step left the physical concentration bounds."""


class SimulationError(RuntimeError):
    """Failure during :meth:`DeviceSimulator.run`; ``trace`` holds the rows computed so far."""

    def __init__(self, message: str, time: float, trace: SimulationTrace):
        super().__init__(f"t = {time:.6g} s: {message}")
        self.time = time
        self.trace = trace


class IonicConductionWarning(UserWarning):
    """LSF ionic conductivity is not negligible against the electronic one."""


@dataclass(frozen=True)
class SolverSettings:
    """Discretisation and tolerance knobs.

    ``tol`` bounds the final Newton update of the potentials (V) and
    ``c_tol`` that of the concentrations.  Time steps restart at
    ``first_step_fraction`` of every segment, grow by ``growth`` and are
    capped at ``1/min_steps_per_segment`` of the segment and at ``dt_max``.
    ``interface_resistance`` is area specific (ohm m^2).
    """

    resolution: int = 6
    lateral_factor: int = 4
    clustering: float = 2.5
    tol: float = 1e-9
    c_tol: float = 1e-13
    max_iter: int = 40
    first_step_fraction: float = 2e-3
    growth: float = 1.5
    min_steps_per_segment: int = 12
    dt_max: float = math.inf
    max_retries: int = 12
    interface_resistance: float = 0.0
    scheme: str = IMPLICIT
    ion_ratio_warning: float = 0.1

    def __post_init__(self):
        if self.scheme not in (IMPLICIT, SPLIT):
            raise ValueError(f"scheme must be '{IMPLICIT}' or '{SPLIT}'")
        if self.tol <= 0 or self.c_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.first_step_fraction <= 1 or self.growth < 1:
            raise ValueError("invalid time-step controls")
        if self.interface_resistance < 0:
            raise ValueError("interface_resistance must be >= 0")


@dataclass
class PotentialSolution:
    """Converged potentials and terminal currents.

    ``write_current`` is the current entering the channel from the
    electrolyte (gate to channel, A); ``gate_current`` the current leaving
    the gate into the electrolyte.  Their difference is the Kirchhoff
    residual.  ``interface_currents`` are per interface face, positive from
    electrode to electrolyte.
    """

    phi: np.ndarray
    gate_voltage: float
    write_current: float
    gate_current: float
    interface_currents: np.ndarray
    kirchhoff_residual: float
    residual: float
    iterations: int = 1


class _Topology:
    """Face lists of a mesh, built once."""

    def __init__(self, mesh: Mesh):
        reg = mesh.region
        ny, nx = reg.shape
        active = reg != VACUUM
        self.aidx = np.full(reg.shape, -1, dtype=np.int64)
        self.aidx[active] = np.arange(np.count_nonzero(active))
        self.n_active = int(np.count_nonzero(active))
        electrode = (reg == CHANNEL) | (reg == GATE)
        self.eidx = np.full(reg.shape, -1, dtype=np.int64)
        self.eidx[electrode] = np.arange(np.count_nonzero(electrode))
        self.n_electrode = int(np.count_nonzero(electrode))
        self.e_region = reg[electrode]
        self.e_active = self.aidx[electrode]
        vol = mesh.cell_areas() * mesh.depth
        self.e_volume = vol[electrode]
        self.e_area = mesh.cell_areas()[electrode]
        dx, dy, depth = mesh.dx, mesh.dy, mesh.depth

        same = {"P": [], "Q": [], "A": [], "hP": [], "hQ": [], "kind": []}
        inter = {"E": [], "L": [], "eE": [], "A": [], "hE": [], "hL": [], "axis": []}

        def visit(jp, ip, jq, iq, area, hp, hq, axis):
            rp, rq = reg[jp, ip], reg[jq, iq]
            if rp == VACUUM or rq == VACUUM:
                return
            if rp == rq:
                kind = (0 if axis == "x" else 1) if rp == ELECTROLYTE else 2
                same["P"].append(self.aidx[jp, ip])
                same["Q"].append(self.aidx[jq, iq])
                same["A"].append(area)
                same["hP"].append(hp)
                same["hQ"].append(hq)
                same["kind"].append(kind)
            elif ELECTROLYTE in (rp, rq):
                if rp == ELECTROLYTE:
                    (jp, ip, hp), (jq, iq, hq) = (jq, iq, hq), (jp, ip, hp)
                inter["E"].append(self.aidx[jp, ip])
                inter["L"].append(self.aidx[jq, iq])
                inter["eE"].append(self.eidx[jp, ip])
                inter["A"].append(area)
                inter["hE"].append(hp)
                inter["hL"].append(hq)
                inter["axis"].append(0 if axis == "x" else 1)
            else:
                raise ValueError("channel and gate cells touch; mesh is invalid")

        for j in range(ny):
            for i in range(nx - 1):
                visit(j, i, j, i + 1, dy[j] * depth, dx[i] / 2, dx[i + 1] / 2, "x")
        for j in range(ny - 1):
            for i in range(nx):
                visit(j, i, j + 1, i, dx[i] * depth, dy[j] / 2, dy[j + 1] / 2, "y")

        self.same = {k: np.asarray(v) for k, v in same.items()}
        self.inter = {k: np.asarray(v) for k, v in inter.items()}
        if self.inter["E"].size == 0:
            raise ValueError("electrodes do not touch the electrolyte")
        self.inter_region = reg.ravel()[np.flatnonzero(self.aidx.ravel() >= 0)][self.inter["E"]]
        for tag, name in ((CHANNEL, "channel"), (GATE, "gate")):
            if not np.any(self.inter_region == tag):
                raise ValueError(f"{name} has no interface with the electrolyte")

        eon = self.same["kind"] == 2
        self._a2e = np.full(self.n_active, -1, dtype=np.int64)  # active index -> electrode index
        self._a2e[self.e_active] = np.arange(self.n_electrode)
        self.eon_faces = np.flatnonzero(eon)
        self.eon_eP = self._a2e[self.same["P"][eon]]
        self.eon_eQ = self._a2e[self.same["Q"][eon]]

        # Contacts: top face of electrode cells without an electrode above.
        cj, ci = np.nonzero(electrode)
        top = np.array([j == ny - 1 or reg[j + 1, i] == VACUUM for j, i in zip(cj, ci)], dtype=bool)
        self.contact_e = self.eidx[cj[top], ci[top]]
        self.contact_a = self.aidx[cj[top], ci[top]]
        self.contact_A = dx[ci[top]] * depth
        self.contact_h = dy[cj[top]] / 2
        self.contact_is_gate = reg[cj[top], ci[top]] == GATE


class DeviceSimulator:
    """Transient electrochemical simulation of one device.

    Parameters
    ----------
    geometry : DeviceGeometry
    materials : MaterialSet, optional
    temperature : float
        Kelvin.
    settings : SolverSettings, optional
    mesh : Mesh, optional
        Overrides the mesh built from ``geometry`` (e.g. degenerate test meshes).
    """

    def __init__(
        self,
        geometry: Optional[DeviceGeometry],
        materials: Optional[MaterialSet] = None,
        temperature: float = 423.15,
        settings: Optional[SolverSettings] = None,
        mesh: Optional[Mesh] = None,
    ):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.geometry = geometry
        self.materials = materials or MaterialSet()
        self.temperature = float(temperature)
        self.settings = settings or SolverSettings()
        if mesh is None:
            if geometry is None:
                raise ValueError("need a geometry or a mesh")
            s = self.settings
            mesh = build_mesh(geometry, s.resolution, s.lateral_factor, s.clustering)
        self.mesh = mesh
        self.topo = _Topology(mesh)
        lsf = self.materials.lsf
        self.v_uc = lsf.unit_cell_volume()
        self.kappa = self.v_uc / (2 * ELEMENTARY_CHARGE)
        el = self.materials.electrolyte
        self.sigma_ion_x = 100.0 * el.inplane(self.temperature)  # S/m
        self.sigma_ion_y = 100.0 * el.outofplane(self.temperature)
        self.c_lo = 1e-9 * lsf.c_max
        self.c_hi = lsf.c_max * (1 - 1e-9)
        self._clamped = False
        self._ion_warned = False
        self._channel_e = self.topo.e_region == CHANNEL
        self._gate_e = self.topo.e_region == GATE

    # -- material evaluation --------------------------------------------------

    @property
    def lsf(self) -> LsfModel:
        return self.materials.lsf

    def sigma_eon(self, c: np.ndarray) -> np.ndarray:
        """Electronic conductivity (S/m), clamped into the fit range with one warning per run."""
        lsf = self.lsf
        lo, hi = lsf.fit_valid_cv_range
        tlo, thi = lsf.fit_valid_T_range
        if np.any((c < lo) | (c > hi)) or not tlo <= self.temperature <= thi:
            if lsf.range_policy == "strict":
                raise ValueError(
                    f"conductivity fit evaluated outside c_v in [{lo}, {hi}], T in [{tlo}, {thi}] K"
                )
            self._clamped = True
        a0, a1, a2, a3, a4, a5 = lsf.conductivity_fit_coeffs
        cc = np.clip(c, lo, hi)
        t = min(max(self.temperature, tlo), thi)
        return 100.0 * np.exp(a0 + a1 * cc + a2 / t + a3 * cc**2 + a4 / t**2 + a5 * cc / t)

    def d_chem(self, c: np.ndarray) -> np.ndarray:
        """Chemical diffusivity (m^2/s)."""
        return 1e-4 * self.lsf.chemical_diffusivity(c, self.temperature)

    def veq(self, c):
        return self.lsf.equilibrium_potential(c, self.temperature)

    def veq_slope(self, c):
        return self.lsf.equilibrium_potential_slope(c, self.temperature)

    def _check_ionic_ratio(self, c: np.ndarray):
        if self._ion_warned:
            return
        ratio = np.max(self.lsf.ionic_conductivity(c, self.temperature) * 100.0 / self.sigma_eon(c))
        if ratio > self.settings.ion_ratio_warning:
            self._ion_warned = True
            warnings.warn(
                f"LSF ionic/electronic conductivity ratio {ratio:.3g} exceeds "
                f"{self.settings.ion_ratio_warning}; electronic-only electrode transport is questionable",
                IonicConductionWarning,
                stacklevel=3,
            )

    # -- state helpers --------------------------------------------------------

    def initial_state(self, c_v_init: float) -> FieldState:
        if not 0 < c_v_init < self.lsf.c_max:
            raise ValueError(f"c_v_init must be inside (0, {self.lsf.c_max}), got {c_v_init}")
        state = FieldState.uniform(self.mesh, c_v_init)
        sol = self.solve_potentials(state, 0.0)
        state.phi = sol.phi
        return state

    def _c_vector(self, state: FieldState) -> np.ndarray:
        return state.c_v[self.topo.eidx >= 0]

    def _phi_vector(self, state: FieldState) -> np.ndarray:
        return state.phi[self.topo.aidx >= 0]

    def _to_grid(self, phi_vec: np.ndarray, c_vec: Optional[np.ndarray] = None):
        grid = np.full(self.mesh.region.shape, np.nan)
        grid[self.topo.aidx >= 0] = phi_vec
        if c_vec is None:
            return grid
        cg = np.full(self.mesh.region.shape, np.nan)
        cg[self.topo.eidx >= 0] = c_vec
        return grid, cg

    # -- coefficient assembly -------------------------------------------------

    def _coefficients(self, c: np.ndarray):
        t = self.topo
        s_e = self.sigma_eon(c)
        s_act = np.zeros(t.n_active)
        s_act[t.e_active] = s_e
        same = t.same
        kind = same["kind"]
        sP = np.where(kind == 0, self.sigma_ion_x, np.where(kind == 1, self.sigma_ion_y, s_act[same["P"]]))
        sQ = np.where(kind == 0, self.sigma_ion_x, np.where(kind == 1, self.sigma_ion_y, s_act[same["Q"]]))
        g_same = same["A"] / (same["hP"] / sP + same["hQ"] / sQ)
        it = t.inter
        sL = np.where(it["axis"] == 0, self.sigma_ion_x, self.sigma_ion_y)
        g_int = it["A"] / (it["hE"] / s_e[it["eE"]] + it["hL"] / sL + self.settings.interface_resistance)
        g_con = t.contact_A / (t.contact_h / s_e[t.contact_e])
        d = self.d_chem(c)
        f = t.eon_faces
        g_d = same["A"][f] / (same["hP"][f] / d[t.eon_eP] + same["hQ"][f] / d[t.eon_eQ])
        return g_same, g_int, g_con, g_d

    def _conductance_matrix(self, g_same, g_int, g_con):
        t = self.topo
        n = t.n_active
        P = np.concatenate([t.same["P"], t.inter["E"]])
        Q = np.concatenate([t.same["Q"], t.inter["L"]])
        g = np.concatenate([g_same, g_int])
        rows = np.concatenate([P, Q, P, Q, t.contact_a])
        cols = np.concatenate([P, Q, Q, P, t.contact_a])
        vals = np.concatenate([g, g, -g, -g, g_con])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _diffusion_matrix(self, g_d):
        t = self.topo
        m = t.n_electrode
        P, Q = t.eon_eP, t.eon_eQ
        rows = np.concatenate([P, Q, P, Q])
        cols = np.concatenate([P, Q, Q, P])
        vals = np.concatenate([g_d, g_d, -g_d, -g_d])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))

    def _contact_rhs(self, g_con: np.ndarray, vg: float) -> np.ndarray:
        """Current injected by the Dirichlet contacts at zero cell potential."""
        t = self.topo
        out = np.zeros(t.n_active)
        np.add.at(out, t.contact_a, g_con * np.where(t.contact_is_gate, vg, 0.0))
        return out

    def _interface_currents(self, phi, c, g_int):
        it = self.topo.inter
        return g_int * (phi[it["E"]] - self.veq(c[it["eE"]]) - phi[it["L"]])

    def _terminal_currents(self, i_int):
        region = self.topo.inter_region
        i_w = -float(np.sum(i_int[region == CHANNEL]))
        i_g = float(np.sum(i_int[region == GATE]))
        return i_w, i_g

    # -- potentials at fixed concentration -----------------------------------

    def solve_potentials(
        self,
        state: FieldState,
        gate_voltage: Optional[float] = None,
        gate_current: Optional[float] = None,
        tol: Optional[float] = None,
    ) -> PotentialSolution:
        """Potentials for the concentrations in ``state`` (linear solve).

        Exactly one of ``gate_voltage`` and ``gate_current`` must be given.
        """
        if (gate_voltage is None) == (gate_current is None):
            raise ValueError("give exactly one of gate_voltage and gate_current")
        tol = self.settings.tol if tol is None else tol
        if tol <= 0:
            raise ValueError("tol must be positive")
        t = self.topo
        c = self._c_vector(state)
        g_same, g_int, g_con, _ = self._coefficients(c)
        K = self._conductance_matrix(g_same, g_int, g_con)
        it = t.inter
        v = self.veq(c[it["eE"]])
        src = np.zeros(t.n_active)
        np.add.at(src, it["E"], g_int * v)
        np.add.at(src, it["L"], -g_int * v)
        current_mode = gate_current is not None
        if current_mode:
            gate = t.contact_is_gate
            n = t.n_active
            col = sp.csr_matrix((-g_con[gate], (t.contact_a[gate], np.zeros(gate.sum(), int))), shape=(n, 1))
            row = sp.csr_matrix((-g_con[gate], (np.zeros(gate.sum(), int), t.contact_a[gate])), shape=(1, n))
            A = sp.bmat([[K, col], [row, sp.csr_matrix([[g_con[gate].sum()]])]], format="csr")
            b = np.concatenate([src, [gate_current]])
            x = _solve(A, b)
            phi, vg = x[:n], float(x[n])
            res = _scaled_residual(A, x, b)
        else:
            vg = float(gate_voltage)
            b = src + self._contact_rhs(g_con, vg)
            phi = _solve(K, b)
            res = _scaled_residual(K, phi, b)
        i_int = self._interface_currents(phi, c, g_int)
        i_w, i_g = self._terminal_currents(i_int)
        if not res < max(tol, 1e-8):
            raise ConvergenceError("potential solve inaccurate", res, 1)
        return PotentialSolution(self._to_grid(phi), vg, i_w, i_g, i_int, abs(i_g - i_w), res)

    # -- diffusion with prescribed injection ---------------------------------

    def step_diffusion(self, state: FieldState, fields: PotentialSolution, dt: float) -> FieldState:
        """Advance concentrations by ``dt`` with the interface currents of ``fields`` held fixed.

        Diffusion is implicit.  Raises :class:`StepRejected` when a
        concentration leaves ``(0, c_max)``.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        t = self.topo
        c_old = self._c_vector(state)
        *_, g_d = self._coefficients(c_old)
        L = self._diffusion_matrix(g_d)
        M = sp.diags(t.e_volume / dt) + L
        inj = np.zeros(t.n_electrode)
        np.add.at(inj, t.inter["eE"], fields.interface_currents * self.kappa)
        c_new = spsolve(M.tocsc(), t.e_volume / dt * c_old - inj)
        if np.any(c_new <= 0) or np.any(c_new >= self.lsf.c_max):
            raise StepRejected("vacancy concentration left (0, c_max)")
        _, cg = self._to_grid(self._phi_vector(state), c_new)
        out = FieldState(self.mesh, fields.phi.copy(), cg, state.time + dt, fields.gate_voltage)
        return out

    # -- fully implicit step --------------------------------------------------

    def implicit_step(
        self,
        state: FieldState,
        dt: float,
        gate_voltage: Optional[float] = None,
        gate_current: Optional[float] = None,
    ):
        """Backward-Euler step of the coupled system; returns ``(state, solution)``."""
        if (gate_voltage is None) == (gate_current is None):
            raise ValueError("give exactly one of gate_voltage and gate_current")
        s = self.settings
        t = self.topo
        n, m = t.n_active, t.n_electrode
        c_old = self._c_vector(state)
        g_same, g_int, g_con, g_d = self._coefficients(c_old)
        K = self._conductance_matrix(g_same, g_int, g_con)
        L = self._diffusion_matrix(g_d)
        it = t.inter
        E, Lc, eE = it["E"], it["L"], it["eE"]
        nf = E.size
        current_mode = gate_current is not None
        gate = t.contact_is_gate
        ng = int(gate.sum())
        kap = self.kappa
        vol_dt = t.e_volume / dt

        phi = self._phi_vector(state).copy()
        c = c_old.copy()
        vg = state.gate_voltage if current_mode else float(gate_voltage)

        # constant blocks
        blocks_phi_phi = K
        dG_dphi = sp.csr_matrix(
            (np.concatenate([kap * g_int, -kap * g_int]), (np.concatenate([eE, eE]), np.concatenate([E, Lc]))),
            shape=(m, n),
        )
        base_cc = (sp.diags(vol_dt) + L).tocsr()
        if current_mode:
            col_vg = sp.csr_matrix((-g_con[gate], (t.contact_a[gate], np.zeros(ng, int))), shape=(n, 1))
            row_vg = sp.csr_matrix((-g_con[gate], (np.zeros(ng, int), t.contact_a[gate])), shape=(1, n))

        res_norm = np.inf
        for k in range(1, s.max_iter + 1):
            v = self.veq(c[eE])
            dv = self.veq_slope(c[eE])
            i_int = g_int * (phi[E] - v - phi[Lc])
            F = K @ phi - self._contact_rhs(g_con, vg)
            np.add.at(F, E, -g_int * v)
            np.add.at(F, Lc, g_int * v)
            G = vol_dt * (c - c_old) + L @ c
            np.add.at(G, eE, kap * i_int)
            dF_dc = sp.csr_matrix(
                (np.concatenate([-g_int * dv, g_int * dv]), (np.concatenate([E, Lc]), np.concatenate([eE, eE]))),
                shape=(n, m),
            )
            dG_dc = base_cc + sp.csr_matrix((-kap * g_int * dv, (eE, eE)), shape=(m, m))
            if current_mode:
                H = np.array([np.sum(g_con[gate] * (vg - phi[t.contact_a[gate]])) - gate_current])
                J = sp.bmat(
                    [
                        [blocks_phi_phi, dF_dc, col_vg],
                        [dG_dphi, dG_dc, None],
                        [row_vg, None, sp.csr_matrix([[g_con[gate].sum()]])],
                    ],
                    format="csr",
                )
                R = np.concatenate([F, G, H])
            else:
                J = sp.bmat([[blocks_phi_phi, dF_dc], [dG_dphi, dG_dc]], format="csr")
                R = np.concatenate([F, G])
            scale = _row_scale(J)
            res_norm = float(np.max(np.abs(R * scale)))
            delta = -_solve(J, R)
            dphi, dc = delta[:n], delta[n : n + m]
            lam = 1.0
            trial = c + dc
            bad = (trial < self.c_lo) | (trial > self.c_hi)
            if np.any(bad):
                with np.errstate(divide="ignore", invalid="ignore"):
                    lim_lo = np.where(dc < 0, (self.c_lo - c) / dc, np.inf)
                    lim_hi = np.where(dc > 0, (self.c_hi - c) / dc, np.inf)
                lam = 0.9 * float(min(np.min(lim_lo), np.min(lim_hi), 1.0))
            phi = phi + lam * dphi
            c = c + lam * dc
            if current_mode:
                vg = vg + lam * float(delta[-1])
            step_phi = lam * float(np.max(np.abs(dphi)))
            step_c = lam * float(np.max(np.abs(dc)))
            if lam == 1.0 and step_phi < s.tol and step_c < s.c_tol:
                break
        else:
            raise ConvergenceError("coupled Newton iteration did not converge", res_norm, s.max_iter)

        if np.any(c <= 0) or np.any(c >= self.lsf.c_max):
            raise StepRejected("vacancy concentration left (0, c_max)")
        i_int = g_int * (phi[E] - self.veq(c[eE]) - phi[Lc])
        i_w, i_g = self._terminal_currents(i_int)
        phig, cg = self._to_grid(phi, c)
        new = FieldState(self.mesh, phig, cg, state.time + dt, vg)
        sol = PotentialSolution(phig, vg, i_w, i_g, i_int, abs(i_g - i_w), res_norm, k)
        return new, sol

    # -- observables ----------------------------------------------------------

    def channel_conductance(self, state: FieldState) -> float:
        """Source-drain conductance (S) from the local electronic conductivity."""
        mask = self.mesh.region == CHANNEL
        area = self.mesh.cell_areas()[mask]
        return float(np.sum(self.sigma_eon(state.c_v[mask]) * area) / self.mesh.depth)

    # -- driver ---------------------------------------------------------------

    def run(
        self,
        program: PulseProgram,
        c_v_init: float,
        snapshot_times: Iterable[float] = (),
        state: Optional[FieldState] = None,
    ) -> SimulationTrace:
        """Integrate ``program`` from a uniform equilibrium state.

        Every accepted step adds a trace row.  ``snapshot_times`` force step
        boundaries and store a copy of the fields there.
        """
        s = self.settings
        self._clamped = False
        rec = TraceRecorder()
        if state is None:
            state = self.initial_state(c_v_init)
        else:
            state = state.copy()
        snaps = sorted({float(x) for x in snapshot_times})
        for x in snaps:
            if x < 0 or x > program.duration * (1 + 1e-12) + state.time:
                raise ValueError(f"snapshot time {x} outside program")
        t0 = state.time
        charge = 0.0
        g0 = self.channel_conductance(state)
        self._record(rec, state, 0.0, 0.0, -1, charge, 0, 0.0)
        if snaps and snaps[0] <= t0 + 1e-15:
            rec.snapshots.append(state.copy())
            snaps.pop(0)

        for seg_no, seg in enumerate(program.segments()):
            seg_start = t0 + seg.start
            seg_end = t0 + seg.end
            if seg_end - state.time <= 64 * np.finfo(float).eps * max(abs(seg_end), 1e-300):
                continue  # shorter than the clock resolution
            dt = max(seg.duration * s.first_step_fraction, 16 * np.finfo(float).eps * abs(seg_end))
            dt_cap = min(seg.duration / s.min_steps_per_segment, s.dt_max)
            current_mode = seg.mode == CURRENT
            while state.time < seg_end - 1e-12 * seg.duration:
                target = min(state.time + dt, seg_end)
                if seg_end - target < 1e-3 * dt:
                    target = seg_end
                if snaps and state.time < snaps[0] < target:
                    target = snaps[0]
                h = target - state.time
                retries = 0
                while True:
                    try:
                        new, sol = self._advance(state, h, seg, current_mode)
                        break
                    except (ConvergenceError, StepRejected) as exc:
                        retries += 1
                        if retries > s.max_retries:
                            trace = rec.freeze(failed=True, failure=str(exc))
                            raise SimulationError(str(exc), state.time, trace) from exc
                        h *= 0.5
                        target = state.time + h
                    except Exception as exc:
                        trace = rec.freeze(failed=True, failure=str(exc))
                        raise SimulationError(str(exc), state.time, trace) from exc
                charge += sol.write_current * h
                state = new
                self._check_ionic_ratio(self._c_vector(state))
                self._record(rec, state, sol.gate_voltage, sol.write_current, seg_no, charge, sol.iterations, h,
                             sol)
                if snaps and abs(state.time - snaps[0]) <= 1e-12 * max(1.0, snaps[0]):
                    rec.snapshots.append(state.copy())
                    snaps.pop(0)
                if retries:
                    dt = h
                else:
                    dt = min(dt * s.growth, dt_cap)
        if self._clamped:
            warnings.warn(
                "vacancy concentration left the conductivity-fit range during the run; values were clamped",
                UserWarning,
                stacklevel=2,
            )
        return rec.freeze()

    def _advance(self, state, h, seg: Segment, current_mode: bool):
        amp = seg.amplitude if seg.is_on else 0.0
        kw = {"gate_current": amp} if current_mode else {"gate_voltage": amp}
        if self.settings.scheme == IMPLICIT:
            return self.implicit_step(state, h, **kw)
        sol = self.solve_potentials(state, **kw)
        new = self.step_diffusion(state, sol, h)
        return new, sol

    def _record(self, rec, state, vg, i_w, seg_no, charge, iters, dt, sol=None):
        probes = self.mesh.probe_cells(CHANNEL)
        ji, ii = probes["near_interface"]
        js, is_ = probes["near_surface"]
        rec.append(
            time=state.time,
            gate_voltage=vg,
            write_current=i_w,
            conductance=self.channel_conductance(state),
            segment=seg_no,
            gate_current=sol.gate_current if sol is not None else 0.0,
            kirchhoff_residual=sol.kirchhoff_residual if sol is not None else 0.0,
            charge=charge,
            c_interface=state.c_v[ji, ii],
            c_surface=state.c_v[js, is_],
            c_channel_mean=state.mean_c(CHANNEL),
            c_gate_mean=state.mean_c(GATE),
            n_channel=state.vacancy_count(CHANNEL, self.v_uc),
            n_gate=state.vacancy_count(GATE, self.v_uc),
            newton_iterations=iters,
            dt=dt,
        )


def _row_scale(A: sp.csr_matrix) -> np.ndarray:
    absA = abs(A)
    m = absA.max(axis=1).toarray().ravel()
    m[m == 0] = 1.0
    return 1.0 / m


def _solve(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    A = sp.csr_matrix(A)
    scale = _row_scale(A)
    As = sp.diags(scale) @ A
    x = spsolve(As.tocsc(), b * scale)
    if not np.all(np.isfinite(x)):
        raise ConvergenceError("singular linear system", float("inf"), 0)
    return x


def _scaled_residual(A, x, b) -> float:
    r = A @ x - b
    scale = _row_scale(sp.csr_matrix(A))
    return float(np.max(np.abs(r * scale))) if r.size else 0.0


# ---------------------------------------------------------------------------
# Functional front-end
# ---------------------------------------------------------------------------


def channel_conductance(state: FieldState, lsf: LsfModel, temperature: float) -> float:
    """``(1/l) * sum(sigma_eon(c_v) dA)`` over the channel cells (S)."""
    mask = state.mesh.region == CHANNEL
    area = state.mesh.cell_areas()[mask]
    sigma = 100.0 * lsf.electronic_conductivity(state.c_v[mask], temperature)
    return float(np.sum(sigma * area) / state.mesh.depth)


def run_program(
    geometry: DeviceGeometry,
    materials: Optional[MaterialSet],
    program: PulseProgram,
    temperature: float,
    c_v_init: float,
    snapshot_times: Sequence[float] = (),
    settings: Optional[SolverSettings] = None,
) -> SimulationTrace:
    """Simulate ``program`` on ``geometry``; see :meth:`DeviceSimulator.run`."""
    sim = DeviceSimulator(geometry, materials, temperature, settings)
    return sim.run(program, c_v_init, snapshot_times)
