"""Constitutive laws for the LSF50 electrodes and the BICUVOX electrolyte.

Units follow the materials-science convention for the public functions
(S/cm, cm^2/s, C/cm^3) and SI everywhere else.  Vacancy concentrations are
per perovskite unit cell; :meth:`LsfModel.unit_cell_volume` converts them to
volumetric densities.

Sign convention for the equilibrium potential: ``V_eq(c_v)`` is the jump
``phi_ele - phi_ion`` at an electrode/electrolyte interface.  Raising it
oxidises the electrode, so it decreases with ``c_v``.  The thermodynamic
factor follows from the Nernst relation ``dV_eq = (RT/4F) d ln pO2``::

    Gamma_v = -1/2 dln(pO2)/dln(c_v) = -(2F / RT) * c_v * dV_eq/dc_v
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .constants import (
    AVOGADRO,
    BOLTZMANN,
    BOLTZMANN_EV,
    ELEMENTARY_CHARGE,
    FARADAY,
    GAS_CONSTANT,
)

CLAMP = "clamp"
STRICT = "strict"


class MaterialRangeWarning(UserWarning):
    """An input was clamped into the validity range of a fitted law."""


# ---------------------------------------------------------------------------
# Electrolyte
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Arrhenius:
    """Thermally activated conductivity ``sigma = A/T * exp(-Ea / kT)``.

    Parameters
    ----------
    prefactor : float
        ``A`` in S K/cm.
    activation : float
        ``Ea`` in eV.
    """

    prefactor: float
    activation: float

    def __post_init__(self):
        if not self.prefactor > 0:
            raise ValueError(f"Arrhenius prefactor must be positive, got {self.prefactor}")
        if not np.isfinite(self.activation):
            raise ValueError("Arrhenius activation energy must be finite")

    def __call__(self, temperature):
        """Conductivity in S/cm at ``temperature`` (K)."""
        t = np.asarray(temperature, dtype=float)
        if np.any(t <= 0):
            raise ValueError(f"temperature must be positive, got {temperature}")
        out = self.prefactor / t * np.exp(-self.activation / (BOLTZMANN_EV * t))
        return float(out) if out.ndim == 0 else out

    @classmethod
    def from_reference(cls, sigma_ref: float, temperature_ref: float, activation: float):
        """Build the law that passes through ``sigma_ref`` (S/cm) at ``temperature_ref``."""
        prefactor = sigma_ref * temperature_ref * np.exp(activation / (BOLTZMANN_EV * temperature_ref))
        return cls(float(prefactor), activation)


@dataclass(frozen=True)
class ElectrolyteModel:
    """Anisotropic ionic conductor: in-plane (x) and out-of-plane (y) laws."""

    sigma_inplane: Arrhenius
    sigma_outofplane: Arrhenius

    def inplane(self, temperature):
        return self.sigma_inplane(temperature)

    def outofplane(self, temperature):
        return self.sigma_outofplane(temperature)

    def anisotropy(self, temperature) -> float:
        return self.inplane(temperature) / self.outofplane(temperature)


# Calibrated so that Geometry A at 150 C draws ~1 nA under 0.5 V pulses; the
# out-of-plane direction is two orders of magnitude slower.
BICUVOX_INPLANE = Arrhenius.from_reference(1.8e-5, 423.15, 0.60)
BICUVOX_OUTOFPLANE = Arrhenius.from_reference(1.8e-7, 423.15, 0.60)
# Polycrystalline 8YSZ, ~1e-2 S/cm at 700 C with 1.0 eV activation.
YSZ = Arrhenius.from_reference(2.0e-2, 973.15, 1.0)


def default_electrolyte() -> ElectrolyteModel:
    return ElectrolyteModel(BICUVOX_INPLANE, BICUVOX_OUTOFPLANE)


# ---------------------------------------------------------------------------
# Equilibrium potential
# ---------------------------------------------------------------------------


def nernst_potential(c_v, temperature, c_ref: float, v0: float = 0.0):
    """Lattice-gas equilibrium potential ``V0 - (RT/2F) ln(c/(c_ref - c))``."""
    c = np.asarray(c_v, dtype=float)
    return v0 - GAS_CONSTANT * temperature / (2 * FARADAY) * np.log(c / (c_ref - c))


def nernst_slope(c_v, temperature, c_ref: float):
    """``dV_eq/dc_v`` of :func:`nernst_potential` (V per unit c_v)."""
    c = np.asarray(c_v, dtype=float)
    return -GAS_CONSTANT * temperature / (2 * FARADAY) * (1.0 / c + 1.0 / (c_ref - c))


class VeqTable:
    """Tabulated equilibrium potential ``V_eq(c_v[, T])``.

    Each temperature row is a not-a-knot cubic spline in ``c_v``; values and
    slopes come from the spline and are blended linearly in ``T``.  Slopes
    in the first and last interval rest on one-sided data and trigger a
    warning when queried.

    Parameters
    ----------
    c_v : array_like
        Strictly increasing concentration grid.
    values : array_like
        Shape ``(len(c_v),)`` for a single temperature or
        ``(len(temperatures), len(c_v))``.
    temperatures : array_like, optional
        Strictly increasing temperatures (K).  Omit for a T-independent table.
    """

    def __init__(self, c_v, values, temperatures=None):
        c = np.asarray(c_v, dtype=float)
        v = np.atleast_2d(np.asarray(values, dtype=float))
        if c.ndim != 1 or c.size < 3:
            raise ValueError("V_eq table needs at least 3 concentration points")
        if np.any(np.diff(c) <= 0):
            raise ValueError("V_eq table concentrations must be strictly increasing")
        if temperatures is None:
            if v.shape[0] != 1:
                raise ValueError("multi-row V_eq table requires temperatures")
            temps = np.array([np.nan])
        else:
            temps = np.atleast_1d(np.asarray(temperatures, dtype=float))
            if np.any(np.diff(temps) <= 0):
                raise ValueError("V_eq table temperatures must be strictly increasing")
        if v.shape != (temps.size, c.size):
            raise ValueError(f"V_eq values shape {v.shape} does not match grid ({temps.size}, {c.size})")
        for row in v:
            d = np.diff(row)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("V_eq table must be strictly monotone in c_v at each temperature")
        self.c_v = c
        self.temperatures = temps
        self.values = v
        self._splines = [CubicSpline(c, row) for row in v]

    @property
    def c_range(self) -> Tuple[float, float]:
        return float(self.c_v[0]), float(self.c_v[-1])

    def _row_weights(self, temperature):
        temps = self.temperatures
        if temps.size == 1:
            return [(0, 1.0)]
        t = float(np.clip(temperature, temps[0], temps[-1]))
        if t != temperature:
            warnings.warn(f"T={temperature} K outside V_eq table, clamped", MaterialRangeWarning, stacklevel=3)
        j = int(np.clip(np.searchsorted(temps, t) - 1, 0, temps.size - 2))
        w = (t - temps[j]) / (temps[j + 1] - temps[j])
        return [(j, 1.0 - w), (j + 1, w)]

    def _interp(self, c_v, temperature, nu: int = 0):
        c = np.asarray(c_v, dtype=float)
        out = np.zeros_like(c)
        for j, w in self._row_weights(temperature):
            out = out + w * self._splines[j](c, nu)
        return out

    def potential(self, c_v, temperature):
        c = np.asarray(c_v, dtype=float)
        lo, hi = self.c_range
        if np.any((c < lo) | (c > hi)):
            warnings.warn("c_v outside V_eq table support, clamped", MaterialRangeWarning, stacklevel=2)
        return self._interp(np.clip(c, lo, hi), temperature)

    def slope(self, c_v, temperature):
        """``dV_eq/dc_v`` from the spline derivative; warns in the first and last interval."""
        c = np.asarray(c_v, dtype=float)
        if np.any((c <= self.c_v[1]) | (c >= self.c_v[-2])):
            warnings.warn(
                "c_v at V_eq table edge, slope is poorly constrained", MaterialRangeWarning, stacklevel=2
            )
        return self._interp(np.clip(c, *self.c_range), temperature, nu=1)

    @classmethod
    def nernst(cls, c_ref: float, temperatures, n_points: int = 2500, v0: float = 0.0, margin: float = 1e-4):
        """Sample :func:`nernst_potential` on a uniform grid inside ``(0, c_ref)``."""
        temps = np.atleast_1d(np.asarray(temperatures, dtype=float))
        c = np.linspace(margin, c_ref - margin, n_points)
        v = np.array([nernst_potential(c, t, c_ref, v0) for t in temps])
        return cls(c, v, temps)

    @classmethod
    def from_csv(cls, path):
        """Load a 2-column ``(c_v, V_eq)`` or 3-column ``(c_v, T, V_eq)`` CSV with header."""
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in r] for r in reader if r and any(s.strip() for s in r)]
        data = np.array(rows, dtype=float)
        if data.ndim != 2 or data.shape[1] not in (2, 3):
            raise ValueError(f"{path}: expected 2 or 3 columns, header was {header}")
        if data.shape[1] == 2:
            order = np.argsort(data[:, 0])
            return cls(data[order, 0], data[order, 1])
        temps = np.unique(data[:, 1])
        grids = []
        for t in temps:
            sub = data[data[:, 1] == t]
            sub = sub[np.argsort(sub[:, 0])]
            grids.append(sub)
        c = grids[0][:, 0]
        if any(g.shape[0] != c.size or np.any(g[:, 0] != c) for g in grids):
            raise ValueError(f"{path}: every temperature must share the same c_v grid")
        return cls(c, np.array([g[:, 2] for g in grids]), temps)


# ---------------------------------------------------------------------------
# LSF50
# ---------------------------------------------------------------------------

# ln(sigma/S cm^-1) = a0 + a1 c + a2/T + a3 c^2 + a4/T^2 + a5 c/T
LSF50_CONDUCTIVITY_FIT = (4.44, 23.08, 1190.0, -89.33, -370000.0, -14380.0)


@dataclass(frozen=True)
class LsfModel:
    """Defect chemistry and transport of the La0.5Sr0.5FeO3 electrodes.

    ``veq_table=None`` selects the analytic lattice-gas equilibrium potential
    with ``c_ref = sr_doping / 2``.  ``range_policy`` controls what happens
    when the conductivity fit is evaluated outside its validity box.
    """

    conductivity_fit_coeffs: Tuple[float, ...] = LSF50_CONDUCTIVITY_FIT
    fit_valid_cv_range: Tuple[float, float] = (0.01, 0.24)
    fit_valid_T_range: Tuple[float, float] = (323.15, 623.15)
    dv_prefactor: float = 0.02  # cm^2/s
    dv_activation: float = 75_000.0  # J/mol
    sr_doping: float = 0.5
    density: float = 6080.0  # kg/m^3, pseudo-cubic a = 3.90 A
    molar_mass: float = 0.2171  # kg/mol, La0.5Sr0.5FeO3
    veq_table: Optional[VeqTable] = field(default=None, compare=False)
    veq_offset: float = 0.0
    range_policy: str = CLAMP

    def __post_init__(self):
        if len(self.conductivity_fit_coeffs) != 6:
            raise ValueError("conductivity fit needs exactly 6 coefficients")
        if not 0 < self.sr_doping <= 1:
            raise ValueError(f"sr_doping must be in (0, 1], got {self.sr_doping}")
        if not self.dv_prefactor > 0:
            raise ValueError("dv_prefactor must be positive")
        if not (self.density > 0 and self.molar_mass > 0):
            raise ValueError("density and molar_mass must be positive")
        if self.range_policy not in (CLAMP, STRICT):
            raise ValueError(f"range_policy must be '{CLAMP}' or '{STRICT}'")

    @property
    def c_max(self) -> float:
        """Electroneutrality bound ``[Sr'_La]/2`` on the vacancy concentration."""
        return self.sr_doping / 2

    def unit_cell_volume(self) -> float:
        """Volume of one perovskite unit cell (m^3)."""
        return self.molar_mass / (self.density * AVOGADRO)

    # -- transport laws -------------------------------------------------------

    def _in_fit_range(self, c_v, temperature):
        c = np.asarray(c_v, dtype=float)
        t = np.asarray(temperature, dtype=float)
        (clo, chi), (tlo, thi) = self.fit_valid_cv_range, self.fit_valid_T_range
        bad = np.any((c < clo) | (c > chi)) or np.any((t < tlo) | (t > thi))
        if bad:
            msg = (
                f"conductivity fit evaluated outside c_v in [{clo}, {chi}], "
                f"T in [{tlo}, {thi}] K"
            )
            if self.range_policy == STRICT:
                raise ValueError(msg)
            warnings.warn(msg + "; clamped", MaterialRangeWarning, stacklevel=3)
        return np.clip(c, clo, chi), np.clip(t, tlo, thi)

    def ln_electronic_conductivity(self, c_v, temperature):
        c, t = self._in_fit_range(c_v, temperature)
        a0, a1, a2, a3, a4, a5 = self.conductivity_fit_coeffs
        return a0 + a1 * c + a2 / t + a3 * c**2 + a4 / t**2 + a5 * c / t

    def electronic_conductivity(self, c_v, temperature):
        """Hole conductivity in S/cm."""
        return np.exp(self.ln_electronic_conductivity(c_v, temperature))

    def vacancy_diffusivity(self, temperature):
        """``D_v = D0 exp(-Ea / RT)`` in cm^2/s."""
        t = np.asarray(temperature, dtype=float)
        if np.any(t <= 0):
            raise ValueError(f"temperature must be positive, got {temperature}")
        return self.dv_prefactor * np.exp(-self.dv_activation / (GAS_CONSTANT * t))

    def ionic_conductivity(self, c_v, temperature):
        """Nernst-Einstein oxide-ion conductivity in S/cm."""
        c = np.asarray(c_v, dtype=float)
        n_v = c / (self.unit_cell_volume() * 1e6)  # 1/cm^3
        d_v = self.vacancy_diffusivity(temperature)
        return d_v * 4 * ELEMENTARY_CHARGE**2 / (BOLTZMANN * temperature) * n_v

    # -- defect equilibrium ---------------------------------------------------

    def equilibrium_potential(self, c_v, temperature):
        if self.veq_table is None:
            return nernst_potential(c_v, temperature, self.c_max, self.veq_offset)
        return self.veq_table.potential(c_v, temperature) + self.veq_offset

    def equilibrium_potential_slope(self, c_v, temperature):
        if self.veq_table is None:
            return nernst_slope(c_v, temperature, self.c_max)
        return self.veq_table.slope(c_v, temperature)

    def thermodynamic_factor(self, c_v, temperature):
        c = np.asarray(c_v, dtype=float)
        slope = self.equilibrium_potential_slope(c, temperature)
        return -2 * FARADAY / (GAS_CONSTANT * temperature) * c * slope

    def chemical_diffusivity(self, c_v, temperature):
        """``D_chem = Gamma_v * D_v`` in cm^2/s."""
        return self.thermodynamic_factor(c_v, temperature) * self.vacancy_diffusivity(temperature)


# ---------------------------------------------------------------------------
# Functional front-end
# ---------------------------------------------------------------------------

_DEFAULT_LSF = LsfModel()


def electronic_conductivity(c_v, temperature, model: Optional[LsfModel] = None):
    """LSF50 electronic conductivity (S/cm) from the 2D quadratic fit."""
    return (model or _DEFAULT_LSF).electronic_conductivity(c_v, temperature)


def vacancy_diffusivity(temperature, prefactor: float = 0.02, activation: float = 75_000.0):
    """Oxygen-vacancy self diffusivity (cm^2/s)."""
    t = np.asarray(temperature, dtype=float)
    if np.any(t <= 0):
        raise ValueError(f"temperature must be positive, got {temperature}")
    return prefactor * np.exp(-activation / (GAS_CONSTANT * t))


def ionic_conductivity_lsf(c_v, temperature, model: Optional[LsfModel] = None):
    return (model or _DEFAULT_LSF).ionic_conductivity(c_v, temperature)


def thermodynamic_factor(c_v, temperature, model: Optional[LsfModel] = None):
    return (model or _DEFAULT_LSF).thermodynamic_factor(c_v, temperature)


def charge_density_from_cv(c_v, density: float, molar_mass: float):
    """Charge held by a per-unit-cell vacancy concentration, in C/cm^3.

    ``density`` in kg/m^3, ``molar_mass`` in kg/mol.
    """
    if not (density > 0 and molar_mass > 0):
        raise ValueError("density and molar_mass must be positive")
    return 2 * np.asarray(c_v, dtype=float) * FARADAY * density / molar_mass * 1e-6


@dataclass(frozen=True)
class VacancyConcentration:
    """Per-unit-cell oxygen-vacancy concentration bounded by electroneutrality."""

    value: float
    sr_doping: float = 0.5

    def __post_init__(self):
        if not 0 <= self.value <= self.sr_doping / 2:
            raise ValueError(
                f"vacancy concentration {self.value} outside [0, {self.sr_doping / 2}] "
                "(hole concentration would be negative)"
            )

    def __float__(self):
        return float(self.value)

    @property
    def holes(self) -> float:
        """Hole concentration from ``[Sr'] = 2[V_O] + [h]``."""
        return self.sr_doping - 2 * self.value


def as_concentrations(values: Sequence[float], sr_doping: float = 0.5):
    return [VacancyConcentration(float(v), sr_doping) for v in values]


@dataclass(frozen=True)
class MaterialSet:
    """Electrode and electrolyte laws used together by the device simulator."""

    lsf: LsfModel = field(default_factory=LsfModel)
    electrolyte: ElectrolyteModel = field(default_factory=default_electrolyte)

    def describe(self) -> dict:
        lsf = self.lsf
        return {
            "lsf": {
                "conductivity_fit_coeffs": list(lsf.conductivity_fit_coeffs),
                "fit_valid_cv_range": list(lsf.fit_valid_cv_range),
                "fit_valid_T_range": list(lsf.fit_valid_T_range),
                "dv_prefactor": lsf.dv_prefactor,
                "dv_activation": lsf.dv_activation,
                "sr_doping": lsf.sr_doping,
                "density": lsf.density,
                "molar_mass": lsf.molar_mass,
                "veq": "nernst" if lsf.veq_table is None else "table",
                "veq_offset": lsf.veq_offset,
                "range_policy": lsf.range_policy,
            },
            "electrolyte": {
                "inplane": {"prefactor": self.electrolyte.sigma_inplane.prefactor,
                            "activation": self.electrolyte.sigma_inplane.activation},
                "outofplane": {"prefactor": self.electrolyte.sigma_outofplane.prefactor,
                               "activation": self.electrolyte.sigma_outofplane.activation},
            },
        }

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        if self.lsf.veq_table is not None:
            t = self.lsf.veq_table
            blob += t.c_v.tobytes() + t.values.tobytes() + t.temperatures.tobytes()
        return hashlib.sha256(blob).hexdigest()
