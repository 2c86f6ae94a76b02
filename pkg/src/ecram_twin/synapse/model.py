"""Compact behavioural model of the synaptic transistor.

Potentiation follows the exponential update law on the normalised pulse
number ``x`` in [0, 1]::

    G_p(x) = g_min + (g_max - g_min) * (1 - exp(-nu_p x)) / (1 - exp(-nu_p))

and depression is its mirror image, counted from the top of the range::

    G_d(y) = g_max - (g_max - g_min) * (1 - exp(-nu_d y)) / (1 - exp(-nu_d))

A single pulse moves ``x`` (or ``y``) by ``1/P_max``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np

POTENTIATE = "potentiate"
DEPRESS = "depress"
_POLARITY_ALIASES = {
    "potentiate": POTENTIATE, "p": POTENTIATE, "+": POTENTIATE, "pot": POTENTIATE, "potentiation": POTENTIATE,
    "depress": DEPRESS, "d": DEPRESS, "-": DEPRESS, "dep": DEPRESS, "depression": DEPRESS,
}

RngLike = Union[None, int, np.random.Generator]


class ConductanceRangeWarning(UserWarning):
    """A conductance outside ``[g_min, g_max]`` was clamped."""


def normalize_polarity(polarity: str) -> str:
    try:
        return _POLARITY_ALIASES[str(polarity).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown pulse polarity {polarity!r}") from None


def as_generator(rng: RngLike) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class EnergyParams:
    """Programming pulse: write voltage ``E_W`` (V), width ``t_p`` (s), current ``I_W`` (A)."""

    E_W: float = 0.7
    t_p: float = 0.44
    I_W: float = 13e-9


@dataclass(frozen=True)
class SynapticDeviceModel:
    """Parameters of the behavioural synapse.

    Defaults reproduce the cycling characterisation: 100 pulses per range,
    dynamic range 5.1 with ``g_max`` = 10 uS, ``nu_p = -1.7``,
    ``nu_d = -1.2``, drift coefficient 0.007 and the measured per-pulse
    spreads of 39 nS (potentiation) and 32 nS (depression).
    """

    g_min: float = 10e-6 / 5.1
    g_max: float = 10e-6
    nu_p: float = -1.7
    nu_d: float = -1.2
    pulses_per_range: int = 100
    retention_drift: float = 0.007
    write_noise_sigma_p: float = 39e-9
    write_noise_sigma_d: float = 32e-9
    energy_params: EnergyParams = field(default_factory=EnergyParams)

    def __post_init__(self):
        if not (self.g_max > self.g_min > 0):
            raise ValueError(f"need g_max > g_min > 0, got g_min={self.g_min}, g_max={self.g_max}")
        if int(self.pulses_per_range) != self.pulses_per_range or self.pulses_per_range < 1:
            raise ValueError("pulses_per_range must be an integer >= 1")
        if self.retention_drift < 0:
            raise ValueError("retention_drift must be >= 0")
        if self.write_noise_sigma_p < 0 or self.write_noise_sigma_d < 0:
            raise ValueError("write-noise sigmas must be >= 0")
        if not (np.isfinite(self.nu_p) and np.isfinite(self.nu_d)):
            raise ValueError("nonlinearity factors must be finite")

    @property
    def span(self) -> float:
        return self.g_max - self.g_min

    @property
    def dynamic_range(self) -> float:
        return self.g_max / self.g_min

    def nu(self, polarity: str) -> float:
        return self.nu_p if normalize_polarity(polarity) == POTENTIATE else self.nu_d

    def noise_sigma(self, polarity: str) -> float:
        return self.write_noise_sigma_p if normalize_polarity(polarity) == POTENTIATE else self.write_noise_sigma_d

    def replace(self, **changes) -> "SynapticDeviceModel":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SynapticDeviceModel":
        data = dict(data)
        if "energy_params" in data and isinstance(data["energy_params"], dict):
            data["energy_params"] = EnergyParams(**data["energy_params"])
        return cls(**data)

    @classmethod
    def ideal(cls, g_min: float = 1e-6, g_max: float = 2e-6, pulses_per_range: int = 100_000) -> "SynapticDeviceModel":
        """Linear, noiseless, drift-free device with a fine pulse grid."""
        return cls(g_min, g_max, 0.0, 0.0, pulses_per_range, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Update law
# ---------------------------------------------------------------------------


def shape_function(x, nu: float):
    """``(1 - exp(-nu x)) / (1 - exp(-nu))``; the identity for ``nu == 0``."""
    x = np.asarray(x, dtype=float)
    if nu == 0.0:
        return x.copy() if x.ndim else float(x)
    out = np.expm1(-nu * x) / np.expm1(-nu)
    return out if out.ndim else float(out)


def shape_inverse(u, nu: float):
    """Inverse of :func:`shape_function` on [0, 1]."""
    u = np.asarray(u, dtype=float)
    if nu == 0.0:
        return u.copy() if u.ndim else float(u)
    out = -np.log1p(u * np.expm1(-nu)) / nu
    return out if out.ndim else float(out)


def shape_slope(x, nu: float):
    """Derivative of :func:`shape_function` with respect to ``x``."""
    x = np.asarray(x, dtype=float)
    if nu == 0.0:
        out = np.ones_like(x)
    else:
        out = -nu * np.exp(-nu * x) / np.expm1(-nu)
    return out if out.ndim else float(out)


def conductance_closed_form(P, nu: float, g_min: float, g_max: float):
    """Conductance after a normalised number ``P`` in [0, 1] of potentiating pulses."""
    P_arr = np.asarray(P, dtype=float)
    if np.any((P_arr < 0) | (P_arr > 1)):
        raise ValueError("normalised pulse number must lie in [0, 1]")
    return g_min + (g_max - g_min) * shape_function(P_arr, nu)


def depression_closed_form(P, nu: float, g_min: float, g_max: float):
    """Mirrored law: conductance after a normalised number ``P`` of depressing pulses from ``g_max``."""
    P_arr = np.asarray(P, dtype=float)
    if np.any((P_arr < 0) | (P_arr > 1)):
        raise ValueError("normalised pulse number must lie in [0, 1]")
    return g_max - (g_max - g_min) * shape_function(P_arr, nu)


def _clamp(G: float, model: SynapticDeviceModel) -> float:
    if G < model.g_min or G > model.g_max:
        tol = 1e-12 * model.g_max
        if G < model.g_min - tol or G > model.g_max + tol:
            warnings.warn(f"conductance {G:.6g} S outside [g_min, g_max], clamped", ConductanceRangeWarning,
                          stacklevel=3)
        G = min(max(G, model.g_min), model.g_max)
    return G


def state_position(G: float, polarity: str, model: SynapticDeviceModel) -> float:
    """Normalised pulse count that reaches ``G`` along the potentiation or depression branch."""
    pol = normalize_polarity(polarity)
    u = (G - model.g_min) / model.span if pol == POTENTIATE else (model.g_max - G) / model.span
    return float(np.clip(shape_inverse(min(max(u, 0.0), 1.0), model.nu(pol)), 0.0, 1.0))


def apply_pulses(G: float, polarity: str, n: int, model: SynapticDeviceModel) -> float:
    """Deterministic conductance after ``n`` identical pulses (``n >= 0``)."""
    if n < 0:
        raise ValueError("pulse count must be >= 0")
    G = _clamp(float(G), model)
    if n == 0:
        return G
    pol = normalize_polarity(polarity)
    x = state_position(G, pol, model)
    x_new = min(x + n / model.pulses_per_range, 1.0)
    if pol == POTENTIATE:
        return float(model.g_min + model.span * shape_function(x_new, model.nu_p))
    return float(model.g_max - model.span * shape_function(x_new, model.nu_d))


def apply_pulse(G: float, polarity: str, model: SynapticDeviceModel) -> float:
    """Conductance after one programming pulse (saturates at the range ends)."""
    return apply_pulses(G, polarity, 1, model)


def pulse_step(G, polarity: str, model: SynapticDeviceModel):
    """Local conductance change of one pulse from the update-law slope (vectorised)."""
    pol = normalize_polarity(polarity)
    G = np.clip(np.asarray(G, dtype=float), model.g_min, model.g_max)
    nu = model.nu(pol)
    u = (G - model.g_min) / model.span if pol == POTENTIATE else (model.g_max - G) / model.span
    x = shape_inverse(np.clip(u, 0.0, 1.0), nu)
    return model.span * shape_slope(x, nu) / model.pulses_per_range


def apply_write_noise(delta_g, polarity: str, model: SynapticDeviceModel, rng: RngLike = None, n_pulses=1):
    """Add Gaussian write noise with variance ``n_pulses * sigma^2`` to ``delta_g``."""
    sigma = model.noise_sigma(polarity)
    dg = np.asarray(delta_g, dtype=float)
    if sigma == 0.0:
        return dg.copy() if dg.ndim else float(dg)
    gen = as_generator(rng)
    scale = sigma * np.sqrt(np.asarray(n_pulses, dtype=float))
    out = dg + gen.standard_normal(dg.shape) * scale
    return out if out.ndim else float(out)


def retention_decay(G0, t, t0: float, c: float):
    """Power-law drift ``G0 * (t/t0)^(-c)`` for ``t >= t0 > 0``."""
    t_arr = np.asarray(t, dtype=float)
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if np.any(t_arr < t0):
        raise ValueError("retention time t must satisfy t >= t0")
    if c < 0:
        raise ValueError("drift coefficient must be >= 0")
    out = np.asarray(G0, dtype=float) * (t_arr / t0) ** (-c)
    return out if out.ndim else float(out)


def retention_factor(window_ratio: float, c: float) -> float:
    """Multiplicative drift over a window ``t/t0``."""
    return float(window_ratio ** (-c))


def retention_window_for_loss(loss: float, c: float) -> float:
    """Window ratio ``t/t0`` at which the relative loss reaches ``loss``."""
    if not 0 < loss < 1 or c <= 0:
        raise ValueError("need 0 < loss < 1 and c > 0")
    return float((1 - loss) ** (-1 / c))


class SynapseDevice:
    """One stateful device with its own seeded noise stream.

    Not thread safe; confine an instance to a single thread.
    """

    def __init__(self, model: SynapticDeviceModel, G: Optional[float] = None, rng: RngLike = None, noise=True):
        self.model = model
        self.G = model.g_min if G is None else _clamp(float(G), model)
        self.rng = as_generator(rng)
        self.noise = noise

    def pulse(self, polarity: str, n: int = 1) -> float:
        """Apply ``n`` pulses with write noise; returns the realised change."""
        target = apply_pulses(self.G, polarity, n, self.model)
        dg = target - self.G
        if self.noise and n > 0:
            dg = apply_write_noise(dg, polarity, self.model, self.rng, n)
        new = min(max(self.G + dg, self.model.g_min), self.model.g_max)
        realised = new - self.G
        self.G = new
        return realised

    def drift(self, window_ratio: float) -> float:
        self.G = max(self.G * retention_factor(window_ratio, self.model.retention_drift), self.model.g_min)
        return self.G
