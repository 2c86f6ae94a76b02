"""Plasticity metrics, energy accounting and insertion-speed analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from ..core.materials import Arrhenius
from .model import (
    DEPRESS,
    POTENTIATE,
    RngLike,
    SynapticDeviceModel,
    as_generator,
    conductance_closed_form,
    depression_closed_form,
    normalize_polarity,
)

READ = "read"


@dataclass
class PulseTrace:
    """Conductance readings, each labelled by the pulse that preceded it.

    The label ``read`` marks a reading without a preceding pulse (e.g. the
    initial state).
    """

    conductance: np.ndarray
    polarity: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.conductance, dtype=float).ravel()
        if g.size == 0:
            raise ValueError("pulse trace must not be empty")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("pulse trace conductances must be finite and positive")
        pol = list(self.polarity)
        if len(pol) != g.size:
            raise ValueError("polarity labels must match the number of readings")
        self.conductance = g
        self.polarity = np.array([READ if str(p).lower() == READ else normalize_polarity(p) for p in pol])

    def __len__(self) -> int:
        return self.conductance.size

    @classmethod
    def from_halves(cls, g_p: Sequence[float], g_d: Sequence[float]) -> "PulseTrace":
        """Join a potentiation branch and a depression branch, each starting with its initial reading.

        The depression branch's first reading is dropped when it equals the
        last potentiation reading.
        """
        g_p = list(map(float, g_p))
        g_d = list(map(float, g_d))
        pol = [READ] + [POTENTIATE] * (len(g_p) - 1) if g_p else []
        if g_d and g_p and g_d[0] == g_p[-1]:
            g_d = g_d[1:]
            pol += [DEPRESS] * len(g_d)
        elif g_d:
            pol += [READ] + [DEPRESS] * (len(g_d) - 1)
        return cls(np.array(g_p + g_d), np.array(pol))

    def runs(self, polarity: str) -> List[np.ndarray]:
        """Maximal runs of ``polarity`` pulses, each prefixed by the reading before the run."""
        pol = normalize_polarity(polarity)
        out = []
        i, n = 0, len(self)
        while i < n:
            if self.polarity[i] == pol:
                j = i
                while j < n and self.polarity[j] == pol:
                    j += 1
                start = i - 1 if i > 0 else i
                out.append(self.conductance[start:j])
                i = j
            else:
                i += 1
        return out

    def branch(self, polarity: str) -> Optional[np.ndarray]:
        """Longest run of ``polarity`` (None when absent)."""
        runs = self.runs(polarity)
        return max(runs, key=len) if runs else None

    def deltas(self):
        """Per-pulse conductance changes and the polarity of each pulse."""
        dg = np.diff(self.conductance)
        return dg, self.polarity[1:]


# ---------------------------------------------------------------------------
# Long-term plasticity metrics
# ---------------------------------------------------------------------------


def asymmetric_ratio(g_p: Sequence[float], g_d: Sequence[float]) -> float:
    """Normalised largest gap between a potentiation branch and the mirrored depression branch.

    Both branches include their starting reading.  The depression branch is
    compared through its excursion from its own start, so
    ``AR = max_n |(G_p(n) - G_p(0)) - (G_d(0) - G_d(n))| / |G_p(N) - G_d(N)|``.
    A cycle whose depression retraces the potentiation steps in mirror
    image gives zero.
    """
    gp = np.asarray(g_p, dtype=float)
    gd = np.asarray(g_d, dtype=float)
    if gp.shape != gd.shape or gp.ndim != 1 or gp.size < 2:
        raise ValueError("potentiation and depression branches need equal lengths >= 2")
    denom = abs(gp[-1] - gd[-1])
    if not denom > 0:
        raise ValueError("degenerate conductance range: G_p(P_max) == G_d(P_max)")
    gap = (gp - gp[0]) - (gd[0] - gd)
    return float(np.max(np.abs(gap[1:])) / denom) if gp.size > 1 else 0.0


def asymmetric_ratio_model(model: SynapticDeviceModel, n_pulses: Optional[int] = None) -> float:
    """AR of the noiseless update law over one full cycle."""
    n = model.pulses_per_range if n_pulses is None else n_pulses
    x = np.arange(n + 1) / n
    gp = conductance_closed_form(x, model.nu_p, model.g_min, model.g_max)
    gd = depression_closed_form(x, model.nu_d, model.g_min, model.g_max)
    return asymmetric_ratio(gp, gd)


def dynamic_range(trace) -> float:
    """``max(G) / min(G)`` of a trace or array of conductances."""
    g = trace.conductance if isinstance(trace, PulseTrace) else np.asarray(trace, dtype=float)
    if g.size == 0:
        raise ValueError("dynamic range of an empty trace")
    if np.any(g <= 0):
        raise ValueError("conductances must be positive")
    return float(g.max() / g.min())


def synthetic_cycle(model: SynapticDeviceModel, cycles: int = 1, noise: bool = False, rng: RngLike = None) -> PulseTrace:
    """Full potentiation/depression cycles from ``g_min`` with ``P_max`` pulses each way."""
    from .model import SynapseDevice

    dev = SynapseDevice(model, model.g_min, rng, noise=noise)
    g = [dev.G]
    pol = [READ]
    for _ in range(cycles):
        for p in (POTENTIATE, DEPRESS):
            for _ in range(model.pulses_per_range):
                dev.pulse(p)
                g.append(dev.G)
                pol.append(p)
    return PulseTrace(np.array(g), np.array(pol))


def gaussian_switching_trace(
    mean_p: float, sigma_p: float, mean_d: float, sigma_d: float, n_pulses: int, g_start: float = 5e-6,
    rng: RngLike = None,
) -> PulseTrace:
    """Alternating 100-pulse half-cycles with i.i.d. Gaussian steps (no range clamp)."""
    gen = as_generator(rng)
    half = 100
    pol = []
    steps = []
    k = 0
    while k < n_pulses:
        for p, m, s in ((POTENTIATE, mean_p, sigma_p), (DEPRESS, -mean_d, sigma_d)):
            n = min(half, n_pulses - k)
            if n <= 0:
                break
            steps.append(m + s * gen.standard_normal(n))
            pol += [p] * n
            k += n
    g = g_start + np.concatenate([[0.0], np.cumsum(np.concatenate(steps))])
    offset = max(0.0, 1e-9 - g.min())
    return PulseTrace(g + offset, np.array([READ] + pol))


@dataclass
class SwitchingStats:
    """Per-polarity switching statistics; ``None`` marks an absent polarity class."""

    accuracy_p: Optional[float]
    accuracy_d: Optional[float]
    mean_dg_p: Optional[float]
    mean_dg_d: Optional[float]
    std_dg_p: Optional[float]
    std_dg_d: Optional[float]
    snr_p: Optional[float]
    snr_d: Optional[float]
    n_p: int
    n_d: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _class_stats(dg: np.ndarray, sign: float):
    if dg.size == 0:
        return None, None, None, None
    acc = 100.0 * float(np.mean(sign * dg > 0))
    mean = float(np.mean(dg))
    std = float(np.std(dg, ddof=1)) if dg.size > 1 else 0.0
    snr = mean**2 / std**2 if std > 0 else float("inf")
    return acc, mean, std, snr


def cumulative_switching_stats(trace: PulseTrace) -> SwitchingStats:
    """Fraction of pulses whose conductance change has the commanded sign, with means and SNRs.

    SNR is ``mean(dG)^2 / var(dG)``; accuracies are in percent.
    """
    dg, pol = trace.deltas()
    p = dg[pol == POTENTIATE]
    d = dg[pol == DEPRESS]
    ap, mp, sp_, rp = _class_stats(p, 1.0)
    ad, md, sd, rd = _class_stats(d, -1.0)
    return SwitchingStats(ap, ad, mp, md, sp_, sd, rp, rd, int(p.size), int(d.size))


def gaussian_accuracy(mean: float, sigma: float) -> float:
    """Probability that a Gaussian step has the sign of its mean (percent)."""
    if sigma == 0:
        return 100.0
    return 100.0 * float(norm.cdf(abs(mean) / sigma))


# ---------------------------------------------------------------------------
# Short-term plasticity
# ---------------------------------------------------------------------------


def ppf_ptp(readouts: Sequence[float], write_current_p1: Optional[float] = None, denominator: str = "readout"):
    """Paired-pulse facilitation and post-tetanic potentiation in percent.

    ``denominator="readout"`` normalises by the first readout current;
    ``"write"`` by ``write_current_p1`` instead.
    """
    r = np.asarray(readouts, dtype=float)
    if r.size < 10:
        raise ValueError("need at least 10 readouts")
    if denominator == "readout":
        den = r[0]
    elif denominator == "write":
        if write_current_p1 is None:
            raise ValueError("write_current_p1 required for the write-current denominator")
        den = float(write_current_p1)
    else:
        raise ValueError("denominator must be 'readout' or 'write'")
    if den == 0:
        raise ValueError("first-pulse current is zero")
    return float((r[1] - r[0]) / den * 100.0), float((r[9] - r[0]) / den * 100.0)


# ---------------------------------------------------------------------------
# Energy and scaling
# ---------------------------------------------------------------------------


def energy_per_pulse(I_W: float, t_p: float, E_W: float) -> float:
    """``I_W * t_p * E_W`` (J)."""
    if t_p < 0:
        raise ValueError("pulse width must be non-negative")
    return float(I_W * t_p * E_W)


def energy_efficiency(delta_e: float, delta_g: float) -> float:
    """Energy per unit conductance change (J/S)."""
    if delta_g == 0:
        raise ValueError("conductance change must be non-zero")
    return float(delta_e / delta_g)


def scaling_projection(delta_q: float, length: float, prefactor: float = 1.0) -> float:
    """Conductance change ``prefactor * dQ / l^2`` for a homogeneously programmed channel.

    ``prefactor`` carries the conductivity-per-charge-density coefficient
    (S m^3/C); with the default of 1 the result is the bare ``dQ/l^2`` scaling.
    """
    if not length > 0:
        raise ValueError("length must be positive")
    return float(prefactor * delta_q / length**2)


def project_energy(energy: float, length_from: float, length_to: float) -> float:
    """Energy per pulse for the same relative update on a channel of another length (``~ l^2``)."""
    if not (length_from > 0 and length_to > 0):
        raise ValueError("lengths must be positive")
    return float(energy * (length_to / length_from) ** 2)


def project_efficiency(efficiency: float, length_from: float, length_to: float, e_from: float = 1.0, e_to: float = 1.0):
    """Efficiency scaling ``~ E_W * l^2``."""
    return float(efficiency * (e_to / e_from) * (length_to / length_from) ** 2)


# ---------------------------------------------------------------------------
# In-plane versus out-of-plane insertion speed
# ---------------------------------------------------------------------------


def resistance_out_of_plane(sigma: float, thickness: float, area: float) -> float:
    """Electrolyte resistance (ohm) through a film; ``sigma`` in S/cm, lengths in m."""
    return thickness / (100.0 * sigma * area)


def resistance_in_plane(sigma: float, w_gap: float, w_channel: float, thickness: float, length: float) -> float:
    """Lateral electrolyte resistance (ohm) across gap plus channel width."""
    return (w_gap + w_channel) / (100.0 * sigma * thickness * length)


def insertion_time(q0: float, t_channel: float, e_set: float, area: float, r_ion: float) -> float:
    """Time (s) to move charge density ``q0`` (C/cm^3) into a channel through ``r_ion``."""
    if e_set == 0:
        raise ValueError("set potential must be non-zero")
    return q0 * 1e6 * t_channel * area * r_ion / e_set


def insertion_time_out_of_plane(q0, t_channel, e_set, sigma_ysz, t_ysz, area=1.0):
    return insertion_time(q0, t_channel, e_set, area, resistance_out_of_plane(sigma_ysz, t_ysz, area))


def insertion_time_in_plane(q0, t_channel, e_set, sigma_bcv, w_channel, t_bcv, length=1.0, w_gap=None):
    w_gap = w_channel if w_gap is None else w_gap
    area = length * w_channel
    return insertion_time(q0, t_channel, e_set, area, resistance_in_plane(sigma_bcv, w_gap, w_channel, t_bcv, length))


def insertion_speed_ratio(sigma_bcv, sigma_ysz, t_ysz, t_bcv, w_ch):
    """In-plane over out-of-plane insertion speed, ``(s_bcv/s_ysz) t_ysz t_bcv / (2 w^2)``."""
    vals = [np.asarray(v, dtype=float) for v in (sigma_bcv, sigma_ysz, t_ysz, t_bcv, w_ch)]
    if any(np.any(v <= 0) for v in vals):
        raise ValueError("all inputs must be positive")
    s_b, s_y, t_y, t_b, w = vals
    out = (s_b / s_y) * t_y * t_b / (2 * w**2)
    return out if out.ndim else float(out)


def speed_ratio_sweep(widths, temperature: float, bcv: Arrhenius, ysz: Arrhenius, t_ysz: float, t_bcv: float):
    """Speed ratio over channel widths at one temperature."""
    return insertion_speed_ratio(bcv(temperature), ysz(temperature), t_ysz, t_bcv, np.asarray(widths, float))


def crossover_width(temperature: float, bcv: Arrhenius, ysz: Arrhenius, t_ysz: float, t_bcv: float) -> float:
    """Channel width at which both configurations insert equally fast."""
    return float(np.sqrt(bcv(temperature) / ysz(temperature) * t_ysz * t_bcv / 2))
