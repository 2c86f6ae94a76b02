"""Differential conductance pairs as network weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..synapse.model import (
    DEPRESS,
    POTENTIATE,
    SynapticDeviceModel,
    retention_factor,
    shape_function,
    shape_inverse,
    shape_slope,
)

_EPS = 1e-9


def positions(G: np.ndarray, polarity: str, model: SynapticDeviceModel) -> np.ndarray:
    """Normalised pulse count reaching each ``G`` along a branch (vectorised ``state_position``)."""
    if polarity == POTENTIATE:
        u = (G - model.g_min) / model.span
        return np.clip(shape_inverse(np.clip(u, 0.0, 1.0), model.nu_p), 0.0, 1.0)
    u = (model.g_max - G) / model.span
    return np.clip(shape_inverse(np.clip(u, 0.0, 1.0), model.nu_d), 0.0, 1.0)


def pulse_many(G: np.ndarray, polarity: str, n: np.ndarray, model: SynapticDeviceModel) -> np.ndarray:
    """Deterministic conductances after ``n[i]`` pulses on each device (vectorised ``apply_pulses``)."""
    G = np.clip(np.asarray(G, dtype=float), model.g_min, model.g_max)
    x = positions(G, polarity, model)
    x_new = np.minimum(x + np.asarray(n, dtype=float) / model.pulses_per_range, 1.0)
    if polarity == POTENTIATE:
        out = model.g_min + model.span * shape_function(x_new, model.nu_p)
    else:
        out = model.g_max - model.span * shape_function(x_new, model.nu_d)
    return np.where(np.asarray(n) > 0, out, G)


def pulses_to_saturation(G: np.ndarray, polarity: str, model: SynapticDeviceModel) -> np.ndarray:
    """Pulses that still change ``G`` before it pins at the range end."""
    x = positions(G, polarity, model)
    return np.ceil((1.0 - x) * model.pulses_per_range - _EPS).clip(min=0.0)


@dataclass
class UpdateReport:
    requested: np.ndarray
    realized: np.ndarray
    pulses: np.ndarray  # signed, per cell: total pulses applied to either device

    @property
    def quantization_error(self) -> np.ndarray:
        return self.realized - self.requested


class WeightArray:
    """Array of weight cells ``w = (G+ - G-) / span``; representable weights span [-1, 1].

    Parameters
    ----------
    g_plus, g_minus : ndarray
        Conductances in siemens, same shape.
    model : SynapticDeviceModel
    rng : numpy Generator
        Source of write noise.
    carry : bool
        Keep the sub-pulse remainder of each request for the next update
        instead of dropping it.
    """

    def __init__(self, g_plus: np.ndarray, g_minus: np.ndarray, model: SynapticDeviceModel,
                 rng: Optional[np.random.Generator] = None, noise: bool = True, carry: bool = False):
        g_plus = np.array(g_plus, dtype=float)
        g_minus = np.array(g_minus, dtype=float)
        if g_plus.shape != g_minus.shape:
            raise ValueError("G+ and G- must have the same shape")
        self.model = model
        self.g_plus = np.clip(g_plus, model.g_min, model.g_max)
        self.g_minus = np.clip(g_minus, model.g_min, model.g_max)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.noise = noise
        self.carry = carry
        self.residual = np.zeros_like(self.g_plus)
        slopes = [shape_slope(x, nu) for x in (0.0, 1.0) for nu in (model.nu_p, model.nu_d)]
        self._min_step = model.span * min(slopes) / model.pulses_per_range

    @classmethod
    def from_weights(cls, w: np.ndarray, model: SynapticDeviceModel, **kw) -> "WeightArray":
        """Centred pairs ``G = g_mid +/- w span / 2`` realising ``w`` (clipped to [-1, 1])."""
        w = np.clip(np.asarray(w, dtype=float), -1.0, 1.0)
        mid = 0.5 * (model.g_min + model.g_max)
        half = 0.5 * model.span * w
        return cls(mid + half, mid - half, model, **kw)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.g_plus.shape

    @property
    def scale(self) -> float:
        return 1.0 / self.model.span

    def weights(self) -> np.ndarray:
        return (self.g_plus - self.g_minus) * self.scale

    def in_range(self) -> bool:
        m = self.model
        return bool(np.all((self.g_plus >= m.g_min) & (self.g_plus <= m.g_max)
                           & (self.g_minus >= m.g_min) & (self.g_minus <= m.g_max)))

    def update(self, dw: np.ndarray) -> UpdateReport:
        """Realise a requested weight change with integer pulse trains.

        Positive requests potentiate ``G+``; once it saturates the remaining
        pulses depress ``G-``.  Negative requests mirror this.  The pulse
        count is the request divided by the weight step of one pulse at the
        current state of the first device, rounded to the nearest integer.
        """
        m = self.model
        dw = np.asarray(dw, dtype=float)
        if dw.shape != self.shape:
            raise ValueError(f"update shape {dw.shape} != weight shape {self.shape}")
        req = dw + self.residual if self.carry else dw
        realized = np.zeros(self.shape)
        pulses = np.zeros(self.shape)
        nominal = np.zeros(self.shape)
        # cells whose request is below half the smallest possible pulse step get no pulse
        idx = np.flatnonzero(np.abs(req) * m.span >= 0.5 * self._min_step)
        if idx.size:
            r = req.flat[idx]
            gp0 = self.g_plus.flat[idx]
            gm0 = self.g_minus.flat[idx]
            gp, gm = gp0.copy(), gm0.copy()
            n_all = np.zeros(idx.size)
            nom = np.zeros(idx.size)
            for sign in (1.0, -1.0):
                sel = np.flatnonzero(np.sign(r) == sign)
                if not sel.size:
                    continue
                first_pol = POTENTIATE if sign > 0 else DEPRESS
                second_pol = DEPRESS if sign > 0 else POTENTIATE
                step = self._step(gp[sel], first_pol)
                n = np.rint(np.abs(r[sel]) * m.span / step)
                nom[sel] = sign * n * step * self.scale
                hit = n > 0
                if not hit.any():
                    continue
                sel, n = sel[hit], n[hit]
                n1 = np.minimum(n, pulses_to_saturation(gp[sel], first_pol, m))
                gp[sel] = self._write(gp[sel], first_pol, n1)
                gm[sel] = self._write(gm[sel], second_pol, n - n1)
                n_all[sel] = sign * n
            self.g_plus.flat[idx] = gp
            self.g_minus.flat[idx] = gm
            realized.flat[idx] = ((gp - gm) - (gp0 - gm0)) * self.scale
            pulses.flat[idx] = n_all
            nominal.flat[idx] = nom
        if self.carry:
            # only the rounding remainder is carried; noise and saturation are not corrected
            self.residual = np.clip(req - nominal, -1.0, 1.0)
        return UpdateReport(dw, realized, pulses)

    def _step(self, G: np.ndarray, polarity: str) -> np.ndarray:
        """Conductance change of one pulse from the local slope of the update law."""
        m = self.model
        nu = m.nu_p if polarity == POTENTIATE else m.nu_d
        x = positions(G, polarity, m)
        return np.maximum(m.span * shape_slope(x, nu) / m.pulses_per_range, 1e-30)

    def _write(self, G: np.ndarray, polarity: str, n: np.ndarray) -> np.ndarray:
        m = self.model
        active = n > 0
        if not active.any():
            return G
        target = pulse_many(G, polarity, n, m)
        if self.noise:
            sigma = m.write_noise_sigma_p if polarity == POTENTIATE else m.write_noise_sigma_d
            # pulses on a device pinned at the range end do not move it
            eff = np.minimum(n, pulses_to_saturation(G, polarity, m))
            live = eff > 0
            if sigma > 0 and live.any():
                target[live] += self.rng.standard_normal(int(live.sum())) * sigma * np.sqrt(eff[live])
        return np.clip(target, m.g_min, m.g_max)

    def apply_retention(self, window_ratio: float) -> None:
        """Multiply every conductance by the power-law drift factor, then clamp."""
        f = retention_factor(window_ratio, self.model.retention_drift)
        m = self.model
        self.g_plus = np.clip(self.g_plus * f, m.g_min, m.g_max)
        self.g_minus = np.clip(self.g_minus * f, m.g_min, m.g_max)


def device_weight_update(cell: Tuple[float, float], dw_requested: float, model: SynapticDeviceModel,
                         rng: Optional[np.random.Generator] = None, noise: bool = True):
    """Update a single ``(G+, G-)`` pair; returns ``((G+, G-), realized_dw)``."""
    arr = WeightArray(np.array([cell[0]]), np.array([cell[1]]), model, rng=rng, noise=noise)
    rep = arr.update(np.array([dw_requested]))
    return (float(arr.g_plus[0]), float(arr.g_minus[0])), float(rep.realized[0])
