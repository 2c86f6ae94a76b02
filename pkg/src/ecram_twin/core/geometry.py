"""Planar device geometry of the channel/gate/electrolyte stack."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class DeviceGeometry:
    """Cross-section of a planar three-terminal device (all lengths in m).

    The gate and channel sit side by side on top of the electrolyte film,
    separated laterally by ``gap``.  Below the gap the electrolyte is
    over-etched by ``electrolyte_etch_gap``.  ``channel_length`` is the
    source-drain distance perpendicular to the simulated cross-section.
    """

    channel_width: float
    channel_length: float
    channel_thickness: float
    gate_width: float
    gate_thickness: float
    gap: float
    electrolyte_thickness: float
    electrolyte_etch_gap: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"geometry field {f.name} must be > 0, got {v!r}")
        if self.electrolyte_etch_gap >= self.electrolyte_thickness:
            raise ValueError("electrolyte_etch_gap must be smaller than electrolyte_thickness")

    @property
    def channel_area(self) -> float:
        """Channel cross-section (width x thickness)."""
        return self.channel_width * self.channel_thickness

    @property
    def gate_area(self) -> float:
        return self.gate_width * self.gate_thickness

    @property
    def total_width(self) -> float:
        return self.gate_width + self.gap + self.channel_width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceGeometry":
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in data]
        if missing:
            raise KeyError(f"geometry missing key(s): {', '.join(missing)}")
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise KeyError(f"unknown geometry key(s): {', '.join(unknown)}")
        return cls(**{n: float(data[n]) for n in names})


def geometry_a() -> DeviceGeometry:
    """Fabricated device dimensions: 6 um wide, 35 um long channel."""
    return DeviceGeometry(
        channel_width=6e-6,
        channel_length=35e-6,
        channel_thickness=35e-9,
        gate_width=6e-6,
        gate_thickness=35e-9,
        gap=3e-6,
        electrolyte_thickness=140e-9,
        electrolyte_etch_gap=10e-9,
    )


def geometry_b() -> DeviceGeometry:
    """Reduced lateral dimensions: 1 um channel and gate, 0.5 um gap."""
    return DeviceGeometry(
        channel_width=1e-6,
        channel_length=35e-6,
        channel_thickness=35e-9,
        gate_width=1e-6,
        gate_thickness=35e-9,
        gap=0.5e-6,
        electrolyte_thickness=140e-9,
        electrolyte_etch_gap=10e-9,
    )


PRESETS = {"A": geometry_a, "B": geometry_b}
