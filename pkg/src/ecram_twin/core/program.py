"""Timed gate-pulse sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

VOLTAGE = "voltage"
CURRENT = "current"


@dataclass(frozen=True)
class Pulse:
    """One rectangular pulse followed by a rest period at zero amplitude.

    ``amplitude`` is in V (voltage mode) or A (current mode).  A negative
    gate voltage drives vacancies out of the channel and raises its
    conductance (potentiation).
    """

    amplitude: float
    on_time: float
    off_time: float = 0.0
    mode: str = VOLTAGE

    def __post_init__(self):
        if not self.on_time > 0:
            raise ValueError(f"pulse on_time must be > 0, got {self.on_time}")
        if not self.off_time >= 0:
            raise ValueError(f"pulse off_time must be >= 0, got {self.off_time}")
        if self.mode not in (VOLTAGE, CURRENT):
            raise ValueError(f"pulse mode must be '{VOLTAGE}' or '{CURRENT}', got {self.mode!r}")


@dataclass(frozen=True)
class Segment:
    """Constant-amplitude interval of a program."""

    start: float
    duration: float
    amplitude: float
    mode: str
    pulse_index: int  # -1 for the initial hold
    is_on: bool

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class PulseProgram:
    """Ordered pulses preceded by an optional zero-voltage hold."""

    pulses: Tuple[Pulse, ...]
    initial_hold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if not self.pulses:
            raise ValueError("pulse program must contain at least one pulse")
        if self.initial_hold < 0:
            raise ValueError("initial_hold must be >= 0")

    @property
    def duration(self) -> float:
        return self.initial_hold + sum(p.on_time + p.off_time for p in self.pulses)

    def segments(self) -> Iterator[Segment]:
        """Yield on and off intervals in time order; zero-length rests are skipped."""
        t = 0.0
        if self.initial_hold > 0:
            yield Segment(t, self.initial_hold, 0.0, VOLTAGE, -1, False)
            t += self.initial_hold
        for i, p in enumerate(self.pulses):
            yield Segment(t, p.on_time, p.amplitude, p.mode, i, True)
            t += p.on_time
            if p.off_time > 0:
                yield Segment(t, p.off_time, 0.0, p.mode, i, False)
                t += p.off_time

    def to_dict(self) -> dict:
        return {
            "initial_hold": self.initial_hold,
            "pulses": [
                {"amplitude": p.amplitude, "on_time": p.on_time, "off_time": p.off_time, "mode": p.mode}
                for p in self.pulses
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseProgram":
        if "pulses" in data:
            pulses = [Pulse(**{k: v for k, v in p.items()}) for p in data["pulses"]]
        elif "trains" in data:
            pulses = []
            for train in data["trains"]:
                spec = dict(train)
                count = int(spec.pop("count"))
                pulses.extend(Pulse(**spec) for _ in range(count))
        else:
            raise KeyError("program needs 'pulses' or 'trains'")
        return cls(tuple(pulses), float(data.get("initial_hold", 0.0)))

    @classmethod
    def trains(cls, trains: Sequence[Tuple[int, float, float, float]], mode: str = VOLTAGE, initial_hold: float = 0.0):
        """Build from ``(count, amplitude, on_time, off_time)`` tuples."""
        pulses: List[Pulse] = []
        for count, amp, t_on, t_off in trains:
            pulses.extend(Pulse(amp, t_on, t_off, mode) for _ in range(int(count)))
        return cls(tuple(pulses), initial_hold)


def potentiation_depression(
    n: int = 10, amplitude: float = 0.5, on_time: float = 20e-3, off_time: float = 20e-3
) -> PulseProgram:
    """``n`` potentiating (negative) pulses followed by ``n`` depressing ones."""
    return PulseProgram.trains([(n, -abs(amplitude), on_time, off_time), (n, abs(amplitude), on_time, off_time)])
