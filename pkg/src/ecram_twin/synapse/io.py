"""CSV readers/writers for pulse traces and short-term plasticity datasets."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import PulseTrace

PULSE_HEADER = ["pulse_index", "polarity", "G_S"]
STP_HEADER = ["t_off_s", "P_percent"]


def _fmt(x) -> str:
    return repr(float(x))


def write_pulse_trace(path, trace: PulseTrace) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PULSE_HEADER)
        for i, (p, g) in enumerate(zip(trace.polarity, trace.conductance)):
            w.writerow([i, p, _fmt(g)])
    return path


def read_pulse_trace(path) -> PulseTrace:
    g, pol = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PULSE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PULSE_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                g.append(float(row[2]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad conductance {row[2]!r}") from None
            pol.append(row[1])
    return PulseTrace(np.array(g), np.array(pol))


def write_stp_dataset(path, t_off, P) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STP_HEADER)
        for t, p in zip(t_off, P):
            w.writerow([_fmt(t), _fmt(p)])
    return path


def read_stp_dataset(path):
    t, p = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STP_HEADER:
            raise ValueError(f"{path}: expected header {','.join(STP_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t.append(float(row[0]))
                p.append(float(row[1]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed row {row}") from None
    return np.array(t), np.array(p)
