"""Command-line front-end: ``ecram-twin <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .core.config import (
    ConfigError,
    config_hash,
    electrolyte_from_config,
    geometry_from_config,
    load_config,
    lsf_from_config,
    program_from_config,
    require,
)
from .core.constants import celsius
from .core.materials import YSZ, Arrhenius, MaterialSet
from .device_sim.io import fmt, write_json, write_snapshot, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class NumericalFailure(RuntimeError):
    """Wraps a solver or fit failure together with any outputs already written."""


class RunManifest:
    """Provenance record written next to every command's outputs."""

    def __init__(self, command: str, cfg: Optional[dict] = None, seeds: Sequence[int] = ()):
        self.command = command
        self.config_hash = config_hash(cfg) if cfg else None
        self.seeds = list(seeds)
        self.outputs: List[Path] = []
        self.started = time.perf_counter()
        self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.notices: List[str] = []
        self.extra: dict = {}

    def add(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return path

    def write(self, out_dir: Path, status: str = "ok", error: Optional[str] = None) -> Path:
        missing = [str(p) for p in self.outputs if not p.exists()]
        if missing and status == "ok":
            raise OSError(f"declared outputs missing: {missing}")
        payload = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "tool_version": __version__,
            "timestamp": self.timestamp,
            "wall_time_s": time.perf_counter() - self.started,
            "outputs": [p.name for p in self.outputs],
            "status": status,
        }
        if error:
            payload["error"] = error
        if self.notices:
            payload["notices"] = self.notices
        payload.update(self.extra)
        return write_json(Path(out_dir) / "manifest.json", payload)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _resolve_config(path: Optional[str]) -> dict:
    if path and path.startswith("bundled:"):
        from .data import bundled

        path = str(bundled(path.split(":", 1)[1]))
    return load_config(path)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _temperature(cfg: dict, override_c: Optional[float]) -> float:
    if override_c is not None:
        return celsius(override_c)
    if "temperature_C" in cfg:
        return celsius(float(cfg["temperature_C"]))
    return float(require(cfg, "temperature_K"))


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _notice(msg: str) -> None:
    print(f"notice: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .device_sim.solver import DeviceSimulator, SimulationError, SolverSettings

    cfg = _resolve_config(args.config)
    geometry = geometry_from_config(require(cfg, "geometry"))
    lsf = lsf_from_config(cfg.get("lsf"), cfg.get("_base_dir"))
    materials = MaterialSet(lsf, electrolyte_from_config(cfg.get("electrolyte")))
    program = program_from_config(require(cfg, "program"))
    T = _temperature(cfg, args.temperature_c)
    c0 = float(args.c_v_init if args.c_v_init is not None else require(cfg, "c_v_init"))
    solver_cfg = dict(cfg.get("solver") or {})
    if args.resolution is not None:
        solver_cfg["resolution"] = args.resolution
    try:
        settings = SolverSettings(**solver_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}", key="solver") from exc
    snaps = sorted(set(_floats(args.snapshot_times))) if args.snapshot_times else []
    bad = [t for t in snaps if not 0 <= t <= program.duration * (1 + 1e-12)]
    if bad:
        raise ConfigError(f"snapshot time(s) {bad} outside [0, {program.duration}] s", key="--snapshot-times")

    out = _out_dir(args.out)
    man = RunManifest("simulate", cfg)
    sim = DeviceSimulator(geometry, materials, T, settings)
    man.extra = {
        "geometry": geometry.to_dict(),
        "materials_hash": materials.digest(),
        "temperature_K": T,
        "c_v_init": c0,
        "solver": {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                   for k, v in dataclasses.asdict(settings).items()},
        "mesh": sim.mesh.stats(),
    }
    try:
        trace = sim.run(program, c0, snapshot_times=snaps)
    except SimulationError as exc:
        man.add(write_trace(out / "trace.csv", exc.trace))
        man.write(out, status="failed", error=str(exc))
        raise NumericalFailure(f"simulation failed at t={exc.time:.6g} s: {exc}") from exc
    man.add(write_trace(out / "trace.csv", trace))
    man.add(_write_diagnostics(out / "diagnostics.csv", trace))
    for t_req, state in zip(snaps, trace.snapshots):
        man.add(write_snapshot(out / f"snapshot_t{t_req!r}.csv", state, veq=sim.veq))
    man.write(out)
    print(f"wrote {len(man.outputs)} file(s) to {out}")
    return EXIT_OK


def _write_diagnostics(path: Path, trace) -> Path:
    import csv

    keys = sorted(trace.extras)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "segment"] + keys)
        for i in range(len(trace.time)):
            w.writerow([fmt(trace.time[i]), int(trace.segment[i])] + [fmt(trace.extras[k][i]) for k in keys])
    return path


# ---------------------------------------------------------------------------
# pulse-metrics
# ---------------------------------------------------------------------------


def pulse_metrics(trace, energy_params=None) -> dict:
    """Every device figure of merit computable from a labelled pulse trace."""
    from .synapse.fitting import fit_nonlinearity
    from .synapse.metrics import asymmetric_ratio, cumulative_switching_stats, dynamic_range, energy_efficiency, \
        energy_per_pulse
    from .synapse.model import DEPRESS, POTENTIATE, EnergyParams

    if len(trace) < 2:
        raise NumericalFailure("insufficient data: need at least two readings")
    ep = energy_params or EnergyParams()
    result: dict = {"notices": []}
    g_p = trace.branch(POTENTIATE)
    g_d = trace.branch(DEPRESS)
    if g_p is None and g_d is None:
        raise NumericalFailure("insufficient data: trace has no programming pulses")
    for name, g, pol in (("nu_p", g_p, POTENTIATE), ("nu_d", g_d, DEPRESS)):
        if g is not None and g.size >= 5:
            fit = fit_nonlinearity(g, pol)
            result[name] = fit.nu
            result[f"{name}_fit_rms_S"] = fit.residual
        else:
            result["notices"].append(f"{name} omitted: fewer than 5 readings on that branch")
    if g_p is not None and g_d is not None:
        result["asymmetric_ratio"] = asymmetric_ratio(g_p, g_d)
    else:
        result["notices"].append("asymmetric_ratio omitted: trace lacks a potentiation or depression half")
    result["dynamic_range"] = dynamic_range(trace)
    result["g_min_S"] = float(trace.conductance.min())
    result["g_max_S"] = float(trace.conductance.max())
    stats = cumulative_switching_stats(trace)
    result["switching"] = stats.to_dict()
    e = energy_per_pulse(ep.I_W, ep.t_p, ep.E_W)
    result["energy_per_pulse_J"] = e
    if stats.mean_dg_p is not None and stats.mean_dg_p > 0:
        result["energy_efficiency_J_per_S"] = energy_efficiency(e, stats.mean_dg_p)
    if not result["notices"]:
        del result["notices"]
    return result


def cmd_pulse_metrics(args) -> int:
    from .synapse.io import read_pulse_trace
    from .synapse.model import EnergyParams

    trace = read_pulse_trace(args.trace)
    ep = EnergyParams(E_W=args.e_w, t_p=args.t_p, I_W=args.i_w)
    metrics = pulse_metrics(trace, ep)
    out = _out_dir(args.out)
    man = RunManifest("pulse-metrics", {"trace": str(args.trace), "energy": ep.__dict__})
    for n in metrics.get("notices", []):
        _notice(n)
        man.notices.append(n)
    man.add(write_json(out / "metrics.json", metrics))
    man.write(out)
    print(f"wrote {out / 'metrics.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stp-fit
# ---------------------------------------------------------------------------


def cmd_stp_fit(args) -> int:
    from .synapse.fitting import fit_stp_decay
    from .synapse.io import read_stp_dataset

    t, p = read_stp_dataset(args.dataset)
    fit = fit_stp_decay(t, p)
    out = _out_dir(args.out)
    man = RunManifest("stp-fit", {"dataset": str(args.dataset)})
    man.add(write_json(out / "stp_fit.json", fit.to_dict()))
    man.write(out)
    print(f"C1={fit.C1:.4g} %  tau={fit.tau:.4g} s  P0={fit.P0:.4g} %")
    return EXIT_OK


# ---------------------------------------------------------------------------
# speed-ratio
# ---------------------------------------------------------------------------


def _speed_points(job):
    from .synapse.metrics import speed_ratio_sweep

    T, widths, bcv, ysz, t_ysz, t_bcv = job
    return speed_ratio_sweep(widths, T, bcv, ysz, t_ysz, t_bcv)


def cmd_speed_ratio(args) -> int:
    import csv

    from .core.config import _arrhenius

    cfg = _resolve_config(args.config) if args.config else {}
    sec = dict(cfg.get("speed_ratio") or {})
    temps_c = _floats(args.temperatures_c) if args.temperatures_c else [float(v) for v in sec.get("temperatures_C", [150.0])]
    t_ysz = float(args.t_ysz if args.t_ysz is not None else sec.get("t_ysz", 1e-6))
    t_bcv = float(args.t_bcv if args.t_bcv is not None else sec.get("t_bcv", 1.4e-7))
    w_min = float(args.w_min if args.w_min is not None else sec.get("w_min", 1e-7))
    w_max = float(args.w_max if args.w_max is not None else sec.get("w_max", 1e-4))
    n = int(args.n_points if args.n_points is not None else sec.get("n_points", 61))
    if not (0 < w_min < w_max) or n < 2:
        raise ConfigError("need 0 < w_min < w_max and n_points >= 2", key="speed_ratio.w_min")
    bcv = electrolyte_from_config(cfg.get("electrolyte")).sigma_inplane
    ysz: Arrhenius = _arrhenius(sec["ysz"], "speed_ratio.ysz") if "ysz" in sec else YSZ
    widths = np.geomspace(w_min, w_max, n)
    jobs = [(celsius(tc), widths, bcv, ysz, t_ysz, t_bcv) for tc in temps_c]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            ratios = list(ex.map(_speed_points, jobs))
    else:
        ratios = [_speed_points(j) for j in jobs]
    out = _out_dir(args.out)
    man = RunManifest("speed-ratio", cfg or {"speed_ratio": sec})
    path = out / "speed_ratio.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_C", "w_ch_m", "speed_ratio"])
        for tc, r in zip(temps_c, ratios):
            for wi, ri in zip(widths, r):
                w.writerow([fmt(tc), fmt(wi), fmt(ri)])
    man.add(path)
    man.write(out)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ann-train
# ---------------------------------------------------------------------------

_ANN_KEYS = {"layer_sizes", "activation", "learning_rate", "epochs", "folds", "batch_size", "device_mode", "loss",
             "logit_scale", "init_scale", "retention_window", "carry"}


def ann_config_from(cfg: dict, args=None):
    from .ann import NetworkConfig
    from .synapse.model import SynapticDeviceModel

    sec = dict(cfg.get("ann") or {})
    unknown = sorted(set(sec) - _ANN_KEYS)
    if unknown:
        raise ConfigError(f"unknown ann key(s): {', '.join(unknown)}", key=f"ann.{unknown[0]}")
    if args is not None:
        for flag, key in (("epochs", "epochs"), ("folds", "folds"), ("mode", "device_mode"), ("lr", "learning_rate"),
                          ("batch_size", "batch_size")):
            v = getattr(args, flag, None)
            if v is not None:
                sec[key] = v
    seed = int(args.seed if args is not None and args.seed is not None else cfg.get("seed", 0))
    try:
        model = SynapticDeviceModel.from_dict(cfg["device"]) if cfg.get("device") else SynapticDeviceModel()
        return NetworkConfig(seed=seed, device_model=model, **sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ann: {exc}", key="ann") from exc


def cmd_ann_train(args) -> int:
    from .ann import cross_validate, load_digits

    cfg = _resolve_config(args.config)
    config = ann_config_from(cfg, args)
    source = args.dataset or cfg.get("dataset", "builtin")
    if source != "builtin" and cfg.get("_base_dir") and not Path(source).is_absolute() and args.dataset is None:
        source = str(Path(cfg["_base_dir"]) / source)
    dataset = load_digits(source)

    def progress(fold, epoch, acc):
        if not args.quiet:
            print(f"fold {fold + 1} epoch {epoch:3d} test accuracy {acc:.4f}", flush=True)

    result = cross_validate(config, dataset, jobs=args.jobs, progress=progress)
    out = _out_dir(args.out)
    man = RunManifest("ann-train", cfg, seeds=[config.seed])
    single = type(result)(config, [])
    for f in result.folds:
        single.folds = [f]
        man.add(single.write_log(out / f"train_log_fold{f.fold + 1}.csv"))
    man.add(result.write_log(out / "train_log.csv"))
    man.add(result.write_confusion(out / "confusion_counts.csv"))
    man.add(result.write_confusion(out / "confusion_normalized.csv", normalized=True))
    _write_matrix(out / "confusion_mean.csv", result.mean_confusion)
    man.add(out / "confusion_mean.csv")
    summary = {
        "device_mode": config.device_mode,
        "final_test_accuracy_per_fold": result.final_accuracies.tolist(),
        "mean_final_test_accuracy": result.mean_final_accuracy,
        "pulses_per_fold": [f.pulses for f in result.folds],
    }
    man.add(write_json(out / "summary.json", summary))
    man.write(out)
    print(f"mean final test accuracy {100 * result.mean_final_accuracy:.2f} %")
    return EXIT_OK


def _write_matrix(path: Path, m: np.ndarray) -> Path:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + [str(c) for c in range(m.shape[1])])
        for i, row in enumerate(m):
            w.writerow([i] + [fmt(v) for v in row])
    return path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecram-twin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("-c", "--config", help="YAML config (default: $ECRAM_TWIN_CONFIG; "
                                                   "'bundled:NAME' selects a shipped example)")
        sp.add_argument("-o", "--out", default="out", help="output directory (default: out)")
        sp.add_argument("-j", "--jobs", type=int, default=1, help="worker processes for independent jobs")

    s = sub.add_parser("simulate", help="run the 2D device simulator on a pulse program")
    common(s)
    s.add_argument("--snapshot-times", help="comma-separated times (s) at which to dump field CSVs")
    s.add_argument("--temperature-c", type=float)
    s.add_argument("--c-v-init", type=float)
    s.add_argument("--resolution", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pulse-metrics", help="extract nonlinearity, AR, DR, energy and switching statistics")
    common(s, config=False)
    s.add_argument("trace", help="CSV with columns pulse_index,polarity,G_S")
    s.add_argument("--i-w", type=float, default=13e-9, help="write current (A)")
    s.add_argument("--t-p", type=float, default=0.44, help="pulse length (s)")
    s.add_argument("--e-w", type=float, default=0.7, help="write voltage (V)")
    s.set_defaults(func=cmd_pulse_metrics)

    s = sub.add_parser("stp-fit", help="fit exponential decay of PPF/PTP versus pulse interval")
    common(s, config=False)
    s.add_argument("dataset", help="CSV with columns t_off_s,P_percent")
    s.set_defaults(func=cmd_stp_fit)

    s = sub.add_parser("speed-ratio", help="in-plane vs out-of-plane insertion speed over channel width")
    common(s)
    s.add_argument("--temperatures-c", help="comma-separated temperatures (C)")
    s.add_argument("--t-ysz", type=float, help="YSZ thickness (m)")
    s.add_argument("--t-bcv", type=float, help="BICUVOX thickness (m)")
    s.add_argument("--w-min", type=float, help="smallest channel width (m)")
    s.add_argument("--w-max", type=float, help="largest channel width (m)")
    s.add_argument("--n-points", type=int)
    s.set_defaults(func=cmd_speed_ratio)

    s = sub.add_parser("ann-train", help="k-fold training of the digit classifier")
    common(s)
    s.add_argument("--dataset", help="'builtin' or a CSV of 64 features + label")
    s.add_argument("--epochs", type=int)
    s.add_argument("--folds", type=int)
    s.add_argument("--mode", choices=["ideal", "device"])
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_ann_train)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .ann.data import DatasetError
    from .ann.network import TrainingError
    from .device_sim.mesh import MeshError
    from .synapse.fitting import FitError

    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FitError, TrainingError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DatasetError, ValueError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
