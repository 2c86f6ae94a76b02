import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from ecram_twin.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from ecram_twin.data import bundled
from ecram_twin.device_sim.io import read_trace
from ecram_twin.synapse import PulseTrace, SynapticDeviceModel, synthetic_cycle
from ecram_twin.synapse.io import write_pulse_trace, write_stp_dataset

REFERENCE = SynapticDeviceModel()


def manifest(out):
    m = json.loads((Path(out) / "manifest.json").read_text())
    for name in m["outputs"]:
        assert (Path(out) / name).exists(), name
    return m


def small_config(tmp_path, **changes):
    cfg = yaml.safe_load(bundled("geometry_a").read_text())
    cfg["program"]["trains"] = [{"amplitude": -0.5, "on_time": 0.02, "off_time": 0.02, "count": 2}]
    cfg["solver"]["resolution"] = 3
    cfg.update(changes)
    path = tmp_path / "sim.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def pulse_runs(v):
    on = np.abs(v) > 0
    return int(np.sum(on[1:] & ~on[:-1]) + on[0])


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bundled_sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "-c", "bundled:geometry_a", "-o", str(out)]) == EXIT_OK
    return out


def test_bundled_simulate_has_twenty_pulses(bundled_sim):
    tr = read_trace(bundled_sim / "trace.csv")
    assert not tr["failed"]
    assert pulse_runs(tr["V_gate_V"]) == 20
    assert set(np.unique(tr["V_gate_V"])) == {-0.5, 0.0, 0.5}
    m = manifest(bundled_sim)
    assert m["status"] == "ok" and m["command"] == "simulate"
    assert {"trace.csv", "diagnostics.csv"} <= set(m["outputs"])
    assert m["c_v_init"] == 0.1 and m["temperature_K"] == pytest.approx(423.15)


def test_bundled_simulate_potentiates_then_depresses(bundled_sim):
    tr = read_trace(bundled_sim / "trace.csv")
    g = tr["G_ch_S"]
    half = np.argmax(tr["V_gate_V"] > 0)
    assert g[half - 1] > g[0]
    assert g[-1] < g[half - 1]


def test_simulate_snapshots(tmp_path):
    out = tmp_path / "o"
    code = main(["simulate", "-c", str(small_config(tmp_path)), "-o", str(out), "--snapshot-times", "0,0.03"])
    assert code == EXIT_OK
    snaps = sorted(out.glob("snapshot_t*.csv"))
    assert len(snaps) == 2
    assert snaps[0].read_text().splitlines()[0] == "x_m,y_m,region,phi_eon_V,phi_ion_V,c_v"
    assert {p.name for p in snaps} <= set(manifest(out)["outputs"])


def test_simulate_overrides(tmp_path):
    out = tmp_path / "o"
    code = main(["simulate", "-c", str(small_config(tmp_path)), "-o", str(out), "--c-v-init", "0.05",
                 "--temperature-c", "200"])
    assert code == EXIT_OK
    m = manifest(out)
    assert m["c_v_init"] == 0.05
    assert m["temperature_K"] == pytest.approx(473.15)


def test_simulate_is_idempotent(tmp_path):
    cfg = small_config(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["simulate", "-c", str(cfg), "-o", str(o)]) == EXIT_OK
    for name in ("trace.csv", "diagnostics.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_missing_config_key_exits_2(tmp_path, capsys):
    path = small_config(tmp_path)
    cfg = yaml.safe_load(path.read_text())
    del cfg["c_v_init"]
    path.write_text(yaml.safe_dump(cfg))
    assert main(["simulate", "-c", str(path), "-o", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "c_v_init" in capsys.readouterr().err


def test_bad_solver_key_exits_2(tmp_path):
    path = small_config(tmp_path, solver={"resolution": 3, "bogus": 1})
    assert main(["simulate", "-c", str(path), "-o", str(tmp_path / "o")]) == EXIT_CONFIG


def test_snapshot_outside_program_exits_2(tmp_path):
    path = small_config(tmp_path)
    assert main(["simulate", "-c", str(path), "-o", str(tmp_path / "o"), "--snapshot-times", "5"]) == EXIT_CONFIG


def test_config_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ECRAM_TWIN_CONFIG", str(small_config(tmp_path)))
    assert main(["simulate", "-o", str(tmp_path / "o")]) == EXIT_OK


def test_no_config_exits_2(tmp_path, monkeypatch):
    monkeypatch.delenv("ECRAM_TWIN_CONFIG", raising=False)
    assert main(["simulate", "-o", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_file_exits_4(tmp_path):
    assert main(["simulate", "-c", str(tmp_path / "nope.yaml"), "-o", str(tmp_path / "o")]) == EXIT_IO


def test_bad_jobs_exits_2(tmp_path):
    assert main(["speed-ratio", "-o", str(tmp_path), "-j", "0"]) == EXIT_CONFIG


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# pulse-metrics
# ---------------------------------------------------------------------------


def test_pulse_metrics_reference(tmp_path):
    src = write_pulse_trace(tmp_path / "t.csv", synthetic_cycle(REFERENCE, cycles=1))
    out = tmp_path / "o"
    assert main(["pulse-metrics", str(src), "-o", str(out)]) == EXIT_OK
    res = json.loads((out / "metrics.json").read_text())
    assert res["nu_p"] == pytest.approx(-1.7, rel=0.05)
    assert res["nu_d"] == pytest.approx(-1.2, rel=0.05)
    assert res["dynamic_range"] == pytest.approx(5.1, abs=0.01)
    assert res["asymmetric_ratio"] > 0
    assert res["energy_per_pulse_J"] == pytest.approx(13e-9 * 0.44 * 0.7)
    assert res["switching"]["accuracy_p"] == 100.0
    assert manifest(out)["outputs"] == ["metrics.json"]


def test_pulse_metrics_linear_trace(tmp_path):
    g = np.linspace(1e-6, 2e-6, 21)
    trace = PulseTrace.from_halves(g, g[::-1])
    src = write_pulse_trace(tmp_path / "t.csv", trace)
    out = tmp_path / "o"
    assert main(["pulse-metrics", str(src), "-o", str(out)]) == EXIT_OK
    res = json.loads((out / "metrics.json").read_text())
    assert abs(res["nu_p"]) < 0.01 and abs(res["nu_d"]) < 0.01
    assert res["asymmetric_ratio"] == pytest.approx(0.0, abs=1e-9)
    assert res["dynamic_range"] == pytest.approx(2.0)


def test_pulse_metrics_missing_half_notice(tmp_path, capsys):
    g = np.linspace(1e-6, 2e-6, 11)
    src = write_pulse_trace(tmp_path / "t.csv", PulseTrace.from_halves(g, []))
    out = tmp_path / "o"
    assert main(["pulse-metrics", str(src), "-o", str(out)]) == EXIT_OK
    res = json.loads((out / "metrics.json").read_text())
    assert "asymmetric_ratio" not in res
    assert any("asymmetric_ratio" in n for n in manifest(out)["notices"])
    assert "notice:" in capsys.readouterr().err


def test_pulse_metrics_insufficient_data_exits_3(tmp_path):
    src = tmp_path / "t.csv"
    src.write_text("pulse_index,polarity,G_S\n0,read,1e-6\n")
    assert main(["pulse-metrics", str(src), "-o", str(tmp_path / "o")]) == EXIT_NUMERIC


def test_pulse_metrics_malformed_exits_4(tmp_path, capsys):
    src = tmp_path / "t.csv"
    src.write_text("pulse_index,polarity,G_S\n0,read,1e-6\n1,potentiate,abc\n")
    assert main(["pulse-metrics", str(src), "-o", str(tmp_path / "o")]) == EXIT_IO
    assert ":3:" in capsys.readouterr().err


def test_pulse_metrics_missing_file_exits_4(tmp_path):
    assert main(["pulse-metrics", str(tmp_path / "none.csv"), "-o", str(tmp_path / "o")]) == EXIT_IO


# ---------------------------------------------------------------------------
# stp-fit
# ---------------------------------------------------------------------------


def test_stp_fit(tmp_path):
    t = np.linspace(0.5, 12.0, 12)
    src = write_stp_dataset(tmp_path / "s.csv", t, 3.8 * np.exp(-t / 3.9) - 0.2)
    out = tmp_path / "o"
    assert main(["stp-fit", str(src), "-o", str(out)]) == EXIT_OK
    p = json.loads((out / "stp_fit.json").read_text())["params"]
    assert p["tau_s"] == pytest.approx(3.9, rel=1e-4)
    assert p["C1_percent"] == pytest.approx(3.8, rel=1e-4)
    assert p["P0_percent"] == pytest.approx(-0.2, abs=1e-4)
    manifest(out)


def test_stp_fit_constant_data_exits_3(tmp_path):
    src = write_stp_dataset(tmp_path / "s.csv", np.linspace(1, 10, 8), np.full(8, 2.0))
    assert main(["stp-fit", str(src), "-o", str(tmp_path / "o")]) == EXIT_NUMERIC


# ---------------------------------------------------------------------------
# speed-ratio
# ---------------------------------------------------------------------------


def read_speed(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_speed_ratio_default(tmp_path):
    assert main(["speed-ratio", "-o", str(tmp_path)]) == EXIT_OK
    data = read_speed(tmp_path / "speed_ratio.csv")
    assert data.shape == (61, 3)
    assert np.all(np.diff(data[:, 2]) < 0)
    assert data[0, 2] > 1e3 and data[-1, 2] < 1
    manifest(tmp_path)


def test_speed_ratio_bundled_and_parallel(tmp_path):
    args = ["speed-ratio", "-c", "bundled:speed_ratio", "--temperatures-c", "100,150,200", "--n-points", "7"]
    assert main(args + ["-o", str(tmp_path / "s")]) == EXIT_OK
    assert main(args + ["-o", str(tmp_path / "p"), "-j", "2"]) == EXIT_OK
    serial = (tmp_path / "s" / "speed_ratio.csv").read_bytes()
    assert serial == (tmp_path / "p" / "speed_ratio.csv").read_bytes()
    assert read_speed(tmp_path / "s" / "speed_ratio.csv").shape == (21, 3)


def test_speed_ratio_bad_range_exits_2(tmp_path):
    assert main(["speed-ratio", "-o", str(tmp_path), "--w-min", "1e-4", "--w-max", "1e-6"]) == EXIT_CONFIG


def test_speed_ratio_bad_temperatures_exits_2(tmp_path):
    assert main(["speed-ratio", "-o", str(tmp_path), "--temperatures-c", "150,hot"]) == EXIT_CONFIG


# ---------------------------------------------------------------------------
# ann-train
# ---------------------------------------------------------------------------


def test_ann_train_outputs(tmp_path):
    out = tmp_path / "o"
    code = main(["ann-train", "-c", "bundled:ann_digits", "-o", str(out), "--epochs", "1", "-q"])
    assert code == EXIT_OK
    m = manifest(out)
    assert sorted(out.glob("train_log_fold*.csv")) == [out / f"train_log_fold{k}.csv" for k in range(1, 6)]
    assert {"confusion_counts.csv", "confusion_normalized.csv", "summary.json"} <= set(m["outputs"])
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["final_test_accuracy_per_fold"]) == 5
    assert summary["device_mode"] == "device"
    assert summary["mean_final_test_accuracy"] > 0.5
    assert m["seeds"] == [0]


def test_ann_train_is_idempotent(tmp_path):
    args = ["ann-train", "-c", "bundled:ann_digits", "--epochs", "1", "--folds", "2", "--mode", "ideal", "-q"]
    for o in ("a", "b"):
        assert main(args + ["-o", str(tmp_path / o)]) == EXIT_OK
    names = [p.name for p in (tmp_path / "a").iterdir() if p.name != "manifest.json"]
    assert names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ann_unknown_key_exits_2(tmp_path, capsys):
    cfg = yaml.safe_load(bundled("ann_digits").read_text())
    cfg["ann"]["momentum"] = 0.9
    path = tmp_path / "a.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["ann-train", "-c", str(path), "-o", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "momentum" in capsys.readouterr().err


def test_ann_missing_dataset_exits_4(tmp_path):
    code = main(["ann-train", "-c", "bundled:ann_digits", "--dataset", str(tmp_path / "none.csv"),
                 "-o", str(tmp_path / "o"), "-q"])
    assert code == EXIT_IO
