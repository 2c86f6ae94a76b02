import os
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecram_twin.ann import (
    DEVICE,
    IDEAL,
    MLP,
    MSE,
    DatasetError,
    DeviceNetwork,
    DigitsDataset,
    NetworkConfig,
    TrainingError,
    WeightArray,
    apply_epoch_retention,
    backward_sgd_step,
    confusion_matrix,
    cross_validate,
    device_weight_update,
    load_digits,
    normalize_rows,
    numerical_gradients,
    stratified_folds,
    train_fold,
)
from ecram_twin.synapse import SynapticDeviceModel
from ecram_twin.synapse.model import shape_slope

REFERENCE = SynapticDeviceModel()
IDEAL_DEVICE = SynapticDeviceModel.ideal()
RETENTION_1E3 = 0.9527961640236519  # 10 ** (-0.021)


@pytest.fixture(scope="module")
def digits():
    return load_digits()


def toy_net(sizes, seed=0, loss="cross_entropy"):
    return MLP.initialize(sizes, np.random.default_rng(seed), loss=loss)


# -- dataset ---------------------------------------------------------------------------


def test_builtin_digits(digits):
    assert len(digits) == 1797
    assert np.all(digits.class_counts() > 0)
    assert digits.features.shape == (1797, 64)
    assert 0.0 <= digits.features.min() and digits.features.max() <= 1.0


def write_rows(path, rows, header=False):
    lines = [",".join(f"f{i}" for i in range(64)) + ",label"] if header else []
    lines += [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_csv_row_with_63_features_reports_line(tmp_path):
    rows = [[0] * 64 + [0], [1] * 63 + [1]]
    with pytest.raises(DatasetError, match=":2:"):
        load_digits(write_rows(tmp_path / "d.csv", rows))


def test_csv_zero_row_accepted_and_scaled(tmp_path):
    rows = [[0] * 64 + [0]] + [[16] * 64 + [k] for k in range(10)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ds = load_digits(write_rows(tmp_path / "d.csv", rows, header=True))
    assert len(ds) == 11
    assert np.all(ds.features[0] == 0) and ds.labels[0] == 0
    assert ds.features.max() == 1.0


def test_csv_missing_class_warns(tmp_path):
    rows = [[0] * 64 + [k] for k in range(9)]
    with pytest.warns(UserWarning, match="missing"):
        load_digits(write_rows(tmp_path / "d.csv", rows))


def test_csv_files_joined_with_pathsep(tmp_path):
    a = write_rows(tmp_path / "a.csv", [[1] * 64 + [k] for k in range(10)])
    b = write_rows(tmp_path / "b.csv", [[2] * 64 + [k] for k in range(10)])
    ds = load_digits(f"{a}{os.pathsep}{b}")
    assert len(ds) == 20


def test_csv_bad_label(tmp_path):
    with pytest.raises(DatasetError, match=":1:"):
        load_digits(write_rows(tmp_path / "d.csv", [[0] * 64 + [12]]))


def test_dataset_validation_and_immutability():
    X = np.zeros((10, 64))
    ds = DigitsDataset(X, np.arange(10))
    assert X.flags.writeable
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(DatasetError):
        DigitsDataset(np.zeros((3, 63)), np.zeros(3, int))
    with pytest.raises(DatasetError):
        DigitsDataset(np.full((1, 64), np.nan), np.zeros(1, int))


# -- forward and gradients -----------------------------------------------------------------


def test_zero_network_outputs_zero():
    net = MLP.zeros([64, 54, 10])
    out = net.predict_scores(np.random.default_rng(0).random((5, 64)))
    assert np.array_equal(out, np.zeros((5, 10)))


@given(w=st.floats(-3, 3), a=st.floats(-1, 1), b=st.floats(-2, 2))
def test_single_weight_network(w, a, b):
    net = MLP([np.array([[w]])], [np.array([b])])
    assert net.predict_scores(np.array([a]))[0] == pytest.approx(np.tanh(w * a + b), rel=1e-15, abs=1e-300)


def test_hidden_permutation_symmetry():
    net = toy_net([64, 54, 10], seed=4)
    x = np.random.default_rng(1).random((7, 64))
    perm = np.random.default_rng(2).permutation(54)
    swapped = MLP([net.W[0][perm], net.W[1][:, perm]], [net.b[0][perm], net.b[1]])
    assert np.allclose(swapped.predict_scores(x), net.predict_scores(x), rtol=1e-13, atol=1e-15)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        toy_net([64, 5, 10]).forward(np.zeros(63))


def test_gradient_check_toy_net():
    net = toy_net([3, 2, 2], seed=1)
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(4, 3)), np.array([0, 1, 1, 0])
    dW, db, _ = net.gradients(X, y)
    nW, nb = numerical_gradients(net, X, y)
    for a, n in zip(dW + db, nW + nb):
        assert np.allclose(a, n, rtol=1e-5, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    sizes=st.lists(st.integers(1, 8), min_size=2, max_size=4),
    seed=st.integers(0, 2**31),
    loss=st.sampled_from(["cross_entropy", MSE]),
    batch=st.integers(1, 4),
)
def test_gradient_check_random_nets(sizes, seed, loss, batch):
    rng = np.random.default_rng(seed)
    net = MLP.initialize(sizes, rng, loss=loss)
    X = rng.normal(size=(batch, sizes[0]))
    y = rng.integers(0, sizes[-1], batch)
    dW, db, _ = net.gradients(X, y)
    nW, nb = numerical_gradients(net, X, y)
    a = np.concatenate([g.ravel() for g in dW + db])
    n = np.concatenate([g.ravel() for g in nW + nb])
    assert np.linalg.norm(a - n) <= 1e-5 * max(np.linalg.norm(n), 1e-4)


def test_zero_learning_rate_leaves_weights():
    net = toy_net([64, 54, 10])
    before = net.copy()
    backward_sgd_step(net, np.random.default_rng(0).random((3, 64)), np.array([1, 2, 3]), 0.0)
    for a, b in zip(net.W + net.b, before.W + before.b):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("loss", ["cross_entropy", MSE])
def test_small_steps_reduce_sample_loss(loss):
    net = toy_net([64, 54, 10], loss=loss)
    x, y = np.random.default_rng(3).random((1, 64)), np.array([7])
    l0 = net.loss_value(x, y)
    for _ in range(2):
        backward_sgd_step(net, x, y, 1e-3)
    assert net.loss_value(x, y) < l0


def test_sgd_errors():
    net = toy_net([64, 5, 10])
    with pytest.raises(TrainingError):
        backward_sgd_step(net, np.zeros((0, 64)), np.zeros(0, int), 0.1)
    x = np.full((1, 64), np.nan)
    with pytest.raises(TrainingError, match="non-finite"):
        backward_sgd_step(net, x, np.array([0]), 0.1)


def test_config_validation():
    for bad in (dict(layer_sizes=(64,)), dict(folds=1), dict(epochs=0), dict(device_mode="x"),
                dict(activation="relu"), dict(learning_rate=-1.0), dict(batch_size=0)):
        with pytest.raises(ValueError):
            NetworkConfig(**bad)


# -- device weight cells ------------------------------------------------------------------------


def test_zero_request_leaves_cell():
    cell = (5e-6, 4e-6)
    new, dw = device_weight_update(cell, 0.0, REFERENCE, np.random.default_rng(0))
    assert new == cell and dw == 0.0


def test_saturated_cell_ignores_positive_request():
    cell = (REFERENCE.g_max, REFERENCE.g_min)
    new, dw = device_weight_update(cell, 0.3, REFERENCE, np.random.default_rng(0))
    assert new == cell and dw == 0.0


def test_overflow_moves_to_paired_device():
    cell = (REFERENCE.g_max, 6e-6)
    (gp, gm), dw = device_weight_update(cell, 0.05, REFERENCE, noise=False)
    assert gp == REFERENCE.g_max
    assert gm < 6e-6 and dw > 0


@given(dw=st.floats(-0.5, 0.5), gp=st.floats(REFERENCE.g_min, REFERENCE.g_max), gm=st.floats(REFERENCE.g_min, REFERENCE.g_max))
def test_noiseless_update_quantization(dw, gp, gm):
    arr = WeightArray(np.array([gp]), np.array([gm]), REFERENCE, noise=False)
    rep = arr.update(np.array([dw]))
    assert arr.in_range()
    assert float(rep.pulses[0]) == int(rep.pulses[0])
    assert rep.realized[0] * dw >= 0
    # no pulse moves the weight by more than the steepest slope of either branch
    steepest = max(shape_slope(x, nu) for x in (0.0, 1.0) for nu in (REFERENCE.nu_p, REFERENCE.nu_d))
    assert abs(rep.realized[0]) <= abs(rep.pulses[0]) * steepest / REFERENCE.pulses_per_range + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), steps=st.integers(1, 30))
def test_conductances_stay_in_range_under_noise(seed, steps):
    rng = np.random.default_rng(seed)
    arr = WeightArray.from_weights(rng.uniform(-1, 1, 50), REFERENCE, rng=rng, carry=bool(seed % 2))
    for _ in range(steps):
        arr.update(rng.normal(0, 0.3, 50))
        assert arr.in_range()
    arr.apply_retention(1e3)
    assert arr.in_range()


def test_ideal_device_update_is_within_one_pulse():
    rng = np.random.default_rng(0)
    arr = WeightArray.from_weights(rng.uniform(-0.5, 0.5, 200), IDEAL_DEVICE, rng=rng)
    req = rng.normal(0, 0.01, 200)
    rep = arr.update(req)
    assert np.max(np.abs(rep.quantization_error)) <= 0.5 / IDEAL_DEVICE.pulses_per_range * (1 + 1e-9)


def test_carry_accumulates_subpulse_requests():
    arr = WeightArray.from_weights(np.zeros(1), IDEAL_DEVICE, noise=False, carry=True)
    tiny = 0.3 / IDEAL_DEVICE.pulses_per_range
    for _ in range(10):
        arr.update(np.array([tiny]))
    assert arr.weights()[0] == pytest.approx(10 * tiny, abs=0.5 / IDEAL_DEVICE.pulses_per_range)
    drop = WeightArray.from_weights(np.zeros(1), IDEAL_DEVICE, noise=False, carry=False)
    for _ in range(10):
        drop.update(np.array([tiny]))
    assert drop.weights()[0] == 0.0


def test_ideal_limit_trajectory_matches_sgd():
    cfg = NetworkConfig(layer_sizes=(64, 12, 10), device_mode=DEVICE, device_model=IDEAL_DEVICE, carry=False,
                        learning_rate=0.01)
    rng = np.random.default_rng(5)
    ideal = MLP.initialize(cfg.layer_sizes, np.random.default_rng(1))
    dnet = DeviceNetwork(ideal.copy(), cfg, rng)
    start = [w.copy() for w in dnet.net.W]
    X, y = rng.random((40, 64)), rng.integers(0, 10, 40)
    for k in range(40):
        backward_sgd_step(ideal, X[k:k + 1], y[k:k + 1], cfg.learning_rate)
        dnet.sgd_step(X[k:k + 1], y[k:k + 1], cfg.learning_rate)
    step = 1.0 / IDEAL_DEVICE.pulses_per_range
    for a, b, s in zip(dnet.net.W, ideal.W, start):
        assert np.max(np.abs(a - b)) <= 40 * step
        assert np.max(np.abs(b - s)) > 10 * step  # the comparison is not vacuous


def test_retention_identity_without_drift():
    arr = WeightArray.from_weights(np.linspace(-0.9, 0.9, 9), REFERENCE.replace(retention_drift=0.0), noise=False)
    gp, gm = arr.g_plus.copy(), arr.g_minus.copy()
    arr.apply_retention(1e3)
    assert np.array_equal(arr.g_plus, gp) and np.array_equal(arr.g_minus, gm)


def test_retention_scalar_factor_and_composition():
    assert 10 ** (-3 * 0.007) == pytest.approx(RETENTION_1E3, rel=1e-15)
    g = np.linspace(4e-6, 9e-6, 6)
    one = WeightArray(g, g[::-1], REFERENCE, noise=False)
    one.apply_retention(1e3)
    assert np.allclose(one.g_plus, g * RETENTION_1E3, rtol=1e-14)
    two = WeightArray(g, g[::-1], REFERENCE, noise=False)
    two.apply_retention(1e3)
    two.apply_retention(1e3)
    once = WeightArray(g, g[::-1], REFERENCE, noise=False)
    once.apply_retention(1e6)
    assert np.allclose(two.g_plus, once.g_plus, rtol=1e-14)
    assert np.abs(two.weights()).max() < np.abs(WeightArray(g, g[::-1], REFERENCE).weights()).max()


def test_epoch_retention_on_network():
    cfg = NetworkConfig(layer_sizes=(64, 8, 10), device_mode=DEVICE, retention_window=1e3)
    dnet = DeviceNetwork(MLP.initialize(cfg.layer_sizes, np.random.default_rng(0)), cfg, np.random.default_rng(1))
    before = dnet.conductances()
    apply_epoch_retention(dnet)
    for (gp0, gm0), (gp1, gm1) in zip(before, dnet.conductances()):
        assert np.allclose(gp1, np.maximum(gp0 * RETENTION_1E3, REFERENCE.g_min), rtol=1e-14)
        assert np.allclose(gm1, np.maximum(gm0 * RETENTION_1E3, REFERENCE.g_min), rtol=1e-14)


# -- cross-validation -----------------------------------------------------------------------------


def test_fold_sizes_and_stratification(digits):
    y = digits.labels
    splits = stratified_folds(y, 5, 0)
    sizes = [te.size for _, te in splits]
    assert all(abs(s - 1797 / 5) <= 1 for s in sizes)
    tests = np.concatenate([te for _, te in splits])
    assert np.array_equal(np.sort(tests), np.arange(1797))
    counts = np.bincount(y, minlength=10)
    for tr, te in splits:
        assert np.intersect1d(tr, te).size == 0
        hist = np.bincount(y[te], minlength=10)
        assert np.all(np.abs(hist - counts / 5) <= 1)


def test_too_few_samples_per_class():
    with pytest.raises(ValueError, match="fewer samples"):
        stratified_folds(np.array([0, 0, 0, 1, 1, 1, 1, 1]), 5, 0)


def test_confusion_helpers():
    cm = confusion_matrix(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 2]), 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert normalize_rows(cm)[0].tolist() == [0.5, 0.5, 0.0]


@pytest.fixture(scope="module")
def short_cv(digits):
    return cross_validate(NetworkConfig(epochs=2), digits)


def test_confusion_rows_sum_to_class_counts(digits, short_cv):
    assert np.array_equal(short_cv.confusion_counts.sum(axis=1), digits.class_counts())
    for f in short_cv.folds:
        assert f.confusion.sum() == f.n_test
        assert f.n_train + f.n_test == 1797
    assert np.allclose(short_cv.normalized_confusion.sum(axis=1), 1.0)


def test_cv_learns(short_cv):
    assert short_cv.mean_final_accuracy > 0.85
    assert short_cv.mean_accuracy_curve.shape == (2,)


def test_ideal_mode_is_bit_deterministic(digits):
    cfg = NetworkConfig(epochs=2)
    a = cross_validate(cfg, digits, folds_to_run=[1])
    b = cross_validate(cfg, digits, folds_to_run=[1])
    assert np.array_equal(a.folds[0].test_accuracy, b.folds[0].test_accuracy)
    assert np.array_equal(a.folds[0].train_loss, b.folds[0].train_loss)


def test_device_mode_is_deterministic(digits):
    cfg = NetworkConfig(epochs=1, device_mode=DEVICE)
    y = digits.labels
    tr, te = stratified_folds(y, 5, 0)[0]
    a = train_fold(cfg, digits.features, y, tr, te)
    b = train_fold(cfg, digits.features, y, tr, te)
    assert a.pulses == b.pulses > 0
    assert np.array_equal(a.train_loss, b.train_loss)
    assert np.array_equal(a.confusion, b.confusion)


def test_parallel_folds_match_serial(digits):
    cfg = NetworkConfig(epochs=1, folds=2)
    serial = cross_validate(cfg, digits)
    parallel = cross_validate(cfg, digits, jobs=2)
    assert np.array_equal(serial.final_accuracies, parallel.final_accuracies)


def test_ideal_limit_accuracy_matches_ideal_mode(digits):
    base = NetworkConfig(epochs=3)
    ideal = cross_validate(base, digits, folds_to_run=[0])
    dev = cross_validate(base.replace(device_mode=DEVICE, device_model=IDEAL_DEVICE), digits, folds_to_run=[0])
    assert abs(dev.mean_final_accuracy - ideal.mean_final_accuracy) <= 0.01


def test_train_fold_rejects_overlap(digits):
    idx = np.arange(100)
    with pytest.raises(ValueError, match="overlap"):
        train_fold(NetworkConfig(epochs=1), digits.features, digits.labels, idx, idx[:10])


def test_log_and_confusion_files(tmp_path, short_cv):
    log = short_cv.write_log(tmp_path / "log.csv").read_text().splitlines()
    assert log[0] == "fold,epoch,train_loss,test_loss,test_accuracy"
    assert len(log) == 1 + 5 * 2
    cm = short_cv.write_confusion(tmp_path / "cm.csv").read_text().splitlines()
    assert len(cm) == 11
