"""Windowed reconstruction detector: training mechanics, scoring,
calibration, serialization."""

import warnings

import numpy as np
import pytest

from gridmtd.detector import (LstmAeModel, TrainingConfig, TrainingError,
                              calibrate_threshold, derive_widths,
                              init_parameters, train)


def _toy_windows(n, t=4, d=6, seed=0, anomaly=False):
    """Smooth sinusoid windows; anomaly=True spikes one channel."""
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, size=(n, 1, d))
    base = np.sin(np.linspace(0, 1.5, t)[None, :, None] * 4 + phases)
    out = base + 0.03 * rng.standard_normal((n, t, d))
    if anomaly:
        out[:, -1, 0] += 3.0
    return out


def test_derive_widths_shrinks():
    widths = derive_widths(108)
    assert all(a > b for a, b in zip(widths, widths[1:]))
    assert widths[0] < 108


def test_init_parameters_deterministic():
    p1 = init_parameters(6, [4, 2], seed=3)
    p2 = init_parameters(6, [4, 2], seed=3)
    p3 = init_parameters(6, [4, 2], seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(p1, p2))
    assert any(not np.array_equal(a, b) for a, b in zip(p1, p3))


def test_training_reduces_loss_and_is_deterministic():
    w = _toy_windows(90, seed=1)
    cfg = TrainingConfig(epochs=40, batch_size=16, seed=7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m1, h1 = train(w, cfg)
        m2, h2 = train(w, cfg)
    assert h1.train_loss[-1] < h1.train_loss[0]
    assert h1.best_epoch >= 1
    assert h1.stopped_epoch == len(h1.train_loss) <= 40
    assert h1.train_loss == h2.train_loss
    assert all(np.array_equal(a, b) for a, b in zip(m1.params, m2.params))


def test_early_stopping_restores_best():
    w = _toy_windows(60, seed=2)
    cfg = TrainingConfig(epochs=200, batch_size=8, seed=1, patience=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, hist = train(w, cfg)
    assert hist.stopped_epoch <= 200
    # restored parameters reproduce the best validation loss
    n_train = max(1, int(round(60 * cfg.split[0])))
    n_val = max(1, int(round(60 * cfg.split[1])))
    val = w[n_train:n_train + n_val]
    val_scores = np.mean([model.reconstruction_loss(x) for x in val])
    assert val_scores == pytest.approx(min(hist.val_loss), rel=0.35)


def test_explicit_validation_windows():
    w = _toy_windows(50, seed=3)
    v = _toy_windows(20, seed=4)
    cfg = TrainingConfig(epochs=15, batch_size=16, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, hist = train(w, cfg, val_windows=v)
    assert len(hist.val_loss) == hist.stopped_epoch


def test_train_input_validation():
    cfg = TrainingConfig(epochs=5, batch_size=4)
    with pytest.raises(TrainingError):
        train(np.zeros((0, 4, 6)), cfg)
    with pytest.raises(TrainingError):
        train(np.zeros((10, 4)), cfg)
    with pytest.raises(ValueError):
        TrainingConfig(split=(0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        TrainingConfig(epochs=0)


def test_anomaly_scores_higher(tiny_model):
    # tiny_model is trained on smooth grid measurements; a corrupted window
    # must score above a clean one
    d = tiny_model.d_in
    t = tiny_model.window_len
    clean = np.tile(tiny_model.mean, (t, 1))
    corrupted = clean.copy()
    corrupted[-1] += 8.0 * tiny_model.scale
    assert tiny_model.reconstruction_loss(corrupted) > tiny_model.reconstruction_loss(clean)


def test_detect_requires_calibration():
    w = _toy_windows(40, seed=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, _ = train(w, TrainingConfig(epochs=5, batch_size=8))
    with pytest.raises(ValueError):
        model.detect(w[0])


def test_calibration_quantile_semantics():
    w = _toy_windows(80, seed=6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, _ = train(w, TrainingConfig(epochs=10, batch_size=16))
        val = _toy_windows(150, seed=7)
        tau = calibrate_threshold(model, val, target_fpr=0.1)
    assert model.tau == tau
    scores = np.array([model.reconstruction_loss(x) for x in val])
    fired = np.mean(scores >= tau)
    # quantile semantics: about target_fpr of calibration windows sit at or
    # above the threshold
    assert fired == pytest.approx(0.1, abs=0.03)

    with pytest.raises(ValueError):
        calibrate_threshold(model, val, target_fpr=0.0)


def test_calibration_warns_when_sparse(tiny_model):
    val = _toy_windows(12, t=tiny_model.window_len, d=tiny_model.d_in, seed=8)
    with pytest.warns(UserWarning, match="low-confidence"):
        calibrate_threshold(tiny_model, val, target_fpr=0.1)


def test_window_shape_rejected(tiny_model):
    bad = np.zeros((tiny_model.window_len + 1, tiny_model.d_in))
    with pytest.raises(ValueError):
        tiny_model.reconstruction_loss(bad)


def test_save_load_roundtrip(tiny_model, tmp_path):
    path = tmp_path / "model.json"
    tiny_model.save(path)
    back = LstmAeModel.load(path)
    assert back.enc_widths == tiny_model.enc_widths
    assert back.tau == tiny_model.tau
    w = _toy_windows(1, t=tiny_model.window_len, d=tiny_model.d_in, seed=9)[0]
    assert back.reconstruction_loss(w) == pytest.approx(
        tiny_model.reconstruction_loss(w), rel=1e-12)
    assert np.allclose(back.reconstruct(w), tiny_model.reconstruct(w))


def test_load_rejects_unknown_version(tiny_model, tmp_path):
    doc = tiny_model.to_dict()
    doc["version"] = 999
    with pytest.raises(ValueError):
        LstmAeModel.from_dict(doc)


def test_reconstruct_shape(tiny_model):
    w = _toy_windows(1, t=tiny_model.window_len, d=tiny_model.d_in, seed=10)[0]
    r = tiny_model.reconstruct(w)
    assert r.shape == w.shape
