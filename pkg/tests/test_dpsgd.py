"""DP-SGD mechanics: clipping, noising, stepping, lot sampling, training."""

import math

import numpy as np
import pytest

from dpdesk.data import FeaturizedData
from dpdesk.dpsgd import (ConfigurationError, OptimizerConfig, PrivacyParams,
                          clip, noisy_aggregate, sample_lot, step, train)
from dpdesk.models import (FeaturizerSpec, ModelSpec, TrainStrategy,
                           apply_strategy, build, flatten_trainable, predict)
from dpdesk.rng import Rng, gaussian, l2_norm


def test_clip_scales_to_threshold():
    g = np.array([6.0, 8.0])  # norm 10
    out = clip(g, 5.0)
    assert abs(l2_norm(out) - 5.0) < 1e-12
    assert np.max(np.abs(out - g / 2.0)) < 1e-12


def test_clip_identity_below_threshold():
    g = np.array([0.3, 0.4])
    assert clip(g, 1.0) is g


def test_clip_rejects_bad_threshold():
    with pytest.raises(ValueError):
        clip(np.ones(3), 0.0)


def test_clip_fuzz_norm_and_direction():
    rng = Rng(77)
    for _ in range(1000):
        dim = 1 + int(rng.uniform(1)[0] * 20)
        g = gaussian(rng, 3.0, dim)
        c = float(rng.uniform(1)[0] * 10) + 1e-6
        out = clip(g, c)
        assert l2_norm(out) <= c + 1e-12
        if l2_norm(g) <= c:
            assert np.array_equal(out, g)
        elif l2_norm(g) > 0:
            cos = float(out @ g) / (l2_norm(out) * l2_norm(g))
            assert abs(cos - 1.0) < 1e-12


def test_noisy_aggregate_sigma_zero_is_mean():
    rng = Rng(5)
    grads = [gaussian(rng, 1.0, 6) for _ in range(4)]
    grads = [clip(g, 1.0) for g in grads]
    out = noisy_aggregate(grads, 0.0, 1.0, 4, Rng(0))
    assert np.max(np.abs(out - np.mean(grads, axis=0))) < 1e-15


def test_noisy_aggregate_empty_lot():
    out = noisy_aggregate([], 0.0, 1.0, 8, Rng(0), dim=5)
    assert np.array_equal(out, np.zeros(5))
    with pytest.raises(ValueError):
        noisy_aggregate([], 0.0, 1.0, 8, Rng(0))


def test_noisy_aggregate_negative_sigma_rejected():
    with pytest.raises(ValueError):
        noisy_aggregate([np.zeros(3)], -1.0, 1.0, 1, Rng(0))


def test_noise_variance_monte_carlo():
    # Per-coordinate variance of the injected noise is sigma^2 C^2 / L^2.
    for seed, (sigma, c, L) in enumerate([(1.0, 1.0, 1), (2.0, 3.0, 10),
                                          (0.5, 2.0, 4)]):
        out = noisy_aggregate([np.zeros(10**5)], sigma, c, L, Rng(seed))
        want = (sigma * c / L) ** 2
        assert abs(np.var(out) - want) / want < 0.05


def test_step_arithmetic():
    theta = np.array([1.0, 1.0])
    assert np.array_equal(step(theta, np.array([2.0, -2.0]), 0.5),
                          np.array([0.0, 2.0]))
    assert np.array_equal(step(theta, np.array([5.0, 5.0]), 0.0), theta)
    with pytest.raises(ValueError):
        step(theta, np.zeros(3), 0.1)


def test_sample_lot_q1_all_ascending():
    idx = sample_lot(10, 1.0, Rng(0))
    assert np.array_equal(idx, np.arange(10))


def test_sample_lot_rejects_bad_rate():
    for q in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            sample_lot(10, q, Rng(0))


def test_sample_lot_mean_size():
    rng = Rng(13)
    sizes = [len(sample_lot(10**4, 0.01, rng)) for _ in range(10**4)]
    assert abs(np.mean(sizes) - 100.0) / 100.0 < 0.03


def test_sample_lot_seed_determinism():
    assert np.array_equal(sample_lot(500, 0.1, Rng(21)),
                          sample_lot(500, 0.1, Rng(21)))


def test_privacy_params_contracts():
    with pytest.raises(ConfigurationError):
        PrivacyParams(1.0, 1e-5, 1.0, 0.0, 32, 0.1, 10)  # finite eps, sigma 0
    with pytest.raises(ConfigurationError):
        PrivacyParams(math.inf, 1e-5, 1.0, 1.0, 32, 0.1, 10)
    with pytest.raises(ConfigurationError):
        PrivacyParams(1.0, 0.0, 1.0, 1.0, 32, 0.1, 10)
    with pytest.raises(ConfigurationError):
        PrivacyParams(1.0, 1e-5, -1.0, 1.0, 32, 0.1, 10)
    assert PrivacyParams(1.0, 1e-5, 1.0, 1.0, 32, 0.1, 10).private
    assert not PrivacyParams(math.inf, 1e-5, 1.0, 0.0, 32, 0.1, 10).private


def test_optimizer_config_lr_range():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(0.5, 1, 0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(1e-6, 1, 0)
    OptimizerConfig(0.1, 1, 0)
    OptimizerConfig(1e-5, 1, 0)


def _separable_set(n=200, dim=8, margin=4.0):
    """Two linearly separable clusters, labels split evenly."""
    rng = Rng(101)
    X = gaussian(rng, 0.5, (n, dim))
    labels = np.arange(n) % 2
    X[:, 0] += np.where(labels == 0, -margin, margin)
    starts = np.arange(n + 1, dtype=np.int64)
    return FeaturizedData(X, labels.astype(np.int64), starts, ["a", "b"],
                          "classification")


def test_nonprivate_reaches_high_accuracy_on_separable_data():
    data = _separable_set()
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), classes=2)
    model = build(spec, Rng(1))
    privacy = PrivacyParams(math.inf, 1e-5, 1.0, 0.0, 32, 32 / 200, 350)
    opt = OptimizerConfig(0.1, 50, seed=2)
    trained, history = train(model, data, TrainStrategy("head"), privacy, opt)
    acc = float(np.mean(predict(trained, data.X) == data.labels))
    assert acc >= 0.99
    assert len(history) == 50


def test_dp_path_degenerates_to_plain_sgd():
    data = _separable_set(n=60)
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), hidden=((5, "tanh"),),
                     classes=2)
    model = build(spec, Rng(3))
    strat = TrainStrategy("all")
    mask = apply_strategy(model, strat)
    # sigma = 0, C huge, q = 1: the DP loop is exact full-batch SGD
    privacy = PrivacyParams(math.inf, 1e-5, 1e9, 0.0, 60, 1.0, 100)
    opt = OptimizerConfig(0.05, 100, seed=4)
    dp_model, _ = train(model, data, strat, privacy, opt, use_dp_path=True)
    sgd_model, _ = train(model, data, strat, privacy, opt, use_dp_path=False)
    diff = np.max(np.abs(flatten_trainable(dp_model, mask)
                         - flatten_trainable(sgd_model, mask)))
    assert diff < 1e-10


def test_frozen_groups_bit_identical_after_training():
    data = _separable_set(n=80)
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8),
                     hidden=((6, "tanh"), (5, "tanh")), classes=2)
    model = build(spec, Rng(7))
    privacy = PrivacyParams(2.0, 1e-5, 1.0, 2.0, 16, 16 / 80, 25)
    opt = OptimizerConfig(0.05, 5, seed=8)
    trained, _ = train(model, data, TrainStrategy("last_k", 1), privacy, opt)
    for name in ("featurizer", "hidden_1"):
        for a, b in zip(model.group(name).arrays, trained.group(name).arrays):
            assert np.array_equal(a, b)
    moved = any(
        not np.array_equal(a, b)
        for name in ("hidden_2", "output")
        for a, b in zip(model.group(name).arrays, trained.group(name).arrays)
    )
    assert moved


def test_private_training_is_deterministic():
    data = _separable_set(n=80)
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), classes=2)
    privacy = PrivacyParams(1.0, 1e-5, 1.0, 3.0, 16, 16 / 80, 15)
    opt = OptimizerConfig(0.05, 3, seed=9)

    def run_once():
        model = build(spec, Rng(10))
        trained, history = train(model, data, TrainStrategy("head"), privacy, opt)
        mask = apply_strategy(trained, TrainStrategy("head"))
        return flatten_trainable(trained, mask).tobytes(), \
            [h["loss"] for h in history]

    (ta, la), (tb, lb) = run_once(), run_once()
    assert ta == tb and la == lb


def test_step_accounting_mismatch_rejected():
    data = _separable_set(n=80)
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), classes=2)
    model = build(spec, Rng(1))
    privacy = PrivacyParams(1.0, 1e-5, 1.0, 3.0, 16, 16 / 80, 999)
    opt = OptimizerConfig(0.05, 3, seed=0)
    with pytest.raises(ConfigurationError):
        train(model, data, TrainStrategy("head"), privacy, opt)


def test_sampling_rate_dataset_mismatch_rejected():
    data = _separable_set(n=80)
    spec = ModelSpec(FeaturizerSpec("hashed_bow", 8), classes=2)
    model = build(spec, Rng(1))
    privacy = PrivacyParams(1.0, 1e-5, 1.0, 3.0, 16, 0.5, 15)
    opt = OptimizerConfig(0.05, 3, seed=0)
    with pytest.raises(ConfigurationError):
        train(model, data, TrainStrategy("head"), privacy, opt)
