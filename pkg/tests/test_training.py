import json

import numpy as np
import pytest

from chatbci.decoder import DecoderConfig, build
from chatbci.errors import SplitError
from chatbci.training import (
    Augmenter,
    AugmentSpec,
    PipelineConfig,
    TrainConfig,
    augment,
    fit,
    split,
    train,
)

from conftest import make_epochs, noise_recording, separable_recording
from chatbci.datastore import save_recording
from chatbci.preprocess import epoch


SMALL_DECODER = dict(
    temporal_filters=4, temporal_kernel=13, spatial_filters=8,
    pool_length=40, pool_stride=10, dropout_p=0.0,
)


def labeled_epochs(n_per_class=18, n_channels=3, n_samples=200, seed=0):
    rng = np.random.default_rng(seed)
    n = 4 * n_per_class
    data = rng.normal(size=(n, n_channels, n_samples))
    labels = np.tile(np.arange(4), n_per_class)
    return make_epochs(data, labels)


# -- split -------------------------------------------------------------------


def test_split_val_counts_follow_round_rule():
    ep = labeled_epochs(n_per_class=72)
    train_ep, val_ep = split(ep, 0.2, seed=0)
    # round(0.2 * 72) = round(14.4) = 14
    for ci in range(4):
        assert (val_ep.labels == ci).sum() == 14
        assert (train_ep.labels == ci).sum() == 58


def test_split_round_half_to_even():
    ep = labeled_epochs(n_per_class=10)
    train_ep, val_ep = split(ep, 0.25, seed=0)
    # round(2.5) = 2 under banker's rounding
    for ci in range(4):
        assert (val_ep.labels == ci).sum() == 2


def test_split_deterministic_under_seed():
    ep = labeled_epochs()
    a_train, a_val = split(ep, 0.2, seed=5)
    b_train, b_val = split(ep, 0.2, seed=5)
    assert np.array_equal(a_train.data, b_train.data)
    assert np.array_equal(a_val.data, b_val.data)
    c_train, _ = split(ep, 0.2, seed=6)
    assert not np.array_equal(a_train.data, c_train.data)


def test_split_is_partition():
    ep = labeled_epochs(n_per_class=11)
    train_ep, val_ep = split(ep, 0.3, seed=1)
    assert train_ep.n_trials + val_ep.n_trials == ep.n_trials
    key = lambda e: {e.data[t].tobytes() for t in range(e.n_trials)}
    union = key(train_ep) | key(val_ep)
    assert union == key(ep)
    assert not (key(train_ep) & key(val_ep))


def test_split_single_trial_class_errors():
    ep = labeled_epochs(n_per_class=3)
    labels = ep.labels.copy()
    keep = np.flatnonzero(labels == 0)[1:]  # drop all but one trial of class 0
    mask = np.ones(ep.n_trials, dtype=bool)
    mask[keep] = False
    ep = ep.subset(np.flatnonzero(mask))
    with pytest.raises(SplitError):
        split(ep, 0.2, seed=0)


# -- augmentation ----------------------------------------------------------


def test_augment_all_probabilities_zero_is_identity():
    ep = labeled_epochs(seed=3)
    rng = np.random.default_rng(0)
    out = augment(ep.data, AugmentSpec.disabled(), rng)
    assert np.array_equal(out, ep.data)


def test_circular_shift_inverse():
    trial = np.random.default_rng(1).normal(size=(2, 100))
    shifted = np.roll(trial, 13, axis=1)
    assert np.array_equal(np.roll(shifted, -13, axis=1), trial)
    # the augmenter wraps rather than pads
    spec = AugmentSpec(noise_p=0, shift_p=1.0, shift_max_s=0.1, channel_dropout_p=0)
    aug = Augmenter(spec, sampling_rate_hz=100.0, channel_sd=np.ones(2))
    out = aug(trial[None], np.random.default_rng(2))
    assert sorted(out[0, 0].tolist()) == sorted(trial[0].tolist())


def test_noise_monte_carlo_mean():
    spec = AugmentSpec(noise_p=1.0, noise_sigma_scale=0.1, shift_p=0.0, channel_dropout_p=0.0)
    aug = Augmenter(spec, sampling_rate_hz=250.0, channel_sd=np.ones(1))
    rng = np.random.default_rng(7)
    n = 10_000
    zero = np.zeros((n, 1, 20))
    out = aug(zero, rng)
    per_sample_mean = out.mean(axis=0)
    se = 0.1 / np.sqrt(n)
    assert np.abs(per_sample_mean).max() < 3 * se


def test_noise_sigma_scales_with_channel_sd():
    spec = AugmentSpec(noise_p=1.0, noise_sigma_scale=0.1, shift_p=0.0, channel_dropout_p=0.0)
    aug = Augmenter(spec, 250.0, channel_sd=np.array([1.0, 10.0]))
    out = aug(np.zeros((2000, 2, 50)), np.random.default_rng(8))
    sds = out.std(axis=(0, 2))
    assert np.isclose(sds[0], 0.1, rtol=0.1)
    assert np.isclose(sds[1], 1.0, rtol=0.1)


def test_channel_dropout_zeroes_channels():
    spec = AugmentSpec(noise_p=0.0, shift_p=0.0, channel_dropout_p=1.0)
    aug = Augmenter(spec, 250.0, channel_sd=np.ones(3))
    out = aug(np.ones((4, 3, 10)), np.random.default_rng(9))
    assert np.allclose(out, 0.0)


def test_augment_does_not_mutate_input():
    ep = labeled_epochs(seed=4)
    before = ep.data.copy()
    augment(ep.data, AugmentSpec(), np.random.default_rng(0))
    assert np.array_equal(ep.data, before)


# -- fit loop -----------------------------------------------------------------


def test_overfit_eight_trials():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(8, 3, 200))
    labels = np.tile(np.arange(4), 2)
    ep = make_epochs(data, labels)
    cfg = TrainConfig(
        learning_rate=1e-2, batch_size=8, max_epochs=200, early_stop_patience=200,
        val_fraction=0.5, augment=AugmentSpec.disabled(), seed=0,
    )
    model = build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=0)
    result = fit(model, ep, ep, cfg)  # monitor accuracy on the training set itself
    assert result.best_val_acc == 1.0
    assert result.best_epoch < 200


def test_untrained_model_is_at_chance_on_balanced_data():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(400, 3, 200))
    labels = np.tile(np.arange(4), 100)
    model = build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=3)
    from chatbci.decoder import predict

    acc = (predict(model, data) == labels).mean()
    assert 0.10 <= acc <= 0.40  # ~0.25 for any label-independent predictor


def test_fit_deterministic_with_fixed_seeds():
    ep = labeled_epochs(n_per_class=10, seed=5)
    train_ep, val_ep = split(ep, 0.2, seed=0)
    cfg = TrainConfig(max_epochs=5, early_stop_patience=5,
                      augment=AugmentSpec.disabled(), seed=9)
    r1 = fit(build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=1),
             train_ep, val_ep, cfg)
    r2 = fit(build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=1),
             train_ep, val_ep, cfg)
    assert r1.history == r2.history


def test_fit_best_val_acc_equals_log_maximum():
    ep = labeled_epochs(n_per_class=10, seed=6)
    train_ep, val_ep = split(ep, 0.2, seed=0)
    cfg = TrainConfig(max_epochs=8, early_stop_patience=8,
                      augment=AugmentSpec.disabled(), seed=2)
    result = fit(build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=1),
                 train_ep, val_ep, cfg)
    assert result.best_val_acc == max(r["val_acc"] for r in result.history)


def test_fit_nan_divergence_reports_failed():
    ep = labeled_epochs(n_per_class=4, seed=7)
    data = ep.data.copy()
    data[0, 0, 0] = np.nan
    poisoned = make_epochs(data, ep.labels)
    cfg = TrainConfig(max_epochs=5, early_stop_patience=5,
                      augment=AugmentSpec.disabled(), seed=0, batch_size=64)
    result = fit(build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=1),
                 poisoned, ep, cfg)
    assert result.status == "failed"
    assert result.failed_epoch == 0


def test_fit_stop_callback():
    ep = labeled_epochs(n_per_class=4, seed=8)
    cfg = TrainConfig(max_epochs=5, early_stop_patience=5, seed=0)
    result = fit(build(DecoderConfig(n_channels=3, n_samples=200, **SMALL_DECODER), seed=1),
                 ep, ep, cfg, should_stop=lambda: True)
    assert result.status == "stopped"
    assert result.history == []


# -- subject-level train() ----------------------------------------------------


@pytest.fixture
def subject_dataset(tmp_path):
    data_dir = tmp_path / "data"
    for session, seed in (("train", 10), ("eval", 20)):
        rec = separable_recording(
            n_trials_per_class=12, trial_s=1.0, gap_s=0.2, seed=seed,
            subject_id="S01", session=session,
        )
        save_recording(rec, data_dir / f"S01_{session}")
    return data_dir


def run_config():
    return TrainConfig(
        learning_rate=3e-3, batch_size=16, max_epochs=6, early_stop_patience=6,
        val_fraction=0.25, augment=AugmentSpec.disabled(), seed=0,
    )


def small_pipeline():
    return PipelineConfig(car=False, filters=(), window_s=(0.0, 1.0))


def test_train_produces_artifacts_and_audit(tmp_path, subject_dataset):
    out_dir = tmp_path / "runs"
    run = train("S01", SMALL_DECODER, run_config(), data_dir=subject_dataset,
                out_dir=out_dir, pipeline=small_pipeline())
    assert run.status == "finished"
    run_dir = out_dir / run.run_id
    files = sorted(p.name for p in run_dir.iterdir())
    assert files == ["best.ckpt", "config.json", "confusion.json", "metrics.jsonl"]

    lines = (run_dir / "metrics.jsonl").read_text().strip().splitlines()
    assert len(lines) == len(run.epochs)
    assert json.loads(lines[0])["epoch"] == 0

    # eval session untouched, and every gradient batch came from the train split
    assert run.audit["eval_hash_before"] == run.audit["eval_hash_after"]
    epochs_run = len(run.epochs)
    assert run.audit["trials_seen"] == epochs_run * run.audit["train_trials"]

    # confusion rows sum to per-class eval counts
    confusion = np.array(run.confusion)
    assert confusion.sum() == run.audit["eval_trials"]
    assert run.best_val_acc == max(r["val_acc"] for r in run.epochs)
    assert 0.0 <= run.eval_accuracy <= 1.0


def test_train_missing_session_errors(tmp_path, subject_dataset):
    from chatbci.errors import PreconditionError

    with pytest.raises(PreconditionError):
        train("S99", SMALL_DECODER, run_config(), data_dir=subject_dataset,
              out_dir=tmp_path / "runs", pipeline=small_pipeline())


def test_train_reproducible_metric_logs(tmp_path, subject_dataset):
    r1 = train("S01", SMALL_DECODER, run_config(), data_dir=subject_dataset,
               out_dir=tmp_path / "a", pipeline=small_pipeline())
    r2 = train("S01", SMALL_DECODER, run_config(), data_dir=subject_dataset,
               out_dir=tmp_path / "b", pipeline=small_pipeline())
    assert r1.epochs == r2.epochs
    assert r1.eval_accuracy == r2.eval_accuracy


def test_train_include_eog_changes_channel_count(tmp_path):
    data_dir = tmp_path / "data"
    for session, seed in (("train", 1), ("eval", 2)):
        rec = noise_recording(n_eeg=3, n_eog=2, events_per_class=4, trial_s=1.0,
                              seed=seed, subject_id="S02", session=session)
        save_recording(rec, data_dir / f"S02_{session}")
    cfg = dict(SMALL_DECODER)
    cfg["include_eog"] = True
    run = train("S02", cfg, run_config(), data_dir=data_dir,
                out_dir=tmp_path / "runs", pipeline=small_pipeline())
    config = json.loads((tmp_path / "runs" / run.run_id / "config.json").read_text())
    assert config["decoder"]["n_channels"] == 5
