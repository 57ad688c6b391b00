import dataclasses
import math

import numpy as np
import pytest
import torch

from audioface import fhvae, trainer
from audioface.fhvae import Hyperparams, ModelConfig
from audioface.synthcorpus import CorpusConfig, generate_corpus

MC = ModelConfig(hidden=16)


@pytest.fixture(scope="module")
def data(small_corpus):
    return trainer.segment_data(small_corpus, "train")


@pytest.fixture(scope="module")
def pretrained(data):
    return trainer.pretrain_content(data, trainer.TrainConfig(stage="content", epochs=6, batch_size=16), MC)


def test_config_validation():
    with pytest.raises(ValueError):
        trainer.TrainConfig(stage="middle")
    with pytest.raises(ValueError):
        trainer.TrainConfig(learning_rate=0)
    c = trainer.TrainConfig()
    assert (c.learning_rate, c.adam_betas, c.adam_eps, c.batch_size, c.clip_norm) == (1e-3, (0.9, 0.999), 1e-8, 64, 5.0)


def test_segment_data_alignment(small_corpus, data):
    idx = small_corpus.indices("train")
    assert len(data) == sum(small_corpus.factors[i].num_segments for i in idx)
    assert data.x.shape[1:] == (20, 200)
    assert len(data.sequence_ids) == len(idx)
    with pytest.raises(ValueError):
        trainer.segment_data(generate_corpus(CorpusConfig(num_sequences=2, min_segments=3, max_segments=3,
                                                          test_fraction=0.0)), "test")


def test_history_length_and_trend(data, pretrained):
    _, hist = pretrained
    steps_per_epoch = math.ceil(len(data) / 16)
    assert len(hist) == 6 * steps_per_epoch
    assert [r["epoch"] for r in hist] == sorted(r["epoch"] for r in hist)
    # two steps per epoch here, so compare epoch blocks rather than neighbours
    means = trainer.epoch_means(hist, "loss")
    assert np.mean(means[-2:]) < np.mean(means[:2])


def test_pretrain_touches_only_content(data):
    torch.manual_seed(0)
    init = trainer.new_model(data, MC)
    before = {k: v.clone() for k, v in init.state_dict().items()}
    model, _ = trainer.pretrain_content(data, trainer.TrainConfig(stage="content", epochs=1, batch_size=32), MC,
                                        model=init)
    after = model.state_dict()
    for k in before:
        changed = not torch.equal(before[k], after[k])
        frozen = k.startswith(("emotion_encoder", "sequence_encoder", "mu_e", "mu_s", "feature"))
        assert changed != frozen, k


def test_first_step_deterministic(data):
    cfg = trainer.TrainConfig(epochs=1, batch_size=16, seed=2)
    a = trainer.train_full(data, cfg, model_config=MC)[1][0]["loss"]
    b = trainer.train_full(data, cfg, model_config=MC)[1][0]["loss"]
    assert a == pytest.approx(b, abs=1e-6)


def test_full_training_margin_decreases_and_roundtrip(data, pretrained, tmp_path):
    model, hist = trainer.train_full(data, trainer.TrainConfig(epochs=20, batch_size=16), pretrained[0], MC)
    margin = np.add(trainer.epoch_means(hist, "margin_v"), trainer.epoch_means(hist, "margin_e"))
    assert margin[-3:].mean() < margin[:3].mean()
    fhvae.save_checkpoint(tmp_path / "v.npz", model)
    reloaded, _ = fhvae.load_checkpoint(tmp_path / "v.npz")
    assert trainer.evaluation_loss(model, data, limit=32) == trainer.evaluation_loss(reloaded, data, limit=32)
    trainer.write_history(hist, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().startswith("step,epoch,loss")


def test_beta_zero_never_evaluates_margin(data):
    model, hist = trainer.train_full(data, trainer.TrainConfig(epochs=1, batch_size=32), None, MC,
                                     Hyperparams(beta=0.0))
    assert model.margin_evaluations == 0
    assert "margin_v" not in hist[0]


def test_table_size_mismatch(data, pretrained):
    bad = fhvae.FHVAE(dataclasses.replace(MC, num_sequences=len(data.sequence_ids) + 1))
    with pytest.raises(ValueError, match="sequence table"):
        trainer.train_full(data, trainer.TrainConfig(epochs=1), bad)


def test_nonfinite_steps_rejected(data):
    """A poisoned batch is rejected and parameters stay finite."""
    cfg = trainer.TrainConfig(epochs=1, batch_size=len(data))
    poisoned = dataclasses.replace(data, x=data.x.copy())
    poisoned.x[0, 0, 0] = np.nan
    model = trainer.new_model(data, MC)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    with pytest.raises(trainer.NumericalError):
        trainer.train_full(poisoned, cfg, model, MC)
    assert all(torch.isfinite(v).all() for v in before.values())


def test_noise_augmentation_runs(small_corpus, data):
    _, hist = trainer.train_full(data, trainer.TrainConfig(epochs=1, batch_size=64, noise_augment_db=-20), None,
                                 MC, corpus=small_corpus)
    assert all(np.isfinite(r["loss"]) for r in hist)


def test_augmented_x_flips_half(small_corpus, data):
    x = trainer._augmented_x(small_corpus, data, -10, epoch=0, seed=0)
    assert x.shape == data.x.shape
    assert not np.array_equal(x, data.x)
