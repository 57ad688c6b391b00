import math

import numpy as np
import pytest
import torch

from audioface import facegen, features, trainer
from audioface.facegen import (
    DirectProjection, FrameCritic, GanConfig, GanModel, GeneratorNet, VideoCritic, condition_vectors,
    generate_frame, generate_video, generator_loss, gradient_penalty,
)
from audioface.fhvae import ModelConfig
from audioface.synthcorpus import identity_image


@pytest.fixture(scope="module")
def net():
    torch.manual_seed(0)
    return GeneratorNet(base=4).eval()


@pytest.fixture(scope="module")
def ident(small_corpus):
    return identity_image(small_corpus.identities[0])


def test_config_defaults_and_validation():
    c = GanConfig()
    assert (c.learning_rate, c.gp_weight, c.critic_steps) == (1e-4, 10.0, 5)
    assert (c.lambda_l1, c.lambda_perc, c.lambda_mouth, c.lambda_vis) == (100.0, 10.0, 10.0, 1.0)
    with pytest.raises(ValueError):
        GanConfig(lambda_l1=-1)
    with pytest.raises(ValueError):
        GanConfig(conditioning_mode="mfcc")
    assert GanConfig.from_dict(c.to_dict()) == c


def test_generate_frame_contract(net, ident):
    c = torch.randn(32)
    with torch.no_grad():
        a = generate_frame(ident, ident, c, net)
        b = generate_frame(ident, ident, c, net)
        d = generate_frame(ident, ident, c + 1.0, net)
    assert a.shape == (64, 64) and a.min() >= 0 and a.max() <= 1
    assert torch.equal(a, b)
    assert (a - d).abs().max() > 0
    with pytest.raises(ValueError):
        generate_frame(ident, ident[:32], c, net)


def test_generate_video_contract(net, ident):
    conds = np.random.default_rng(0).normal(size=(5, 32)).astype(np.float32)
    v5 = generate_video(ident, conds, net)
    assert v5.shape == (5, 64, 64)
    v1 = generate_video(ident, conds[:1], net)
    with torch.no_grad():
        direct = generate_frame(ident, ident, conds[0], net).numpy()
    assert np.array_equal(v1[0], direct)
    for k in range(1, 5):
        assert np.array_equal(generate_video(ident, conds[:k], net), v5[:k])
    with pytest.raises(ValueError):
        generate_video(ident, np.zeros((0, 32)), net)


def test_gradient_penalty_linear_critics():
    g = torch.Generator().manual_seed(0)
    for D in (1, 7, 64):
        real, fake = torch.randn(5, D, dtype=torch.float64), torch.randn(5, D, dtype=torch.float64)
        gp = gradient_penalty(lambda x: x.sum(-1), real, fake, 10.0, g)
        assert gp.item() == pytest.approx(10.0 * (math.sqrt(D) - 1) ** 2, abs=1e-6)
        unit = gradient_penalty(lambda x: x.sum(-1) / math.sqrt(D), real, fake, 10.0, g)
        assert unit.item() == pytest.approx(0.0, abs=1e-6)


def test_gradient_penalty_nonnegative():
    critic = FrameCritic(base=4)
    real, fake = torch.rand(3, 64, 64), torch.rand(3, 64, 64)
    cond = torch.randn(3, 32)
    assert gradient_penalty(lambda x: critic.score(x, cond), real, fake).item() >= 0


def test_critic_shapes():
    fc = FrameCritic(base=4)
    score, logits = fc(torch.rand(2, 64, 64), torch.randn(2, 32))
    assert score.shape == (2,) and logits.shape == (2, 21) and torch.isfinite(score).all()
    vc = VideoCritic(base=4)
    assert vc(torch.rand(2, 8, 64, 64), torch.randn(2, 8, 32)).shape == (2,)
    with pytest.raises(ValueError):
        vc(torch.rand(2, 7, 64, 64), torch.randn(2, 7, 32))


def _tiny_model():
    torch.manual_seed(0)
    return GanModel(GanConfig(base_channels=4))


def test_generator_loss_terms():
    m = _tiny_model()
    real = torch.rand(1, 8, 64, 64)
    conds = torch.randn(1, 8, 32)
    vis = torch.randint(0, 21, (1, 8))
    mask = facegen.mouth_mask([(20, 40, 44, 54)] * 8)
    total, terms = generator_loss(real.clone(), real, conds, vis, mask, m)
    for k in ("l1", "perceptual", "mouth"):
        assert terms[k].item() == 0.0
    total, terms = generator_loss(torch.zeros(1, 8, 64, 64), torch.ones(1, 8, 64, 64), conds, vis, mask, m)
    assert terms["l1"].item() == pytest.approx(100.0)
    assert abs(sum(terms.values()).item() - total.item()) <= 1e-9


def test_perceptual_proxy_frozen_and_seeded():
    a, b = facegen.PerceptualProxy(), facegen.PerceptualProxy()
    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q) and not p.requires_grad


def test_condition_vectors_modes(small_corpus):
    feats = features.corpus_features(small_corpus, [0])[0]
    with pytest.raises(ValueError):
        condition_vectors(feats, None, "disentangled")
    proj = DirectProjection()
    proj.set_feature_stats(feats)
    out = condition_vectors(feats, None, "direct", proj)
    assert out.shape == (len(feats), 32)
    data = trainer.segment_data(small_corpus, "train")
    vae = trainer.new_model(data, ModelConfig(hidden=8))
    out = condition_vectors(feats, vae, "disentangled")
    assert out.shape == (len(feats), 32)


def _quick_cfg(**kw):
    base = dict(base_channels=4, steps=2, warmup_steps=1, critic_steps=2, batch_clips=1, clip_frames=4, log_every=0)
    base.update(kw)
    return GanConfig(**base)


def test_train_gan_schedule_and_roundtrip(small_corpus, tmp_path):
    counters = facegen.Counters()
    model, hist = facegen.train_gan(small_corpus, None, _quick_cfg(conditioning_mode="direct"), counters=counters)
    assert counters.critic_updates == 2 * counters.generator_updates == 4
    assert counters.warmup_updates == 1
    facegen.write_history(hist, tmp_path / "h.csv")
    assert "wasserstein" in (tmp_path / "h.csv").read_text().splitlines()[0]
    facegen.save_gan(tmp_path / "g.npz", model)
    loaded, meta = facegen.load_gan(tmp_path / "g.npz")
    assert meta["config"]["conditioning_mode"] == "direct"
    for (k, a), (_, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(a, b), k
    with pytest.raises(FileNotFoundError):
        facegen.load_gan(tmp_path / "missing.npz")


def test_train_gan_needs_vae(small_corpus):
    with pytest.raises(ValueError):
        facegen.train_gan(small_corpus, None, _quick_cfg())


def test_vae_frozen_during_gan_training(small_corpus):
    data = trainer.segment_data(small_corpus, "train")
    vae = trainer.new_model(data, ModelConfig(hidden=8))
    before = {k: v.clone() for k, v in vae.state_dict().items()}
    facegen.train_gan(small_corpus, vae, _quick_cfg())
    for k, v in vae.state_dict().items():
        assert torch.equal(before[k], v), k


def test_modes_share_pipeline(small_corpus):
    """Swapping the mode changes only the condition source, not the networks."""
    a = GanModel(GanConfig(conditioning_mode="direct", base_channels=4))
    b = GanModel(GanConfig(conditioning_mode="disentangled", base_channels=4))
    ka = {k for k in a.state_dict() if not k.startswith("projection")}
    assert ka == set(b.state_dict())


def test_evaluate_noise_rows(small_corpus):
    model = GanModel(GanConfig(conditioning_mode="direct", base_channels=4))
    model.projection.set_feature_stats(np.concatenate(features.corpus_features(small_corpus)))
    rows = facegen.evaluate_noise(model, small_corpus, ["clean", -30])
    assert [r["level_db"] for r in rows] == ["clean", -30]
    assert all(r["lmd"] >= 0 for r in rows)


def test_frame_classifier_on_real_frames(small_corpus):
    clf = facegen.fit_frame_classifier(small_corpus, "all")
    acc = facegen.frame_classifier_accuracy(clf, small_corpus, {i: small_corpus.frames[i] for i in small_corpus.indices()})
    assert acc == 100.0
