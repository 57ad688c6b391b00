"""Toy-scale talking-head generator with frame and video WGAN-GP critics.

The generator is a small U-Net that sees the still identity image, the
previous output frame and a 32-d condition vector broadcast over the image.
Videos are generated autoregressively, one frame per audio segment.  The
condition comes either from the frozen VAE's content posterior means
(``disentangled``) or from a learned affine projection of the raw spectrogram
segment (``direct``); nothing else in the pipeline depends on the mode.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import features
from .synthcorpus import NUM_VISEMES, identity_image

log = logging.getLogger(__name__)

MODES = ("disentangled", "direct")


@dataclasses.dataclass(frozen=True)
class GanConfig:
    conditioning_mode: str = "disentangled"
    learning_rate: float = 1e-4
    adam_betas: tuple = (0.5, 0.9)
    gp_weight: float = 10.0
    critic_steps: int = 5
    lambda_l1: float = 100.0
    lambda_perc: float = 10.0
    lambda_mouth: float = 10.0
    lambda_vis: float = 1.0
    clip_frames: int = 8
    batch_clips: int = 4
    steps: int = 1000
    warmup_steps: int = 0
    warmup_learning_rate: float | None = None
    seed: int = 0
    base_channels: int = 16
    cond_dim: int = 32
    augment_noise_db: float | None = None
    joint_finetune: bool = False
    log_every: int = 50

    def __post_init__(self):
        if self.conditioning_mode not in MODES:
            raise ValueError(f"conditioning_mode must be one of {MODES}")
        weights = (self.gp_weight, self.lambda_l1, self.lambda_perc, self.lambda_mouth, self.lambda_vis)
        if min(weights) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.warmup_steps < 0 or self.critic_steps < 0 or self.clip_frames < 1 or self.batch_clips < 1:
            raise ValueError("bad schedule sizes")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        if "adam_betas" in kw:
            kw["adam_betas"] = tuple(kw["adam_betas"])
        return cls(**kw)


def broadcast(cond, size):
    return cond[:, :, None, None].expand(-1, -1, size, size)


class GeneratorNet(nn.Module):
    """U-Net over (identity, previous frame, broadcast condition) -> frame in [0, 1].

    The input stack is 2 + cond_dim channels at full resolution.
    """

    def __init__(self, cond_dim=32, base=16):
        super().__init__()
        b = base
        act = lambda: nn.LeakyReLU(0.2)  # noqa: E731
        self.enc1 = nn.Sequential(nn.Conv2d(2 + cond_dim, b, 3, padding=1), act())
        self.enc2 = nn.Sequential(nn.Conv2d(b, 2 * b, 4, 2, 1), act())
        self.enc3 = nn.Sequential(nn.Conv2d(2 * b, 4 * b, 4, 2, 1), act())
        self.enc4 = nn.Sequential(nn.Conv2d(4 * b, 4 * b, 4, 2, 1), act())
        # the condition is also re-injected at the bottleneck so it is not squeezed through enc1 alone
        self.dec3 = nn.Sequential(nn.ConvTranspose2d(4 * b + cond_dim, 4 * b, 4, 2, 1), nn.ReLU())
        self.dec2 = nn.Sequential(nn.ConvTranspose2d(8 * b, 2 * b, 4, 2, 1), nn.ReLU())
        self.dec1 = nn.Sequential(nn.ConvTranspose2d(4 * b, b, 4, 2, 1), nn.ReLU())
        self.out = nn.Conv2d(2 * b, 1, 3, padding=1)

    def forward(self, identity, prev, cond):
        size = identity.shape[-1]
        x = torch.cat([identity[:, None], prev[:, None], broadcast(cond, size)], dim=1)
        e1 = self.enc1(x)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        e4 = self.enc4(e3)
        d3 = self.dec3(torch.cat([e4, broadcast(cond, e4.shape[-1])], 1))
        d2 = self.dec2(torch.cat([d3, e3], 1))
        d1 = self.dec1(torch.cat([d2, e2], 1))
        y = torch.sigmoid(self.out(torch.cat([d1, e1], 1)))
        return y[:, 0].clamp(0.0, 1.0)


class FrameCritic(nn.Module):
    """PatchGAN critic on (frame + broadcast condition) with an auxiliary viseme head."""

    def __init__(self, cond_dim=32, base=16, num_visemes=NUM_VISEMES):
        super().__init__()
        b = base
        self.body = nn.Sequential(
            nn.Conv2d(1 + cond_dim, b, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(b, 2 * b, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * b, 4 * b, 4, 2, 1), nn.LeakyReLU(0.2),
        )
        self.patch = nn.Conv2d(4 * b, 1, 3, padding=1)
        self.viseme = nn.Linear(4 * b, num_visemes)

    def forward(self, frame, cond):
        h = self.body(torch.cat([frame[:, None], broadcast(cond, frame.shape[-1])], 1))
        return self.patch(h).mean(dim=(1, 2, 3)), self.viseme(h.mean(dim=(2, 3)))

    def score(self, frame, cond):
        return self.forward(frame, cond)[0]


class VideoCritic(nn.Module):
    """3D convolutional critic over K stacked frames with per-frame broadcast conditions."""

    def __init__(self, cond_dim=32, base=16, clip_frames=8):
        super().__init__()
        b = base
        self.clip_frames = clip_frames
        self.body = nn.Sequential(
            nn.Conv3d(1 + cond_dim, b, (3, 4, 4), (1, 2, 2), 1), nn.LeakyReLU(0.2),
            nn.Conv3d(b, 2 * b, (3, 4, 4), (2, 2, 2), 1), nn.LeakyReLU(0.2),
            nn.Conv3d(2 * b, 4 * b, (3, 4, 4), (2, 2, 2), 1), nn.LeakyReLU(0.2),
            nn.Conv3d(4 * b, 1, 3, padding=1),
        )

    def forward(self, clip, cond):
        # clip (B, K, H, W); cond (B, K, C)
        if clip.shape[1] != self.clip_frames:
            raise ValueError(f"video critic needs exactly {self.clip_frames} frames, got {clip.shape[1]}")
        size = clip.shape[-1]
        c = cond.permute(0, 2, 1)[:, :, :, None, None].expand(-1, -1, -1, size, size)
        return self.body(torch.cat([clip[:, None], c], 1)).mean(dim=(1, 2, 3, 4))


class PerceptualProxy(nn.Module):
    """Frozen, seeded random 3-level conv pyramid; distance is mean L1 over feature maps."""

    def __init__(self, seed=1234):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        self.layers = nn.ModuleList([
            nn.Conv2d(1, 8, 3, 1, 1), nn.Conv2d(8, 16, 3, 2, 1), nn.Conv2d(16, 32, 3, 2, 1)])
        for layer in self.layers:
            with torch.no_grad():
                fan_in = layer.weight[0].numel()
                layer.weight.copy_(torch.randn(layer.weight.shape, generator=g) / np.sqrt(fan_in))
                layer.bias.zero_()
            layer.requires_grad_(False)

    def distance(self, a, b):
        ha, hb = a[:, None], b[:, None]
        total = 0.0
        for layer in self.layers:
            ha, hb = F.leaky_relu(layer(ha), 0.2), F.leaky_relu(layer(hb), 0.2)
            total = total + (ha - hb).abs().mean()
        return total / len(self.layers)


class DirectProjection(nn.Module):
    """Affine map from a standardized 20x200 spectrogram segment to a condition vector."""

    def __init__(self, frames=20, bins=200, cond_dim=32):
        super().__init__()
        self.linear = nn.Linear(frames * bins, cond_dim)
        self.register_buffer("feature_mean", torch.zeros(bins))
        self.register_buffer("feature_std", torch.ones(bins))

    def set_feature_stats(self, segments):
        flat = torch.as_tensor(np.asarray(segments)).reshape(-1, self.feature_mean.numel()).double()
        self.feature_mean.copy_(flat.mean(0).float())
        self.feature_std.copy_(flat.std(0).clamp_min(1e-3).float())

    def forward(self, x):
        x = (torch.as_tensor(x, dtype=torch.float32) - self.feature_mean) / self.feature_std
        return self.linear(x.reshape(x.shape[0], -1))


def condition_vectors(segments, vae=None, mode="disentangled", projection: DirectProjection | None = None):
    """One 32-d condition per spectrogram segment (``segments`` is (N, 20, 200))."""
    x = torch.as_tensor(np.asarray(segments), dtype=torch.float32)
    if mode == "disentangled":
        if vae is None:
            raise ValueError("disentangled conditioning needs a trained VAE checkpoint")
        with torch.no_grad():
            return vae.encode_content(x.to(vae.feature_mean.dtype)).mean.float()
    if mode == "direct":
        if projection is None:
            raise ValueError("direct conditioning needs the jointly trained projection")
        with torch.no_grad():
            return projection(x)
    raise ValueError(f"unknown conditioning mode {mode!r}")


def generate_frame(identity, prev_frame, condition, net: GeneratorNet):
    identity = torch.as_tensor(identity, dtype=torch.float32)
    prev_frame = torch.as_tensor(prev_frame, dtype=torch.float32)
    condition = torch.as_tensor(condition, dtype=torch.float32)
    single = identity.ndim == 2
    if single:
        identity, prev_frame, condition = identity[None], prev_frame[None], condition[None]
    if identity.shape != prev_frame.shape or identity.shape[-2:] != (64, 64):
        raise ValueError(f"identity {tuple(identity.shape)} and previous frame "
                         f"{tuple(prev_frame.shape)} must both be 64x64")
    out = net(identity, prev_frame, condition)
    return out[0] if single else out


def generate_video(identity, conditions, net: GeneratorNet):
    """Autoregressive rollout: frame n sees frame n-1; the first frame sees the identity image."""
    conditions = torch.as_tensor(np.asarray(conditions), dtype=torch.float32)
    if conditions.ndim != 2 or conditions.shape[0] == 0:
        raise ValueError("need at least one condition vector")
    identity = torch.as_tensor(identity, dtype=torch.float32)
    frames = []
    prev = identity
    with torch.no_grad():
        for c in conditions:
            prev = generate_frame(identity, prev, c, net)
            frames.append(prev)
    return torch.stack(frames).numpy()


def _rollout(gen, identity, conds):
    """Differentiable rollout over a batch of clips; identity (B,H,W), conds (B,K,C) -> (B,K,H,W)."""
    prev = identity
    out = []
    for k in range(conds.shape[1]):
        prev = gen(identity, prev, conds[:, k])
        out.append(prev)
    return torch.stack(out, 1)


def gradient_penalty(critic, real, fake, weight=10.0, generator=None):
    """``weight * (||grad critic(x_hat)|| - 1)^2`` at uniform interpolates, averaged over the batch."""
    shape = (real.shape[0],) + (1,) * (real.ndim - 1)
    eps = torch.rand(shape, generator=generator, dtype=real.dtype)
    x_hat = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    score = critic(x_hat)
    grad, = torch.autograd.grad(score.sum(), x_hat, create_graph=True)
    norm = grad.reshape(grad.shape[0], -1).norm(dim=1)
    return weight * ((norm - 1.0) ** 2).mean()


def mouth_mask(boxes, size=64):
    mask = torch.zeros(len(boxes), size, size)
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        mask[i, y0:y1 + 1, x0:x1 + 1] = 1.0
    return mask


class GanModel(nn.Module):
    def __init__(self, config: GanConfig):
        super().__init__()
        self.config = config
        c = config
        self.generator = GeneratorNet(c.cond_dim, c.base_channels)
        self.frame_critic = FrameCritic(c.cond_dim, c.base_channels)
        self.video_critic = VideoCritic(c.cond_dim, c.base_channels, c.clip_frames)
        self.perceptual = PerceptualProxy()
        self.projection = DirectProjection(cond_dim=c.cond_dim) if c.conditioning_mode == "direct" else None


def generator_loss(fake, real, conds, visemes, mask, model: GanModel):
    """Total generator loss and its breakdown; ``fake``/``real`` are (B, K, H, W) clips."""
    c = model.config
    B, K, H, W = fake.shape
    ff, rr = fake.reshape(B * K, H, W), real.reshape(B * K, H, W)
    cc = conds.reshape(B * K, -1)
    frame_score, logits = model.frame_critic(ff, cc)
    terms = {
        "adv_frame": -frame_score.mean(),
        "adv_video": -model.video_critic(fake, conds).mean(),
        "l1": c.lambda_l1 * (ff - rr).abs().mean(),
        "perceptual": c.lambda_perc * model.perceptual.distance(ff, rr),
        "mouth": c.lambda_mouth * (((ff - rr) ** 2) * mask).sum() / mask.sum().clamp_min(1.0),
        "viseme_ce": c.lambda_vis * F.cross_entropy(logits, visemes.reshape(-1)),
    }
    total = sum(terms.values())
    return total, terms


def critic_losses(fake, real, conds, visemes, model: GanModel, generator=None):
    c = model.config
    B, K, H, W = fake.shape
    ff, rr = fake.reshape(B * K, H, W).detach(), real.reshape(B * K, H, W)
    cc = conds.reshape(B * K, -1).detach()
    fs_fake, _ = model.frame_critic(ff, cc)
    fs_real, logits = model.frame_critic(rr, cc)
    gp_f = gradient_penalty(lambda x: model.frame_critic.score(x, cc), rr, ff, c.gp_weight, generator)
    frame = fs_fake.mean() - fs_real.mean() + gp_f + c.lambda_vis * F.cross_entropy(logits, visemes.reshape(-1))
    vd = conds.detach()
    vs_fake = model.video_critic(fake.detach(), vd)
    vs_real = model.video_critic(real, vd)
    gp_v = gradient_penalty(lambda x: model.video_critic(x, vd), real, fake, c.gp_weight, generator)
    video = vs_fake.mean() - vs_real.mean() + gp_v
    wdist = float((fs_real.mean() - fs_fake.mean()).detach() + (vs_real.mean() - vs_fake.mean()).detach())
    return frame, video, wdist


@dataclasses.dataclass
class GanData:
    """Training sequences: segment features, frames, labels, identity image and mouth box."""

    feats: list
    frames: list
    visemes: list
    identities: list
    boxes: list
    sequence_index: list
    noisy_feats: list | None = None


def gan_data(corpus, split="train", augment_noise_db=None, seed=0) -> GanData:
    idx = corpus.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    feats = features.corpus_features(corpus, idx)
    noisy = None
    if augment_noise_db is not None:
        noisy = features.corpus_features(corpus, idx, augment_noise_db, seed=seed + 1)
    ids = [corpus.identities[corpus.factors[i].identity] for i in idx]
    return GanData(
        feats=feats,
        frames=[corpus.frames[i] for i in idx],
        visemes=[np.asarray(corpus.factors[i].viseme_labels) for i in idx],
        identities=[identity_image(d) for d in ids],
        boxes=[d.mouth_box for d in ids],
        sequence_index=list(idx),
        noisy_feats=noisy,
    )


class Counters:
    def __init__(self):
        self.critic_updates = 0
        self.generator_updates = 0
        self.warmup_updates = 0


def reconstruction_loss(fake, real, mask, model: GanModel):
    """L1 + perceptual + mouth terms only; used for the optional supervised warm-up."""
    c = model.config
    ff, rr = fake.reshape(-1, *fake.shape[-2:]), real.reshape(-1, *real.shape[-2:])
    terms = {
        "l1": c.lambda_l1 * (ff - rr).abs().mean(),
        "perceptual": c.lambda_perc * model.perceptual.distance(ff, rr),
        "mouth": c.lambda_mouth * (((ff - rr) ** 2) * mask).sum() / mask.sum().clamp_min(1.0),
    }
    return sum(terms.values()), terms


def train_gan(corpus, vae, config: GanConfig, data: GanData | None = None, counters: Counters | None = None):
    """Alternate ``critic_steps`` critic updates with one generator update; the VAE stays frozen.

    Returns ``(model, history)`` where history rows hold the loss breakdown.
    """
    c = config
    if c.conditioning_mode == "disentangled" and vae is None:
        raise ValueError("disentangled conditioning needs a trained VAE checkpoint")
    if data is None:
        data = gan_data(corpus, "train", c.augment_noise_db, c.seed)
    counters = counters or Counters()
    torch.manual_seed(c.seed)
    model = GanModel(c)
    gen_rng = torch.Generator().manual_seed(c.seed)
    rng = np.random.default_rng(c.seed)

    finetune = c.joint_finetune and c.conditioning_mode == "disentangled"
    if vae is not None:
        vae = vae.float()
        for p in vae.parameters():
            p.requires_grad_(finetune)
    if c.conditioning_mode == "direct":
        model.projection.set_feature_stats(np.concatenate(data.feats))

    def feats_for(s):
        if data.noisy_feats is not None and rng.random() < 0.5:
            return data.noisy_feats[s]
        return data.feats[s]

    cached = None
    if c.conditioning_mode == "disentangled" and not finetune:
        cached = [condition_vectors(f, vae, "disentangled") for f in data.feats]
        cached_noisy = None
        if data.noisy_feats is not None:
            cached_noisy = [condition_vectors(f, vae, "disentangled") for f in data.noisy_feats]

    def conditions(s, lo, hi):
        if cached is not None:
            src = cached
            if cached_noisy is not None and rng.random() < 0.5:
                src = cached_noisy
            return src[s][lo:hi]
        x = torch.from_numpy(feats_for(s)[lo:hi])
        if c.conditioning_mode == "direct":
            return model.projection(x)
        return vae.encode_content(x).mean

    eligible = [s for s, f in enumerate(data.frames) if len(f) >= c.clip_frames]
    if not eligible:
        raise ValueError(f"no training sequence has {c.clip_frames} frames")

    def batch():
        seqs = rng.choice(eligible, size=c.batch_clips)
        conds, real, vis, ident, boxes = [], [], [], [], []
        for s in seqs:
            lo = int(rng.integers(0, len(data.frames[s]) - c.clip_frames + 1))
            hi = lo + c.clip_frames
            conds.append(conditions(s, lo, hi))
            real.append(torch.from_numpy(data.frames[s][lo:hi]))
            vis.append(torch.from_numpy(data.visemes[s][lo:hi]))
            ident.append(torch.from_numpy(data.identities[s]))
            boxes.extend([data.boxes[s]] * c.clip_frames)
        return (torch.stack(conds), torch.stack(real), torch.stack(vis).long(), torch.stack(ident),
                mouth_mask(boxes).reshape(c.batch_clips, c.clip_frames, 64, 64))

    g_params = list(model.generator.parameters())
    if model.projection is not None:
        g_params += list(model.projection.parameters())
    if finetune:
        g_params += list(vae.content_encoder.parameters())
    d_params = list(model.frame_critic.parameters()) + list(model.video_critic.parameters())
    opt_g = torch.optim.Adam(g_params, lr=c.learning_rate, betas=tuple(c.adam_betas))
    opt_d = torch.optim.Adam(d_params, lr=c.learning_rate, betas=tuple(c.adam_betas))

    history = []
    for group in opt_g.param_groups:
        group["lr"] = c.warmup_learning_rate or c.learning_rate
    for step in range(c.warmup_steps):
        conds, real, vis, ident, mask = batch()
        fake = _rollout(model.generator, ident, conds)
        total, terms = reconstruction_loss(fake, real, mask.reshape(-1, 64, 64), model)
        opt_g.zero_grad()
        total.backward()
        opt_g.step()
        counters.warmup_updates += 1
        row = {"step": step, "phase": "warmup", "total": total.item()}
        row.update({k: v.item() for k, v in terms.items()})
        history.append(row)
        if c.log_every and step % c.log_every == 0:
            log.info("warmup step %d total %.3f l1 %.3f", step, row["total"], row["l1"])

    for group in opt_g.param_groups:
        group["lr"] = c.learning_rate
    for step in range(c.steps):
        wd = []
        for _ in range(c.critic_steps):
            conds, real, vis, ident, _ = batch()
            with torch.no_grad():
                fake = _rollout(model.generator, ident, conds)
            frame_loss, video_loss, w = critic_losses(fake, real, conds, vis, model, gen_rng)
            opt_d.zero_grad()
            (frame_loss + video_loss).backward()
            opt_d.step()
            counters.critic_updates += 1
            wd.append(w)

        conds, real, vis, ident, mask = batch()
        fake = _rollout(model.generator, ident, conds)
        total, terms = generator_loss(fake, real, conds, vis, mask.reshape(-1, 64, 64), model)
        opt_g.zero_grad()
        total.backward()
        opt_g.step()
        counters.generator_updates += 1

        row = {"step": c.warmup_steps + step, "phase": "adversarial", "total": total.item()}
        row.update({k: v.item() for k, v in terms.items()})
        row["wasserstein"] = float(np.mean(wd)) if wd else float("nan")
        history.append(row)
        if c.log_every and step % c.log_every == 0:
            log.info("gan step %d total %.3f l1 %.3f w %.3f", step, row["total"], row["l1"], row["wasserstein"])
    model.eval()
    return model, history


def video_conditions(model: GanModel, segments, vae=None):
    mode = model.config.conditioning_mode
    return condition_vectors(segments, vae, mode, model.projection)


def write_history(history, path):
    if not history:
        Path(path).write_text("")
        return
    keys = []
    for row in history:
        keys.extend(k for k in row if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, restval="")
        w.writeheader()
        w.writerows(history)


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = "audioface-gan/1"


def save_gan(path, model: GanModel, meta: dict | None = None):
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    record = {"format": CHECKPOINT_FORMAT, "config": model.config.to_dict(),
              "perceptual_proxy": "random frozen conv pyramid, seed 1234"}
    record.update(meta or {})
    arrays["__meta__"] = np.frombuffer(json.dumps(record, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_gan(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"GAN checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(data["__meta__"].tobytes().decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a GAN checkpoint")
        state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != "__meta__"}
    model = GanModel(GanConfig.from_dict(meta["config"]))
    model.load_state_dict(state)
    model.eval()
    return model, meta


# ---------------------------------------------------------------- evaluation

def generate_for_sequence(model: GanModel, corpus, index, vae=None, level_db=features.CLEAN, noise_seed=0):
    feats = features.corpus_features(corpus, [index], level_db, noise_seed)[0]
    conds = video_conditions(model, feats, vae)
    ident = corpus.identities[corpus.factors[index].identity]
    return generate_video(identity_image(ident), conds.numpy(), model.generator)


def evaluate_noise(model: GanModel, corpus, levels, vae=None, split="test", noise_seed=0):
    """Per-level LMD / PSNR / SSIM averaged over the sequences of ``split``."""
    from .metrics import video_report

    idx = corpus.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    rows = []
    for level in levels:
        reports = []
        for i in idx:
            fake = generate_for_sequence(model, corpus, i, vae, level, noise_seed)
            ident = corpus.identities[corpus.factors[i].identity]
            reports.append(video_report(corpus.frames[i], fake, ident))
        rows.append({"level_db": level, **{k: float(np.mean([r[k] for r in reports])) for k in reports[0]}})
    return rows


def mouth_crop(frame, identity):
    x0, y0, x1, y1 = identity.mouth_box
    return np.asarray(frame)[y0:y1 + 1, x0:x1 + 1].ravel()


def fit_frame_classifier(corpus, split="train"):
    """Logistic regression on mouth-box crops of real rendered frames."""
    from sklearn.linear_model import LogisticRegression

    xs, ys = [], []
    for i in corpus.indices(split):
        ident = corpus.identities[corpus.factors[i].identity]
        xs.extend(mouth_crop(f, ident) for f in corpus.frames[i])
        ys.extend(corpus.factors[i].viseme_labels)
    return LogisticRegression(max_iter=3000, C=10.0).fit(np.array(xs), np.array(ys))


def frame_classifier_accuracy(clf, corpus, videos: dict) -> float:
    """Accuracy (%) over ``videos`` mapping corpus index -> frames (real or generated)."""
    xs, ys = [], []
    for i, frames in videos.items():
        ident = corpus.identities[corpus.factors[i].identity]
        xs.extend(mouth_crop(f, ident) for f in frames)
        ys.extend(corpus.factors[i].viseme_labels)
    return 100.0 * float(clf.score(np.array(xs), np.array(ys)))
