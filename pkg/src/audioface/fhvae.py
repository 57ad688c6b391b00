"""Factorized hierarchical VAE with label-indexed priors.

Each 20-frame spectrogram segment is explained by three latents: content
``z_c`` (prior centred on a per-viseme table mean), emotion ``z_e`` (per-emotion
table mean) and sequence ``z_s`` (per-sequence table mean).  Training maximizes
the segment ELBO plus discriminative log-probabilities of the labels, minus
margin ranking penalties that keep each label predictable from its own latent
only.

Tensors are batched along the first axis; loss helpers return one value per
batch row.  Segments enter the model as raw log-magnitudes and are
standardized per frequency bin with statistics stored as buffers, so the
likelihood is evaluated in standardized units.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

LOG_2PI = math.log(2 * math.pi)


@dataclasses.dataclass(frozen=True)
class Hyperparams:
    alpha: float = 10.0
    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError(f"hyperparameters must be non-negative: {self}")


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 200
    frames: int = 20
    latent_dim: int = 32
    hidden: int = 256
    layers: int = 2
    num_visemes: int = 21
    num_emotions: int = 6
    num_sequences: int = 40
    latent_variance: float = 0.25
    prior_variance: float = 1.0


class GaussianPosterior(NamedTuple):
    mean: torch.Tensor
    log_variance: torch.Tensor

    def sample(self, generator=None):
        eps = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype)
        return self.mean + torch.exp(0.5 * self.log_variance) * eps


class LatentTriple(NamedTuple):
    z_c: torch.Tensor
    z_e: torch.Tensor
    z_s: torch.Tensor


class Posteriors(NamedTuple):
    content: GaussianPosterior
    emotion: GaussianPosterior
    sequence: GaussianPosterior


class RecurrentGaussianEncoder(nn.Module):
    """Stacked LSTM over frames; the last top-layer state feeds mean and log-variance heads."""

    def __init__(self, input_dim, hidden, latent_dim, layers=2):
        super().__init__()
        self.rnn = nn.LSTM(input_dim, hidden, layers, batch_first=True)
        self.mean = nn.Linear(hidden, latent_dim)
        self.log_variance = nn.Linear(hidden, latent_dim)

    def forward(self, x):
        _, (h, _) = self.rnn(x)
        top = h[-1]
        return GaussianPosterior(self.mean(top), self.log_variance(top))


class RecurrentGaussianDecoder(nn.Module):
    def __init__(self, latent_dim, hidden, output_dim, frames, layers=2):
        super().__init__()
        self.frames = frames
        self.rnn = nn.LSTM(latent_dim, hidden, layers, batch_first=True)
        self.mean = nn.Linear(hidden, output_dim)
        self.log_variance = nn.Linear(hidden, output_dim)

    def forward(self, z):
        out, _ = self.rnn(z.unsqueeze(1).expand(-1, self.frames, -1))
        return self.mean(out), self.log_variance(out)


class FHVAE(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        c = config
        self.content_encoder = RecurrentGaussianEncoder(c.input_dim, c.hidden, c.latent_dim, c.layers)
        self.emotion_encoder = RecurrentGaussianEncoder(c.input_dim, c.hidden, c.latent_dim, c.layers)
        self.sequence_encoder = RecurrentGaussianEncoder(
            c.input_dim + 2 * c.latent_dim, c.hidden, c.latent_dim, c.layers)
        self.decoder = RecurrentGaussianDecoder(3 * c.latent_dim, c.hidden, c.input_dim, c.frames, c.layers)
        # prior tables start as draws from the unit-variance hyper-prior
        self.mu_c = nn.Parameter(torch.randn(c.num_visemes, c.latent_dim) * math.sqrt(c.prior_variance))
        self.mu_e = nn.Parameter(torch.randn(c.num_emotions, c.latent_dim) * math.sqrt(c.prior_variance))
        self.mu_s = nn.Parameter(torch.randn(c.num_sequences, c.latent_dim) * math.sqrt(c.prior_variance))
        self.register_buffer("feature_mean", torch.zeros(c.input_dim))
        self.register_buffer("feature_std", torch.ones(c.input_dim))
        self.margin_evaluations = 0

    def set_feature_stats(self, segments):
        flat = torch.as_tensor(np.asarray(segments)).reshape(-1, self.config.input_dim).double()
        self.feature_mean.copy_(flat.mean(0).to(self.feature_mean.dtype))
        self.feature_std.copy_(flat.std(0).clamp_min(1e-3).to(self.feature_std.dtype))

    def normalize(self, x):
        x = torch.as_tensor(x, dtype=self.feature_mean.dtype)
        return (x - self.feature_mean) / self.feature_std

    def _check(self, x):
        c = self.config
        if x.ndim != 3 or x.shape[1:] != (c.frames, c.input_dim):
            raise ValueError(f"expected (batch, {c.frames}, {c.input_dim}) segments, got {tuple(x.shape)}")

    def encode(self, x, generator=None, normalized=False):
        """Posteriors for (z_c, z_e, z_s) and one reparameterized sample of each."""
        x = torch.as_tensor(x, dtype=self.feature_mean.dtype)
        self._check(x)
        xn = x if normalized else self.normalize(x)
        q_c = self.content_encoder(xn)
        q_e = self.emotion_encoder(xn)
        z_c = q_c.sample(generator)
        z_e = q_e.sample(generator)
        cond = torch.cat([z_c, z_e], dim=-1).unsqueeze(1).expand(-1, xn.shape[1], -1)
        q_s = self.sequence_encoder(torch.cat([xn, cond], dim=-1))
        z_s = q_s.sample(generator)
        return Posteriors(q_c, q_e, q_s), LatentTriple(z_c, z_e, z_s)

    def encode_content(self, x, normalized=False):
        x = torch.as_tensor(x, dtype=self.feature_mean.dtype)
        self._check(x)
        return self.content_encoder(x if normalized else self.normalize(x))

    def encode_emotion(self, x, normalized=False):
        x = torch.as_tensor(x, dtype=self.feature_mean.dtype)
        self._check(x)
        return self.emotion_encoder(x if normalized else self.normalize(x))

    def decode(self, triple: LatentTriple):
        return self.decoder(torch.cat([triple.z_c, triple.z_e, triple.z_s], dim=-1))


def gaussian_log_likelihood(x, mean, log_variance):
    """Diagonal Gaussian log density summed over all but the batch axis."""
    ll = -0.5 * (LOG_2PI + log_variance + (x - mean) ** 2 / torch.exp(log_variance))
    return ll.reshape(ll.shape[0], -1).sum(-1)


def kl_to_prior(posterior: GaussianPosterior, prior_mean, prior_variance=0.25):
    """KL(N(mean, exp(logvar)) || N(prior_mean, prior_variance I)), summed over latent dims."""
    mean, logvar = posterior
    pv = torch.as_tensor(prior_variance, dtype=mean.dtype)
    kl = 0.5 * (torch.log(pv) - logvar + (torch.exp(logvar) + (mean - prior_mean) ** 2) / pv - 1.0)
    return kl.sum(-1)


def label_logits(z, table, variance=0.25):
    """Gaussian log-density (up to a shared constant) of ``z`` under each table row."""
    return -((z.unsqueeze(-2) - table) ** 2).sum(-1) / (2.0 * variance)


def label_log_prob(z, table, label, variance=0.25):
    """log p(label | z) = log p(z | label) - log sum_j p(z | j) with shared isotropic variance."""
    label = torch.as_tensor(label, dtype=torch.long)
    if (label < 0).any() or (label >= table.shape[0]).any():
        raise IndexError(f"label out of range for table with {table.shape[0]} rows")
    logp = F.log_softmax(label_logits(z, table, variance), dim=-1)
    return logp.gather(-1, label.reshape(*logp.shape[:-1], 1)).squeeze(-1)


def margin_from_probs(p_target, p_a, p_b, gamma=0.5):
    return torch.clamp(gamma + p_a - p_target, min=0) + torch.clamp(gamma + p_b - p_target, min=0)


def margin_ranking_loss(label, z_c, z_e, z_s, table, gamma=0.5, variance=0.25):
    """Hinge on P(label | .): the designated latent ``z_c`` must beat ``z_s`` and ``z_e`` by ``gamma``.

    For the emotion term pass the emotion latent as ``z_c`` and the content
    latent as ``z_e``, with the emotion table.
    """
    p = [torch.exp(label_log_prob(z, table, label, variance)) for z in (z_c, z_s, z_e)]
    return margin_from_probs(p[0], p[1], p[2], gamma)


def hyperprior_log_prob(mu, prior_variance=1.0):
    return -0.5 * (mu ** 2).sum(-1) / prior_variance


def _labels(*labels):
    if any(lab is None for lab in labels):
        raise ValueError("viseme, emotion and sequence labels are all required")
    return [torch.as_tensor(lab, dtype=torch.long) for lab in labels]


def segment_elbo(model: FHVAE, x, viseme, emotion, sequence, num_segments, generator=None,
                 normalized=False):
    """Per-segment lower bound with sequence-level hyper-prior terms spread by 1/N.

    Returns ``(elbo, terms, posteriors, triple)``.
    """
    viseme, emotion, sequence = _labels(viseme, emotion, sequence)
    c = model.config
    x = torch.as_tensor(x, dtype=model.feature_mean.dtype)
    xn = x if normalized else model.normalize(x)
    post, z = model.encode(xn, generator, normalized=True)
    mean, logvar = model.decode(z)
    recon = gaussian_log_likelihood(xn, mean, logvar)
    kl_c = kl_to_prior(post.content, model.mu_c[viseme], c.latent_variance)
    kl_e = kl_to_prior(post.emotion, model.mu_e[emotion], c.latent_variance)
    kl_s = kl_to_prior(post.sequence, model.mu_s[sequence], c.latent_variance)
    n = torch.as_tensor(num_segments, dtype=x.dtype)
    log_prior = (hyperprior_log_prob(model.mu_c[viseme], c.prior_variance)
                 + (hyperprior_log_prob(model.mu_e[emotion], c.prior_variance)
                    + hyperprior_log_prob(model.mu_s[sequence], c.prior_variance)) / n)
    elbo = recon - kl_c - kl_e - kl_s + log_prior
    terms = {"recon": recon, "kl_c": kl_c, "kl_e": kl_e, "kl_s": kl_s, "log_prior": log_prior}
    return elbo, terms, post, z


def total_objective(model: FHVAE, x, viseme, emotion, sequence, num_segments,
                    hyper: Hyperparams = Hyperparams(), generator=None, normalized=False):
    """Segment objective to maximize: ELBO - beta * margins + alpha * discriminative terms.

    Returns ``(objective, terms)``, both per batch row.
    """
    viseme, emotion, sequence = _labels(viseme, emotion, sequence)
    c = model.config
    elbo, terms, post, z = segment_elbo(model, x, viseme, emotion, sequence, num_segments,
                                        generator, normalized)
    disc_c = label_log_prob(z.z_c, model.mu_c, viseme, c.latent_variance)
    disc_e = label_log_prob(z.z_e, model.mu_e, emotion, c.latent_variance)
    disc_s = label_log_prob(z.z_s, model.mu_s, sequence, c.latent_variance)
    objective = elbo
    if hyper.beta != 0:
        model.margin_evaluations += 1
        margin_v = margin_ranking_loss(viseme, z.z_c, z.z_e, z.z_s, model.mu_c, hyper.gamma, c.latent_variance)
        margin_e = margin_ranking_loss(emotion, z.z_e, z.z_c, z.z_s, model.mu_e, hyper.gamma, c.latent_variance)
        objective = objective - hyper.beta * (margin_e + margin_v)
        terms.update(margin_v=margin_v, margin_e=margin_e)
    if hyper.alpha != 0:
        objective = objective + hyper.alpha * (disc_s + disc_c + disc_e)
    terms.update(elbo=elbo, disc_c=disc_c, disc_e=disc_e, disc_s=disc_s)
    return objective, terms


def content_objective(model: FHVAE, x, viseme, hyper: Hyperparams = Hyperparams(), generator=None,
                      normalized=False):
    """Content-only pretraining objective: emotion and sequence latents held at zero."""
    viseme = torch.as_tensor(viseme, dtype=torch.long)
    c = model.config
    x = torch.as_tensor(x, dtype=model.feature_mean.dtype)
    xn = x if normalized else model.normalize(x)
    model._check(xn)
    q_c = model.content_encoder(xn)
    z_c = q_c.sample(generator)
    zeros = torch.zeros_like(z_c)
    mean, logvar = model.decode(LatentTriple(z_c, zeros, zeros))
    recon = gaussian_log_likelihood(xn, mean, logvar)
    kl_c = kl_to_prior(q_c, model.mu_c[viseme], c.latent_variance)
    log_prior = hyperprior_log_prob(model.mu_c[viseme], c.prior_variance)
    disc_c = label_log_prob(z_c, model.mu_c, viseme, c.latent_variance)
    elbo = recon - kl_c + log_prior
    objective = elbo + hyper.alpha * disc_c
    return objective, {"recon": recon, "kl_c": kl_c, "log_prior": log_prior, "elbo": elbo, "disc_c": disc_c}


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = "audioface-fhvae/1"


def save_checkpoint(path, model: FHVAE, meta: dict | None = None):
    """Single ``.npz`` file: every state tensor as a raw array plus a JSON ``__meta__`` record."""
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    record = {"format": CHECKPOINT_FORMAT, "model": dataclasses.asdict(model.config),
              "dtype": str(next(model.parameters()).dtype).replace("torch.", "")}
    record.update(meta or {})
    arrays["__meta__"] = np.frombuffer(json.dumps(record, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def read_meta(path) -> dict:
    with np.load(path) as data:
        return json.loads(data["__meta__"].tobytes().decode())


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"VAE checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(data["__meta__"].tobytes().decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a VAE checkpoint")
        state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != "__meta__"}
    model = FHVAE(ModelConfig(**meta["model"]))
    if meta.get("dtype") == "float64":
        model.double()
    model.load_state_dict(state)
    return model, meta
