"""Two-stage VAE training: content pretraining, then the full objective."""

from __future__ import annotations

import copy
import csv
import dataclasses
import logging
import math
from pathlib import Path

import numpy as np
import torch

from . import features
from .fhvae import FHVAE, Hyperparams, ModelConfig, content_objective, total_objective

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    stage: str = "full"
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    clip_norm: float = 5.0
    noise_augment_db: float | None = None
    split: str = "train"

    def __post_init__(self):
        if self.stage not in ("content", "full"):
            raise ValueError(f"stage must be 'content' or 'full', got {self.stage!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclasses.dataclass
class SegmentData:
    """Flat per-segment arrays for one corpus split."""

    x: np.ndarray  # (S, T, D) log-magnitudes
    viseme: np.ndarray
    emotion: np.ndarray
    sequence_row: np.ndarray  # row of the sequence prior table
    num_segments: np.ndarray  # N^i of the owning sequence
    sequence_ids: list  # table row -> corpus sequence id
    sequence_index: list  # table row -> corpus list index

    def __len__(self):
        return len(self.viseme)


def segment_data(corpus, split="train", level_db=features.CLEAN, noise_seed=0, feats=None) -> SegmentData:
    idx = corpus.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    if feats is None:
        feats = features.corpus_features(corpus, idx, level_db, noise_seed)
    vis, emo, rows, nseg = [], [], [], []
    for row, i in enumerate(idx):
        f = corpus.factors[i]
        vis.append(np.asarray(f.viseme_labels))
        emo.append(np.full(f.num_segments, f.emotion))
        rows.append(np.full(f.num_segments, row))
        nseg.append(np.full(f.num_segments, f.num_segments))
    return SegmentData(
        x=np.concatenate(feats).astype(np.float32),
        viseme=np.concatenate(vis), emotion=np.concatenate(emo),
        sequence_row=np.concatenate(rows), num_segments=np.concatenate(nseg),
        sequence_ids=[corpus.factors[i].sequence_id for i in idx],
        sequence_index=list(idx))


def _augmented_x(corpus, data: SegmentData, level_db, epoch, seed):
    """Per-sequence coin flip: with probability 0.5 replace the sequence's features by a noisy render."""
    rng = np.random.default_rng([seed, epoch, 0xA06])
    parts = []
    start = 0
    for i in data.sequence_index:
        n = corpus.factors[i].num_segments
        if rng.random() < 0.5:
            spec = features.NoiseSpec(level_db, seed=int(rng.integers(2 ** 31)))
            parts.append(features.sequence_features(corpus.waveforms[i], spec))
        else:
            parts.append(data.x[start:start + n])
        start += n
    return np.concatenate(parts).astype(np.float32)


def new_model(data: SegmentData, model_config: ModelConfig | None = None, seed=0) -> FHVAE:
    cfg = model_config or ModelConfig()
    cfg = dataclasses.replace(cfg, num_sequences=len(data.sequence_ids))
    torch.manual_seed(seed)
    model = FHVAE(cfg)
    model.set_feature_stats(data.x)
    return model


def _params_finite(params):
    return all(torch.isfinite(p).all() for p in params)


def _fit(model, data, objective, params, config: TrainConfig, corpus=None):
    gen = torch.Generator().manual_seed(config.seed)
    order_rng = np.random.default_rng(config.seed)
    opt = torch.optim.Adam(params, lr=config.learning_rate, betas=tuple(config.adam_betas),
                           eps=config.adam_eps)
    history = []
    step = 0
    model.train()
    for epoch in range(config.epochs):
        x_all = data.x
        if config.noise_augment_db is not None and corpus is not None:
            x_all = _augmented_x(corpus, data, config.noise_augment_db, epoch, config.seed)
        perm = order_rng.permutation(len(data))
        for start in range(0, len(perm), config.batch_size):
            b = perm[start:start + config.batch_size]
            obj, terms = objective(torch.from_numpy(x_all[b]), b, gen)
            loss = -obj.mean()
            opt.zero_grad()
            loss.backward()
            grads_ok = all(p.grad is None or torch.isfinite(p.grad).all() for p in params)
            row = {"step": step, "epoch": epoch, "loss": loss.item()}
            row.update({k: v.mean().item() for k, v in terms.items()})
            if not (grads_ok and math.isfinite(row["loss"])):
                log.warning("step %d rejected: non-finite loss or gradient", step)
                row["rejected"] = 1
            else:
                snapshot = [p.detach().clone() for p in params]
                torch.nn.utils.clip_grad_norm_(params, config.clip_norm)
                opt.step()
                if not _params_finite(params):
                    with torch.no_grad():
                        for p, s in zip(params, snapshot):
                            p.copy_(s)
                    log.warning("step %d rejected: update produced non-finite parameters", step)
                    row["rejected"] = 1
                else:
                    row["rejected"] = 0
            history.append(row)
            step += 1
        epoch_rows = [r for r in history if r["epoch"] == epoch]
        log.info("epoch %d loss %.3f", epoch, np.mean([r["loss"] for r in epoch_rows]))
    if history and all(r["rejected"] for r in history[-min(len(history), 10):]):
        raise NumericalError("training diverged: the last steps were all rejected")
    model.eval()
    return history


def pretrain_content(data: SegmentData, config: TrainConfig, model_config: ModelConfig | None = None,
                     hyper: Hyperparams = Hyperparams(), model: FHVAE | None = None, corpus=None):
    """Train content encoder, decoder and viseme prior table with the other latents fixed at zero."""
    if data.viseme is None or len(data.viseme) == 0:
        raise ValueError("content pretraining needs viseme labels")
    if model is None:
        model = new_model(data, model_config, config.seed)
    params = (list(model.content_encoder.parameters()) + list(model.decoder.parameters())
              + [model.mu_c])
    vis = torch.from_numpy(data.viseme)

    def objective(x, b, gen):
        return content_objective(model, x, vis[b], hyper, gen)

    history = _fit(model, data, objective, params, config, corpus)
    return model, history


def train_full(data: SegmentData, config: TrainConfig, init: FHVAE | None = None,
               model_config: ModelConfig | None = None, hyper: Hyperparams = Hyperparams(), corpus=None):
    """Optimize the full segment objective over all parameters."""
    if init is None:
        model = new_model(data, model_config, config.seed)
    else:
        model = copy.deepcopy(init)
        if model.config.num_sequences != len(data.sequence_ids):
            raise ValueError(
                f"sequence table has {model.config.num_sequences} rows but the corpus split has "
                f"{len(data.sequence_ids)} sequences")
    vis = torch.from_numpy(data.viseme)
    emo = torch.from_numpy(data.emotion)
    seq = torch.from_numpy(data.sequence_row)
    nseg = torch.from_numpy(data.num_segments)

    def objective(x, b, gen):
        return total_objective(model, x, vis[b], emo[b], seq[b], nseg[b], hyper, gen)

    history = _fit(model, data, objective, list(model.parameters()), config, corpus)
    return model, history


def evaluation_loss(model: FHVAE, data: SegmentData, hyper: Hyperparams = Hyperparams(), seed=0, limit=None):
    """Negative mean objective on (a prefix of) ``data`` with a fixed sampling seed."""
    n = len(data) if limit is None else min(limit, len(data))
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        obj, _ = total_objective(model, torch.from_numpy(data.x[:n]), data.viseme[:n], data.emotion[:n],
                                 data.sequence_row[:n], data.num_segments[:n], hyper, gen)
    return float(-obj.mean())


def write_history(history, path):
    if not history:
        Path(path).write_text("")
        return
    keys = list(history[0].keys())
    for row in history:
        keys.extend(k for k in row if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(history)


def epoch_means(history, key="loss"):
    epochs = sorted({r["epoch"] for r in history})
    return [float(np.mean([r[key] for r in history if r["epoch"] == e and key in r])) for e in epochs]
