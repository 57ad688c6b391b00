"""Linear probes over frozen latents: how well does each representation predict each label?"""

from __future__ import annotations

import csv
import dataclasses
import io

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .trainer import segment_data

PROBE_DESCRIPTION = "linear multinomial logistic regression on standardized posterior means"


@dataclasses.dataclass
class Latents:
    z_c: np.ndarray
    z_e: np.ndarray
    viseme: np.ndarray
    emotion: np.ndarray


def extract_latents(model, corpus, split="all", level_db="clean", batch_size=256) -> Latents:
    """Posterior means of z_c and z_e for every segment of ``split`` (no sampling)."""
    data = segment_data(corpus, split, level_db)
    zc, ze = [], []
    with torch.no_grad():
        for s in range(0, len(data), batch_size):
            x = torch.from_numpy(data.x[s:s + batch_size])
            zc.append(model.encode_content(x).mean.double().numpy())
            ze.append(model.encode_emotion(x).mean.double().numpy())
    return Latents(np.concatenate(zc), np.concatenate(ze), data.viseme, data.emotion)


def fit_probe(latents, labels, seed=0, max_iter=2000):
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise ValueError("probe needs at least two classes")
    clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=max_iter, C=1.0, random_state=seed))
    return clf.fit(np.asarray(latents), labels)


def probe_accuracy(latents, labels, seed=0, test_size=0.2) -> float:
    """Held-out accuracy (%) of a probe on a stratified segment-level split."""
    labels = np.asarray(labels)
    # stratify only when every class can appear on both sides (tiny corpora)
    strat = labels if np.unique(labels, return_counts=True)[1].min() >= 2 else None
    a, b, ya, yb = train_test_split(latents, labels, test_size=test_size, random_state=seed, stratify=strat)
    return 100.0 * float(fit_probe(a, ya, seed).score(b, yb))


def disentanglement_report(model, corpus, split="all", seed=0) -> dict:
    """2x2 accuracy table: {content, emotion} representation x {viseme, emotion} task."""
    lat = extract_latents(model, corpus, split)
    table = {}
    for rep, z in (("content", lat.z_c), ("emotion", lat.z_e)):
        for task, y in (("viseme", lat.viseme), ("emotion", lat.emotion)):
            table[(rep, task)] = probe_accuracy(z, y, seed)
    return table


def report_csv(table) -> str:
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(["representation", "viseme", "emotion"])
    for rep in ("content", "emotion"):
        w.writerow([rep, f"{table[(rep, 'viseme')]:.2f}", f"{table[(rep, 'emotion')]:.2f}"])
    return out.getvalue()


def report_text(table) -> str:
    lines = [f"# probe: {PROBE_DESCRIPTION}",
             f"{'representation':<16}{'viseme %':>10}{'emotion %':>11}"]
    for rep in ("content", "emotion"):
        lines.append(f"{rep:<16}{table[(rep, 'viseme')]:>10.1f}{table[(rep, 'emotion')]:>11.1f}")
    return "\n".join(lines) + "\n"
