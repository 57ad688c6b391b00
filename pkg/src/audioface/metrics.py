"""Video quality metrics: mouth landmark distance, PSNR and SSIM.

Landmarks come from a deterministic extractor that works on the toy faces:
mouth pixels are much darker than skin, so thresholding inside the known
mouth box recovers the ellipse extremes to within a pixel.
"""

from __future__ import annotations

import numpy as np

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def extract_mouth_landmarks(image, identity) -> np.ndarray:
    """Left, right, top, bottom mouth points as ``(4, 2)`` ``(x, y)`` pixel coordinates."""
    img = np.asarray(image)
    x0, y0, x1, y1 = identity.mouth_box
    box = img[y0:y1 + 1, x0:x1 + 1]
    ys, xs = np.nonzero(box < 0.5 * identity.skin_luminance)
    if xs.size == 0:
        c = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        return np.array([c, c, c, c], dtype=np.float64)
    xs = xs + x0
    ys = ys + y0
    left = (xs.min(), ys[xs == xs.min()].mean())
    right = (xs.max(), ys[xs == xs.max()].mean())
    top = (xs[ys == ys.min()].mean(), ys.min())
    bottom = (xs[ys == ys.max()].mean(), ys.max())
    return np.array([left, right, top, bottom], dtype=np.float64)


def video_landmarks(frames, identity) -> np.ndarray:
    return np.stack([extract_mouth_landmarks(f, identity) for f in frames])


def lmd(real, fake) -> float:
    """Mean Euclidean distance between matching landmarks, averaged over frames and points."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape or real.ndim != 3:
        raise ValueError(f"landmark arrays must both be (F, L, 2); got {real.shape} and {fake.shape}")
    F, L, _ = real.shape
    return float(np.linalg.norm(real - fake, axis=-1).sum() / (F * L))


def psnr(a, b, max_value=1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(max_value ** 2 / mse))


def _ssim2d(a, b):
    wa = np.lib.stride_tricks.sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = np.lib.stride_tricks.sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return np.mean(num / den)


def ssim(a, b) -> float:
    """Mean SSIM over all 8x8 windows (uniform weights); videos average over frames."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return float(_ssim2d(a, b))
    flat_a = a.reshape(-1, *a.shape[-2:])
    flat_b = b.reshape(-1, *b.shape[-2:])
    return float(np.mean([_ssim2d(x, y) for x, y in zip(flat_a, flat_b)]))


def video_report(real_frames, fake_frames, identity) -> dict:
    return {
        "lmd": lmd(video_landmarks(real_frames, identity), video_landmarks(fake_frames, identity)),
        "psnr": psnr(real_frames, fake_frames),
        "ssim": ssim(real_frames, fake_frames),
    }
