"""Log-magnitude spectrogram front end and dB-calibrated white noise."""

from __future__ import annotations

import dataclasses
import logging
import warnings

import numpy as np

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW = 400  # 25 ms
HOP = 160  # 10 ms
N_FFT = 400
NUM_BINS = 200
SEGMENT_FRAMES = 20
EPS = 1e-10
CLEAN = "clean"


@dataclasses.dataclass(frozen=True)
class FeaturesConfig:
    sample_rate: int = SAMPLE_RATE
    window: int = WINDOW
    hop: int = HOP
    n_fft: int = N_FFT
    num_bins: int = NUM_BINS
    segment_frames: int = SEGMENT_FRAMES
    eps: float = EPS

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class SpectrogramSegment:
    values: np.ndarray  # (T, D)
    sequence_id: int = -1
    segment_index: int = -1


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    level_db: float | str = CLEAN
    seed: int = 0

    def __post_init__(self):
        if self.level_db != CLEAN and not float(self.level_db) < 0:
            raise ValueError(f"noise level must be negative dB or 'clean', got {self.level_db}")

    @property
    def is_clean(self) -> bool:
        return self.level_db == CLEAN


def stft_log_magnitude(waveform, sample_rate=SAMPLE_RATE) -> np.ndarray:
    """Frames x 200 log-magnitudes: Hann 400/160, DC kept, Nyquist dropped, no padding."""
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate}")
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1 or x.size < WINDOW:
        raise ValueError(f"waveform needs at least {WINDOW} samples, got {x.size}")
    frames = np.lib.stride_tricks.sliding_window_view(x, WINDOW)[::HOP]
    window = np.hanning(WINDOW + 1)[:-1]  # periodic Hann
    mag = np.abs(np.fft.rfft(frames * window, n=N_FFT, axis=-1))[:, :NUM_BINS]
    return np.log(np.maximum(mag, EPS)).astype(np.float32)


def segment_frames(frames, T=SEGMENT_FRAMES, sequence_id=-1):
    """Cut consecutive non-overlapping blocks of ``T`` frames; the remainder is dropped."""
    frames = np.asarray(frames)
    n = frames.shape[0] // T
    if n == 0:
        warnings.warn(f"only {frames.shape[0]} frames, fewer than T={T}; no segments")
        return []
    return [SpectrogramSegment(frames[k * T:(k + 1) * T], sequence_id, k) for k in range(n)]


def add_white_noise(waveform, spec: NoiseSpec) -> np.ndarray:
    """Add Uniform(-a, a) noise with ``a`` set so the noise sits ``level_db`` below the signal RMS."""
    if spec.is_clean:
        return waveform
    x = np.asarray(waveform, dtype=np.float64)
    rms = np.sqrt(np.mean(x ** 2))
    if not rms > 0:
        raise ValueError("cannot calibrate noise against a zero-RMS signal")
    a = rms * 10.0 ** (float(spec.level_db) / 20.0) * np.sqrt(3.0)
    noise = np.random.default_rng(spec.seed).uniform(-a, a, size=x.shape)
    return (x + noise).astype(np.asarray(waveform).dtype)


def sequence_features(waveform, noise: NoiseSpec | None = None) -> np.ndarray:
    """Waveform -> optional noise -> (num_segments, T, D) array of spectrogram blocks."""
    if noise is not None:
        waveform = add_white_noise(waveform, noise)
    segs = segment_frames(stft_log_magnitude(waveform))
    return np.stack([s.values for s in segs])


def corpus_features(corpus, indices=None, level_db=CLEAN, seed=0):
    """Segment arrays for each selected sequence, noise seeded per sequence."""
    if indices is None:
        indices = range(len(corpus.factors))
    out = []
    for i in indices:
        spec = NoiseSpec(level_db, seed=seed * 100003 + corpus.factors[i].sequence_id)
        feats = sequence_features(corpus.waveforms[i], spec)
        n = corpus.factors[i].num_segments
        if feats.shape[0] != n:
            raise RuntimeError(f"sequence {i}: {feats.shape[0]} feature blocks for {n} segments")
        out.append(feats)
    return out
