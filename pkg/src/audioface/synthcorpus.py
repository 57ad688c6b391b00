"""Synthetic audio-visual corpus with known generative factors.

Every sequence is an utterance from one speaker in one emotion, made of
200 ms segments that each carry a single viseme label.  Audio is a harmonic
stack plus three formant sinusoids; video is a toy face whose mouth ellipse
is set by the viseme.  All randomness flows from ``(seed, sequence_id)`` so
building sequences serially or in parallel gives the same bytes.

Floating-point note: waveforms are computed in float64 with numpy's
``sin``/``exp`` and then cast to float32.  Those ufuncs are correctly rounded
to well below float32 resolution on every libm we know of, so stored arrays
match across x86-64 and aarch64 builds; only the float64 intermediates may
differ in the last ulp.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

NUM_VISEMES = 21
NUM_EMOTIONS = 6
SILENCE = 0

EMOTIONS = ("neutral", "anger", "disgust", "fear", "happy", "sad")

# F1 tracks mouth opening and F2 tracks mouth width, loosely like real vowels.
_F1_LEVELS = (320, 440, 560, 680, 800)
_F2_LEVELS = (1040, 1320, 1600, 1880)
_WIDTH_LEVELS = (8, 12, 16, 20)
_OPENING_LEVELS = (2, 4, 6, 8, 10)


def _build_tables():
    formants = np.zeros((NUM_VISEMES, 3))
    mouth = np.zeros((NUM_VISEMES, 2))
    for v in range(1, NUM_VISEMES):
        k = v - 1
        f1 = _F1_LEVELS[k // 4]
        f2 = _F2_LEVELS[k % 4]
        f3 = 2520 + 120 * ((3 * k) % 7)
        formants[v] = (f1, f2, f3)
        mouth[v] = (_WIDTH_LEVELS[k % 4], _OPENING_LEVELS[k // 4])
    return formants, mouth


#: Formant frequencies in Hz per viseme (row 0 is silence and unused).
#: Every entry is a multiple of 40 Hz, i.e. sits on a bin centre at 16 kHz / 400.
FORMANT_TABLE, _MOUTH = _build_tables()
#: Mouth ellipse full width in pixels per viseme.
MOUTH_WIDTH = _MOUTH[:, 0].copy()
#: Mouth ellipse full opening (height) in pixels per viseme.
MOUTH_OPENING = _MOUTH[:, 1].copy()
del _MOUTH

MOUTH_BOX_HALF = (int(max(_WIDTH_LEVELS)) // 2 + 2, int(max(_OPENING_LEVELS)) // 2 + 2)


@dataclasses.dataclass(frozen=True)
class EmotionAcoustics:
    f0_scale: float
    energy: float
    formant_scale: float
    tilt_shift: float
    tremolo_hz: float


#: Invented emotion acoustics; no claim to phonetic realism.
EMOTION_ACOUSTICS = {
    "neutral": EmotionAcoustics(1.00, 1.00, 1.00, 0.0, 0.0),
    "anger": EmotionAcoustics(1.30, 1.40, 1.02, -0.20, 0.0),
    "disgust": EmotionAcoustics(0.92, 0.90, 0.98, 0.10, 0.0),
    "fear": EmotionAcoustics(1.40, 0.80, 1.02, 0.10, 9.0),
    "happy": EmotionAcoustics(1.20, 1.20, 1.025, -0.10, 0.0),
    "sad": EmotionAcoustics(0.82, 0.70, 0.975, 0.25, 0.0),
}


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class CorpusConfig:
    num_sequences: int = 40
    min_segments: int = 20
    max_segments: int = 60
    num_speakers: int = 8
    num_identities: int = 4
    test_fraction: float = 0.2
    seed: int = 0
    num_visemes: int = NUM_VISEMES
    num_emotions: int = NUM_EMOTIONS
    sample_rate: int = 16000
    segment_ms: int = 200
    image_size: int = 64
    # per-sequence recording floor, RMS drawn log-uniformly from this range
    noise_floor_range: tuple = (3e-4, 3e-3)

    @property
    def segment_samples(self) -> int:
        return self.sample_rate * self.segment_ms // 1000

    def validate(self):
        if self.num_visemes != NUM_VISEMES:
            raise ConfigError(f"num_visemes must be {NUM_VISEMES}, got {self.num_visemes}")
        if self.num_emotions != NUM_EMOTIONS:
            raise ConfigError(f"num_emotions must be {NUM_EMOTIONS}, got {self.num_emotions}")
        if self.sample_rate != 16000 or self.segment_ms != 200:
            raise ConfigError("corpus is fixed at 16 kHz and 200 ms segments")
        if self.num_sequences < 1:
            raise ConfigError("num_sequences must be positive")
        if self.min_segments < 1 or self.max_segments < self.min_segments:
            raise ConfigError(
                f"bad segment range [{self.min_segments}, {self.max_segments}]")
        if self.num_speakers < 1 or self.num_identities < 1:
            raise ConfigError("need at least one speaker and one identity")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.image_size != 64:
            raise ConfigError("toy faces are 64x64")
        lo, hi = self.noise_floor_range
        if not 0 < lo <= hi < 0.01:
            raise ConfigError(f"noise floor range {self.noise_floor_range} must lie in (0, 0.01)")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        if "noise_floor_range" in kw:
            kw["noise_floor_range"] = tuple(kw["noise_floor_range"])
        return cls(**kw)


@dataclasses.dataclass(frozen=True)
class SyntheticFactors:
    sequence_id: int
    emotion: int
    speaker: int
    identity: int
    # f0 in Hz, harmonic tilt exponent, then three multiplicative formant offsets
    speaker_timbre: tuple
    viseme_labels: tuple
    split: str
    seed: int
    noise_floor_rms: float = 6e-4

    @property
    def num_segments(self) -> int:
        return len(self.viseme_labels)

    @property
    def emotion_name(self) -> str:
        return EMOTIONS[self.emotion]


@dataclasses.dataclass(frozen=True)
class FaceIdentity:
    face_center: tuple
    face_axes: tuple
    eye_positions: tuple
    eye_radius: float
    mouth_center: tuple
    skin_luminance: float
    background: float = 0.25
    mouth_luminance: float = 0.12

    @property
    def mouth_box(self):
        """Inclusive pixel box ``(x0, y0, x1, y1)`` that contains every mouth shape."""
        cx, cy = self.mouth_center
        hx, hy = MOUTH_BOX_HALF
        return (cx - hx, cy - hy, cx + hx, cy + hy)

    def is_valid(self, image_size=64) -> bool:
        if self.skin_luminance < 0.6:
            return False
        x0, y0, x1, y1 = self.mouth_box
        if x0 < 0 or y0 < 0 or x1 >= image_size or y1 >= image_size:
            return False
        fx, fy = self.face_center
        a, b = self.face_axes
        corners = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
        return all(((x - fx) / a) ** 2 + ((y - fy) / b) ** 2 < 1.0 for x, y in corners)


@dataclasses.dataclass
class FaceFrame:
    image: np.ndarray
    landmarks: np.ndarray  # (4, 2) as (x, y): left, right, top, bottom


def _rng(*keys):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def make_identities(config: CorpusConfig):
    rng = _rng(config.seed, 0xFACE)
    identities = []
    while len(identities) < config.num_identities:
        ident = FaceIdentity(
            face_center=(32.0 + rng.uniform(-1.5, 1.5), 31.0 + rng.uniform(-1.5, 1.5)),
            face_axes=(rng.uniform(22.0, 26.0), rng.uniform(28.0, 31.0)),
            eye_positions=(
                (int(rng.integers(21, 25)), int(rng.integers(22, 26))),
                (int(rng.integers(39, 43)), int(rng.integers(22, 26))),
            ),
            eye_radius=float(rng.uniform(2.0, 3.2)),
            mouth_center=(int(rng.integers(30, 35)), int(rng.integers(44, 48))),
            skin_luminance=float(rng.uniform(0.65, 0.9)),
        )
        if ident.is_valid(config.image_size):
            identities.append(ident)
    return identities


def _speaker_timbres(config: CorpusConfig):
    rng = _rng(config.seed, 0x5BEA)
    timbres = []
    for _ in range(config.num_speakers):
        f0 = rng.uniform(100.0, 220.0)
        tilt = rng.uniform(0.8, 1.6)
        offsets = rng.uniform(-0.02, 0.02, size=3)
        timbres.append((f0, tilt, *offsets))
    return timbres


def sample_factors(config: CorpusConfig):
    """Draw the ground-truth factors for every sequence in the corpus."""
    config.validate()
    n = config.num_sequences
    rng = _rng(config.seed, 0xE40)
    emotions = np.arange(n) % config.num_emotions
    rng.shuffle(emotions)
    speakers = rng.integers(0, config.num_speakers, size=n)
    timbres = _speaker_timbres(config)
    n_test = int(round(n * config.test_fraction))

    factors = []
    for i in range(n):
        srng = _rng(config.seed, i, 0x5E0)
        length = int(srng.integers(config.min_segments, config.max_segments + 1))
        labels = srng.integers(0, config.num_visemes, size=length)
        if length >= 3:
            labels[0] = labels[-1] = SILENCE
        base = timbres[speakers[i]]
        jitter = srng.uniform(-0.02, 0.02, size=2)
        lo, hi = config.noise_floor_range
        floor = float(np.exp(srng.uniform(np.log(lo), np.log(hi))))
        timbre = (
            float(base[0] * (1 + jitter[0])),
            float(base[1] * (1 + jitter[1])),
            *(float(x) for x in base[2:]),
        )
        factors.append(SyntheticFactors(
            sequence_id=i,
            emotion=int(emotions[i]),
            speaker=int(speakers[i]),
            identity=int(speakers[i] % config.num_identities),
            speaker_timbre=timbre,
            viseme_labels=tuple(int(v) for v in labels),
            split="test" if i >= n - n_test else "train",
            seed=config.seed,
            noise_floor_rms=floor,
        ))
    return factors


def _edge_envelope(n, ramp=160):
    env = np.ones(n)
    r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[:ramp] = r
    env[-ramp:] = r[::-1]
    return env


def render_segment_waveform(factors: SyntheticFactors, segment_index: int,
                            sample_rate=16000, segment_samples=3200) -> np.ndarray:
    """Synthesize the ``segment_index``-th 200 ms segment of a sequence."""
    if not 0 <= segment_index < factors.num_segments:
        raise IndexError(f"segment {segment_index} out of range [0, {factors.num_segments})")
    rng = _rng(factors.seed, factors.sequence_id, segment_index + 1, 0xA0D)
    floor = rng.uniform(-1.0, 1.0, segment_samples) * factors.noise_floor_rms * np.sqrt(3.0)

    viseme = factors.viseme_labels[segment_index]
    if viseme == SILENCE:
        return floor.astype(np.float32)

    emo = EMOTION_ACOUSTICS[EMOTIONS[factors.emotion]]
    f0_base, tilt, *offsets = factors.speaker_timbre
    t = np.arange(segment_samples) / sample_rate
    nyq = sample_rate / 2

    f0 = f0_base * emo.f0_scale * (1.0 + rng.uniform(-0.03, 0.03))
    glide = 1.0 + rng.uniform(-0.02, 0.02) * t / t[-1]
    phase0 = 2 * np.pi * f0 * np.cumsum(glide) / sample_rate
    harmonic = np.zeros(segment_samples)
    k = 1
    tilt_k = max(tilt + emo.tilt_shift, 0.3)
    while k * f0 < 0.45 * sample_rate:
        harmonic += k ** (-tilt_k) * np.sin(k * phase0 + rng.uniform(0, 2 * np.pi))
        k += 1

    formant = np.zeros(segment_samples)
    for j, amp in enumerate((1.0, 0.8, 0.6)):
        fj = FORMANT_TABLE[viseme, j] * emo.formant_scale * (1.0 + offsets[j])
        fj = min(fj * (1.0 + rng.uniform(-0.004, 0.004)), nyq - 100.0)
        formant += amp * np.sin(2 * np.pi * fj * t + rng.uniform(0, 2 * np.pi))

    env = _edge_envelope(segment_samples) * (1.0 + rng.uniform(-0.1, 0.1))
    if emo.tremolo_hz:
        env = env * (1.0 + 0.35 * np.sin(2 * np.pi * emo.tremolo_hz * t))
    wave = 0.07 * emo.energy * env * (0.2 * harmonic + formant)
    peak = np.max(np.abs(wave))
    if peak > 0.95:
        wave *= 0.95 / peak
    return (wave + floor).astype(np.float32)


def tail_samples(window=400, hop=160):
    """Extra samples appended to a sequence so every segment yields 20 full frames."""
    return window - hop


def render_sequence_waveform(factors: SyntheticFactors, sample_rate=16000,
                             segment_samples=3200) -> np.ndarray:
    parts = [render_segment_waveform(factors, n, sample_rate, segment_samples)
             for n in range(factors.num_segments)]
    rng = _rng(factors.seed, factors.sequence_id, 0, 0x7A1)
    tail = rng.uniform(-1.0, 1.0, tail_samples()) * factors.noise_floor_rms * np.sqrt(3.0)
    parts.append(tail.astype(np.float32))
    return np.concatenate(parts)


def mouth_landmarks(identity: FaceIdentity, viseme: int) -> np.ndarray:
    cx, cy = identity.mouth_center
    hw = MOUTH_WIDTH[viseme] / 2
    hh = MOUTH_OPENING[viseme] / 2
    return np.array([[cx - hw, cy], [cx + hw, cy], [cx, cy - hh], [cx, cy + hh]], dtype=np.float64)


def render_face_frame(identity: FaceIdentity, viseme: int, image_size=64) -> FaceFrame:
    if not 0 <= viseme < NUM_VISEMES:
        raise ValueError(f"unknown viseme {viseme}")
    yy, xx = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    img = np.full((image_size, image_size), identity.background)
    fx, fy = identity.face_center
    a, b = identity.face_axes
    img[((xx - fx) / a) ** 2 + ((yy - fy) / b) ** 2 <= 1.0] = identity.skin_luminance
    for ex, ey in identity.eye_positions:
        img[(xx - ex) ** 2 + (yy - ey) ** 2 <= identity.eye_radius ** 2] = 0.2
    w, h = MOUTH_WIDTH[viseme], MOUTH_OPENING[viseme]
    if w > 0 and h > 0:
        cx, cy = identity.mouth_center
        inside = ((xx - cx) / (w / 2)) ** 2 + ((yy - cy) / (h / 2)) ** 2 <= 1.0
        img[inside] = identity.mouth_luminance
    return FaceFrame(image=img.astype(np.float32), landmarks=mouth_landmarks(identity, viseme))


def identity_image(identity: FaceIdentity, image_size=64) -> np.ndarray:
    """The still input face: the identity with its mouth closed."""
    return render_face_frame(identity, SILENCE, image_size).image


@dataclasses.dataclass
class Corpus:
    """In-memory corpus: factors, identities, waveforms and ground-truth video."""

    config: CorpusConfig
    factors: list
    identities: list
    waveforms: list
    frames: list
    landmarks: list

    def indices(self, split="all"):
        if split == "all":
            return list(range(len(self.factors)))
        if split not in ("train", "test"):
            raise ValueError(f"unknown split {split!r}")
        return [i for i, f in enumerate(self.factors) if f.split == split]

    @property
    def num_segments(self) -> int:
        return sum(f.num_segments for f in self.factors)


def generate_corpus(config: CorpusConfig) -> Corpus:
    factors = sample_factors(config)
    identities = make_identities(config)
    waves, frames, marks = [], [], []
    face_cache = {}
    for f in factors:
        waves.append(render_sequence_waveform(f, config.sample_rate, config.segment_samples))
        seq_frames, seq_marks = [], []
        for v in f.viseme_labels:
            key = (f.identity, v)
            if key not in face_cache:
                face_cache[key] = render_face_frame(identities[f.identity], v, config.image_size)
            seq_frames.append(face_cache[key].image)
            seq_marks.append(face_cache[key].landmarks)
        frames.append(np.stack(seq_frames))
        marks.append(np.stack(seq_marks).astype(np.float32))
    return Corpus(config, factors, identities, waves, frames, marks)


def _write_array(path: Path, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return {"path": path.name, "shape": list(arr.shape), "dtype": "<f4",
            "sha256": hashlib.sha256(data).hexdigest()}


def build_corpus(config: CorpusConfig, out_dir) -> dict:
    """Generate the corpus and write it under ``out_dir``; returns the manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc
    corpus = generate_corpus(config)

    ident_entries = []
    for k, ident in enumerate(corpus.identities):
        d = out / f"identity_{k:02d}"
        d.mkdir(exist_ok=True)
        entry = dataclasses.asdict(ident)
        rec = _write_array(d / "image.f32", identity_image(ident))
        entry["image"] = f"{d.name}/{rec['path']}"
        ident_entries.append(entry)

    seq_entries = []
    for f, wave, frames, marks in zip(corpus.factors, corpus.waveforms, corpus.frames, corpus.landmarks):
        d = out / f"seq_{f.sequence_id:04d}"
        d.mkdir(exist_ok=True)
        entry = dataclasses.asdict(f)
        entry["emotion_name"] = f.emotion_name
        for key, arr, name in (("waveform", wave, "waveform.f32"),
                               ("frames", frames, "frames.f32"),
                               ("landmarks", marks, "landmarks.f32")):
            rec = _write_array(d / name, arr)
            rec["path"] = f"{d.name}/{name}"
            entry[key] = rec
        seq_entries.append(entry)

    manifest = {
        "format": "audioface-corpus/1",
        "config": config.to_dict(),
        "emotions": list(EMOTIONS),
        "num_segments": corpus.num_segments,
        "identities": ident_entries,
        "sequences": seq_entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    log.info("wrote corpus with %d sequences / %d segments to %s",
             len(seq_entries), corpus.num_segments, out)
    return manifest


def _read_array(root: Path, rec: dict) -> np.ndarray:
    path = root / rec["path"]
    if not path.exists():
        raise FileNotFoundError(f"corpus array missing: {path}")
    return np.frombuffer(path.read_bytes(), dtype=rec["dtype"]).reshape(rec["shape"]).astype(np.float32)


def load_corpus(corpus_dir) -> Corpus:
    root = Path(corpus_dir)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"corpus manifest missing: {mpath}")
    manifest = json.loads(mpath.read_text())
    config = CorpusConfig.from_dict(manifest["config"])
    identities = []
    for e in manifest["identities"]:
        fields = {k: e[k] for k in (f.name for f in dataclasses.fields(FaceIdentity))}
        fields["face_center"] = tuple(fields["face_center"])
        fields["face_axes"] = tuple(fields["face_axes"])
        fields["eye_positions"] = tuple(tuple(p) for p in fields["eye_positions"])
        fields["mouth_center"] = tuple(fields["mouth_center"])
        identities.append(FaceIdentity(**fields))
    factors, waves, frames, marks = [], [], [], []
    for e in manifest["sequences"]:
        factors.append(SyntheticFactors(
            sequence_id=e["sequence_id"], emotion=e["emotion"], speaker=e["speaker"],
            identity=e["identity"], speaker_timbre=tuple(e["speaker_timbre"]),
            viseme_labels=tuple(e["viseme_labels"]), split=e["split"], seed=e["seed"],
            noise_floor_rms=e["noise_floor_rms"]))
        waves.append(_read_array(root, e["waveform"]))
        frames.append(_read_array(root, e["frames"]))
        marks.append(_read_array(root, e["landmarks"]))
    return Corpus(config, factors, identities, waves, frames, marks)


def directory_digest(path) -> str:
    """sha256 over every file's relative path and bytes, in sorted order."""
    root = Path(path)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()
