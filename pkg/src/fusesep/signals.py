"""Audio I/O and synthetic multi-speaker mixture generation.

Stands in for a licensed speech corpus at desk scale: every generator is a
pure function of its arguments and a seed, so datasets are reproducible
byte-for-byte. Amplitudes are dimensionless with nominal range [-1, 1];
float32 WAV is the canonical on-disk format (16-bit PCM supported for
import/export with the usual quantization loss).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 8000

_KIND_SALT = {"speechlike": 1, "tone": 2, "noise": 3}


@dataclass
class Waveform:
    """Mono audio signal: sample array plus its rate in Hz."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise ValueError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MixtureExample:
    """A mixture and the exact per-source signals it is the sum of.

    ``mixture.samples`` equals the elementwise sum of the stored sources
    (single summation path, so the identity is exact as stored), and
    ``snr_db`` is the energy ratio actually applied between the target
    (source 0) and each scaled interferer.
    """

    mixture: Waveform
    sources: list[Waveform]
    snr_db: float

    def __post_init__(self):
        n = len(self.mixture)
        for s in self.sources:
            if len(s) != n or s.sample_rate != self.mixture.sample_rate:
                raise ValueError("sources must match the mixture in length and rate")


@dataclass
class ManifestEntry:
    mixture_path: str
    source_paths: list[str]
    duration_s: float
    snr_db: float


@dataclass
class DatasetManifest:
    """Index of a generated dataset; contents are fully determined by the seed."""

    entries: list[ManifestEntry]
    split: str = "train"
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    root: Path = field(default_factory=Path)

    def resolve(self, relpath: str) -> Path:
        return Path(self.root) / relpath


def _normalize_peak(x: np.ndarray, peak: float = 0.9) -> np.ndarray:
    top = float(np.max(np.abs(x)))
    if top == 0.0:
        return x
    return x * (peak / top)


def _pitch_contour(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    """Piecewise-linear f0 trajectory wandering around a random base pitch."""
    base_f0 = rng.uniform(90.0, 250.0)
    hop = max(1, int(0.05 * sample_rate))
    n_points = n // hop + 2
    # random walk in semitones, +-4 semitones around the base
    walk = np.cumsum(rng.normal(0.0, 0.8, size=n_points))
    walk = np.clip(walk - walk.mean(), -4.0, 4.0)
    contour = base_f0 * 2.0 ** (walk / 12.0)
    t = np.arange(n)
    return np.interp(t, np.arange(n_points) * hop, contour)


def _syllabic_envelope(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    """Amplitude envelope with syllable-rate modulation and occasional pauses."""
    hop = max(1, int(0.12 * sample_rate))
    n_points = n // hop + 2
    levels = rng.uniform(0.25, 1.0, size=n_points)
    levels[rng.random(n_points) < 0.25] = 0.0  # pauses
    t = np.arange(n)
    env = np.interp(t, np.arange(n_points) * hop, levels)
    # smooth the corners so pauses fade instead of clicking
    width = max(1, int(0.01 * sample_rate))
    kernel = np.hanning(2 * width + 1)
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def synth_source(
    kind: str,
    duration_s: float,
    seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Generate a deterministic test source, peak-normalized to 0.9.

    ``speechlike`` is an amplitude-modulated harmonic signal with a
    randomized pitch contour and pauses, so two sources with different
    seeds are statistically distinguishable. ``tone`` is a pure sine at a
    seed-dependent frequency, ``noise`` is white Gaussian noise.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    if kind not in _KIND_SALT:
        raise ValueError(f"unknown source kind: {kind!r}")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _KIND_SALT[kind]]))
    t = np.arange(n) / sample_rate

    if kind == "tone":
        f0 = rng.uniform(200.0, 1000.0)
        x = np.sin(2.0 * np.pi * f0 * t)
    elif kind == "noise":
        x = rng.standard_normal(n)
    else:
        f0 = _pitch_contour(rng, n, sample_rate)
        phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
        x = np.zeros(n)
        for h in range(1, 7):
            harm_phase = rng.uniform(0.0, 2.0 * np.pi)
            # drop harmonics that would alias
            active = (h * f0) < (0.45 * sample_rate)
            x += active * np.sin(h * phase + harm_phase) / h
        env = _syllabic_envelope(rng, n, sample_rate)
        x = x * env + 0.01 * env * rng.standard_normal(n)

    x = _normalize_peak(x, 0.9).astype(np.float32)
    return Waveform(x, sample_rate)


def measure_snr_db(target: Waveform, interferer: Waveform) -> float:
    """Energy ratio of two equal-length signals in dB."""
    e_t = float(np.sum(np.square(target.samples, dtype=np.float64)))
    e_i = float(np.sum(np.square(interferer.samples, dtype=np.float64)))
    if e_t == 0.0 or e_i == 0.0:
        raise ValueError("cannot measure SNR against a zero-energy signal")
    return 10.0 * np.log10(e_t / e_i)


def _scaled_sources(sources: list[Waveform], snr_db: float) -> list[np.ndarray]:
    """Scale every interferer so its energy sits snr_db below source 0."""
    ref = sources[0].samples.astype(np.float64)
    e_ref = float(np.sum(ref**2))
    if e_ref == 0.0:
        raise ValueError("target has zero energy")
    out = [ref]
    for src in sources[1:]:
        x = src.samples.astype(np.float64)
        e = float(np.sum(x**2))
        if e == 0.0:
            raise ValueError("interferer has zero energy")
        out.append(x * np.sqrt(e_ref / (e * 10.0 ** (snr_db / 10.0))))
    return out


def mix_sources(sources: list[Waveform], snr_db: float) -> MixtureExample:
    """Mix a target with one or more interferers at a given pairwise SNR.

    Each interferer is rescaled so 10*log10(E_target / E_interferer) equals
    ``snr_db``; the mixture is the plain sum. If the mixture peak exceeds
    1.0, mixture and sources are rescaled jointly, which preserves both the
    additivity identity and the pairwise SNR.
    """
    if len(sources) < 2:
        raise ValueError("need at least two sources to mix")
    n = len(sources[0])
    rate = sources[0].sample_rate
    for s in sources[1:]:
        if len(s) != n or s.sample_rate != rate:
            raise ValueError("sources must share length and sample rate")
    scaled = _scaled_sources(sources, snr_db)
    peak = float(np.max(np.abs(np.sum(scaled, axis=0))))
    if peak > 1.0:
        scaled = [x * (1.0 / peak) for x in scaled]
    scaled = [x.astype(np.float32) for x in scaled]
    mixture = np.sum(scaled, axis=0, dtype=np.float32)
    return MixtureExample(
        mixture=Waveform(mixture, rate),
        sources=[Waveform(x, rate) for x in scaled],
        snr_db=float(snr_db),
    )


def mix_at_snr(target: Waveform, interferer: Waveform, snr_db: float) -> MixtureExample:
    """Two-source special case of :func:`mix_sources`."""
    return mix_sources([target, interferer], snr_db)


def truncate_to_shortest(sources: list[Waveform]) -> list[Waveform]:
    """Trim a group of signals to their common minimum length.

    Mixtures are built over the span where every source exists; the
    alternative (padding the shorter ones) is deliberately not used.
    """
    n = min(len(s) for s in sources)
    return [Waveform(s.samples[:n], s.sample_rate) for s in sources]


def save_wav(w: Waveform, path: str | Path, encoding: str = "float32") -> None:
    """Write a WAV file; ``float32`` is lossless for float32 samples."""
    path = Path(path)
    if encoding == "float32":
        wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))
    elif encoding == "pcm16":
        q = np.clip(np.round(w.samples.astype(np.float64) * 32768.0), -32768, 32767)
        wavfile.write(path, w.sample_rate, q.astype(np.int16))
    else:
        raise ValueError(f"unsupported encoding: {encoding!r}")


def load_wav(path: str | Path) -> Waveform:
    """Read a WAV file, converting integer PCM to float32 in [-1, 1)."""
    try:
        rate, data = wavfile.read(Path(path))
    except (ValueError, struct.error, EOFError) as exc:
        # scipy reports truncation as struct.error, not ValueError
        raise ValueError(f"malformed WAV file {path}: {exc}") from exc
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    return Waveform(data, rate)


MANIFEST_NAME = "manifest.jsonl"
_MANIFEST_VERSION = 1


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    header = {
        "kind": "dataset-manifest",
        "version": _MANIFEST_VERSION,
        "split": manifest.split,
        "seed": manifest.seed,
        "sample_rate": manifest.sample_rate,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for e in manifest.entries:
        lines.append(
            json.dumps(
                {
                    "mixture": e.mixture_path,
                    "sources": e.source_paths,
                    "duration_s": e.duration_s,
                    "snr_db": e.snr_db,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != "dataset-manifest":
        raise ValueError(f"not a dataset manifest: {path}")
    entries = []
    for line in lines[1:]:
        rec = json.loads(line)
        entries.append(
            ManifestEntry(
                mixture_path=rec["mixture"],
                source_paths=list(rec["sources"]),
                duration_s=float(rec["duration_s"]),
                snr_db=float(rec["snr_db"]),
            )
        )
    return DatasetManifest(
        entries=entries,
        split=header["split"],
        seed=int(header["seed"]),
        sample_rate=int(header["sample_rate"]),
        root=path.parent,
    )


def generate_dataset(
    n_examples: int,
    c_sources: int,
    snr_range_db: tuple[float, float],
    seed: int,
    out_dir: str | Path,
    split: str = "train",
    duration_s: float = 2.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> DatasetManifest:
    """Synthesize ``n_examples`` mixtures of speechlike sources plus a manifest.

    Mixing SNR is drawn uniformly from ``snr_range_db`` per example.
    Per-example randomness is derived from (seed, index), so the output is
    reproducible and may be regenerated example by example.
    """
    if c_sources not in (2, 3):
        raise ValueError(f"c_sources must be 2 or 3, got {c_sources}")
    lo, hi = snr_range_db
    if lo > hi:
        raise ValueError(f"invalid SNR range: {snr_range_db}")
    if n_examples < 1:
        raise ValueError("n_examples must be >= 1")

    out_dir = Path(out_dir)
    try:
        (out_dir / "mix").mkdir(parents=True, exist_ok=True)
        for c in range(c_sources):
            (out_dir / f"s{c + 1}").mkdir(exist_ok=True)
    except OSError:
        raise
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory not writable: {out_dir}")

    entries = []
    for i in range(n_examples):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        snr = float(rng.uniform(lo, hi))
        src_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=c_sources)]
        sources = [
            synth_source("speechlike", duration_s, s, sample_rate) for s in src_seeds
        ]
        sources = truncate_to_shortest(sources)
        ex = mix_sources(sources, snr)

        stem = f"ex{i:05d}.wav"
        mix_rel = f"mix/{stem}"
        src_rels = [f"s{c + 1}/{stem}" for c in range(c_sources)]
        save_wav(ex.mixture, out_dir / mix_rel)
        for rel, src in zip(src_rels, ex.sources):
            save_wav(src, out_dir / rel)
        entries.append(
            ManifestEntry(
                mixture_path=mix_rel,
                source_paths=src_rels,
                duration_s=len(ex.mixture) / sample_rate,
                snr_db=snr,
            )
        )

    manifest = DatasetManifest(
        entries=entries,
        split=split,
        seed=int(seed),
        sample_rate=sample_rate,
        root=out_dir,
    )
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest
