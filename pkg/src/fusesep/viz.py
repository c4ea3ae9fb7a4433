"""Plot helpers: spectrograms from waveforms, curves from metrics logs."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np
from scipy import signal as sps

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .signals import Waveform


def spectrogram_image(w: Waveform, out_path, title=None) -> Path:
    """Write a log-magnitude STFT image of one waveform."""
    nperseg = min(256, len(w.samples))
    freqs, times, stft = sps.stft(w.samples, fs=w.sample_rate, nperseg=nperseg)
    magnitude_db = 20.0 * np.log10(np.abs(stft) + 1e-8)
    fig, ax = plt.subplots(figsize=(8, 4))
    mesh = ax.pcolormesh(times, freqs, magnitude_db, shading="auto", cmap="magma")
    fig.colorbar(mesh, ax=ax, label="dB")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [Hz]")
    if title:
        ax.set_title(title)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path


def read_metrics(log_path) -> list[dict]:
    records = []
    with open(log_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def loss_curve_image(log_path, out_path) -> Path:
    """Plot training loss per step and validation score per epoch."""
    records = read_metrics(log_path)
    steps = [(r["step"], r["loss"]) for r in records if r.get("kind") == "step"]
    vals = [(r["step"], r["val_si_snri"]) for r in records if r.get("kind") == "val"]
    if not steps and not vals:
        raise ValueError(f"no usable records in {log_path}")
    fig, ax = plt.subplots(figsize=(8, 4))
    if steps:
        ax.plot(*zip(*steps), label="train loss", color="tab:blue")
        ax.set_ylabel("loss")
    ax.set_xlabel("step")
    if vals:
        twin = ax.twinx()
        twin.plot(*zip(*vals), "o-", label="val SI-SNRi", color="tab:orange")
        twin.set_ylabel("val SI-SNRi [dB]")
    fig.legend(loc="upper right")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path
