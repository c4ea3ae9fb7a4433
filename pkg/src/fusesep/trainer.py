"""Training loop, LR schedule, checkpointing, evaluation and inference.

An epoch is one pass over the training manifest. Training is
deterministic given the seed: example order is drawn from a counter-based
generator keyed by (seed, epoch), and parameter init comes from the
global torch seed set at startup. The checkpoint is a single versioned
file of named tensors plus config metadata; the metrics log is
line-delimited JSON.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import SeparatorConfig, TrainConfig, config_hash
from .network import SeparationModel
from .objective import pit_loss, sdr, si_snr
from .signals import Waveform, load_manifest, load_wav

CHECKPOINT_VERSION = 1


class PlateauHalving:
    """Halve the learning rate after ``patience`` stagnant validation epochs.

    The best score is tracked from the first epoch, but stagnation only
    counts from ``start_epoch`` onward. Improvement means strictly
    exceeding the best seen so far; the stagnation counter resets on
    improvement and after every halving.
    """

    def __init__(self, start_epoch=85, patience=3, factor=0.5):
        self.start_epoch = start_epoch
        self.patience = patience
        self.factor = factor
        self.best = None
        self.stagnant = 0

    def update(self, epoch: int, score: float, lr: float) -> float:
        improved = self.best is None or score > self.best
        if improved:
            self.best = score
        if epoch < self.start_epoch:
            return lr
        if improved:
            self.stagnant = 0
            return lr
        self.stagnant += 1
        if self.stagnant >= self.patience:
            self.stagnant = 0
            return lr * self.factor
        return lr


def clip_gradients_(parameters, max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. Gradients at or under the threshold are
    left untouched; a gradient of norm 50 with max_norm 5 is scaled by
    exactly 0.1.
    """
    grads = [p.grad for p in parameters if p is not None and p.grad is not None]
    if not grads:
        return 0.0
    total = torch.sqrt(sum((g.detach() ** 2).sum() for g in grads))
    norm = float(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.detach().mul_(scale)
    return norm


@dataclass
class LoadedExample:
    mixture: np.ndarray   # [T] float32
    sources: np.ndarray   # [C, T] float32


def load_examples(manifest_path) -> tuple[list[LoadedExample], int]:
    """Read every example of a manifest into memory. Returns (examples, rate)."""
    manifest = load_manifest(manifest_path)
    examples = []
    for entry in manifest.entries:
        mix = load_wav(manifest.resolve(entry.mixture_path))
        refs = [load_wav(manifest.resolve(p)) for p in entry.source_paths]
        examples.append(
            LoadedExample(
                mixture=mix.samples,
                sources=np.stack([r.samples for r in refs]),
            )
        )
    return examples, manifest.sample_rate


def _crop_or_pad(ex: LoadedExample, n_target: int, rng: np.random.Generator):
    """Fixed-length training view of one example: (mix, refs, n_valid)."""
    t = ex.mixture.shape[-1]
    if t > n_target:
        start = int(rng.integers(0, t - n_target + 1))
        return (
            ex.mixture[start : start + n_target],
            ex.sources[:, start : start + n_target],
            n_target,
        )
    if t < n_target:
        pad = n_target - t
        return (
            np.pad(ex.mixture, (0, pad)),
            np.pad(ex.sources, ((0, 0), (0, pad))),
            t,
        )
    return ex.mixture, ex.sources, t


def _batch_loss(model, mixes, refs, n_valid):
    """PIT loss over a batch, each example scored on its un-padded span."""
    ests = model(mixes)
    per_example = [
        pit_loss(ests[i, :, : n_valid[i]], refs[i, :, : n_valid[i]]).loss
        for i in range(ests.shape[0])
    ]
    return torch.stack(per_example).mean()


def _mean_si_snri(model, examples, dtype) -> float:
    """Mean SI-SNR improvement over full (uncropped) utterances."""
    total = 0.0
    with torch.no_grad():
        for ex in examples:
            mix = torch.as_tensor(ex.mixture, dtype=dtype)
            refs = torch.as_tensor(ex.sources, dtype=dtype)
            est = model(mix.unsqueeze(0))[0]
            best = -pit_loss(est, refs).loss
            base = si_snr(mix.unsqueeze(0).expand_as(refs), refs).mean()
            total += float(best - base)
    return total / len(examples)


def save_checkpoint(path, model: SeparationModel, optimizer, epoch: int,
                    best_val: float, train_cfg: TrainConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": dataclasses.asdict(model.cfg),
            "config_hash": config_hash(model.cfg),
            "train_config": dataclasses.asdict(train_cfg),
            "model_state": model.state_dict(),
            "optimizer_state": optimizer.state_dict() if optimizer else None,
            "epoch": epoch,
            "best_val_si_snri": best_val,
        },
        path,
    )
    return path


def load_checkpoint(path) -> dict:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    version = ckpt.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {version!r}")
    return ckpt


def model_from_checkpoint(ckpt: dict) -> SeparationModel:
    cfg = SeparatorConfig(**ckpt["config"])
    model = SeparationModel(cfg)
    precision = ckpt.get("train_config", {}).get("precision", "f32")
    if precision == "f64":
        model.double()
    model.load_state_dict(ckpt["model_state"])
    model.eval()
    return model


def _abort_if_diverged(loss, model, optimizer, epoch, train_cfg, out_dir):
    if torch.isfinite(loss):
        return
    diag = save_checkpoint(
        Path(out_dir) / "checkpoints" / "diverged.pt",
        model, optimizer, epoch, math.nan, train_cfg,
    )
    raise RuntimeError(
        f"training diverged (loss={float(loss.detach())}) at epoch {epoch}; "
        f"diagnostic checkpoint written to {diag}"
    )


@dataclass
class TrainResult:
    out_dir: Path
    best_checkpoint: Path
    final_checkpoint: Path
    best_val_si_snri: float
    steps_run: int
    epochs_run: int
    metrics_path: Path
    train_seconds: float


def train(sep_cfg: SeparatorConfig, train_cfg: TrainConfig, train_manifest,
          valid_manifest, out_dir, max_steps=None, validate_every=1,
          log=None) -> TrainResult:
    """Run the optimization loop and return checkpoint locations.

    ``max_steps`` bounds the total number of optimizer updates (for smoke
    runs and benchmarks); ``validate_every`` thins validation to every
    k-th epoch; ``log`` is an optional callable fed one line at a time.
    """
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    dtype = torch.float64 if train_cfg.precision == "f64" else torch.float32
    torch.manual_seed(train_cfg.seed)

    train_examples, rate = load_examples(train_manifest)
    valid_examples, _ = load_examples(valid_manifest)
    n_crop = int(round(train_cfg.crop_seconds * rate))

    model = SeparationModel(sep_cfg).to(dtype)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.lr0)
    scheduler = PlateauHalving(
        train_cfg.decay_start_epoch, train_cfg.decay_patience,
        train_cfg.decay_factor,
    )
    lr = train_cfg.lr0
    best_val = -math.inf
    best_path = out_dir / "checkpoints" / "best.pt"
    final_path = out_dir / "checkpoints" / "final.pt"
    metrics_path = out_dir / "metrics.log"

    step = 0
    epoch = 0
    started = time.monotonic()
    with open(metrics_path, "w") as metrics:

        def emit(record):
            line = json.dumps(record, sort_keys=True)
            metrics.write(line + "\n")
            metrics.flush()
            if log:
                log(line)

        done = False
        for epoch in range(1, train_cfg.epochs + 1):
            model.train()
            order = np.random.default_rng([train_cfg.seed, epoch]).permutation(
                len(train_examples)
            )
            crop_rng = np.random.default_rng([train_cfg.seed, epoch, 1])
            for lo in range(0, len(order), train_cfg.batch_size):
                chosen = [train_examples[i] for i in order[lo : lo + train_cfg.batch_size]]
                views = [_crop_or_pad(ex, n_crop, crop_rng) for ex in chosen]
                mixes = torch.as_tensor(
                    np.stack([v[0] for v in views]), dtype=dtype
                )
                refs = torch.as_tensor(
                    np.stack([v[1] for v in views]), dtype=dtype
                )
                n_valid = [v[2] for v in views]

                optimizer.zero_grad()
                loss = _batch_loss(model, mixes, refs, n_valid)
                _abort_if_diverged(loss, model, optimizer, epoch, train_cfg, out_dir)
                loss.backward()
                clip_gradients_(list(model.parameters()), train_cfg.clip_norm)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.step()
                step += 1
                emit({"kind": "step", "epoch": epoch, "step": step,
                      "loss": float(loss.detach()), "lr": lr})
                if max_steps is not None and step >= max_steps:
                    done = True
                    break

            if epoch % validate_every == 0 or done or epoch == train_cfg.epochs:
                model.eval()
                val = _mean_si_snri(model, valid_examples, dtype)
                emit({"kind": "val", "epoch": epoch, "step": step,
                      "val_si_snri": val, "lr": lr})
                if val > best_val:
                    best_val = val
                    save_checkpoint(best_path, model, optimizer, epoch,
                                    best_val, train_cfg)
                lr = scheduler.update(epoch, val, lr)
            if done:
                break

    save_checkpoint(final_path, model, optimizer, epoch, best_val, train_cfg)
    if not best_path.exists():
        save_checkpoint(best_path, model, optimizer, epoch, best_val, train_cfg)
    return TrainResult(
        out_dir=out_dir,
        best_checkpoint=best_path,
        final_checkpoint=final_path,
        best_val_si_snri=best_val,
        steps_run=step,
        epochs_run=epoch,
        metrics_path=metrics_path,
        train_seconds=time.monotonic() - started,
    )


@dataclass
class EvalTable:
    """Per-example separation scores plus their means, all in dB."""

    rows: list
    mean_si_snri: float
    mean_sdri: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": self.rows,
                "mean_si_snri": self.mean_si_snri,
                "mean_sdri": self.mean_sdri,
            },
            indent=2,
            sort_keys=True,
        )


def evaluate(ckpt, manifest_path, expected_config: SeparatorConfig | None = None) -> EvalTable:
    """Score a checkpoint on a manifest, one row per example.

    The best source assignment is chosen by SI-SNR and reused for the SDR
    numbers. If ``expected_config`` is given, its hash must match the
    checkpoint's (refusing to silently evaluate a different architecture).
    """
    if not isinstance(ckpt, dict):
        ckpt = load_checkpoint(ckpt)
    if expected_config is not None:
        want, got = config_hash(expected_config), ckpt["config_hash"]
        if want != got:
            raise ValueError(
                f"config hash mismatch: checkpoint was trained with "
                f"{got}, requested config hashes to {want}"
            )
    model = model_from_checkpoint(ckpt)
    dtype = next(model.parameters()).dtype
    examples, _ = load_examples(manifest_path)
    rows = []
    with torch.no_grad():
        for index, ex in enumerate(examples):
            mix = torch.as_tensor(ex.mixture, dtype=dtype)
            refs = torch.as_tensor(ex.sources, dtype=dtype)
            est = model(mix.unsqueeze(0))[0]
            result = pit_loss(est, refs)
            perm = result.best_perm.tolist()
            est_aligned = est[torch.as_tensor(perm).argsort()]
            mix_rep = mix.unsqueeze(0).expand_as(refs)
            si_snri = float((si_snr(est_aligned, refs) - si_snr(mix_rep, refs)).mean())
            sdri = float((sdr(est_aligned, refs) - sdr(mix_rep, refs)).mean())
            rows.append(
                {"index": index, "si_snri": si_snri, "sdri": sdri, "perm": perm}
            )
    mean_si = sum(r["si_snri"] for r in rows) / len(rows)
    mean_sdr = sum(r["sdri"] for r in rows) / len(rows)
    return EvalTable(rows=rows, mean_si_snri=mean_si, mean_sdri=mean_sdr)


def separate(ckpt, mixture: Waveform) -> list[Waveform]:
    """Split one mixture into the model's C estimated sources."""
    if not isinstance(ckpt, dict):
        ckpt = load_checkpoint(ckpt)
    model = model_from_checkpoint(ckpt)
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        mix = torch.as_tensor(mixture.samples, dtype=dtype)
        out = model(mix.unsqueeze(0))[0]
    return [
        Waveform(np.asarray(out[c], dtype=np.float32), mixture.sample_rate)
        for c in range(out.shape[0])
    ]
