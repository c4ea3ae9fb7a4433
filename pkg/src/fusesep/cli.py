"""Command-line interface.

Subcommands: ``synth-data``, ``train``, ``eval``, ``separate``, ``bench``
and ``plot``. Exit codes: 0 success, 1 runtime failure, 2 usage error.
Every run is reproducible from (flags, config file, seed); ``train``
echoes the effective configuration into the run directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import tempfile
from pathlib import Path

from . import config as config_mod
from . import signals, trainer, viz
from .network import SeparationModel, count_parameters


class UsageError(Exception):
    """Bad flags or missing inputs — exits with status 2."""


def _require_file(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_synth_data(args) -> int:
    if args.snr[0] > args.snr[1]:
        raise UsageError(f"empty SNR range: {args.snr[0]}..{args.snr[1]}")
    signals.generate_dataset(
        n_examples=args.n,
        c_sources=args.sources,
        snr_range_db=tuple(args.snr),
        seed=args.seed,
        out_dir=args.out,
        split=args.split,
        duration_s=args.duration,
        sample_rate=args.sample_rate,
    )
    print(Path(args.out) / signals.MANIFEST_NAME)
    return 0


def _effective_run_config(args) -> config_mod.RunConfig:
    if args.config:
        run = config_mod.load_run_config(_require_file(args.config, "config file"))
    else:
        run = config_mod.RunConfig()
    if args.preset:
        run = dataclasses.replace(run, separator=config_mod.preset(args.preset))
    train_overrides = {}
    for flag, key in (
        ("epochs", "epochs"), ("seed", "seed"), ("lr", "lr0"),
        ("batch_size", "batch_size"), ("precision", "precision"),
        ("crop_seconds", "crop_seconds"),
    ):
        value = getattr(args, flag)
        if value is not None:
            train_overrides[key] = value
    if train_overrides:
        run = dataclasses.replace(
            run, train=dataclasses.replace(run.train, **train_overrides)
        )
    if args.train_manifest:
        run = dataclasses.replace(run, train_manifest=str(args.train_manifest))
    if args.valid_manifest:
        run = dataclasses.replace(run, valid_manifest=str(args.valid_manifest))
    return run


def cmd_train(args) -> int:
    run = _effective_run_config(args)
    if not run.train_manifest or not run.valid_manifest:
        raise UsageError(
            "need --train-manifest and --valid-manifest (flags or [data] section)"
        )
    _require_file(run.train_manifest, "training manifest")
    _require_file(run.valid_manifest, "validation manifest")
    out_dir = Path(args.out)
    for sub in ("checkpoints", "tables", "plots"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    config_mod.save_run_config(run, out_dir / "config.echo")
    result = trainer.train(
        run.separator, run.train, run.train_manifest, run.valid_manifest,
        out_dir, max_steps=args.max_steps, validate_every=args.validate_every,
        log=print if args.verbose else None,
    )
    print(
        f"trained {result.steps_run} steps / {result.epochs_run} epochs; "
        f"best validation SI-SNRi {result.best_val_si_snri:.2f} dB; "
        f"checkpoints in {result.out_dir / 'checkpoints'}"
    )
    return 0


def cmd_eval(args) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    manifest = _require_file(args.manifest, "manifest")
    expected = config_mod.preset(args.preset) if args.preset else None
    table = trainer.evaluate(ckpt, manifest, expected_config=expected)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_json())
    print(
        f"{len(table.rows)} examples: mean SI-SNRi {table.mean_si_snri:.2f} dB, "
        f"mean SDRi {table.mean_sdri:.2f} dB -> {out}"
    )
    return 0


def cmd_separate(args) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    mix_path = _require_file(args.mix, "input wav")
    mixture = signals.load_wav(mix_path)
    estimates = trainer.separate(ckpt, mixture)
    out_dir = Path(args.out_dir) if args.out_dir else mix_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = mix_path.stem
    for i, wave in enumerate(estimates, start=1):
        out = out_dir / f"{stem}.sep{i}.wav"
        signals.save_wav(wave, out)
        print(out)
    return 0


def cmd_bench(args) -> int:
    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    if len(names) < 2:
        raise UsageError("bench needs at least two --variants")
    for name in names:
        if name not in config_mod.PRESETS:
            raise UsageError(
                f"unknown preset {name!r}; available: "
                f"{', '.join(sorted(config_mod.PRESETS))}"
            )
    work = Path(args.work_dir) if args.work_dir else Path(tempfile.mkdtemp(prefix="bench-"))
    data_dir = work / "data"
    manifest = data_dir / signals.MANIFEST_NAME
    if not manifest.exists():
        signals.generate_dataset(
            n_examples=args.n, c_sources=2, snr_range_db=(-5.0, 5.0),
            seed=args.seed, out_dir=data_dir, split="bench",
            duration_s=args.duration,
        )
    rows = []
    for name in names:
        sep_cfg = config_mod.preset(name)
        train_cfg = config_mod.TrainConfig(
            epochs=max(args.steps, 1), batch_size=args.n, seed=args.seed,
            crop_seconds=args.duration, decay_start_epoch=10**9,
        )
        result = trainer.train(
            sep_cfg, train_cfg, manifest, manifest, work / name,
            max_steps=args.steps, validate_every=10**9,
        )
        table = trainer.evaluate(result.final_checkpoint, manifest)
        rows.append(
            {
                "variant": name,
                "parameters": count_parameters(SeparationModel(sep_cfg)),
                "steps_per_sec": result.steps_run / result.train_seconds,
                "train_si_snri": table.mean_si_snri,
            }
        )
    header = f"{'variant':<20} {'params':>10} {'steps/s':>8} {'SI-SNRi':>8}"
    print(header)
    for r in rows:
        print(
            f"{r['variant']:<20} {r['parameters']:>10d} "
            f"{r['steps_per_sec']:>8.2f} {r['train_si_snri']:>8.2f}"
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(rows, indent=2, sort_keys=True))
        print(f"table -> {out}")
    return 0


def cmd_plot(args) -> int:
    if bool(args.wav) == bool(args.log):
        raise UsageError("pass exactly one of --wav or --log")
    if args.wav:
        src = _require_file(args.wav, "wav file")
        out = Path(args.out) if args.out else src.with_suffix(".png")
        viz.spectrogram_image(signals.load_wav(src), out, title=src.name)
    else:
        src = _require_file(args.log, "metrics log")
        out = Path(args.out) if args.out else src.with_suffix(".png")
        viz.loss_curve_image(src, out)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusesep",
        description="Time-domain source separation with multi-scale fused "
                    "dual-path transformer separators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic mixture dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=8, help="number of examples")
    p.add_argument("--sources", type=int, choices=(2, 3), default=2,
                   help="sources per mixture")
    p.add_argument("--snr", type=float, nargs=2, default=(-5.0, 5.0),
                   metavar=("LO", "HI"), help="mixing SNR range in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--duration", type=float, default=2.0, help="seconds per example")
    p.add_argument("--sample-rate", type=int, default=8000)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a separator")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="INI run config")
    p.add_argument("--preset", help="named architecture preset")
    p.add_argument("--train-manifest")
    p.add_argument("--valid-manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--precision", choices=("f32", "f64"))
    p.add_argument("--crop-seconds", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--validate-every", type=int, default=1)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="eval.json", help="table file to write")
    p.add_argument("--preset", help="refuse unless checkpoint matches this preset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("separate", help="split a mixture wav into sources")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="mix", required=True, help="mixture wav")
    p.add_argument("--out-dir", help="where to write estimates (default: beside input)")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("bench", help="compare variants on one tiny dataset")
    p.add_argument("--variants", required=True,
                   help="comma-separated preset names (at least two)")
    p.add_argument("--n", type=int, default=4, help="examples in the bench set")
    p.add_argument("--steps", type=int, default=20, help="optimizer steps per variant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--out", help="JSON table path")
    p.add_argument("--work-dir", help="reuse this directory for data and runs")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="spectrogram from a wav or curves from a log")
    p.add_argument("--wav", help="waveform to plot")
    p.add_argument("--log", help="metrics log to plot")
    p.add_argument("--out", help="output image (default: input with .png)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  - boundary: report and fail
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
