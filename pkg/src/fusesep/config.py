"""Architecture/training configuration, named presets, and run-config files.

A run config is a flat INI document with ``[separator]``, ``[train]`` and
``[data]`` sections. Unknown keys are rejected so typos fail loudly. The
named presets cover the full-scale configurations of the two transformer
topologies, desk-scale "tiny" twins of both, and the recurrent-block
transfer variants.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .blocks import BlockConfig
from .fusion import TopologyConfig

_PRECISIONS = ("f32", "f64")


@dataclass(frozen=True)
class SeparatorConfig:
    """Every architecture hyperparameter of the separation model.

    Short names in comments give the symbols used throughout: E encoder
    filters, M window, D feature dim, K chunk length, P chunk hop, N
    stages, J attention heads.
    """

    n_sources: int = 2
    sample_rate: int = 8000
    n_filters: int = 512            # E
    window: int = 16                # M (samples)
    stride: int = 8
    encoder_nonlinearity: str = "relu"
    feature_dim: int = 128          # D
    chunk_len: int = 256            # K (frames)
    chunk_hop: int = 128            # P
    variant: str = "msfft2p"
    n_stages: int = 2               # N
    n_intra: int = 4
    n_inter: int = 4
    n_heads: int = 16               # J
    ffn_dim: int = 2048             # DFF
    fusion_mode: str = "concat"
    exchange_stage: int = 4
    block_kind: str = "transformer"
    positional_encoding: bool = True
    mask_activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        if not 2 <= self.n_sources <= 4:
            raise ValueError("n_sources must be 2..4")
        if self.feature_dim >= self.n_filters:
            raise ValueError("feature_dim must be smaller than n_filters")
        if not 0 < self.stride <= self.window:
            raise ValueError("need 0 < stride <= window")
        if self.block_kind == "transformer" and self.feature_dim % self.n_heads:
            raise ValueError("feature_dim must be divisible by n_heads")
        if self.chunk_len % self.chunk_hop:
            raise ValueError("chunk_hop must divide chunk_len")
        paths = self.topology().n_paths
        if self.chunk_len % (1 << (paths - 1)):
            raise ValueError(
                f"chunk_len {self.chunk_len} must be divisible by "
                f"{1 << (paths - 1)} for {paths} paths"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def block(self) -> BlockConfig:
        return BlockConfig(
            kind=self.block_kind,
            n_intra=self.n_intra,
            n_inter=self.n_inter,
            positional_encoding=self.positional_encoding,
        )

    def topology(self) -> TopologyConfig:
        return TopologyConfig(
            variant=self.variant,
            n_stages=self.n_stages,
            fusion_mode=self.fusion_mode,
            exchange_stage=self.exchange_stage,
            block=self.block(),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and data-handling knobs."""

    lr0: float = 4e-4
    clip_norm: float = 5.0
    epochs: int = 200
    batch_size: int = 1
    seed: int = 0
    precision: str = "f32"
    crop_seconds: float = 4.0
    decay_start_epoch: int = 85
    decay_patience: int = 3
    decay_factor: float = 0.5

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.decay_patience < 1:
            raise ValueError("decay_patience must be >= 1")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {_PRECISIONS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.crop_seconds <= 0:
            raise ValueError("crop_seconds must be positive")
        if not 0 < self.decay_factor < 1:
            raise ValueError("decay_factor must be in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    """One experiment: architecture + training + dataset locations."""

    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_manifest: str = ""
    valid_manifest: str = ""


# Full-scale rows for the two topologies, their desk-scale twins, and the
# recurrent-block transfer configurations.
PRESETS: dict[str, SeparatorConfig] = {
    "msfft2p-paper": SeparatorConfig(
        n_filters=512, feature_dim=128, n_intra=4, n_inter=4, n_stages=2,
        window=16, stride=8, n_heads=16, chunk_len=256, chunk_hop=128,
        ffn_dim=2048, variant="msfft2p",
    ),
    "msfft3p-paper": SeparatorConfig(
        n_filters=512, feature_dim=128, n_intra=2, n_inter=2, n_stages=6,
        window=16, stride=8, n_heads=16, chunk_len=256, chunk_hop=128,
        ffn_dim=2048, variant="msfft3p", exchange_stage=4,
    ),
    "msfft2p-tiny": SeparatorConfig(
        n_filters=32, feature_dim=16, n_intra=1, n_inter=1, n_stages=2,
        window=16, stride=8, n_heads=4, chunk_len=32, chunk_hop=16,
        ffn_dim=64, variant="msfft2p",
    ),
    "msfft3p-tiny": SeparatorConfig(
        n_filters=32, feature_dim=16, n_intra=1, n_inter=1, n_stages=6,
        window=16, stride=8, n_heads=4, chunk_len=32, chunk_hop=16,
        ffn_dim=64, variant="msfft3p", exchange_stage=4,
    ),
    "dprnn-msff2p": SeparatorConfig(
        n_filters=256, feature_dim=64, n_intra=1, n_inter=1, n_stages=6,
        window=8, stride=4, n_heads=4, chunk_len=128, chunk_hop=64,
        ffn_dim=256, variant="msfft2p", block_kind="recurrent",
    ),
    "dprnn-msff3p": SeparatorConfig(
        n_filters=256, feature_dim=64, n_intra=1, n_inter=1, n_stages=6,
        window=4, stride=2, n_heads=4, chunk_len=256, chunk_hop=128,
        ffn_dim=256, variant="msfft3p", exchange_stage=4,
        block_kind="recurrent",
    ),
}

# Desk-scale baseline without cross-path structure, for benchmarking.
PRESETS["single-path-tiny"] = dataclasses.replace(
    PRESETS["msfft2p-tiny"], variant="single_path"
)
PRESETS["dprnn-tiny"] = dataclasses.replace(
    PRESETS["msfft2p-tiny"], block_kind="recurrent", n_stages=6,
    variant="single_path",
)


def preset(name: str) -> SeparatorConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None


def config_hash(cfg: SeparatorConfig) -> str:
    """Stable content hash of an architecture config."""
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _coerce(value: str, to_type):
    if to_type is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return to_type(value)


def _section_to_dataclass(parser, section, cls):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in fields:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            ftype = fields[key].type
            base = {"int": int, "float": float, "bool": bool, "str": str}.get(
                ftype if isinstance(ftype, str) else ftype.__name__
            )
            if base is None:
                raise ValueError(f"cannot parse key {key!r}")
            values[key] = _coerce(raw, base)
    return cls(**values)


def load_run_config(path) -> RunConfig:
    """Parse an INI run config; unknown sections or keys are errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    known = {"separator", "train", "data"}
    extra = set(parser.sections()) - known
    if extra:
        raise ValueError(f"unknown config sections: {sorted(extra)}")
    data = {}
    if parser.has_section("data"):
        for key, raw in parser.items("data"):
            if key not in ("train_manifest", "valid_manifest"):
                raise ValueError(f"unknown key {key!r} in section [data]")
            data[key] = raw
    return RunConfig(
        separator=_section_to_dataclass(parser, "separator", SeparatorConfig),
        train=_section_to_dataclass(parser, "train", TrainConfig),
        **data,
    )


def save_run_config(cfg: RunConfig, path) -> None:
    """Write the effective config back out in the same INI format."""
    parser = configparser.ConfigParser()
    parser["separator"] = {
        k: str(v) for k, v in dataclasses.asdict(cfg.separator).items()
    }
    parser["train"] = {k: str(v) for k, v in dataclasses.asdict(cfg.train).items()}
    parser["data"] = {
        "train_manifest": cfg.train_manifest,
        "valid_manifest": cfg.valid_manifest,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
