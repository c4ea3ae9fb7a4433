"""Multi-path separation topologies over chunk tensors.

A separator runs N stages. Each stage applies one shape-preserving block
per active path; paths live at halved chunk-length resolutions (path p at
K / 2^(p-1)) and trade information through learned stride-2 resampling:

* ``msfft2p``  — two paths; odd stages end with a bidirectional sum
  exchange, even stages fuse path 2 up into path 1 (concatenation or sum,
  then a 1x1 projection). Intermediate even stages re-split the fused
  tensor back into two paths; the final even stage emits the output.
* ``msfft3p``  — two paths until the configured exchange stage, where a
  third, quarter-resolution path is created from the first two; all
  fusions are element-wise sums, with a terminal upsample-sum-project.
* ``single_path`` — a plain sequential stack of blocks (dual-path
  transformer baseline).

The mask head turns the fused output into per-source masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .blocks import BlockConfig, make_block
from .chunking import ChunkTensor, overlap_add_values
from .frontend import MaskSet, apply_mask_activation

_VARIANTS = ("msfft2p", "msfft3p", "single_path")
_FUSION_MODES = ("sum", "concat")


@dataclass(frozen=True)
class TopologyConfig:
    """Which topology to run and how many stages it has.

    ``fusion_mode`` selects the even-stage fusion of the two-path variant:
    ``concat`` is the standard form, ``sum`` gives the sum-everywhere
    ablation. The three-path variant always fuses by sum.
    """

    variant: str = "msfft2p"
    n_stages: int = 2
    fusion_mode: str = "concat"
    exchange_stage: int = 4
    block: BlockConfig = field(default_factory=BlockConfig)

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown topology variant: {self.variant!r}")
        if self.fusion_mode not in _FUSION_MODES:
            raise ValueError(f"unknown fusion mode: {self.fusion_mode!r}")
        if self.n_stages < 1:
            raise ValueError("need at least one stage")
        if self.variant == "msfft2p" and self.n_stages % 2 != 0:
            raise ValueError("the two-path topology needs an even stage count")
        if self.variant == "msfft3p" and self.n_stages < self.exchange_stage:
            raise ValueError(
                f"three-path topology needs n_stages >= exchange_stage "
                f"({self.n_stages} < {self.exchange_stage})"
            )

    @property
    def n_paths(self) -> int:
        return {"single_path": 1, "msfft2p": 2, "msfft3p": 3}[self.variant]


@dataclass
class PathState:
    """Per-path tensors, path p at chunk length K/2^(p-1), shared D and S."""

    tensors: list

    def __post_init__(self):
        if not self.tensors:
            raise ValueError("path state needs at least one path")
        d, k, s = self.tensors[0].shape[-3:]
        for p, t in enumerate(self.tensors, start=1):
            want_k = k >> (p - 1)
            if k % (1 << (p - 1)) != 0:
                raise RuntimeError(f"chunk length {k} not divisible for path {p}")
            if t.shape[-3:] != (d, want_k, s):
                raise RuntimeError(
                    f"path {p} at shape {tuple(t.shape[-3:])}, "
                    f"expected ({d}, {want_k}, {s})"
                )

    @property
    def n_paths(self) -> int:
        return len(self.tensors)

    @property
    def chunk_lengths(self) -> tuple:
        return tuple(t.shape[-2] for t in self.tensors)


class Downsample(nn.Module):
    """Halve the chunk axis with a learned stride-2 width-2 convolution."""

    def __init__(self, dim):
        super().__init__()
        self.conv = nn.Conv1d(dim, dim, 2, stride=2, bias=False)

    def forward(self, values):
        # [..., D, K, S] -> [..., D, K/2, S]
        if values.shape[-2] % 2 != 0:
            raise ValueError(f"chunk length {values.shape[-2]} is odd")
        d, k, s = values.shape[-3:]
        x = values.movedim(-1, -3).reshape(-1, d, k)
        y = self.conv(x)
        return y.reshape(*values.shape[:-3], s, d, k // 2).movedim(-3, -1)


class Upsample(nn.Module):
    """Double the chunk axis with a learned stride-2 transposed convolution."""

    def __init__(self, dim):
        super().__init__()
        self.conv = nn.ConvTranspose1d(dim, dim, 2, stride=2, bias=False)

    def forward(self, values):
        # [..., D, K, S] -> [..., D, 2K, S]
        d, k, s = values.shape[-3:]
        x = values.movedim(-1, -3).reshape(-1, d, k)
        y = self.conv(x)
        return y.reshape(*values.shape[:-3], s, d, 2 * k).movedim(-3, -1)


class _ChannelProjection(nn.Module):
    """1x1 projection over the feature axis of a [..., C, K, S] tensor."""

    def __init__(self, in_dim, out_dim):
        super().__init__()
        self.conv = nn.Conv2d(in_dim, out_dim, 1, bias=False)

    def forward(self, values):
        lead = values.shape[:-3]
        flat = values.reshape(-1, *values.shape[-3:])
        out = self.conv(flat)
        return out.reshape(*lead, *out.shape[-3:])


def _trace_stage(trace, state: PathState):
    if trace is not None:
        trace.append(state.chunk_lengths)


class SinglePathSeparator(nn.Module):
    """Sequential block stack — the degenerate one-path topology."""

    def __init__(self, cfg: TopologyConfig, model_dim, n_heads, ffn_dim, dropout=0.0):
        super().__init__()
        self.cfg = cfg
        self.blocks = nn.ModuleList(
            make_block(cfg.block, model_dim, n_heads, ffn_dim, dropout)
            for _ in range(cfg.n_stages)
        )

    def forward(self, values, trace=None):
        for block in self.blocks:
            values = block(values)
            _trace_stage(trace, PathState([values]))
        return values


class TwoPathSeparator(nn.Module):
    """Full- and half-resolution paths with alternating exchange and fusion."""

    def __init__(self, cfg: TopologyConfig, model_dim, n_heads, ffn_dim, dropout=0.0):
        super().__init__()
        if cfg.variant != "msfft2p":
            raise ValueError(f"config is for {cfg.variant!r}")
        self.cfg = cfg
        n = cfg.n_stages
        n_odd, n_even = (n + 1) // 2, n // 2

        def blocks(count):
            return nn.ModuleList(
                make_block(cfg.block, model_dim, n_heads, ffn_dim, dropout)
                for _ in range(count)
            )

        self.enter = Downsample(model_dim)
        self.path1_blocks = blocks(n)
        self.path2_blocks = blocks(n)
        # every exchange/fusion site carries its own resampling weights
        self.sum_up = nn.ModuleList(Upsample(model_dim) for _ in range(n_odd))
        self.sum_down = nn.ModuleList(Downsample(model_dim) for _ in range(n_odd))
        self.fuse_up = nn.ModuleList(Upsample(model_dim) for _ in range(n_even))
        fused_dim = 2 * model_dim if cfg.fusion_mode == "concat" else model_dim
        self.fuse_proj = nn.ModuleList(
            _ChannelProjection(fused_dim, model_dim) for _ in range(n_even)
        )
        self.resplit = nn.ModuleList(
            Downsample(model_dim) for _ in range(max(n_even - 1, 0))
        )

    def sum_exchange(self, y1, y2, site):
        """Odd-stage exchange: each path absorbs the other at its own scale."""
        x1 = y1 + self.sum_up[site](y2)
        x2 = y2 + self.sum_down[site](y1)
        return x1, x2

    def fuse(self, y1, y2, site):
        """Even-stage fusion of path 2 (upsampled) into path 1."""
        up = self.fuse_up[site](y2)
        if self.cfg.fusion_mode == "concat":
            merged = torch.cat([y1, up], dim=-3)
        else:
            merged = y1 + up
        return self.fuse_proj[site](merged)

    def forward(self, values, trace=None):
        if values.shape[-2] % 2 != 0:
            raise ValueError("two-path topology needs an even chunk length")
        x1, x2 = values, self.enter(values)
        fused = None
        for s in range(1, self.cfg.n_stages + 1):
            y1 = self.path1_blocks[s - 1](x1)
            y2 = self.path2_blocks[s - 1](x2)
            _trace_stage(trace, PathState([y1, y2]))
            if s % 2 == 1:
                x1, x2 = self.sum_exchange(y1, y2, s // 2)
                PathState([x1, x2])
            else:
                fused = self.fuse(y1, y2, s // 2 - 1)
                if s < self.cfg.n_stages:
                    x1, x2 = fused, self.resplit[s // 2 - 1](fused)
                    PathState([x1, x2])
        return fused


class ThreePathSeparator(nn.Module):
    """Two paths with a quarter-resolution third path spawned mid-network.

    Information moves between paths exactly once, at ``exchange_stage``;
    everything is fused by element-wise sums, including the terminal
    upsample-and-sum that produces the output.
    """

    def __init__(self, cfg: TopologyConfig, model_dim, n_heads, ffn_dim, dropout=0.0):
        super().__init__()
        if cfg.variant != "msfft3p":
            raise ValueError(f"config is for {cfg.variant!r}")
        self.cfg = cfg
        n, e = cfg.n_stages, cfg.exchange_stage

        def blocks(count):
            return nn.ModuleList(
                make_block(cfg.block, model_dim, n_heads, ffn_dim, dropout)
                for _ in range(count)
            )

        self.enter = Downsample(model_dim)
        self.path1_blocks = blocks(n)
        self.path2_blocks = blocks(n)
        self.path3_blocks = blocks(n - e)
        # exchange-stage resampling, one module per arrow in the exchange
        self.ex_up2 = Upsample(model_dim)
        self.ex_down1 = Downsample(model_dim)
        self.ex_down1_twice = nn.Sequential(Downsample(model_dim), Downsample(model_dim))
        self.ex_down2 = Downsample(model_dim)
        # terminal fusion: lift every lower path back to full resolution
        self.out_up2 = Upsample(model_dim)
        self.out_up3 = nn.Sequential(Upsample(model_dim), Upsample(model_dim))
        self.out_proj = _ChannelProjection(model_dim, model_dim)

    def exchange(self, y1, y2):
        """Create the third path and cross-pollinate the first two."""
        x1 = y1 + self.ex_up2(y2)
        x2 = y2 + self.ex_down1(y1)
        x3 = self.ex_down1_twice(y1) + self.ex_down2(y2)
        return x1, x2, x3

    def terminal(self, paths):
        """Sum all paths at full resolution and project."""
        total = paths[0] + self.out_up2(paths[1])
        if len(paths) == 3:
            total = total + self.out_up3(paths[2])
        return self.out_proj(total)

    def forward(self, values, trace=None):
        if values.shape[-2] % 4 != 0:
            raise ValueError("three-path topology needs chunk length divisible by 4")
        e = self.cfg.exchange_stage
        paths = [values, self.enter(values)]
        for s in range(1, self.cfg.n_stages + 1):
            y = [
                self.path1_blocks[s - 1](paths[0]),
                self.path2_blocks[s - 1](paths[1]),
            ]
            if len(paths) == 3:
                y.append(self.path3_blocks[s - e - 1](paths[2]))
            _trace_stage(trace, PathState(y))
            if s == e:
                paths = list(self.exchange(y[0], y[1]))
                PathState(paths)
            else:
                paths = y
        return self.terminal(paths)


def build_separator(cfg: TopologyConfig, model_dim, n_heads, ffn_dim,
                    dropout=0.0) -> nn.Module:
    """Instantiate the separator network for a topology config."""
    cls = {
        "single_path": SinglePathSeparator,
        "msfft2p": TwoPathSeparator,
        "msfft3p": ThreePathSeparator,
    }[cfg.variant]
    return cls(cfg, model_dim, n_heads, ffn_dim, dropout)


def run_separator(separator: nn.Module, z: ChunkTensor, trace=None) -> ChunkTensor:
    """Run a separator over a ChunkTensor; output shape equals input shape."""
    out = separator(z.values, trace=trace)
    if out.shape != z.values.shape:
        raise RuntimeError(
            f"separator changed shape {tuple(z.values.shape)} -> {tuple(out.shape)}"
        )
    return ChunkTensor(out, z.spec, z.original_frames)


class MaskHead(nn.Module):
    """Turn the separator output into C per-source masks of shape [C, D, L].

    PReLU, a 1x1 channel expansion to C*D, per-source overlap-add back to
    frame domain, a gated (tanh x sigmoid) pair of 1x1 convolutions, and
    the configured mask activation.
    """

    def __init__(self, feature_dim, n_sources, activation="relu"):
        super().__init__()
        if n_sources < 2:
            raise ValueError("separation needs at least two sources")
        self.feature_dim = feature_dim
        self.n_sources = n_sources
        self.activation = activation
        self.pre = nn.PReLU()
        self.expand = nn.Conv2d(feature_dim, n_sources * feature_dim, 1)
        self.gate_tanh = nn.Conv1d(feature_dim, feature_dim, 1)
        self.gate_sigmoid = nn.Conv1d(feature_dim, feature_dim, 1)

    def forward(self, z: ChunkTensor) -> MaskSet:
        v = z.values
        lead = v.shape[:-3]
        d, k, s = v.shape[-3:]
        if d != self.feature_dim:
            raise ValueError(f"expected feature dim {self.feature_dim}, got {d}")
        x = self.expand(self.pre(v).reshape(-1, d, k, s))       # [B, C*D, K, S]
        x = x.reshape(-1, d, k, s)                              # [B*C, D, K, S]
        frames = overlap_add_values(x, z.spec, z.original_frames)  # [B*C, D, L]
        gated = torch.tanh(self.gate_tanh(frames)) * torch.sigmoid(
            self.gate_sigmoid(frames)
        )
        masks = gated.reshape(*lead, self.n_sources, d, -1)
        masks = apply_mask_activation(masks, self.activation)
        return MaskSet(masks, self.activation)
