"""Sequence-processing blocks for the chunked representation.

Every block here maps a [..., D, K, S] chunk tensor to the same shape.
The transformer block runs ``n_intra`` encoder layers along the chunk
axis K (each chunk independently), then ``n_inter`` layers along the
chunk-index axis S (each intra-chunk position independently). A
bidirectional-recurrent block with the same interface is provided for
the structure-transfer experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .chunking import ChunkTensor

_BLOCK_KINDS = ("transformer", "recurrent")


@dataclass(frozen=True)
class BlockConfig:
    kind: str = "transformer"
    n_intra: int = 1
    n_inter: int = 1
    positional_encoding: bool = True

    def __post_init__(self):
        if self.kind not in _BLOCK_KINDS:
            raise ValueError(f"unknown block kind: {self.kind!r}")
        if self.n_intra < 1 or self.n_inter < 1:
            raise ValueError("n_intra and n_inter must both be >= 1")


def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """softmax(q kᵀ / sqrt(head_dim)) v over [..., seq, head_dim] tensors.

    Softmax runs over the key axis, so every attention row sums to one.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(
            f"incompatible attention shapes: q={tuple(q.shape)}, "
            f"k={tuple(k.shape)}, v={tuple(v.shape)}"
        )
    for name, t in (("q", q), ("k", k), ("v", v)):
        if torch.isnan(t).any():
            raise FloatingPointError(f"NaN in attention input {name}")
    scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1) @ v


def positional_encoding(length: int, dim: int, *, dtype=torch.float32,
                        device=None) -> torch.Tensor:
    """Fixed sinusoidal position code, [length, dim].

    Even feature indices carry sin(pos / 10000^(2i/dim)), odd carry the
    matching cos.
    """
    position = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=dtype, device=device)
        * (-math.log(10000.0) / dim)
    )
    pe = torch.zeros(length, dim, dtype=dtype, device=device)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: dim // 2])
    return pe


class MultiHeadAttention(nn.Module):
    """J-head self-attention with learned Q/K/V projections and output map."""

    def __init__(self, model_dim, n_heads):
        super().__init__()
        if model_dim % n_heads != 0:
            raise ValueError(f"model_dim {model_dim} not divisible by heads {n_heads}")
        self.model_dim = model_dim
        self.n_heads = n_heads
        self.head_dim = model_dim // n_heads
        self.q_proj = nn.Linear(model_dim, model_dim)
        self.k_proj = nn.Linear(model_dim, model_dim)
        self.v_proj = nn.Linear(model_dim, model_dim)
        self.out_proj = nn.Linear(model_dim, model_dim)

    def _split(self, x):
        # [B, T, D] -> [B, J, T, D/J]
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x):
        if x.shape[-1] != self.model_dim:
            raise ValueError(
                f"expected feature dim {self.model_dim}, got {x.shape[-1]}"
            )
        b, t, _ = x.shape
        q = self._split(self.q_proj(x))
        k = self._split(self.k_proj(x))
        v = self._split(self.v_proj(x))
        heads = scaled_dot_attention(q, k, v)
        merged = heads.transpose(1, 2).reshape(b, t, self.model_dim)
        return self.out_proj(merged)


class TransformerLayer(nn.Module):
    """Post-norm encoder layer: LN(x + MHA(x)), then LN(· + FFN(·))."""

    def __init__(self, model_dim, n_heads, ffn_dim, dropout=0.0):
        super().__init__()
        self.attention = MultiHeadAttention(model_dim, n_heads)
        self.ffn = nn.Sequential(
            nn.Linear(model_dim, ffn_dim),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(ffn_dim, model_dim),
        )
        self.norm_attn = nn.LayerNorm(model_dim)
        self.norm_ffn = nn.LayerNorm(model_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        # x: [B, T, D]
        y = self.norm_attn(x + self.dropout(self.attention(x)))
        z = self.norm_ffn(y + self.dropout(self.ffn(y)))
        if not torch.isfinite(z).all():
            raise FloatingPointError("non-finite transformer layer output")
        return z


class _LayerStack(nn.Module):
    """A stack of layers over [B, T, D] sequences, with optional position code."""

    def __init__(self, layers, add_positions):
        super().__init__()
        self.layers = nn.ModuleList(layers)
        self.add_positions = add_positions

    def forward(self, x):
        if self.add_positions:
            x = x + positional_encoding(
                x.shape[-2], x.shape[-1], dtype=x.dtype, device=x.device
            )
        for layer in self.layers:
            x = layer(x)
        return x


def _intra_axis(values: torch.Tensor) -> torch.Tensor:
    # [..., D, K, S] -> [B*S, K, D]
    d, k, s = values.shape[-3:]
    return values.movedim(-3, -1).transpose(-3, -2).reshape(-1, k, d)


def _from_intra(seq: torch.Tensor, shape) -> torch.Tensor:
    d, k, s = shape[-3:]
    return seq.reshape(*shape[:-3], s, k, d).transpose(-3, -2).movedim(-1, -3)


def _inter_axis(values: torch.Tensor) -> torch.Tensor:
    # [..., D, K, S] -> [B*K, S, D]
    d, k, s = values.shape[-3:]
    return values.movedim(-3, -1).reshape(-1, s, d)


def _from_inter(seq: torch.Tensor, shape) -> torch.Tensor:
    d, k, s = shape[-3:]
    return seq.reshape(*shape[:-3], k, s, d).movedim(-1, -3)


class SSTransformer(nn.Module):
    """Intra-chunk then inter-chunk transformer stacks on [..., D, K, S].

    Intra layers see each chunk as a length-K sequence (chunks are
    independent); inter layers see each intra-chunk position as a
    length-S sequence across chunks. Shape is preserved.
    """

    def __init__(self, model_dim, n_heads, ffn_dim, n_intra, n_inter,
                 positional_encoding=True, dropout=0.0):
        super().__init__()
        if n_intra < 1 or n_inter < 1:
            raise ValueError("need at least one intra and one inter layer")
        self.model_dim = model_dim
        self.intra = _LayerStack(
            [TransformerLayer(model_dim, n_heads, ffn_dim, dropout)
             for _ in range(n_intra)],
            positional_encoding,
        )
        self.inter = _LayerStack(
            [TransformerLayer(model_dim, n_heads, ffn_dim, dropout)
             for _ in range(n_inter)],
            positional_encoding,
        )

    def forward(self, values):
        if values.ndim < 3 or values.shape[-3] != self.model_dim:
            raise ValueError(
                f"expected [..., {self.model_dim}, K, S], got {tuple(values.shape)}"
            )
        shape = values.shape
        values = _from_intra(self.intra(_intra_axis(values)), shape)
        values = _from_inter(self.inter(_inter_axis(values)), shape)
        return values


class _RecurrentStage(nn.Module):
    """One bidirectional recurrent pass over [B, T, D]: LN(x + proj(BiLSTM(x)))."""

    def __init__(self, model_dim, hidden_dim):
        super().__init__()
        self.rnn = nn.LSTM(model_dim, hidden_dim, batch_first=True,
                           bidirectional=True)
        self.proj = nn.Linear(2 * hidden_dim, model_dim)
        self.norm = nn.LayerNorm(model_dim)

    def forward(self, x):
        out, _ = self.rnn(x)
        return self.norm(x + self.proj(out))


class RecurrentBlock(nn.Module):
    """BiLSTM counterpart of SSTransformer: intra pass along K, inter along S."""

    def __init__(self, model_dim, hidden_dim=None):
        super().__init__()
        hidden_dim = model_dim if hidden_dim is None else hidden_dim
        self.model_dim = model_dim
        self.intra = _RecurrentStage(model_dim, hidden_dim)
        self.inter = _RecurrentStage(model_dim, hidden_dim)

    def forward(self, values):
        if values.ndim < 3 or values.shape[-3] != self.model_dim:
            raise ValueError(
                f"expected [..., {self.model_dim}, K, S], got {tuple(values.shape)}"
            )
        shape = values.shape
        values = _from_intra(self.intra(_intra_axis(values)), shape)
        values = _from_inter(self.inter(_inter_axis(values)), shape)
        return values


def make_block(cfg: BlockConfig, model_dim, n_heads, ffn_dim, dropout=0.0) -> nn.Module:
    """Build one stage block from a BlockConfig."""
    if cfg.kind == "transformer":
        return SSTransformer(model_dim, n_heads, ffn_dim, cfg.n_intra, cfg.n_inter,
                             positional_encoding=cfg.positional_encoding,
                             dropout=dropout)
    block = RecurrentBlock(model_dim)
    return block


def run_block(block: nn.Module, z: ChunkTensor) -> ChunkTensor:
    """Apply a shape-preserving block to a ChunkTensor."""
    out = block(z.values)
    if out.shape != z.values.shape:
        raise RuntimeError(
            f"block changed shape {tuple(z.values.shape)} -> {tuple(out.shape)}"
        )
    return ChunkTensor(out, z.spec, z.original_frames)
