"""Chunk segmentation and overlap-add for long-sequence processing.

A feature map [D, L] is split into S overlapping chunks of length K with
hop P, stacked into a 3-D tensor [D, K, S]. Both ends are zero-padded so
that every original frame appears in exactly K/P chunks; overlap-add then
inverts segmentation exactly after dividing by that constant coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class ChunkSpec:
    """Chunk length K and hop P, in frames. K must be a multiple of P."""

    chunk_len: int
    hop: int

    def __post_init__(self):
        if self.hop <= 0 or self.chunk_len <= 0:
            raise ValueError("chunk_len and hop must be positive")
        if self.hop > self.chunk_len:
            raise ValueError("hop must not exceed chunk_len")
        if self.chunk_len % self.hop != 0:
            raise ValueError("chunk_len must be divisible by hop for uniform coverage")

    @property
    def coverage(self) -> int:
        return self.chunk_len // self.hop


@dataclass
class ChunkTensor:
    """Segmented representation: values [..., D, K, S] plus layout metadata."""

    values: torch.Tensor
    spec: ChunkSpec
    original_frames: int

    def __post_init__(self):
        if self.values.shape[-2] != self.spec.chunk_len:
            raise ValueError("chunk axis does not match spec.chunk_len")
        if self.original_frames < 1:
            raise ValueError("original_frames must be >= 1")

    @property
    def n_chunks(self) -> int:
        return self.values.shape[-1]


def padding_layout(n_frames: int, spec: ChunkSpec) -> tuple[int, int, int]:
    """(front_pad, back_pad, n_chunks) realizing uniform K/P coverage.

    Front pad is K - P so frame 0 lands in exactly K/P chunks; the back pad
    completes the final chunk covering the last original frame.
    """
    k, p = spec.chunk_len, spec.hop
    front = k - p
    n_chunks = (front + n_frames - 1) // p + 1
    padded = (n_chunks - 1) * p + k
    back = padded - n_frames - front
    return front, back, n_chunks


def segment(x: torch.Tensor, spec: ChunkSpec) -> ChunkTensor:
    """Split [..., D, L] into an overlapped chunk stack [..., D, K, S]."""
    if x.shape[-1] < 1:
        raise ValueError("input must have at least one frame")
    n_frames = x.shape[-1]
    front, back, _ = padding_layout(n_frames, spec)
    xp = F.pad(x, (front, back))
    # [..., D, S, K] -> [..., D, K, S]
    z = xp.unfold(-1, spec.chunk_len, spec.hop).transpose(-1, -2)
    return ChunkTensor(z.contiguous(), spec, n_frames)


def overlap_add_values(
    values: torch.Tensor,
    spec: ChunkSpec,
    original_frames: int,
    normalize: bool = True,
) -> torch.Tensor:
    """Overlap-add a raw [..., D, K, S] stack back to [..., D, L].

    With ``normalize`` the constant K/P coverage is divided out, making this
    the exact inverse of :func:`segment`; without it the raw sums are
    returned (each interior frame accumulates K/P contributions).
    """
    k, p = spec.chunk_len, spec.hop
    front, back, n_chunks = padding_layout(original_frames, spec)
    if values.shape[-1] != n_chunks:
        raise ValueError(
            f"chunk count {values.shape[-1]} inconsistent with "
            f"{original_frames} original frames (expected {n_chunks})"
        )
    lead = values.shape[:-3]
    d = values.shape[-3]
    padded = front + original_frames + back
    flat = values.reshape(-1, d * k, n_chunks)
    # 1-D overlap-add via 2-D fold with a (K, 1) kernel. Each interior frame
    # sums K/P overlapping contributions, so at small hops f32 accumulation
    # error grows with the coverage; accumulate in f64 and cast back.
    out = F.fold(
        flat.to(torch.float64),
        output_size=(padded, 1),
        kernel_size=(k, 1),
        stride=(p, 1),
    )
    out = out.reshape(*lead, d, padded)[..., front : front + original_frames]
    if normalize:
        out = out / spec.coverage
    return out.to(values.dtype)


def overlap_add(z: ChunkTensor, normalize: bool = True) -> torch.Tensor:
    """Inverse of :func:`segment`: [..., D, K, S] -> [..., D, L]."""
    return overlap_add_values(z.values, z.spec, z.original_frames, normalize)
