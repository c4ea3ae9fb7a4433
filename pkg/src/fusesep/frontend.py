"""Waveform encoder, feature projection, masking, and decoder.

The encoder is a learned filterbank applied as a strided 1-D convolution
(optionally rectified); the decoder is the matching transposed convolution.
Masks are estimated in the reduced D-dimensional feature space and expanded
back to the encoder dimension E before being applied. No convolution here
carries a bias term.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

_ACTIVATIONS = ("relu", "none")
_MASK_ACTIVATIONS = ("relu", "sigmoid", "softmax")


@dataclass
class EncoderParams:
    """Learned filterbank: ``basis`` is [E, M] (filters x window samples)."""

    basis: torch.Tensor
    stride: int
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.basis.ndim != 2 or self.basis.shape[0] < 1 or self.basis.shape[1] < 1:
            raise ValueError("basis must be a non-empty [E, M] matrix")
        if not (0 < self.stride <= self.basis.shape[1]):
            raise ValueError("stride must satisfy 0 < stride <= window")
        if self.nonlinearity not in _ACTIVATIONS:
            raise ValueError(f"unknown nonlinearity: {self.nonlinearity!r}")

    @property
    def n_filters(self) -> int:
        return self.basis.shape[0]

    @property
    def window(self) -> int:
        return self.basis.shape[1]


@dataclass
class MaskSet:
    """C masks shaped like the feature map they gate: [..., C, D, L]."""

    masks: torch.Tensor
    activation: str = "relu"

    def __post_init__(self):
        if self.masks.ndim < 3:
            raise ValueError("masks must be at least [C, D, L]")
        if self.activation not in _MASK_ACTIVATIONS:
            raise ValueError(f"unknown mask activation: {self.activation!r}")

    @property
    def n_sources(self) -> int:
        return self.masks.shape[-3]


def n_frames(n_samples: int, window: int, stride: int) -> int:
    """Number of analysis windows for an input of ``n_samples``."""
    if n_samples < window:
        raise ValueError(f"input length {n_samples} shorter than window {window}")
    return (n_samples - window) // stride + 1


def pad_to_stride(x: torch.Tensor, window: int, stride: int) -> tuple[torch.Tensor, int]:
    """Right-pad [..., T] with zeros so (T - window) is divisible by stride.

    Returns the padded signal and the original length, so decoder output can
    be trimmed back exactly.
    """
    n = x.shape[-1]
    if n < window:
        raise ValueError(f"input length {n} shorter than window {window}")
    rem = (n - window) % stride
    if rem:
        x = F.pad(x, (0, stride - rem))
    return x, n


def encode(x: torch.Tensor, params: EncoderParams) -> torch.Tensor:
    """[..., T] -> [..., E, L]: strided filterbank analysis (+ optional ReLU)."""
    if x.shape[-1] < params.window:
        raise ValueError(
            f"input length {x.shape[-1]} shorter than window {params.window}"
        )
    lead = x.shape[:-1]
    flat = x.reshape(-1, 1, x.shape[-1])
    out = F.conv1d(flat, params.basis.unsqueeze(1), stride=params.stride)
    if params.nonlinearity == "relu":
        out = F.relu(out)
    return out.reshape(*lead, *out.shape[-2:])


def project(x: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """[..., E, L] -> [..., D, L]: per-frame linear map with a [D, E] weight.

    D must be smaller than E; the projection exists to shrink the encoder
    output before separation.
    """
    if weight.ndim != 2:
        raise ValueError("projection weight must be [D, E]")
    d, e = weight.shape
    if x.shape[-2] != e:
        raise ValueError(f"channel mismatch: input has {x.shape[-2]}, weight {e}")
    if d >= e:
        raise ValueError(f"projection must reduce dimension (D={d} >= E={e})")
    return torch.einsum("de,...el->...dl", weight, x)


def apply_masks(x: torch.Tensor, m: MaskSet) -> torch.Tensor:
    """Gate a feature map with each source's mask: [..., D, L] -> [..., C, D, L]."""
    if m.masks.shape[-2:] != x.shape[-2:]:
        raise ValueError(
            f"mask shape {tuple(m.masks.shape[-2:])} does not match "
            f"feature map {tuple(x.shape[-2:])}"
        )
    return x.unsqueeze(-3) * m.masks


def decode(d: torch.Tensor, basis: torch.Tensor, stride: int) -> torch.Tensor:
    """[..., E, L] -> [..., T]: transposed-convolution synthesis.

    Output length is (L - 1) * stride + M; callers trim to the original
    sample count.
    """
    if d.shape[-1] < 1:
        raise ValueError("need at least one frame to decode")
    if basis.ndim != 2 or d.shape[-2] != basis.shape[0]:
        raise ValueError("decoder basis must be [E, M] matching the feature map")
    lead = d.shape[:-2]
    flat = d.reshape(-1, *d.shape[-2:])
    out = F.conv_transpose1d(flat, basis.unsqueeze(1), stride=stride)
    return out.reshape(*lead, out.shape[-1])


class WaveEncoder(nn.Module):
    """Learned analysis filterbank as an nn.Module (weights [E, 1, M])."""

    def __init__(self, n_filters, window, stride, nonlinearity="relu"):
        super().__init__()
        if nonlinearity not in _ACTIVATIONS:
            raise ValueError(f"unknown nonlinearity: {nonlinearity!r}")
        self.conv = nn.Conv1d(1, n_filters, window, stride=stride, bias=False)
        self.nonlinearity = nonlinearity
        self.window = window
        self.stride = stride

    @property
    def params(self) -> EncoderParams:
        return EncoderParams(self.conv.weight.squeeze(1), self.stride, self.nonlinearity)

    def forward(self, x):
        # x: [B, T] -> [B, E, L]
        x = self.conv(x.unsqueeze(1))
        if self.nonlinearity == "relu":
            x = F.relu(x)
        return x


class FeatureProjection(nn.Module):
    """Per-frame linear map E -> D (D < E)."""

    def __init__(self, in_dim, out_dim):
        super().__init__()
        if out_dim >= in_dim:
            raise ValueError(f"projection must reduce dimension ({out_dim} >= {in_dim})")
        self.conv = nn.Conv1d(in_dim, out_dim, 1, bias=False)

    def forward(self, x):
        # x: [B, E, L] -> [B, D, L]
        return self.conv(x)


class MaskExpansion(nn.Module):
    """Expand D-dimensional masks back to the encoder dimension E.

    The separator estimates masks at dimension D; the encoder output being
    masked lives at dimension E. A shared per-frame linear map lifts each
    source's mask, and the configured mask activation is re-applied so the
    expanded masks remain valid gains (nonnegative, or renormalized across
    sources for softmax).
    """

    def __init__(self, feature_dim, encoder_dim, activation="relu"):
        super().__init__()
        if activation not in _MASK_ACTIVATIONS:
            raise ValueError(f"unknown mask activation: {activation!r}")
        self.conv = nn.Conv1d(feature_dim, encoder_dim, 1, bias=False)
        self.activation = activation

    def forward(self, masks):
        # masks: [B, C, D, L] -> [B, C, E, L]
        b, c, d, l = masks.shape
        out = self.conv(masks.reshape(b * c, d, l))
        out = out.reshape(b, c, -1, l)
        return apply_mask_activation(out, self.activation)


def apply_mask_activation(x: torch.Tensor, activation: str) -> torch.Tensor:
    """Apply a mask nonlinearity; softmax normalizes across the source axis."""
    if activation == "relu":
        return F.relu(x)
    if activation == "sigmoid":
        return torch.sigmoid(x)
    if activation == "softmax":
        return torch.softmax(x, dim=-3)
    raise ValueError(f"unknown mask activation: {activation!r}")


class WaveDecoder(nn.Module):
    """Transposed-convolution synthesis filterbank (weights [E, 1, M])."""

    def __init__(self, n_filters, window, stride):
        super().__init__()
        self.conv = nn.ConvTranspose1d(n_filters, 1, window, stride=stride, bias=False)
        self.window = window
        self.stride = stride

    @property
    def basis(self) -> torch.Tensor:
        return self.conv.weight.squeeze(1)

    def forward(self, d):
        # d: [B, E, L] -> [B, (L-1)*stride + M]
        return self.conv(d).squeeze(1)
