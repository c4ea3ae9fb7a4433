"""End-to-end separation model: encode, separate, mask, decode."""

from __future__ import annotations

import torch
import torch.nn as nn

from .chunking import ChunkSpec, segment
from .config import SeparatorConfig
from .frontend import (
    FeatureProjection,
    MaskExpansion,
    WaveDecoder,
    WaveEncoder,
    pad_to_stride,
)
from .fusion import MaskHead, build_separator, run_separator


class SeparationModel(nn.Module):
    """Mixture waveform in, one estimated waveform per source out.

    The pipeline: learned filterbank encoder (E channels), linear
    reduction to D, segmentation into overlapped chunks, the multi-path
    separator, mask estimation at D, mask expansion back to E, masking of
    the encoder output, and transposed-convolution decoding. Outputs are
    trimmed to the input length.
    """

    def __init__(self, cfg: SeparatorConfig):
        super().__init__()
        self.cfg = cfg
        self.chunk_spec = ChunkSpec(cfg.chunk_len, cfg.chunk_hop)
        self.encoder = WaveEncoder(
            cfg.n_filters, cfg.window, cfg.stride, cfg.encoder_nonlinearity
        )
        self.projection = FeatureProjection(cfg.n_filters, cfg.feature_dim)
        self.separator = build_separator(
            cfg.topology(), cfg.feature_dim, cfg.n_heads, cfg.ffn_dim, cfg.dropout
        )
        self.mask_head = MaskHead(cfg.feature_dim, cfg.n_sources, cfg.mask_activation)
        self.mask_expansion = MaskExpansion(
            cfg.feature_dim, cfg.n_filters, cfg.mask_activation
        )
        self.decoder = WaveDecoder(cfg.n_filters, cfg.window, cfg.stride)

    @property
    def n_sources(self) -> int:
        return self.cfg.n_sources

    def forward(self, mix: torch.Tensor, trace=None) -> torch.Tensor:
        """[B, T] -> [B, C, T]."""
        if mix.ndim != 2:
            raise ValueError(f"expected [batch, samples], got {tuple(mix.shape)}")
        if mix.shape[-1] < self.cfg.window:
            raise ValueError(
                f"input length {mix.shape[-1]} shorter than one encoder "
                f"window ({self.cfg.window})"
            )
        padded, n_samples = pad_to_stride(mix, self.cfg.window, self.cfg.stride)
        latent = self.encoder(padded)                     # [B, E, L]
        features = self.projection(latent)                # [B, D, L]
        z = segment(features, self.chunk_spec)            # [B, D, K, S]
        z_out = run_separator(self.separator, z, trace=trace)
        masks = self.mask_head(z_out)                     # [B, C, D, L]
        masks_e = self.mask_expansion(masks.masks)        # [B, C, E, L]
        masked = latent.unsqueeze(1) * masks_e            # [B, C, E, L]
        b, c, e, l = masked.shape
        waves = self.decoder(masked.reshape(b * c, e, l))
        return waves.reshape(b, c, -1)[..., :n_samples]


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
