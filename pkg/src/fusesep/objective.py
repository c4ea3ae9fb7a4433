"""Separation metrics and permutation-invariant losses.

All metric values are in dB, computed with an 1e-8 energy guard and
capped at +/-60 dB. Functions accept torch tensors (differentiable) or
anything ``torch.as_tensor`` understands; waveforms live on the last
axis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import torch

EPS = 1e-8
DB_CAP = 60.0
MAX_SOURCES = 4


def _as_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    if not t.is_floating_point():
        t = t.float()
    return t


def _check_pair(est: torch.Tensor, ref: torch.Tensor):
    if est.shape[-1] != ref.shape[-1]:
        raise ValueError(
            f"length mismatch: {est.shape[-1]} vs {ref.shape[-1]} samples"
        )
    try:
        torch.broadcast_shapes(est.shape, ref.shape)
    except RuntimeError as exc:
        raise ValueError(
            f"shape mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}"
        ) from exc
    energy = (ref.double() ** 2).sum(dim=-1)
    if (energy == 0).any():
        raise ValueError("reference signal has zero energy")


def _ratio_db(num: torch.Tensor, den: torch.Tensor) -> torch.Tensor:
    # The guard scales with the energies themselves, so the dB value is
    # exactly unchanged when both terms are rescaled together (a fixed
    # 1e-8 would drift the ratio for small signals); the EPS**2 floor
    # only matters when both energies are identically zero.
    guard = EPS * (num + den) + EPS * EPS
    db = 10.0 * torch.log10((num + guard) / (den + guard))
    return torch.clamp(db, -DB_CAP, DB_CAP)


def si_snr(est, ref) -> torch.Tensor:
    """Scale-invariant source-to-noise ratio in dB, [..., T] -> [...].

    Both signals are zero-meaned, the estimate is decomposed into its
    projection onto the reference plus a residual, and the energy ratio
    of the two parts is returned.
    """
    est, ref = _as_tensor(est), _as_tensor(ref)
    _check_pair(est, ref)
    est = est - est.mean(dim=-1, keepdim=True)
    ref = ref - ref.mean(dim=-1, keepdim=True)
    ref_energy = (ref**2).sum(dim=-1, keepdim=True)
    scale = (est * ref).sum(dim=-1, keepdim=True) / (ref_energy + EPS)
    target = scale * ref
    noise = est - target
    return _ratio_db((target**2).sum(dim=-1), (noise**2).sum(dim=-1))


def sdr(est, ref) -> torch.Tensor:
    """Plain (scale-variant) signal-to-distortion ratio in dB."""
    est, ref = _as_tensor(est), _as_tensor(ref)
    _check_pair(est, ref)
    return _ratio_db((ref**2).sum(dim=-1), ((ref - est) ** 2).sum(dim=-1))


def improvement(metric, est, ref, mixture) -> torch.Tensor:
    """metric(est, ref) - metric(mixture, ref): gain over doing nothing."""
    return metric(est, ref) - metric(mixture, ref)


def si_snr_improvement(est, ref, mixture) -> torch.Tensor:
    return improvement(si_snr, est, ref, mixture)


def sdr_improvement(est, ref, mixture) -> torch.Tensor:
    return improvement(sdr, est, ref, mixture)


def neg_si_snr(est, ref) -> torch.Tensor:
    """Negative SI-SNR, the training loss for one (estimate, reference) pair."""
    return -si_snr(est, ref)


@dataclass
class PitResult:
    """Best-permutation loss with its assignment and the full pair matrix.

    ``best_perm[..., c]`` is the reference index assigned to estimate c;
    ``loss`` is the batch mean of the per-example best assignment costs.
    """

    loss: torch.Tensor
    best_perm: torch.Tensor
    per_pair_losses: torch.Tensor


def _pairwise_matrix(ests: torch.Tensor, refs: torch.Tensor, pairwise):
    # [..., C, X] x [..., C, X] -> [..., C_est, C_ref]
    return pairwise(ests.unsqueeze(-2), refs.unsqueeze(-3))


def pit_loss(ests, refs, pairwise=neg_si_snr) -> PitResult:
    """Minimize the mean pairwise loss over all source permutations.

    ``ests`` and ``refs`` are [..., C, T]; the pairwise loss is evaluated
    once per (estimate, reference) pair (C^2 calls, broadcast), then all
    C! assignments are scored from that matrix. Differentiable through
    the selected assignment.
    """
    ests, refs = _as_tensor(ests), _as_tensor(refs)
    if ests.shape != refs.shape:
        raise ValueError(
            f"shape mismatch: {tuple(ests.shape)} vs {tuple(refs.shape)}"
        )
    n_sources = ests.shape[-2]
    if n_sources > MAX_SOURCES:
        raise ValueError(
            f"exhaustive permutation search supports at most {MAX_SOURCES} "
            f"sources, got {n_sources}"
        )
    matrix = _pairwise_matrix(ests, refs, pairwise)
    perms = list(itertools.permutations(range(n_sources)))
    rows = torch.arange(n_sources, device=matrix.device)
    scores = torch.stack(
        [matrix[..., rows, list(p)].mean(dim=-1) for p in perms], dim=-1
    )  # [..., n_perms]
    best_score, best_index = scores.min(dim=-1)
    perm_table = torch.tensor(perms, device=matrix.device)
    return PitResult(
        loss=best_score.mean(),
        best_perm=perm_table[best_index],
        per_pair_losses=matrix,
    )


def _pairwise_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).mean(dim=-1)


def mse_pit_loss(masked_features, ref_features) -> PitResult:
    """Permutation-invariant mean squared error between feature maps.

    Inputs are [..., C, F, L] stacks of masked mixture features and
    encoder-domain reference features; the per-pair cost is the MSE over
    the F x L map, so the assignment-mean divides by channels, frames and
    source count.
    """
    masked, ref = _as_tensor(masked_features), _as_tensor(ref_features)
    if masked.ndim < 3:
        raise ValueError("feature stacks must be at least [C, F, L]")
    if masked.shape != ref.shape:
        raise ValueError(
            f"shape mismatch: {tuple(masked.shape)} vs {tuple(ref.shape)}"
        )
    return pit_loss(masked.flatten(-2), ref.flatten(-2), pairwise=_pairwise_mse)
