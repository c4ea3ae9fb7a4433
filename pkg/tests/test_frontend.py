"""Encoder/decoder filterbanks, projection, masks."""

import numpy as np
import pytest
import torch

from fusesep.frontend import (
    EncoderParams,
    MaskExpansion,
    MaskSet,
    WaveDecoder,
    WaveEncoder,
    apply_mask_activation,
    apply_masks,
    decode,
    encode,
    n_frames,
    pad_to_stride,
    project,
)

from oracles import gradient_check


def window_starts(n, window, stride):
    """Every start position whose full window fits — the frame count oracle."""
    return [t for t in range(0, n - window + 1) if t % stride == 0]


def encode_reference(x, basis, stride, relu):
    """Windowed dot products, one frame at a time."""
    starts = window_starts(len(x), basis.shape[1], stride)
    out = np.stack([basis @ x[t : t + basis.shape[1]] for t in starts], axis=1)
    return np.maximum(out, 0.0) if relu else out


def decode_reference(d, basis, stride):
    """Explicit overlap-add of stride-shifted filter copies."""
    e, l = d.shape
    m = basis.shape[1]
    out = np.zeros((l - 1) * stride + m)
    for t in range(l):
        out[t * stride : t * stride + m] += basis.T @ d[:, t]
    return out


class TestFraming:
    def test_frame_count_formula_vs_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            m = int(rng.integers(1, 20))
            stride = int(rng.integers(1, m + 1))
            n = int(rng.integers(m, 200))
            assert n_frames(n, m, stride) == len(window_starts(n, m, stride))

    def test_documented_case(self):
        assert n_frames(32, 16, 8) == 3

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            n_frames(7, 16, 8)

    def test_pad_to_stride(self):
        x = torch.ones(2, 21)
        padded, n = pad_to_stride(x, window=16, stride=8)
        assert n == 21
        assert (padded.shape[-1] - 16) % 8 == 0
        assert padded.shape[-1] >= 21
        torch.testing.assert_close(padded[..., :21], x)
        assert float(padded[..., 21:].abs().sum()) == 0.0

    def test_pad_to_stride_noop_when_aligned(self):
        x = torch.ones(24)
        padded, n = pad_to_stride(x, 16, 8)
        assert padded.shape[-1] == 24 and n == 24

    def test_pad_to_stride_rejects_short_input(self):
        with pytest.raises(ValueError):
            pad_to_stride(torch.ones(5), 16, 8)


class TestEncode:
    def params(self, e=8, m=16, stride=8, nonlinearity="relu", seed=0):
        g = torch.Generator().manual_seed(seed)
        return EncoderParams(torch.randn(e, m, generator=g), stride, nonlinearity)

    def test_zero_in_zero_out(self):
        out = encode(torch.zeros(40), self.params())
        assert out.shape == (8, 4)
        assert float(out.abs().sum()) == 0.0

    def test_frame_count_and_channels(self):
        out = encode(torch.zeros(32), self.params(e=8, m=16, stride=8))
        assert out.shape == (8, 3)

    def test_matches_windowed_dot_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(50)
        p = self.params(e=5, m=6, stride=3, seed=2)
        want = encode_reference(x, p.basis.numpy().astype(np.float64), 3, relu=True)
        got = encode(torch.tensor(x), EncoderParams(p.basis.double(), 3, "relu"))
        np.testing.assert_allclose(got.numpy(), want, atol=1e-10)

    def test_positive_homogeneity_under_relu(self):
        x = torch.randn(40)
        p = self.params()
        torch.testing.assert_close(encode(3.0 * x, p), 3.0 * encode(x, p))

    def test_none_nonlinearity_is_linear(self):
        x = torch.randn(40)
        p = self.params(nonlinearity="none")
        torch.testing.assert_close(encode(-2.0 * x, p), -2.0 * encode(x, p))

    def test_batched_matches_single(self):
        x = torch.randn(3, 40)
        p = self.params()
        out = encode(x, p)
        for b in range(3):
            torch.testing.assert_close(out[b], encode(x[b], p))

    def test_short_input_rejected(self):
        with pytest.raises(ValueError):
            encode(torch.zeros(8), self.params(m=16))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            EncoderParams(torch.zeros(0, 4), 2)
        with pytest.raises(ValueError):
            EncoderParams(torch.zeros(4, 4), 5)
        with pytest.raises(ValueError):
            EncoderParams(torch.zeros(4, 4), 2, "tanh")


class TestProject:
    def test_identity_rows_select_channels(self):
        x = torch.randn(6, 9)
        w = torch.eye(6)[:4]
        torch.testing.assert_close(project(x, w), x[:4])

    def test_zero_in_zero_out(self):
        assert float(project(torch.zeros(6, 9), torch.randn(4, 6)).abs().sum()) == 0.0

    def test_dimension_rules(self):
        x = torch.randn(6, 9)
        with pytest.raises(ValueError):
            project(x, torch.randn(6, 6))  # not a reduction
        with pytest.raises(ValueError):
            project(x, torch.randn(4, 5))  # channel mismatch
        with pytest.raises(ValueError):
            project(x, torch.randn(4))


class TestMasks:
    def test_ones_mask_is_identity(self):
        x = torch.randn(4, 7)
        m = MaskSet(torch.ones(2, 4, 7))
        out = apply_masks(x, m)
        torch.testing.assert_close(out[0], x)
        torch.testing.assert_close(out[1], x)

    def test_zero_mask(self):
        out = apply_masks(torch.randn(4, 7), MaskSet(torch.zeros(2, 4, 7)))
        assert float(out.abs().sum()) == 0.0

    def test_softmax_masks_partition_input(self):
        logits = torch.randn(2, 4, 7)
        masks = apply_mask_activation(logits, "softmax")
        x = torch.randn(4, 7)
        out = apply_masks(x, MaskSet(masks, "softmax"))
        torch.testing.assert_close(out.sum(dim=0), x, atol=1e-6, rtol=1e-6)

    def test_softmax_sums_to_one(self):
        masks = apply_mask_activation(torch.randn(3, 4, 7), "softmax")
        torch.testing.assert_close(
            masks.sum(dim=-3), torch.ones(4, 7), atol=1e-6, rtol=0
        )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            apply_masks(torch.randn(4, 7), MaskSet(torch.ones(2, 4, 8)))

    def test_mask_set_validation(self):
        with pytest.raises(ValueError):
            MaskSet(torch.ones(4, 7))
        with pytest.raises(ValueError):
            MaskSet(torch.ones(2, 4, 7), "relu6")


class TestDecode:
    def test_zero_in_zero_out(self):
        out = decode(torch.zeros(5, 3), torch.randn(5, 16), stride=8)
        assert out.shape == (32,)
        assert float(out.abs().sum()) == 0.0

    def test_output_length_formula(self):
        out = decode(torch.randn(5, 3), torch.randn(5, 16), stride=8)
        assert out.shape[-1] == (3 - 1) * 8 + 16

    def test_impulse_reproduces_filter(self):
        basis = torch.randn(5, 16)
        d = torch.zeros(5, 3)
        d[2, 0] = 1.0
        out = decode(d, basis, stride=8)
        torch.testing.assert_close(out[:16], basis[2])
        assert float(out[16:].abs().sum()) == 0.0

    def test_matches_overlap_add_oracle(self):
        rng = np.random.default_rng(6)
        d = rng.standard_normal((4, 5))
        basis = rng.standard_normal((4, 6))
        want = decode_reference(d, basis, stride=3)
        got = decode(torch.tensor(d), torch.tensor(basis), stride=3)
        np.testing.assert_allclose(got.numpy(), want, atol=1e-10)

    def test_shape_rules(self):
        with pytest.raises(ValueError):
            decode(torch.randn(5, 0), torch.randn(5, 16), stride=8)
        with pytest.raises(ValueError):
            decode(torch.randn(5, 3), torch.randn(4, 16), stride=8)


class TestModules:
    def test_encoder_module_matches_functional(self):
        enc = WaveEncoder(8, 16, 8)
        x = torch.randn(2, 40)
        torch.testing.assert_close(enc(x), encode(x, enc.params))

    def test_projection_module_reduces(self):
        from fusesep.frontend import FeatureProjection

        with pytest.raises(ValueError):
            FeatureProjection(8, 8)
        out = FeatureProjection(8, 4)(torch.randn(2, 8, 9))
        assert out.shape == (2, 4, 9)

    def test_no_frontend_convolution_has_bias(self):
        from fusesep.frontend import FeatureProjection

        for module in (
            WaveEncoder(8, 16, 8),
            FeatureProjection(8, 4),
            MaskExpansion(4, 8),
            WaveDecoder(8, 16, 8),
        ):
            assert all(
                "bias" not in name for name, _ in module.named_parameters()
            ), type(module).__name__

    def test_mask_expansion_reapplies_activation(self):
        exp = MaskExpansion(4, 8, activation="relu")
        out = exp(torch.randn(2, 3, 4, 9)).detach()
        assert out.shape == (2, 3, 8, 9)
        assert float(out.min()) >= 0.0

        exp = MaskExpansion(4, 8, activation="softmax")
        out = exp(torch.randn(2, 3, 4, 9))
        torch.testing.assert_close(
            out.sum(dim=1), torch.ones(2, 8, 9), atol=1e-6, rtol=0
        )

    def test_decoder_module_matches_functional(self):
        dec = WaveDecoder(8, 16, 8)
        d = torch.randn(2, 8, 3)
        torch.testing.assert_close(dec(d), decode(d, dec.basis, 8))


def test_encoder_decoder_gradients_match_finite_differences():
    # T=64, E=8, D=4 instance in 64-bit; scalar loss through the full chain
    torch.manual_seed(3)
    enc = WaveEncoder(8, 16, 8).double()
    dec = WaveDecoder(8, 16, 8).double()
    proj = torch.nn.Conv1d(8, 4, 1, bias=False).double()
    lift = torch.nn.Conv1d(4, 8, 1, bias=False).double()
    x = torch.randn(1, 64, dtype=torch.float64)
    w = torch.randn(1, 64, dtype=torch.float64)

    def loss():
        return (dec(lift(proj(enc(x)))) * w).sum()

    params = list(enc.parameters()) + list(dec.parameters())
    assert gradient_check(loss, params) < 1e-4
