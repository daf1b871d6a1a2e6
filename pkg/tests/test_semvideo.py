import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semvid.errors import ConfigError, ShapeError
from semvid.semvideo import (
    MotionCompensator,
    MotionEstimator,
    ResidualDecoder,
    ResidualEncoder,
    VideoCoder,
    compensate_motion,
    compute_residual,
    decode_residual,
    encode_residual,
    estimate_motion,
)

from gradcheck import fd_gradient_check, randomize_


def make_coder(channels=8, offset_channels=16, width=8, seed=0):
    torch.manual_seed(seed)
    return VideoCoder(channels, offset_channels, width)


class TestMotionEstimation:
    def test_untrained_offsets_are_zero(self):
        coder = make_coder()
        cur = torch.randn(8, 8, 8)
        ref = torch.randn(8, 8, 8)
        offsets = estimate_motion(cur, ref, coder.estimator)
        assert torch.count_nonzero(offsets) == 0

    def test_offset_shape(self):
        coder = make_coder(channels=8, offset_channels=16)
        cur = torch.randn(8, 8, 8)
        offsets = estimate_motion(cur, cur, coder.estimator)
        assert offsets.shape == (16, 8, 8)

    def test_shape_mismatch(self):
        coder = make_coder()
        with pytest.raises(ShapeError):
            estimate_motion(torch.randn(8, 8, 8), torch.randn(8, 4, 4), coder.estimator)

    def test_offsets_respond_to_input_after_training_steps(self):
        # the zero-initialized estimator head only receives gradient once the
        # (also zero-initialized) compensator correction head has moved, so
        # the offset Jacobian switches on after a few steps, not one
        torch.manual_seed(0)
        coder = make_coder(channels=4, width=8)
        cur = torch.rand(1, 4, 8, 8)
        ref = torch.rand(1, 4, 8, 8)
        opt = torch.optim.SGD(coder.parameters(), lr=0.5)
        for _ in range(3):
            opt.zero_grad()
            loss = ((coder(cur, ref) - cur) ** 2).mean()
            loss.backward()
            opt.step()
        base = coder.estimator(cur, ref)
        bumped = coder.estimator(cur + 0.1, ref)
        assert (base - bumped).abs().max() > 0


class TestMotionCompensation:
    def test_untrained_is_reference_exactly(self):
        coder = make_coder()
        ref = torch.randn(8, 8, 8)
        offsets = torch.randn(16, 8, 8)
        out = compensate_motion(ref, offsets, coder.compensator)
        torch.testing.assert_close(out, ref, rtol=0, atol=0)

    def test_full_coder_untrained_identity(self):
        coder = make_coder()
        cur = torch.randn(2, 8, 8, 8)
        ref = torch.randn(2, 8, 8, 8)
        torch.testing.assert_close(coder(cur, ref), ref, rtol=0, atol=0)

    def test_output_shape(self):
        coder = make_coder()
        ref = torch.randn(8, 8, 8)
        offsets = torch.zeros(16, 8, 8)
        assert compensate_motion(ref, offsets, coder.compensator).shape == ref.shape

    def test_offset_shape_mismatch(self):
        coder = make_coder()
        with pytest.raises(ShapeError):
            compensate_motion(torch.randn(8, 8, 8), torch.randn(16, 4, 4), coder.compensator)


class TestResidualArithmetic:
    def test_self_residual_is_zero(self):
        a = torch.randn(4, 8, 8)
        assert torch.count_nonzero(compute_residual(a, a)) == 0

    def test_constant_arithmetic(self):
        cur = torch.full((2, 4, 4), 1.0)
        pred = torch.full((2, 4, 4), 0.25)
        torch.testing.assert_close(
            compute_residual(cur, pred), torch.full((2, 4, 4), 0.75), rtol=0, atol=0
        )

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_residual_plus_prediction_is_exact(self, seed):
        gen = torch.Generator().manual_seed(seed)
        cur = torch.randn(3, 4, 4, generator=gen, dtype=torch.float64)
        pred = torch.randn(3, 4, 4, generator=gen, dtype=torch.float64)
        r = compute_residual(cur, pred)
        # float subtraction then addition of the same operand is bitwise stable
        torch.testing.assert_close(pred + r, cur, rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            compute_residual(torch.zeros(2, 4, 4), torch.zeros(2, 4, 5))


class TestResidualCodec:
    def test_channel_reduction_shape(self):
        torch.manual_seed(0)
        enc = ResidualEncoder(8, 2)
        out = encode_residual(torch.randn(8, 8, 8), enc)
        assert out.shape == (2, 8, 8)
        assert out.numel() == 128

    def test_identity_mode_roundtrip(self):
        enc = ResidualEncoder(4, 4, identity_init=True)
        dec = ResidualDecoder(4, 4, identity_init=True)
        r = torch.randn(4, 8, 8)
        torch.testing.assert_close(decode_residual(encode_residual(r, enc), dec), r, rtol=0, atol=0)

    def test_zero_residual_zero_bias(self):
        torch.manual_seed(0)
        enc = ResidualEncoder(8, 3)
        with torch.no_grad():
            enc.conv.bias.zero_()
        out = encode_residual(torch.zeros(8, 8, 8), enc)
        assert torch.count_nonzero(out) == 0

    def test_compression_rejects_expansion(self):
        with pytest.raises(ConfigError):
            ResidualEncoder(4, 8)

    def test_identity_requires_matching_channels(self):
        with pytest.raises(ConfigError):
            ResidualEncoder(8, 4, identity_init=True)

    @pytest.mark.parametrize("c,c_res", [(8, 8), (8, 4), (8, 1), (3, 2)])
    def test_roundtrip_preserves_shape(self, c, c_res):
        torch.manual_seed(1)
        enc = ResidualEncoder(c, c_res)
        dec = ResidualDecoder(c, c_res)
        r = torch.randn(c, 4, 4)
        assert decode_residual(encode_residual(r, enc), dec).shape == r.shape

    def test_residual_codec_gradient_check(self):
        torch.manual_seed(2)
        enc = ResidualEncoder(4, 2).double()
        dec = ResidualDecoder(4, 2).double()
        r = torch.randn(1, 4, 4, 4, dtype=torch.float64)

        def loss_fn():
            return ((dec(enc(r)) - r) ** 2).mean()

        fd_gradient_check(
            loss_fn, list(enc.parameters()) + list(dec.parameters()), n_coords=10, seed=4
        )


class TestArchitectureParity:
    def test_tx_and_rx_coders_share_structure(self):
        a = make_coder(seed=0)
        b = make_coder(seed=1)
        names_a = [(n, tuple(p.shape)) for n, p in a.named_parameters()]
        names_b = [(n, tuple(p.shape)) for n, p in b.named_parameters()]
        assert names_a == names_b
        # independent weights: at least one tensor differs
        assert any(
            not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters())
        )


class TestMotionGradients:
    def test_coder_gradient_matches_finite_differences(self):
        torch.manual_seed(5)
        coder = make_coder(channels=4, offset_channels=4, width=4).double()
        randomize_(coder, seed=6)
        cur = torch.rand(1, 4, 4, 4, dtype=torch.float64)
        ref = torch.rand(1, 4, 4, 4, dtype=torch.float64)

        def loss_fn():
            return ((coder(cur, ref) - cur) ** 2).mean()

        fd_gradient_check(loss_fn, list(coder.parameters()), n_coords=10, seed=7)
