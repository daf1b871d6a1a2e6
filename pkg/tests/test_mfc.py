import pytest
import torch

from semvid.errors import ShapeError
from semvid.mfc import (
    ChannelDescriptor,
    FrameHistory,
    MultiFrameAttention,
    compensate_reference,
    cross_attend,
)

from gradcheck import fd_gradient_check, randomize_

CSI = ChannelDescriptor(mean_fading_power=1.0, noise_variance=0.1)


def make_mfa(channels=4, seed=0):
    torch.manual_seed(seed)
    return MultiFrameAttention(channels)


class TestCrossAttend:
    def test_zero_queries_give_mean_of_values(self):
        vb = torch.tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = cross_attend(torch.zeros(2, 3), torch.zeros(3, 3), vb)
        expected = vb.mean(dim=0).expand(2, 2)
        torch.testing.assert_close(out, expected)

    def test_single_value_token(self):
        vb = torch.tensor([[7.0, -1.0]])
        out = cross_attend(torch.randn(5, 3), torch.randn(1, 3), vb)
        torch.testing.assert_close(out, vb.expand(5, 2))

    def test_softmax_rows_sum_to_one(self):
        qa, ka = torch.randn(6, 4), torch.randn(9, 4)
        attn = torch.softmax(qa @ ka.T, dim=-1)
        torch.testing.assert_close(attn.sum(dim=-1), torch.ones(6), atol=1e-6, rtol=0)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            cross_attend(torch.zeros(2, 3), torch.zeros(2, 4), torch.zeros(2, 3))
        with pytest.raises(ShapeError):
            cross_attend(torch.zeros(2, 3), torch.zeros(4, 3), torch.zeros(5, 3))


class TestCompensateReference:
    def test_gamma_zero_is_passthrough(self):
        mfa = make_mfa()
        ref = torch.randn(4, 8, 8)
        hist = FrameHistory(frames=[torch.randn(4, 8, 8), torch.randn(4, 8, 8)])
        out = compensate_reference(ref, hist, CSI, mfa)
        torch.testing.assert_close(out, ref, rtol=0, atol=0)

    def test_empty_history_fallback(self):
        mfa = make_mfa()
        with torch.no_grad():
            mfa.gamma.fill_(0.7)
        ref = torch.randn(4, 8, 8)
        out = compensate_reference(ref, FrameHistory(), CSI, mfa)
        assert out.shape == ref.shape
        assert torch.isfinite(out).all()

    @pytest.mark.parametrize("n_hist", [0, 1, 2, 3])
    def test_output_shape_any_history_length(self, n_hist):
        mfa = make_mfa()
        with torch.no_grad():
            mfa.gamma.fill_(0.3)
        ref = torch.randn(4, 4, 4)
        hist = FrameHistory(frames=[torch.randn(4, 4, 4) for _ in range(n_hist)])
        assert compensate_reference(ref, hist, CSI, mfa).shape == ref.shape

    def test_history_permutation_invariance(self):
        mfa = make_mfa().double()
        randomize_(mfa, seed=1)
        with torch.no_grad():
            mfa.gamma.fill_(0.9)
        ref = torch.randn(4, 4, 4, dtype=torch.float64)
        frames = [torch.randn(4, 4, 4, dtype=torch.float64) for _ in range(3)]
        a = compensate_reference(ref, frames, CSI, mfa)
        b = compensate_reference(ref, [frames[2], frames[0], frames[1]], CSI, mfa)
        torch.testing.assert_close(a, b, rtol=0, atol=1e-12)

    def test_history_shape_mismatch(self):
        mfa = make_mfa()
        with pytest.raises(ShapeError):
            compensate_reference(
                torch.randn(4, 8, 8), [torch.randn(4, 4, 4)], CSI, mfa
            )

    def test_csi_conditions_output(self):
        mfa = make_mfa()
        randomize_(mfa, seed=2)
        with torch.no_grad():
            mfa.gamma.fill_(0.5)
        ref = torch.randn(4, 8, 8)
        hist = [torch.randn(4, 8, 8)]
        low = compensate_reference(ref, hist, ChannelDescriptor(1.0, 1.0), mfa)
        high = compensate_reference(ref, hist, ChannelDescriptor(1.0, 0.01), mfa)
        assert (low - high).abs().max() > 0

    def test_descriptor_validation(self):
        with pytest.raises(ShapeError):
            ChannelDescriptor(-1.0, 0.1)


class TestFrameHistory:
    def test_window_cap_and_order(self):
        hist = FrameHistory(window=3)
        frames = [torch.full((1, 2, 2), float(i)) for i in range(5)]
        for f in frames:
            hist.push(f)
        assert len(hist) == 3
        # most recent first
        assert [float(f[0, 0, 0]) for f in hist.frames] == [4.0, 3.0, 2.0]


class TestGradients:
    def test_gradient_matches_finite_differences(self):
        mfa = make_mfa().double()
        randomize_(mfa, seed=3)
        with torch.no_grad():
            mfa.gamma.fill_(0.5)
        ref = torch.randn(4, 4, 4, dtype=torch.float64)
        hist = [torch.randn(4, 4, 4, dtype=torch.float64) for _ in range(2)]
        target = torch.randn(4, 4, 4, dtype=torch.float64)

        def loss_fn():
            return ((compensate_reference(ref, hist, CSI, mfa) - target) ** 2).mean()

        fd_gradient_check(loss_fn, list(mfa.parameters()), n_coords=10, seed=8)

    def test_gamma_receives_gradient_at_zero(self):
        mfa = make_mfa()
        ref = torch.randn(4, 4, 4)
        loss = ((compensate_reference(ref, [], CSI, mfa) - torch.randn(4, 4, 4)) ** 2).mean()
        loss.backward()
        assert mfa.gamma.grad is not None and mfa.gamma.grad.abs() > 0
