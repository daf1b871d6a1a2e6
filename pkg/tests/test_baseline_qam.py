import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semvid.baseline.qam import (
    make_constellation,
    qam_demodulate_llr,
    qam_hard_demodulate,
    qam_modulate,
)
from semvid.channel import ChannelRealization
from semvid.errors import ConfigError, InputDataError


def clean_realization(n, sigma2=0.0):
    return ChannelRealization(
        fading=np.ones(n, dtype=np.complex128),
        noise=np.zeros(n, dtype=np.complex128),
        noise_variance=sigma2,
        snr_db=0.0,
    )


class TestConstellation:
    def test_orders(self):
        assert make_constellation(4).bits_per_symbol == 2
        assert make_constellation(16).bits_per_symbol == 4
        with pytest.raises(ConfigError):
            make_constellation(8)

    def test_4qam_bits_00_maps_to_first_quadrant(self):
        c = make_constellation(4)
        block = qam_modulate(np.array([0, 0], dtype=np.uint8), c)
        expected = (1.0 + 1.0j) / np.sqrt(2.0)
        np.testing.assert_allclose(block.symbols, [expected], rtol=1e-15)

    def test_unit_energy_exact_on_lattice(self):
        # integer-arithmetic check: mean |raw|^2 equals the squared norm factor
        for order in (4, 16):
            c = make_constellation(order)
            raw_sq = c.raw_points.real.astype(np.int64) ** 2 + c.raw_points.imag.astype(
                np.int64
            ) ** 2
            assert int(raw_sq.sum()) == c.raw_energy * order

    def test_16qam_unit_energy_float(self):
        c = make_constellation(16)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_gray_adjacency(self):
        # lattice neighbors along one axis differ in exactly one label bit
        for order in (4, 16):
            c = make_constellation(order)
            raw = c.raw_points
            checked = 0
            for a in range(order):
                for b in range(order):
                    d = raw[a] - raw[b]
                    if (abs(d.real) == 2 and d.imag == 0) or (d.real == 0 and abs(d.imag) == 2):
                        assert bin(a ^ b).count("1") == 1
                        checked += 1
            assert checked > 0

    def test_all_points_distinct(self):
        c = make_constellation(16)
        assert len({complex(p) for p in c.points}) == 16


class TestModulate:
    @given(st.integers(0, 500))
    @settings(max_examples=20, deadline=None)
    def test_modulate_harddemap_bijection(self, seed):
        rng = np.random.default_rng(seed)
        c = make_constellation(16 if seed % 2 else 4)
        bits = rng.integers(0, 2, size=c.bits_per_symbol * 32).astype(np.uint8)
        block = qam_modulate(bits, c)
        np.testing.assert_array_equal(qam_hard_demodulate(block.symbols, c), bits)

    def test_bad_length(self):
        with pytest.raises(InputDataError):
            qam_modulate(np.array([1, 0, 1], dtype=np.uint8), make_constellation(4))

    def test_scale_is_one(self):
        c = make_constellation(4)
        assert qam_modulate(np.array([0, 1], dtype=np.uint8), c).scale == 1.0


class TestSoftDemapper:
    def test_vanishing_noise_gives_clamped_correct_signs(self):
        c = make_constellation(16)
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=4 * 16).astype(np.uint8)
        block = qam_modulate(bits, c)
        r = clean_realization(16, sigma2=0.0)
        llrs = qam_demodulate_llr(block.symbols, r, c)
        assert np.all(np.abs(llrs) == 30.0)
        np.testing.assert_array_equal((llrs < 0).astype(np.uint8), bits)

    def test_equidistant_point_gives_zero_llr(self):
        c = make_constellation(4)
        # halfway between the two points that differ only in the I-axis bit
        y = np.array([0.0 + 1.0j / np.sqrt(2.0)])
        r = clean_realization(1, sigma2=0.5)
        llrs = qam_demodulate_llr(y, r, c)
        assert llrs[0] == 0.0  # first bit undecidable
        assert llrs[1] > 0.0  # second bit clearly 0

    def test_monte_carlo_signs_match_nearest_point(self):
        c = make_constellation(16)
        rng = np.random.default_rng(1)
        n = 2000
        h = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(0.3 / 2)
        r = ChannelRealization(fading=h, noise=noise, noise_variance=0.3, snr_db=5.0)
        bits = rng.integers(0, 2, size=4 * n).astype(np.uint8)
        block = qam_modulate(bits, c)
        y = h * block.symbols + noise
        llrs = qam_demodulate_llr(y, r, c)
        hard_from_llr = (llrs < 0).astype(np.uint8)
        # brute-force oracle: nearest point under the faded metric
        labels = np.abs(y[:, None] - h[:, None] * c.points[None, :]).argmin(axis=1)
        oracle = np.empty_like(hard_from_llr)
        for b in range(4):
            oracle[b::4] = c.bit_of_symbol(labels, b)
        np.testing.assert_array_equal(hard_from_llr, oracle)

    def test_capacity_check(self):
        c = make_constellation(4)
        with pytest.raises(InputDataError):
            qam_demodulate_llr(np.zeros(4, dtype=np.complex128), clean_realization(2), c)
