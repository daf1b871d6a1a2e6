import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semvid.errors import ShapeError
from semvid.metrics import (
    MetricsReport,
    config_hash,
    feasible_scales,
    ms_ssim,
    psnr,
    write_report,
)


def const_frame(value, dims=(176, 176)):
    return np.full((*dims, 3), value, dtype=np.float64)


class TestPsnr:
    def test_identical_capped_at_100(self):
        a = np.random.default_rng(0).uniform(size=(16, 16, 3))
        assert psnr(a, a) == 100.0

    def test_mse_001_gives_20db(self):
        a = np.zeros((10, 10, 3))
        b = np.full((10, 10, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_zeros_vs_ones_is_0db(self):
        assert psnr(np.zeros((8, 8, 3)), np.ones((8, 8, 3))) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(12, 12, 3))
        b = rng.uniform(size=(12, 12, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((8, 8, 3)), np.zeros((8, 4, 3)))

    def test_tiny_error_still_capped(self):
        a = np.zeros((8, 8, 3))
        b = a.copy()
        b[0, 0, 0] = 1e-9
        assert psnr(a, b) <= 100.0


class TestMsSsim:
    def test_self_similarity_is_exactly_one(self):
        a = np.random.default_rng(2).uniform(size=(176, 176, 3))
        assert ms_ssim(a, a) == 1.0

    def test_constant_image_closed_form(self):
        # luminance-only: ((2*0.25*0.75 + 1e-4) / (0.25^2 + 0.75^2 + 1e-4)) ** 0.1333
        a = const_frame(0.25)
        b = const_frame(0.75)
        lum = (2 * 0.25 * 0.75 + 1e-4) / (0.25**2 + 0.75**2 + 1e-4)
        expected = lum**0.1333
        assert ms_ssim(a, b) == pytest.approx(expected, abs=1e-3)
        assert ms_ssim(a, b) == pytest.approx(0.9342, abs=1e-3)

    def test_noise_monotonicity(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(0.3, 0.7, size=(64, 64, 3))
        small, large = [], []
        for trial in range(100):
            trial_rng = np.random.default_rng(1000 + trial)
            noise = trial_rng.standard_normal(base.shape)
            small.append(ms_ssim(base, np.clip(base + 0.02 * noise, 0, 1)))
            large.append(ms_ssim(base, np.clip(base + 0.10 * noise, 0, 1)))
        assert np.mean(large) < np.mean(small)

    def test_small_input_uses_fewer_scales(self):
        assert feasible_scales(176, 176) == 5
        assert feasible_scales(32, 32) == 2
        assert feasible_scales(11, 11) == 1
        a = np.random.default_rng(4).uniform(size=(32, 32, 3))
        assert ms_ssim(a, a) == 1.0

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a = rng.uniform(size=(48, 48, 3))
            b = rng.uniform(size=(48, 48, 3))
            v = ms_ssim(a, b)
            assert 0.0 <= v <= 1.0

    def test_too_small_rejected(self):
        with pytest.raises(ShapeError):
            feasible_scales(8, 8)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    @settings(max_examples=10, deadline=None)
    def test_symmetry_on_constants(self, va, vb):
        a, b = const_frame(va, (32, 32)), const_frame(vb, (32, 32))
        assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), rel=1e-12)


def build_report(lpips=None):
    rng = np.random.default_rng(6)
    report = MetricsReport(axis_name="snr_db", config={"seed": 1})
    for gi in range(2):
        orig = rng.uniform(size=(5, 32, 32, 3))
        recon = np.clip(orig + 0.05 * rng.standard_normal(orig.shape), 0, 1)
        report.add_gop(axis=10.0, gop_index=gi, original=orig, reconstructed=recon, lpips=lpips)
    return report


class TestReport:
    def test_row_counts(self, tmp_path):
        report = build_report()
        path = write_report(report, str(tmp_path / "r.csv"))
        lines = open(path).read().strip().split("\n")
        assert lines[0] == "axis,gop_index,frame_index,psnr,ms_ssim,lpips"
        frame_rows = [l for l in lines[1:] if l.split(",")[2] != ""]
        agg_rows = [l for l in lines[1:] if l.split(",")[2] == ""]
        assert len(frame_rows) == 10
        assert len(agg_rows) == 2

    def test_rerun_byte_identical(self, tmp_path):
        p1 = write_report(build_report(), str(tmp_path / "a.csv"))
        p2 = write_report(build_report(), str(tmp_path / "b.csv"))
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_missing_lpips_column_empty(self, tmp_path):
        path = write_report(build_report(), str(tmp_path / "r.csv"))
        for line in open(path).read().strip().split("\n")[1:]:
            assert line.endswith(",")

    def test_lpips_adapter_fills_column(self, tmp_path):
        fake = lambda a, b: float(np.mean((a - b) ** 2))
        path = write_report(build_report(lpips=fake), str(tmp_path / "r.csv"))
        for line in open(path).read().strip().split("\n")[1:]:
            assert line.split(",")[5] != ""

    def test_sidecar_manifest(self, tmp_path):
        import json

        path = write_report(build_report(), str(tmp_path / "r.csv"))
        manifest = json.load(open(str(tmp_path / "r.manifest.json")))
        assert manifest["config"] == {"seed": 1}
        assert manifest["config_hash"] == config_hash({"seed": 1})
        assert manifest["n_frame_rows"] == 10

    def test_cap_written_as_number(self, tmp_path):
        report = MetricsReport(axis_name="snr_db")
        frames = np.random.default_rng(7).uniform(size=(2, 32, 32, 3))
        report.add_gop(axis=1.0, gop_index=0, original=frames, reconstructed=frames.copy())
        path = write_report(report, str(tmp_path / "r.csv"))
        body = open(path).read()
        assert "inf" not in body
        assert "100.000000" in body
