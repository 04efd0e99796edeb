import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from audiogeotag.dataset import AudioClip
from audiogeotag.features import (
    MfccConfig,
    compute_deltas,
    compute_mfcc,
    dct_matrix,
    extract_mfca,
    mel_filterbank,
)


def noise_clip(seconds=0.9, amplitude=0.4, seed=0, rate=16000):
    rng = np.random.default_rng(seed)
    return AudioClip(rng.uniform(-amplitude, amplitude, int(seconds * rate)), rate)


class TestComputeMfcc:
    def test_frame_count(self):
        # 14400 samples, 480-sample window, 240 hop: floor((14400-480)/240)+1
        feats = compute_mfcc(noise_clip(0.9))
        assert feats.shape == (20, 59)

    def test_silent_clip_constant_columns(self):
        feats = compute_mfcc(AudioClip(np.zeros(16000), 16000))
        assert np.all(feats == feats[:, :1])
        assert np.all(np.isfinite(feats))

    def test_scaling_shifts_only_coefficient_zero(self):
        clip = noise_clip(amplitude=0.4, seed=1)
        doubled = AudioClip(clip.samples * 2.0, clip.sample_rate)
        a = compute_mfcc(clip)
        b = compute_mfcc(doubled)
        diff = b - a
        # power scales by 4 in every mel band, so the log spectrum shifts by
        # a constant and only the DCT's constant row reacts
        expected_shift = np.sqrt(1.0 / 40) * 40 * np.log(4.0)
        assert np.max(np.abs(diff[0] - expected_shift)) < 1e-6
        assert np.max(np.abs(diff[1:])) < 1e-6

    def test_insufficient_samples(self):
        with pytest.raises(ValueError, match="insufficient samples"):
            compute_mfcc(AudioClip(np.zeros(100), 16000))

    def test_determinism(self):
        clip = noise_clip(seed=2)
        assert np.array_equal(compute_mfcc(clip), compute_mfcc(clip))

    def test_frame_count_formula_holds(self):
        cfg = MfccConfig()
        for n_samples in (480, 481, 700, 14400, 16001):
            clip = AudioClip(np.full(n_samples, 0.01), 16000)
            n = compute_mfcc(clip, cfg).shape[1]
            assert n == (n_samples - 480) // 240 + 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MfccConfig(n_coeffs=50, n_mels=40).validate()
        with pytest.raises(ValueError):
            MfccConfig(hop_fraction=0.0).validate()
        with pytest.raises(ValueError):
            MfccConfig(fmin=9000.0, fmax=8000.0).validate()
        with pytest.raises(ValueError, match="Nyquist"):
            MfccConfig(fmax=8000.0).validate(sample_rate=8000)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_all_rows_finite(self, seed, amplitude):
        rng = np.random.default_rng(seed)
        clip = AudioClip(
            np.clip(rng.normal(0, amplitude / 3 + 1e-9, 1000), -1, 1), 16000
        )
        assert np.all(np.isfinite(extract_mfca(clip)))


class TestDctMatrix:
    def test_orthonormal_rows(self):
        full = dct_matrix(40, 40)
        assert np.max(np.abs(full @ full.T - np.eye(40))) < 1e-10

    def test_retained_subspace_recovery(self):
        mat = dct_matrix(40, 20)
        rng = np.random.default_rng(0)
        v = rng.normal(size=40)
        reconstructed = mat.T @ (mat @ v)
        assert np.max(np.abs(mat @ reconstructed - mat @ v)) < 1e-10

    def test_too_many_rows(self):
        with pytest.raises(ValueError):
            dct_matrix(10, 11)


class TestMelFilterbank:
    def test_shape_and_nonneg(self):
        fb = mel_filterbank(40, 512, 16000, 0.0, 8000.0)
        assert fb.shape == (40, 257)
        assert np.all(fb >= 0)
        assert np.all(fb.sum(axis=1) > 0)  # every band covers some bins


class TestComputeDeltas:
    def test_constant_input_zero(self):
        feats = np.full((5, 30), 3.7)
        assert np.all(compute_deltas(feats, 2) == 0.0)

    def test_single_frame_zero(self):
        assert np.all(compute_deltas(np.array([[4.0], [1.0]]), 2) == 0.0)

    def test_linear_ramp_interior_slope_one(self):
        t = np.arange(50, dtype=float)
        feats = np.vstack([t, t])
        deltas = compute_deltas(feats, 2)
        assert np.allclose(deltas[:, 2:-2], 1.0, rtol=0, atol=1e-12)

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            compute_deltas(np.zeros((2, 5)), 0)


class TestExtractMfca:
    def test_dimension_is_60(self):
        assert extract_mfca(noise_clip()).shape[0] == 60

    def test_silent_clip_delta_rows_zero(self):
        feats = extract_mfca(AudioClip(np.zeros(16000), 16000))
        assert np.all(feats[20:] == 0.0)

    def test_top_rows_equal_mfcc(self):
        clip = noise_clip(seed=3)
        assert np.array_equal(extract_mfca(clip)[:20], compute_mfcc(clip))
