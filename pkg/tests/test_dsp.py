import numpy as np
import pytest

from fdfnet.config import FrameConfig
from fdfnet.dsp import (RealSpectrogram, Waveform, analysis_frames, dct_matrix, frame_count, istdct,
                        istdct_frames, istdct_frames_adjoint, istft, make_window, overlap_add, stdct,
                        stdct_frames, stft, stft_frames, synthesis, synthesis_adjoint)
from fdfnet.errors import DomainError, ShapeError

SMALL = FrameConfig(window_len=16, hop=8, transform_points=32)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _padded(x, config):
    n_frames = frame_count(len(x), config)
    total = (n_frames - 1) * config.hop + config.window_len
    pad = config.edge_pad
    return np.concatenate([np.zeros(pad), x, np.zeros(total - pad - len(x))]), n_frames


class TestFraming:
    def test_hamming_window(self):
        w = make_window(FrameConfig())
        assert w.shape == (512,)
        assert w[0] == pytest.approx(0.08)
        assert w[-1] == pytest.approx(0.08)
        np.testing.assert_allclose(w, w[::-1])

    @pytest.mark.parametrize("length, expected", [(16000, 128), (1, 4), (128, 4), (129, 5)])
    def test_frame_count(self, length, expected):
        assert frame_count(length, FrameConfig()) == expected

    def test_frames_are_time_major(self, rng):
        x = rng.standard_normal(1000)
        frames = analysis_frames(x, FrameConfig())
        assert frames.shape == (frame_count(1000, FrameConfig()), 512)

    def test_overlap_add(self):
        frames = np.ones((3, 4))
        np.testing.assert_array_equal(overlap_add(frames, 2), [1, 1, 2, 2, 2, 2, 1, 1])

    def test_overlap_add_batches(self, rng):
        frames = rng.standard_normal((2, 3, 5, 8))
        out = overlap_add(frames, 4)
        assert out.shape == (2, 3, 24)
        np.testing.assert_allclose(out[1, 2], overlap_add(frames[1, 2], 4))


class TestRoundTrips:
    @pytest.mark.parametrize("seed", range(50))
    def test_istft_stft(self, seed):
        rng = np.random.default_rng(seed)
        x = Waveform(rng.standard_normal(int(rng.integers(1, 3000))))
        _, _, spec = stft(x)
        y = istft(spec)
        assert len(y) == len(x)
        assert _rel(y.samples, x.samples) <= 1e-6

    @pytest.mark.parametrize("seed", range(50))
    def test_istdct_stdct(self, seed):
        rng = np.random.default_rng(100 + seed)
        x = Waveform(rng.standard_normal(int(rng.integers(1, 3000))))
        y = istdct(stdct(x))
        assert len(y) == len(x)
        assert _rel(y.samples, x.samples) <= 1e-6

    def test_batched_round_trip(self, rng):
        x = rng.standard_normal((3, 700))
        np.testing.assert_allclose(istdct_frames(stdct_frames(x, SMALL), SMALL, 700), x, atol=1e-10)

    def test_silence(self):
        mag, phase, spec = stft(Waveform(np.zeros(300)))
        assert not np.any(mag.frames)
        assert not np.any(istft(spec).samples)

    def test_dct_is_orthonormal(self):
        m = dct_matrix(512)
        assert np.max(np.abs(m @ m.T - np.eye(512))) <= 1e-10


class TestInvariants:
    @pytest.mark.parametrize("k", [1, 3])
    @pytest.mark.parametrize("transform", [stft_frames, stdct_frames])
    def test_leading_silence_shifts_frames(self, rng, transform, k):
        x = rng.standard_normal(300)
        shifted = np.concatenate([np.zeros(k * SMALL.hop), x])
        base, moved = transform(x, SMALL), transform(shifted, SMALL)
        assert moved.shape[0] == base.shape[0] + k
        assert not np.any(moved[:k])
        np.testing.assert_allclose(moved[k:], base, atol=1e-12)

    def test_stdct_parseval_per_frame(self, rng):
        x = rng.standard_normal(2000)
        config = FrameConfig()
        coeffs = stdct_frames(x, config)
        frames = analysis_frames(x, config)
        np.testing.assert_allclose(np.sum(coeffs**2, axis=-1), np.sum(frames**2, axis=-1), rtol=1e-9)

    def test_istdct_is_linear(self, rng):
        n_frames = frame_count(200, SMALL)
        a_frames, b_frames = rng.standard_normal((2, n_frames, SMALL.transform_points))
        a, b = rng.uniform(-3, 3, size=2)
        combined = istdct_frames(a * a_frames + b * b_frames, SMALL, 200)
        expected = a * istdct_frames(a_frames, SMALL, 200) + b * istdct_frames(b_frames, SMALL, 200)
        np.testing.assert_allclose(combined, expected, atol=1e-10)

    def test_single_frame_wola(self, rng):
        config = FrameConfig(window_len=8, hop=8, transform_points=8)
        assert frame_count(8, config) == 1
        frame = rng.standard_normal((1, 8))
        w = make_window(config)
        np.testing.assert_allclose(synthesis(frame, config, 8), frame[0] * w / w**2)
        coeffs = rng.standard_normal((1, 8))
        np.testing.assert_allclose(istdct_frames(coeffs, config, 8), dct_matrix(8).T @ coeffs[0] / w, atol=1e-12)


class TestOracles:
    """Compare against the direct O(N^2) definitions on 3-frame signals."""

    def test_stft_matches_direct_sum(self, rng):
        x = rng.standard_normal(12)
        padded, n_frames = _padded(x, SMALL)
        assert n_frames == 3
        w = make_window(SMALL)
        n, big_n = np.arange(SMALL.window_len), SMALL.transform_points
        expected = np.array([
            [np.sum(w * padded[t * SMALL.hop : t * SMALL.hop + 16] * np.exp(-2j * np.pi * k * n / big_n))
             for k in range(SMALL.stft_bins)]
            for t in range(n_frames)
        ])
        got = stft_frames(x, SMALL)
        assert _rel(got, expected) <= 1e-6

    def test_stdct_matches_direct_sum(self, rng):
        x = rng.standard_normal(10)
        padded, n_frames = _padded(x, SMALL)
        w = make_window(SMALL)
        big_n = SMALL.transform_points
        n = np.arange(SMALL.window_len)
        scale = np.full(big_n, np.sqrt(2.0 / big_n))
        scale[0] = np.sqrt(1.0 / big_n)
        expected = np.array([
            [scale[k] * np.sum(w * padded[t * SMALL.hop : t * SMALL.hop + 16]
                               * np.cos(np.pi * (2 * n + 1) * k / (2 * big_n)))
             for k in range(big_n)]
            for t in range(n_frames)
        ])
        assert _rel(stdct_frames(x, SMALL), expected) <= 1e-6


class TestAdjoints:
    def test_synthesis_adjoint(self, rng):
        length = 90
        n_frames = frame_count(length, SMALL)
        frames = rng.standard_normal((n_frames, SMALL.window_len))
        g = rng.standard_normal(length)
        lhs = np.dot(synthesis(frames, SMALL, length), g)
        rhs = np.sum(frames * synthesis_adjoint(g, SMALL, n_frames))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_istdct_adjoint(self, rng):
        length = 75
        n_frames = frame_count(length, SMALL)
        frames = rng.standard_normal((2, n_frames, SMALL.transform_points))
        g = rng.standard_normal((2, length))
        lhs = np.sum(istdct_frames(frames, SMALL, length) * g)
        rhs = np.sum(frames * istdct_frames_adjoint(g, SMALL, n_frames))
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestContainers:
    def test_waveform_validation(self):
        with pytest.raises(ShapeError):
            Waveform(np.zeros((2, 10)))
        with pytest.raises(DomainError):
            Waveform(np.array([0.0, np.nan]))
        assert Waveform(np.arange(3)).samples.dtype == np.float64

    def test_spectrogram_bins_checked(self):
        with pytest.raises(ShapeError):
            RealSpectrogram(np.zeros((3, 10)))
        spec = RealSpectrogram(np.zeros((3, 512)), length=10)
        assert spec.n_frames == 3

    def test_stft_returns_polar_parts(self, rng):
        x = Waveform(rng.standard_normal(500))
        mag, phase, spec = stft(x)
        np.testing.assert_allclose(mag.frames * np.exp(1j * phase.frames), spec.frames, atol=1e-9)
        assert mag.length == 500 and mag.frames.shape[1] == 257

    def test_empty_signal(self):
        with pytest.raises(DomainError):
            stft(Waveform(np.zeros(0)))
        with pytest.raises(DomainError):
            stdct(Waveform(np.zeros(0)))

    def test_inverse_rejects_wrong_length(self, rng):
        frames = stdct_frames(rng.standard_normal(100), SMALL)
        with pytest.raises(ShapeError):
            istdct_frames(frames, SMALL, 1000)
