import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from conftest import interior_rms, sine
from rirkit.signal import (SampledSignal, WavFormatError, convolve, read_wav,
                           resample, write_wav)


def _write_pcm24(path, values, fs):
    frames = b"".join(struct.pack("<i", v)[:3] for v in values)
    fmt = struct.pack("<HHIIHH", 1, 1, fs, fs * 3, 3, 24)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(frames)) + frames
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


class TestSampledSignal:
    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            SampledSignal([0.0], 0)
        with pytest.raises(ValueError):
            SampledSignal([0.0], 16000.5)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            SampledSignal(np.zeros((2, 3)), 16000)

    def test_samples_are_read_only(self):
        s = SampledSignal([1.0, 2.0], 8000)
        with pytest.raises(ValueError):
            s.samples[0] = 3.0


class TestReadWav:
    def test_pcm16_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        wavfile.write(path, 32000, np.array([32767, 0, -32768], dtype=np.int16))
        s = read_wav(path)
        assert s.sample_rate_hz == 32000
        np.testing.assert_allclose(s.samples, [32767 / 32768, 0.0, -1.0])
        assert s.samples[0] == pytest.approx(0.99997, abs=1e-5)

    def test_float32_passthrough(self, tmp_path):
        path = tmp_path / "f.wav"
        wavfile.write(path, 32000, np.array([0.5, -0.25], dtype=np.float32))
        s = read_wav(path)
        assert s.sample_rate_hz == 32000
        assert s.samples.tolist() == [0.5, -0.25]

    def test_pcm24_scaling(self, tmp_path):
        path = tmp_path / "p24.wav"
        _write_pcm24(path, [2**23 - 1, 0, -(2**23), 2**22], 48000)
        s = read_wav(path)
        assert s.sample_rate_hz == 48000
        np.testing.assert_allclose(s.samples, [(2**23 - 1) / 2**23, 0.0, -1.0, 0.5])

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "st.wav"
        wavfile.write(path, 16000, np.zeros((10, 2), dtype=np.int16))
        with pytest.raises(WavFormatError, match="channel count"):
            read_wav(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFX0000garbage")
        with pytest.raises(WavFormatError):
            read_wav(path)

    def test_unsupported_codec(self, tmp_path):
        path = tmp_path / "u8.wav"
        wavfile.write(path, 16000, np.array([0, 128, 255], dtype=np.uint8))
        with pytest.raises(WavFormatError, match="unsupported"):
            read_wav(path)


class TestWriteWav:
    def test_float32_round_trip_exact(self, tmp_path):
        path = tmp_path / "x.wav"
        values = np.array([0.1, -0.9], dtype=np.float32).astype(np.float64)
        write_wav(SampledSignal(values, 32000), path, "float32")
        assert read_wav(path).samples.tolist() == values.tolist()

    def test_pcm16_round_trip_within_lsb(self, tmp_path):
        path = tmp_path / "x.wav"
        write_wav(SampledSignal([0.1], 32000), path, "pcm16")
        assert abs(read_wav(path).samples[0] - 0.1) <= 2.0**-15

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="non-finite"):
            write_wav(SampledSignal([0.0, np.nan], 32000), tmp_path / "n.wav")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_wav(SampledSignal([0.0], 32000), tmp_path / "missing" / "n.wav")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1.0, 1.0 - 2.0**-15), min_size=1, max_size=64))
    def test_pcm16_quantization_bound(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("q") / "q.wav"
        write_wav(SampledSignal(values, 16000), path, "pcm16")
        err = np.abs(read_wav(path).samples - np.asarray(values))
        assert err.max() <= 2.0**-15


class TestResample:
    def test_identity_rate(self):
        s = SampledSignal(np.arange(5.0), 32000)
        assert resample(s, 32000).samples.tolist() == s.samples.tolist()

    def test_length_arithmetic(self):
        s = SampledSignal(np.zeros(48000), 48000)
        out = resample(s, 32000)
        assert out.sample_rate_hz == 32000
        assert abs(len(out) - 32000) <= 1

    @pytest.mark.parametrize("n,src,dst", [(1001, 48000, 32000), (777, 32000, 44100), (10, 16000, 48000)])
    def test_length_rounding(self, n, src, dst):
        out = resample(SampledSignal(np.zeros(n), src), dst)
        assert len(out) == round(n * dst / src)

    def test_sine_matches_analytic(self):
        out = resample(sine(1000.0, 1.0, 48000), 32000)
        ref = sine(1000.0, 1.0, 32000).samples
        n = min(len(out), len(ref))
        cut = n // 10
        err = out.samples[cut:n - cut] - ref[cut:n - cut]
        gain_db = 20 * np.log10(interior_rms(out.samples[:n]) / interior_rms(ref[:n]))
        assert abs(gain_db) <= 0.1
        assert np.max(np.abs(err)) < 1e-2

    def test_band_limited_rms_preserved(self, rng):
        # content below 0.4x the lower Nyquist (0.4 * 16 kHz = 6.4 kHz)
        fs = 48000
        t = np.arange(fs) / fs
        x = sum(np.sin(2 * np.pi * f * t + p) for f, p in
                zip(rng.uniform(100, 6000, 8), rng.uniform(0, 2 * np.pi, 8)))
        out = resample(SampledSignal(x, fs), 32000)
        gain_db = 20 * np.log10(interior_rms(out.samples) / interior_rms(x))
        assert abs(gain_db) <= 0.1


class TestConvolve:
    def test_unit_impulse_identity(self, rng):
        a = SampledSignal(rng.standard_normal(50), 16000)
        out = convolve(a, SampledSignal([1.0], 16000))
        assert out.samples.tolist() == a.samples.tolist()

    def test_hand_arithmetic(self):
        out = convolve(SampledSignal([1.0, 1.0], 8000), SampledSignal([1.0, 1.0], 8000))
        assert out.samples.tolist() == [1.0, 2.0, 1.0]

    def test_rate_mismatch(self):
        with pytest.raises(ValueError, match="sample-rate mismatch"):
            convolve(SampledSignal([1.0], 8000), SampledSignal([1.0], 16000))

    def test_fft_path_matches_direct(self, rng):
        a = SampledSignal(rng.standard_normal(10_000), 32000)
        b = SampledSignal(rng.standard_normal(3_000), 32000)
        fast = convolve(a, b)  # 3e7 multiply-adds -> FFT path
        direct = np.convolve(a.samples, b.samples)
        assert len(fast) == 10_000 + 3_000 - 1
        assert np.sqrt(np.mean((fast.samples - direct) ** 2)) <= 1e-6

    def test_commutes(self, rng):
        a = SampledSignal(rng.standard_normal(700), 16000)
        b = SampledSignal(rng.standard_normal(2000), 16000)
        d = convolve(a, b).samples - convolve(b, a).samples
        assert np.sqrt(np.mean(d**2)) <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(-5, 5),
           st.integers(0, 20))
    def test_scaled_delta_energy(self, values, gain, delay):
        a = SampledSignal(values, 8000)
        delta = np.zeros(delay + 1)
        delta[delay] = gain
        out = convolve(a, SampledSignal(delta, 8000))
        assert out.energy() == pytest.approx(gain**2 * a.energy(), rel=1e-12, abs=1e-12)
