"""Mono audio container, WAV I/O, resampling and convolution."""
from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve, resample_poly

# direct convolution below this many multiply-adds, FFT above
FFT_THRESHOLD = 2**20

KAISER_BETA = 8.0


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """A mono sample buffer tagged with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        rate = int(self.sample_rate_hz)
        if rate != self.sample_rate_hz or rate <= 0:
            raise ValueError(f"sample_rate_hz must be a positive integer, got {self.sample_rate_hz}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", rate)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def with_samples(self, samples) -> "SampledSignal":
        return SampledSignal(samples, self.sample_rate_hz)


def read_wav(path) -> SampledSignal:
    """Read a mono PCM16, PCM24 or IEEE float32 WAV file.

    Integer samples are divided by ``2**(bits-1)`` so they land in [-1, 1).
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: channel count != 1 (got {data.shape[1]})")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 2.0**15
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit PCM into int32, so one divisor covers both
        samples = data.astype(np.float64) / 2.0**31
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")
    if samples.size == 0:
        raise WavFormatError(f"{path}: no samples")
    return SampledSignal(samples, rate)


def write_wav(signal: SampledSignal, path, format: str = "float32") -> None:
    """Write ``signal`` as ``pcm16`` or ``float32`` WAV."""
    x = signal.samples
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot write non-finite samples")
    if format == "float32":
        data = x.astype(np.float32)
    elif format == "pcm16":
        data = np.clip(np.round(x * 2.0**15), -(2**15), 2**15 - 1).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {format!r}; expected 'pcm16' or 'float32'")
    wavfile.write(os.fspath(path), signal.sample_rate_hz, data)


def resample(signal: SampledSignal, target_rate_hz: int) -> SampledSignal:
    """Polyphase windowed-sinc resampling (Kaiser window, beta 8).

    The output has ``round(n * target / source)`` samples.
    """
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    if target_rate_hz == signal.sample_rate_hz:
        return signal
    ratio = Fraction(target_rate_hz, signal.sample_rate_hz)
    up, down = ratio.numerator, ratio.denominator
    # scipy's default half-length is 10 * max(up, down) taps per phase, >= 64 total
    y = resample_poly(signal.samples, up, down, window=("kaiser", KAISER_BETA))
    n_out = int(round(len(signal) * up / down))
    if y.shape[0] >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.shape[0]))
    return SampledSignal(y, target_rate_hz)


def convolve(a: SampledSignal, b: SampledSignal, method: str = "auto") -> SampledSignal:
    """Full linear convolution of two signals at the same rate."""
    if a.sample_rate_hz != b.sample_rate_hz:
        raise ValueError(
            f"sample-rate mismatch: {a.sample_rate_hz} Hz vs {b.sample_rate_hz} Hz"
        )
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot convolve an empty signal")
    if method == "auto":
        method = "fft" if len(a) * len(b) > FFT_THRESHOLD else "direct"
    if method == "direct":
        y = np.convolve(a.samples, b.samples)
    elif method == "fft":
        y = fftconvolve(a.samples, b.samples)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return SampledSignal(y, a.sample_rate_hz)
