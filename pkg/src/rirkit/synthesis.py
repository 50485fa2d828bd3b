"""Baseline RIR generators: shoebox image sources, Polack noise, enrollment transplant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ShoeboxScene, as_point, distance
from .metrics import DRR_WINDOW_S, _direct_window
from .signal import SampledSignal

# half-length of the fractional-delay kernel, in samples
KERNEL_HALF_WIDTH = 40
LN_1000 = np.log(1000.0)
POLACK_GAP_S = 5e-3


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class IsmConfig:
    max_order: int = 10
    speed_of_sound_mps: float = 343.0
    sample_rate_hz: int = 32000
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.max_order) <= 50:
            raise SynthesisError("max_order must be in [0, 50]")
        if int(self.sample_rate_hz) < 8000:
            raise SynthesisError("sample_rate_hz must be at least 8000")
        if not self.speed_of_sound_mps > 0:
            raise SynthesisError("speed_of_sound_mps must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "IsmConfig":
        fields = ("max_order", "speed_of_sound_mps", "sample_rate_hz", "rng_seed")
        return cls(**{k: d[k] for k in fields if k in d})

    def to_dict(self) -> dict:
        return {"max_order": self.max_order, "speed_of_sound_mps": self.speed_of_sound_mps,
                "sample_rate_hz": self.sample_rate_hz, "rng_seed": self.rng_seed}


def _axis_images(order):
    """(n, p, hits_low, hits_high) for one axis, up to ``order`` reflections."""
    out = []
    for n in range(-order, order + 1):
        for p in (0, 1):
            low, high = abs(n - p), abs(n)
            if low + high <= order:
                out.append((n, p, low, high))
    return np.array(out, dtype=np.int64)


def image_sources(scene: ShoeboxScene, source, max_order: int):
    """Image-source positions and reflection gains up to ``max_order``.

    Returns ``(positions, gains)`` with shape (k, 3) and (k,). Each gain is
    the product of the per-wall pressure reflection coefficients
    ``sqrt(1 - alpha)`` raised to the number of hits on that wall.
    """
    src = as_point(source)
    dims = np.asarray(scene.dims_m)
    beta = np.sqrt(1.0 - np.asarray(scene.wall_absorption))
    axes = [_axis_images(max_order) for _ in range(3)]
    # image count per order stays small (< 40k at order 30), so a full
    # cartesian product filtered by total order is cheap
    ix, iy, iz = np.meshgrid(*(np.arange(len(a)) for a in axes), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    ax, ay, az = axes[0][ix], axes[1][iy], axes[2][iz]
    order = ax[:, 2] + ax[:, 3] + ay[:, 2] + ay[:, 3] + az[:, 2] + az[:, 3]
    keep = order <= max_order
    ax, ay, az = ax[keep], ay[keep], az[keep]
    positions = np.empty((ax.shape[0], 3))
    gains = np.ones(ax.shape[0])
    for dim, a in enumerate((ax, ay, az)):
        n, p, low, high = a.T
        positions[:, dim] = (1 - 2 * p) * src[dim] + 2 * n * dims[dim]
        with np.errstate(divide="ignore"):
            gains *= np.power(beta[2 * dim], low) * np.power(beta[2 * dim + 1], high)
    nz = gains > 0
    return positions[nz], gains[nz]


def _fractional_kernel(frac):
    """Hann-windowed sinc taps for delays ``frac`` in [0, 1), shape (k, 2H+1)."""
    taps = np.arange(-KERNEL_HALF_WIDTH, KERNEL_HALF_WIDTH + 1)
    t = taps[None, :] - frac[:, None]
    window = 0.5 * (1 + np.cos(np.pi * t / (KERNEL_HALF_WIDTH + 1)))
    return np.sinc(t) * window


def _render_arrivals(delays_samples, amplitudes, length=None):
    whole = np.floor(delays_samples).astype(np.int64)
    frac = delays_samples - whole
    n = int(whole.max()) + KERNEL_HALF_WIDTH + 1 if length is None else length
    out = np.zeros(n + KERNEL_HALF_WIDTH + 1)
    offsets = np.arange(-KERNEL_HALF_WIDTH, KERNEL_HALF_WIDTH + 1)
    # chunked to bound memory on high orders
    for start in range(0, len(whole), 8192):
        sl = slice(start, start + 8192)
        kern = _fractional_kernel(frac[sl]) * amplitudes[sl, None]
        idx = whole[sl, None] + offsets[None, :]
        valid = (idx >= 0) & (idx < out.shape[0])
        out += np.bincount(idx[valid], weights=kern[valid], minlength=out.shape[0])
    return out[:n]


def image_source_rir(scene: ShoeboxScene, source, receiver, config: IsmConfig = IsmConfig()) -> SampledSignal:
    """Shoebox RIR by the image-source method.

    Every image contributes ``gain / r`` at delay ``r / c``, placed on the
    sample grid with a windowed-sinc fractional delay. Walls are frequency
    independent and furniture is ignored.
    """
    src, rcv = as_point(source), as_point(receiver)
    if np.allclose(src, rcv):
        raise SynthesisError("source and receiver coincide (zero distance)")
    for name, p in (("source", src), ("receiver", rcv)):
        if not scene.contains(p):
            raise SynthesisError(f"{name} {p.tolist()} is outside the room")
    positions, gains = image_sources(scene, src, config.max_order)
    r = np.linalg.norm(positions - rcv[None, :], axis=1)
    delays = r / config.speed_of_sound_mps * config.sample_rate_hz
    # bincount order is fixed, so the sum is reproducible
    samples = _render_arrivals(delays, gains / r)
    return SampledSignal(samples, config.sample_rate_hz)


def polack_rir(t60_s: float, drr_db: float = 0.0, direct_delay_s: float = 0.005,
               config: IsmConfig = IsmConfig(), tail_duration_s: float | None = None) -> SampledSignal:
    """Unit direct impulse followed by exponentially decaying Gaussian noise.

    The tail starts 5 ms after the direct sound, its amplitude envelope is
    ``exp(-ln(1000) t / t60)``, and its energy is scaled so the
    direct-to-tail energy ratio is exactly ``drr_db``.
    """
    if not t60_s > 0:
        raise SynthesisError("t60_s must be positive")
    fs = config.sample_rate_hz
    rng = np.random.default_rng(config.rng_seed)
    if tail_duration_s is None:
        tail_duration_s = 1.5 * t60_s
    n_tail = max(int(round(tail_duration_s * fs)), 1)
    t = np.arange(n_tail) / fs
    tail = rng.standard_normal(n_tail) * np.exp(-LN_1000 * t / t60_s)
    tail *= np.sqrt(10.0 ** (-drr_db / 10.0) / np.dot(tail, tail))
    d = int(round(direct_delay_s * fs))
    start = d + int(round(POLACK_GAP_S * fs))
    out = np.zeros(start + n_tail)
    out[d] = 1.0
    out[start:] = tail
    return SampledSignal(out, fs)


@dataclass(frozen=True)
class EnrollmentEntry:
    rir: SampledSignal
    source: tuple
    receiver: tuple

    @property
    def distance_m(self) -> float:
        return distance(self.source, self.receiver)


def split_direct(rir: SampledSignal, window_s=DRR_WINDOW_S):
    """Split ``rir`` into (direct segment, start index, tail with the window zeroed)."""
    x = rir.samples
    peak = int(np.argmax(np.abs(x)))
    start, stop = _direct_window(len(x), peak, rir.sample_rate_hz, window_s)
    tail = x.copy()
    tail[start:stop] = 0.0
    return x[start:stop].copy(), start, tail


def select_enrollment(enrollment, target_distance_m: float) -> int:
    """Index of the entry whose source-receiver distance is closest; ties go to the first."""
    if len(enrollment) == 0:
        raise SynthesisError("empty enrollment set")
    diffs = [abs(e.distance_m - target_distance_m) for e in enrollment]
    return int(np.argmin(diffs))


def augment_from_enrollment(enrollment, target_source, target_receiver,
                            speed_of_sound_mps: float = 343.0,
                            window_s=DRR_WINDOW_S) -> SampledSignal:
    """Nearest-neighbour tail transplant.

    The enrollment RIR whose source-receiver distance is closest to the
    target's is split around its direct peak. The direct segment is moved
    by the difference in travel time (whole samples) and scaled by
    ``r_old / r_new``; the reverberant tail is kept as is.
    """
    entries = [e if isinstance(e, EnrollmentEntry) else EnrollmentEntry(*e) for e in enrollment]
    if not entries:
        raise SynthesisError("empty enrollment set")
    rates = {e.rir.sample_rate_hz for e in entries}
    if len(rates) != 1:
        raise SynthesisError(f"enrollment RIRs have mixed sample rates {sorted(rates)}")
    r_new = distance(target_source, target_receiver)
    if r_new <= 0:
        raise SynthesisError("target source and receiver coincide")
    chosen = entries[select_enrollment(entries, r_new)]
    fs = chosen.rir.sample_rate_hz
    r_old = chosen.distance_m
    direct, start, tail = split_direct(chosen.rir, window_s)
    shift = int(round((r_new - r_old) / speed_of_sound_mps * fs))
    scale = r_old / r_new
    new_start = start + shift
    if new_start < 0:
        direct = direct[-new_start:]
        new_start = 0
    out = np.zeros(max(len(tail), new_start + len(direct)))
    out[:len(tail)] = tail
    out[new_start:new_start + len(direct)] += direct * scale
    return SampledSignal(out, fs)


