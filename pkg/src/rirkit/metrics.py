"""RIR descriptors (octave bands, Schroeder decay, T20, DRR) and error aggregates."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .signal import SampledSignal

EDF_FLOOR_DB = -120.0
T20_FIT_RANGE_DB = (-5.0, -25.0)
DRR_WINDOW_S = (0.5e-3, 2.5e-3)
# fraction of each EDF kept for the MSE, as an integer percentage
EDF_KEEP_PERCENT = 95
# bands whose energy sits this far below broadband are treated as empty
MIN_BAND_LEVEL_DB = -40.0


class MetricError(ValueError):
    pass


class ZeroEnergyError(MetricError):
    pass


class InsufficientDecayError(MetricError):
    pass


class NoReverberantTailError(MetricError):
    pass


@dataclass(frozen=True)
class OctaveBand:
    """Octave band around ``center_hz``; ``None`` means broadband."""

    center_hz: float | None = None

    @property
    def is_broadband(self) -> bool:
        return self.center_hz is None

    @property
    def edges_hz(self) -> tuple[float, float]:
        if self.center_hz is None:
            raise MetricError("broadband has no band edges")
        return self.center_hz * 2.0**-0.5, self.center_hz * 2.0**0.5

    @property
    def key(self) -> str:
        return "broadband" if self.center_hz is None else str(int(self.center_hz))

    @property
    def column(self) -> str:
        if self.center_hz is None:
            return "Full"
        c = int(self.center_hz)
        return f"{c // 1000}k" if c >= 1000 else str(c)

    @classmethod
    def from_key(cls, key) -> "OctaveBand":
        if key in (None, "broadband", "Full"):
            return BROADBAND
        return cls(float(key))

    def __str__(self):
        return self.key


BROADBAND = OctaveBand(None)
OCTAVE_CENTERS_HZ = (125, 250, 500, 1000, 2000, 4000)
OCTAVE_BANDS = tuple(OctaveBand(float(c)) for c in OCTAVE_CENTERS_HZ)
ALL_BANDS = (BROADBAND,) + OCTAVE_BANDS


@dataclass(frozen=True, eq=False)
class EnergyDecayFunction:
    values_db: np.ndarray
    sample_rate_hz: int
    band: OctaveBand = BROADBAND

    def __post_init__(self):
        values = np.array(self.values_db, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values_db", values)

    def __len__(self):
        return self.values_db.shape[0]

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate_hz


@dataclass
class AcousticDescriptors:
    """Per-RIR T20 by band, DRR and EDFs.

    Bands whose T20 could not be estimated are missing from ``t20_s``; the
    reason is kept in ``errors`` under the band key (or ``"drr"``).
    """

    t20_s: dict = field(default_factory=dict)
    drr_db: float | None = None
    edfs: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t20_s": {band.key: value for band, value in self.t20_s.items()},
            "drr_db": self.drr_db,
            "errors": dict(self.errors),
        }


def _band_sos(band: OctaveBand, sample_rate_hz: int):
    lo, hi = band.edges_hz
    if hi >= sample_rate_hz / 2:
        raise MetricError(
            f"{band.key} Hz band upper edge {hi:.1f} Hz is above Nyquist for {sample_rate_hz} Hz"
        )
    # order-3 prototype -> 6th-order band-pass
    return butter(3, [lo, hi], btype="bandpass", fs=sample_rate_hz, output="sos")


def octave_filter(signal: SampledSignal, band: OctaveBand) -> SampledSignal:
    """Zero-phase octave band-pass. Broadband returns the input unchanged."""
    if band.is_broadband:
        return signal
    sos = _band_sos(band, signal.sample_rate_hz)
    x = signal.samples
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    y = sosfiltfilt(sos, x, padlen=max(padlen, 0))
    return signal.with_samples(y)


def _edf_from_samples(x: np.ndarray) -> np.ndarray:
    energy = np.cumsum((x * x)[::-1])[::-1]
    total = energy[0]
    if not total > 0:
        raise ZeroEnergyError("zero-energy input has no decay")
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(energy / total)
    return np.maximum(values, EDF_FLOOR_DB)


def schroeder_edf(rir: SampledSignal, band: OctaveBand = BROADBAND) -> EnergyDecayFunction:
    """Backward-integrated energy of the band-filtered RIR, in dB re. total energy."""
    filtered = octave_filter(rir, band)
    return EnergyDecayFunction(_edf_from_samples(filtered.samples), rir.sample_rate_hz, band)


def estimate_t20(edf: EnergyDecayFunction, fit_range_db=T20_FIT_RANGE_DB) -> float:
    """Reverberation time from a line fit to the EDF between -5 and -25 dB.

    Returns -60 / slope, with slope in dB/s.
    """
    upper, lower = fit_range_db
    values = edf.values_db
    if values.size == 0 or values.min() > lower:
        raise InsufficientDecayError(
            f"EDF ({edf.band.key}) never reaches {lower} dB; decay range insufficient"
        )
    mask = (values <= upper) & (values >= lower)
    if np.count_nonzero(mask) < 2:
        raise InsufficientDecayError(
            f"EDF ({edf.band.key}) has fewer than two samples in [{lower}, {upper}] dB"
        )
    t = edf.times_s[mask]
    slope, _ = np.polyfit(t, values[mask], 1)
    if not slope < 0:
        raise InsufficientDecayError(f"EDF ({edf.band.key}) fit is not decaying")
    return float(-60.0 / slope)


def _direct_window(n: int, peak: int, sample_rate_hz: int, window_s=DRR_WINDOW_S):
    before, after = window_s
    start = max(peak - int(round(before * sample_rate_hz)), 0)
    stop = min(peak + int(round(after * sample_rate_hz)) + 1, n)
    return start, stop


def estimate_drr(rir: SampledSignal, window_s=DRR_WINDOW_S) -> float:
    """Direct-to-reverberant ratio in dB.

    The direct part is the window ``[peak - 0.5 ms, peak + 2.5 ms]`` around
    the absolute peak; everything else counts as reverberant.
    """
    x = rir.samples
    total = float(np.dot(x, x))
    if not total > 0:
        raise ZeroEnergyError("zero-energy input has no DRR")
    peak = int(np.argmax(np.abs(x)))
    start, stop = _direct_window(len(x), peak, rir.sample_rate_hz, window_s)
    direct = float(np.dot(x[start:stop], x[start:stop]))
    rest = total - direct
    if rest < 1e-12 * total:
        raise NoReverberantTailError("no reverberant tail outside the direct window")
    return 10.0 * math.log10(direct / rest)


def describe(rir: SampledSignal, bands=ALL_BANDS, drr_window_s=DRR_WINDOW_S,
             min_band_level_db=MIN_BAND_LEVEL_DB) -> AcousticDescriptors:
    """EDFs, T20 and DRR of one RIR.

    A band is left without a T20 when its decay cannot be fitted or when its
    energy lies more than ``min_band_level_db`` below the broadband energy,
    where the decay is numerical leakage rather than signal.
    """
    total = rir.energy()
    if not total > 0:
        raise ZeroEnergyError("zero-energy RIR")
    out = AcousticDescriptors()
    for band in bands:
        try:
            filtered = octave_filter(rir, band)
        except MetricError as exc:
            out.errors[band.key] = str(exc)
            continue
        band_energy = filtered.energy()
        if band_energy > 0:
            edf = EnergyDecayFunction(_edf_from_samples(filtered.samples), rir.sample_rate_hz, band)
            out.edfs[band] = edf
        level_db = 10 * math.log10(band_energy / total) if band_energy > 0 else -math.inf
        if level_db < min_band_level_db:
            out.errors[band.key] = (
                f"band level {level_db:.1f} dB re. broadband; decay range insufficient"
            )
            continue
        try:
            out.t20_s[band] = estimate_t20(out.edfs[band])
        except InsufficientDecayError as exc:
            out.errors[band.key] = str(exc)
    try:
        out.drr_db = estimate_drr(rir, drr_window_s)
    except NoReverberantTailError as exc:
        out.errors["drr"] = str(exc)
    return out


def _check_pairs(predicted, reference):
    if len(predicted) != len(reference):
        raise MetricError(f"length mismatch: {len(predicted)} predicted vs {len(reference)} reference")
    if len(predicted) == 0:
        raise MetricError("need at least one pair")


def t20_mape(predicted, reference, band: OctaveBand = BROADBAND) -> float:
    """Mean absolute percentage error of T20 in ``band``, in percent."""
    _check_pairs(predicted, reference)
    terms = []
    for i, (p, r) in enumerate(zip(predicted, reference)):
        if band not in p.t20_s or band not in r.t20_s:
            raise MetricError(f"pair {i}: T20 missing for band {band.key}")
        ref = r.t20_s[band]
        if not ref > 0:
            raise MetricError(f"pair {i}: reference T20 must be positive")
        terms.append(abs(p.t20_s[band] - ref) / ref)
    return 100.0 * math.fsum(terms) / len(terms)


def edf_pair_mse(predicted: EnergyDecayFunction, reference: EnergyDecayFunction) -> float:
    if predicted.sample_rate_hz != reference.sample_rate_hz:
        raise MetricError("EDF sample-rate mismatch")
    common = min(len(predicted), len(reference))
    keep = common * EDF_KEEP_PERCENT // 100
    if keep == 0:
        raise MetricError("EDF is empty after discarding the final 5%")
    diff = predicted.values_db[:keep] - reference.values_db[:keep]
    return math.fsum(diff * diff) / keep


def edf_mse(predicted, reference) -> float:
    """Mean squared dB difference between EDF pairs.

    Each pair is cut to the shorter length, its final 5% dropped, and
    averaged over time; the per-pair values are then averaged.
    """
    _check_pairs(predicted, reference)
    return math.fsum(edf_pair_mse(p, r) for p, r in zip(predicted, reference)) / len(predicted)


def drr_mse(predicted, reference) -> float:
    _check_pairs(predicted, reference)
    p = np.asarray(predicted, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
        raise MetricError("non-finite DRR value")
    d = p - r
    return math.fsum(d * d) / len(d)


@dataclass
class MetricReport:
    t20_mape_pct: dict
    edf_mse_db: dict
    drr_mse_db: float
    n: int
    t20_n: dict = field(default_factory=dict)
    drr_n: int | None = None

    def to_dict(self) -> dict:
        def keyed(d):
            return {b.key: _json_float(d[b]) for b in ALL_BANDS if b in d}

        return {
            "n": self.n,
            "t20_mape_pct": keyed(self.t20_mape_pct),
            "t20_n": {b.key: self.t20_n[b] for b in ALL_BANDS if b in self.t20_n},
            "edf_mse_db": keyed(self.edf_mse_db),
            "drr_mse_db": _json_float(self.drr_mse_db),
            "drr_n": self.n if self.drr_n is None else self.drr_n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self, label: str = "Generated") -> str:
        cols = [b.column for b in ALL_BANDS]

        def cells(d, fmt):
            return [fmt(d[b]) if b in d and d[b] is not None and math.isfinite(d[b]) else "-"
                    for b in ALL_BANDS]

        header1 = f"{'':<12}| {'T20 MAPE [%]':^55} | {'EDF MSE [dB]':^55} | DRR MSE [dB]"
        header2 = ("{:<12}| ".format("")
                   + " ".join(f"{c:>7}" for c in cols) + " | "
                   + " ".join(f"{c:>7}" for c in cols) + " |")
        row = ("{:<12}| ".format(label[:12])
               + " ".join(f"{c:>7}" for c in cells(self.t20_mape_pct, lambda v: f"{v:.1f}")) + " | "
               + " ".join(f"{c:>7}" for c in cells(self.edf_mse_db, lambda v: f"{v:.1f}")) + " | "
               + (f"{self.drr_mse_db:.1f}" if math.isfinite(self.drr_mse_db) else "-"))
        return "\n".join([header1, header2, row]) + "\n"


def _json_float(v):
    if v is None or not math.isfinite(v):
        return None
    return float(v)


def aggregate(predicted, reference, bands=ALL_BANDS) -> MetricReport:
    """Build a MetricReport from paired descriptor lists.

    T20 MAPE per band and DRR MSE use only the pairs where both sides have
    a value; EDF MSE uses every pair that has the band's EDF.
    """
    _check_pairs(predicted, reference)
    t20, t20_n, edf = {}, {}, {}
    for band in bands:
        pairs = [(p, r) for p, r in zip(predicted, reference)
                 if band in p.t20_s and band in r.t20_s]
        t20_n[band] = len(pairs)
        t20[band] = t20_mape(*zip(*pairs), band=band) if pairs else math.nan
        edf_pairs = [(p.edfs[band], r.edfs[band]) for p, r in zip(predicted, reference)
                     if band in p.edfs and band in r.edfs]
        edf[band] = edf_mse(*zip(*edf_pairs)) if edf_pairs else math.nan
    drr_pairs = [(p.drr_db, r.drr_db) for p, r in zip(predicted, reference)
                 if p.drr_db is not None and r.drr_db is not None]
    drr = drr_mse(*zip(*drr_pairs)) if drr_pairs else math.nan
    return MetricReport(t20, edf, drr, len(predicted), t20_n, len(drr_pairs))
