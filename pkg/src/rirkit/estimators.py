"""scikit-learn style wrappers around the descriptor and generator functions.

These let the toolkit sit inside ``Pipeline`` / ``clone`` / grid search:
hyperparameters live in ``__init__`` and fitted state in trailing-underscore
attributes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_position_pairs, check_signals
from .geometry import ShoeboxScene, distance
from .metrics import ALL_BANDS, DRR_WINDOW_S, MIN_BAND_LEVEL_DB, describe
from .synthesis import (EnrollmentEntry, IsmConfig, SynthesisError,
                        augment_from_enrollment, image_source_rir,
                        select_enrollment)


class RIRDescriptor(TransformerMixin, BaseEstimator):
    """Turn RIRs into a feature matrix of per-band T20 and DRR.

    Columns are ``t20_<band>`` for each band followed by ``drr_db``. Values
    that could not be estimated are NaN.
    """

    def __init__(self, bands=None, drr_window_s=DRR_WINDOW_S, min_band_level_db=MIN_BAND_LEVEL_DB):
        self.bands = bands
        self.drr_window_s = drr_window_s
        self.min_band_level_db = min_band_level_db

    def fit(self, X, y=None):
        check_signals(X)
        self.bands_ = tuple(ALL_BANDS if self.bands is None else self.bands)
        self.n_features_out_ = len(self.bands_) + 1
        return self

    def describe(self, X):
        check_is_fitted(self, "bands_")
        return [describe(s, self.bands_, self.drr_window_s, self.min_band_level_db)
                for s in check_signals(X)]

    def transform(self, X):
        rows = []
        for d in self.describe(X):
            row = [d.t20_s.get(b, np.nan) for b in self.bands_]
            row.append(np.nan if d.drr_db is None else d.drr_db)
            rows.append(row)
        return np.asarray(rows, dtype=np.float64)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "bands_")
        return np.array([f"t20_{b.key}" for b in self.bands_] + ["drr_db"], dtype=object)


class ImageSourceSimulator(BaseEstimator):
    """Shoebox image-source generator; ``fit`` takes the scene."""

    def __init__(self, max_order=10, speed_of_sound_mps=343.0, sample_rate_hz=32000):
        self.max_order = max_order
        self.speed_of_sound_mps = speed_of_sound_mps
        self.sample_rate_hz = sample_rate_hz

    def fit(self, scene, y=None):
        if isinstance(scene, dict):
            scene = ShoeboxScene.from_dict(scene)
        if not isinstance(scene, ShoeboxScene):
            raise TypeError("fit expects a ShoeboxScene")
        self.scene_ = scene
        self.config_ = IsmConfig(self.max_order, self.speed_of_sound_mps, self.sample_rate_hz)
        return self

    def predict(self, X):
        """RIRs for each (source, receiver) pair in ``X``."""
        check_is_fitted(self, "scene_")
        return [image_source_rir(self.scene_, s, r, self.config_) for s, r in check_position_pairs(X)]


class EnrollmentAugmenter(BaseEstimator):
    """Generate RIRs at new positions from a room's enrollment RIRs.

    With ``retime_direct=False`` the nearest enrollment RIR is returned
    unmodified, which is the naive reuse baseline.
    """

    def __init__(self, speed_of_sound_mps=343.0, direct_window_s=DRR_WINDOW_S, retime_direct=True):
        self.speed_of_sound_mps = speed_of_sound_mps
        self.direct_window_s = direct_window_s
        self.retime_direct = retime_direct

    def fit(self, X, y=None):
        """``X`` holds EnrollmentEntry objects or ``(rir, source, receiver)`` tuples."""
        entries = [e if isinstance(e, EnrollmentEntry) else EnrollmentEntry(*e) for e in X]
        if not entries:
            raise SynthesisError("empty enrollment set")
        check_signals([e.rir for e in entries], "enrollment")
        rates = {e.rir.sample_rate_hz for e in entries}
        if len(rates) != 1:
            raise SynthesisError(f"enrollment RIRs have mixed sample rates {sorted(rates)}")
        self.enrollment_ = entries
        self.sample_rate_hz_ = rates.pop()
        return self

    def predict(self, X):
        check_is_fitted(self, "enrollment_")
        out = []
        for s, r in check_position_pairs(X):
            if self.retime_direct:
                out.append(augment_from_enrollment(self.enrollment_, s, r, self.speed_of_sound_mps,
                                                   self.direct_window_s))
            else:
                out.append(self.enrollment_[select_enrollment(self.enrollment_, distance(s, r))].rir)
        return out
