"""Input checks shared by the estimators and the harness."""
import numpy as np

from .signal import SampledSignal


def check_signals(X, name="X"):
    """Return ``X`` as a list of non-empty SampledSignal objects."""
    if isinstance(X, SampledSignal):
        X = [X]
    signals = list(X)
    if not signals:
        raise ValueError(f"{name} is empty")
    for i, s in enumerate(signals):
        if not isinstance(s, SampledSignal):
            raise TypeError(f"{name}[{i}] is {type(s).__name__}, expected SampledSignal")
        if len(s) == 0:
            raise ValueError(f"{name}[{i}] has no samples")
    return signals


def check_position_pairs(X):
    """Coerce source/receiver pairs to an array of shape (n, 2, 3).

    Accepts a sequence of ``(source, receiver)`` pairs or an (n, 6) array.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 6:
        arr = arr.reshape(-1, 2, 3)
    if arr.ndim != 3 or arr.shape[1:] != (2, 3):
        raise ValueError(f"expected (n, 2, 3) source/receiver pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    return arr
