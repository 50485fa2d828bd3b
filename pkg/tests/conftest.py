import numpy as np
import pytest

from rirkit.signal import SampledSignal

_ACCEPTANCE = {}


def sine(freq_hz, duration_s, fs, amplitude=1.0):
    t = np.arange(int(round(duration_s * fs))) / fs
    return SampledSignal(amplitude * np.sin(2 * np.pi * freq_hz * t), fs)


def interior_rms(x, frac=0.8):
    n = len(x)
    cut = int(n * (1 - frac) / 2)
    seg = np.asarray(x)[cut:n - cut]
    return float(np.sqrt(np.mean(seg**2)))


def make_manifest(rooms, scenario_id=1, requests_per_room=10, positions_per_room=8,
                  speakers=3, seed=0, dims=(5.0, 4.0, 3.0), challenge_shaped=False):
    """Manifest dict with random in-room geometry for every request and position."""
    gen = np.random.default_rng(seed)
    lo, hi = 0.3, np.asarray(dims) - 0.3

    def pt():
        return gen.uniform(lo, hi).round(3).tolist()

    return {
        "schema_version": 1,
        "scenario_id": scenario_id,
        "challenge_shaped": challenge_shaped,
        "speakers_per_position": speakers,
        "rooms": list(rooms),
        "eval_requests": {r: [{"source": pt(), "receiver": pt()} for _ in range(requests_per_room)]
                          for r in rooms},
        "test_positions": {r: [{"source": pt(), "receiver": pt()} for _ in range(positions_per_room)]
                           for r in rooms},
    }


def write_speech_corpus(directory, n=5, fs=16000, seconds=1.0, seed=0):
    """Noise-burst stand-ins for dry speech, written as PCM16."""
    from rirkit.signal import write_wav
    directory.mkdir(parents=True, exist_ok=True)
    gen = np.random.default_rng(seed)
    for k in range(n):
        x = 0.3 * gen.standard_normal(int(seconds * fs)) * np.hanning(int(seconds * fs))
        write_wav(SampledSignal(x, fs), directory / f"spk{k:02d}.wav", "pcm16")
    return directory


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0] if marker.args else item.name
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
        status = "PASS" if _ACCEPTANCE[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")
