"""Scenario manifests, Task 1 / Task 2 scoring, test-set assembly, submission checks."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import as_point, distance
from .metrics import MetricReport, aggregate, describe
from .signal import SampledSignal, WavFormatError, convolve, read_wav, resample

SCHEMA_VERSION = 1

CHALLENGE_ROOMS_PER_SCENARIO = 10
CHALLENGE_REQUESTS_PER_ROOM = 10
CHALLENGE_POSITIONS_PER_ROOM = 8
CHALLENGE_SPEAKERS_PER_POSITION = 3

SDE_SAMPLE_RATE_HZ = 32000
SDE_DURATION_S = 10.0
MAX_RIR_DURATION_S = 10.0

DISTANCE_BINS = (
    (0.0, 2.0, "0–2m"),
    (2.0, 4.0, "2–4m"),
    (4.0, 6.0, "4–6m"),
    (6.0, math.inf, "6+m"),
)
PREDICTION_HEADER = ("utterance_id", "predicted_distance_m")
TRUTH_HEADER = ("utterance_id", "true_distance_m")


class ManifestError(ValueError):
    pass


class ScoringError(ValueError):
    pass


class SubmissionError(OSError):
    pass


@dataclass(frozen=True)
class EnrollmentRecord:
    rir: str
    source: tuple
    receiver: tuple


@dataclass(frozen=True)
class EvalRequest:
    id: str
    room: str
    source: tuple
    receiver: tuple


@dataclass(frozen=True)
class TestPosition:
    id: str
    room: str
    source: tuple | None = None
    receiver: tuple | None = None
    rir: str | None = None

    @property
    def hidden(self) -> bool:
        return self.source is None or self.receiver is None

    @property
    def key(self) -> str:
        return f"{self.room}_{self.id}"


@dataclass(frozen=True)
class TestUtterance:
    id: str
    room: str
    position: TestPosition
    speaker_slot: int

    @property
    def true_distance_m(self) -> float | None:
        if self.position.hidden:
            return None
        return distance(self.position.source, self.position.receiver)


@dataclass
class ScenarioManifest:
    """One scenario's rooms, enrollment data, Task-1 requests and Task-2 positions.

    Relative paths are resolved against ``root`` (the manifest's directory).
    """

    scenario_id: int
    rooms: list
    enrollment: dict = field(default_factory=dict)
    eval_requests: dict = field(default_factory=dict)
    test_positions: dict = field(default_factory=dict)
    speakers_per_position: int = CHALLENGE_SPEAKERS_PER_POSITION
    sample_rate_hz: int = SDE_SAMPLE_RATE_HZ
    max_rir_duration_s: float = MAX_RIR_DURATION_S
    challenge_shaped: bool = False
    root: Path = field(default_factory=Path)

    def requests(self) -> list:
        return [req for room in self.rooms for req in self.eval_requests.get(room, [])]

    def request_ids(self) -> list:
        return [req.id for req in self.requests()]

    def positions(self) -> list:
        return [p for room in self.rooms for p in self.test_positions.get(room, [])]

    def test_utterances(self) -> list:
        """Utterances in room, position, speaker order; ids are ``<room>_<position>_<slot>``."""
        return [TestUtterance(f"{p.room}_{p.id}_{k}", p.room, p, k)
                for p in self.positions() for k in range(self.speakers_per_position)]

    def utterance_ids(self) -> list:
        return [u.id for u in self.test_utterances()]

    def truth(self) -> dict:
        out = {}
        for u in self.test_utterances():
            if u.true_distance_m is None:
                raise ManifestError(f"utterance {u.id}: position geometry is hidden")
            out[u.id] = u.true_distance_m
        return out

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    def to_dict(self) -> dict:
        def pt(p):
            return None if p is None else list(p)

        return {
            "schema_version": SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "challenge_shaped": self.challenge_shaped,
            "sample_rate_hz": self.sample_rate_hz,
            "max_rir_duration_s": self.max_rir_duration_s,
            "speakers_per_position": self.speakers_per_position,
            "rooms": list(self.rooms),
            "enrollment": {
                room: [{"rir": e.rir, "source": pt(e.source), "receiver": pt(e.receiver)} for e in recs]
                for room, recs in self.enrollment.items()
            },
            "eval_requests": {
                room: [{"id": r.id, "source": pt(r.source), "receiver": pt(r.receiver)} for r in reqs]
                for room, reqs in self.eval_requests.items()
            },
            "test_positions": {
                room: [{k: v for k, v in (("id", p.id), ("source", pt(p.source)),
                                          ("receiver", pt(p.receiver)), ("rir", p.rir)) if v is not None}
                       for p in ps]
                for room, ps in self.test_positions.items()
            },
        }


def _point(value, where):
    try:
        return tuple(as_point(value).tolist())
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc


def manifest_from_dict(d: dict, root=".") -> ScenarioManifest:
    """Build and validate a ScenarioManifest from its JSON form."""
    if not isinstance(d, dict):
        raise ManifestError("manifest must be a JSON object")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema_version {d.get('schema_version')!r}")
    try:
        scenario_id = int(d["scenario_id"])
        rooms = [str(r) for r in d["rooms"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"missing or invalid field: {exc}") from exc
    if scenario_id not in (1, 2):
        raise ManifestError(f"scenario_id must be 1 or 2, got {scenario_id}")
    if not rooms or len(set(rooms)) != len(rooms):
        raise ManifestError("rooms must be a non-empty list of unique labels")

    def per_room(key):
        section = d.get(key, {})
        if not isinstance(section, dict):
            raise ManifestError(f"{key} must map room -> list")
        unknown = set(section) - set(rooms)
        if unknown:
            raise ManifestError(f"{key} references unknown rooms {sorted(unknown)}")
        return section

    try:
        enrollment = {
            room: [EnrollmentRecord(str(e["rir"]), _point(e["source"], f"{room} enrollment"),
                                    _point(e["receiver"], f"{room} enrollment")) for e in recs]
            for room, recs in per_room("enrollment").items()
        }
        requests = {}
        for room, reqs in per_room("eval_requests").items():
            requests[room] = [
                EvalRequest(str(r.get("id", f"{room}_{k:02d}")), room,
                            _point(r["source"], f"{room} request {k}"),
                            _point(r["receiver"], f"{room} request {k}"))
                for k, r in enumerate(reqs)
            ]
        positions = {}
        for room, ps in per_room("test_positions").items():
            positions[room] = [
                TestPosition(str(p.get("id", f"p{k}")), room,
                             None if p.get("source") is None else _point(p["source"], f"{room} position {k}"),
                             None if p.get("receiver") is None else _point(p["receiver"], f"{room} position {k}"),
                             p.get("rir"))
                for k, p in enumerate(ps)
            ]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ManifestError(f"schema violation: {exc!r}") from exc

    m = ScenarioManifest(
        scenario_id=scenario_id,
        rooms=rooms,
        enrollment=enrollment,
        eval_requests=requests,
        test_positions=positions,
        speakers_per_position=int(d.get("speakers_per_position", CHALLENGE_SPEAKERS_PER_POSITION)),
        sample_rate_hz=int(d.get("sample_rate_hz", SDE_SAMPLE_RATE_HZ)),
        max_rir_duration_s=float(d.get("max_rir_duration_s", MAX_RIR_DURATION_S)),
        challenge_shaped=bool(d.get("challenge_shaped", False)),
        root=Path(root),
    )
    ids = m.request_ids()
    if len(set(ids)) != len(ids):
        raise ManifestError("duplicate Task-1 request ids")
    for room in rooms:
        pids = [p.id for p in positions.get(room, [])]
        if len(set(pids)) != len(pids):
            raise ManifestError(f"{room}: duplicate test position ids")
    if m.speakers_per_position < 1:
        raise ManifestError("speakers_per_position must be at least 1")
    if m.challenge_shaped:
        _check_challenge_counts(m)
    return m


def _check_challenge_counts(m: ScenarioManifest):
    problems = []
    if len(m.rooms) != CHALLENGE_ROOMS_PER_SCENARIO:
        problems.append(f"{len(m.rooms)} rooms, expected {CHALLENGE_ROOMS_PER_SCENARIO}")
    for room in m.rooms:
        n = len(m.eval_requests.get(room, []))
        if n != CHALLENGE_REQUESTS_PER_ROOM:
            problems.append(f"{room}: {n} Task-1 requests, expected {CHALLENGE_REQUESTS_PER_ROOM}")
        n = len(m.test_positions.get(room, []))
        if n != CHALLENGE_POSITIONS_PER_ROOM:
            problems.append(f"{room}: {n} test positions, expected {CHALLENGE_POSITIONS_PER_ROOM}")
    if m.speakers_per_position != CHALLENGE_SPEAKERS_PER_POSITION:
        problems.append(f"{m.speakers_per_position} speakers per position, "
                        f"expected {CHALLENGE_SPEAKERS_PER_POSITION}")
    expected_requests = CHALLENGE_ROOMS_PER_SCENARIO * CHALLENGE_REQUESTS_PER_ROOM
    if len(m.request_ids()) != expected_requests:
        problems.append(f"{len(m.request_ids())} Task-1 requests in total, expected {expected_requests}")
    if problems:
        raise ManifestError("count violation: " + "; ".join(problems))


def load_manifest(path) -> ScenarioManifest:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    return manifest_from_dict(d, root=path.parent)


def load_challenge(path) -> list:
    """Load a file holding ``{"scenarios": [...]}`` or a single scenario.

    Scenario entries may be inline objects or paths to scenario files.
    Room sets must be disjoint across scenarios.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if "scenarios" not in d:
        return [manifest_from_dict(d, root=path.parent)]
    manifests = []
    for entry in d["scenarios"]:
        if isinstance(entry, str):
            manifests.append(load_manifest(path.parent / entry))
        else:
            manifests.append(manifest_from_dict(entry, root=path.parent))
    check_disjoint(manifests)
    return manifests


def check_disjoint(manifests):
    seen = {}
    for m in manifests:
        for room in m.rooms:
            if room in seen:
                raise ManifestError(
                    f"room {room} appears in scenarios {seen[room]} and {m.scenario_id}")
            seen[room] = m.scenario_id
    ids = [rid for m in manifests for rid in m.request_ids()]
    if len(set(ids)) != len(ids):
        raise ManifestError("Task-1 request ids collide across scenarios")


def _as_manifest_list(manifest):
    if isinstance(manifest, ScenarioManifest):
        return [manifest]
    manifests = list(manifest)
    check_disjoint(manifests)
    return manifests


# ---------------------------------------------------------------- Task 1

def _pmap(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def score_task1(generated: dict, reference: dict, jobs: int = 1) -> MetricReport:
    """Compare generated RIRs with the reference RIRs for the same requests.

    Generated RIRs at a different rate are resampled to the reference rate.
    Pairs are processed in sorted key order.
    """
    missing = sorted(set(reference) - set(generated))
    extra = sorted(set(generated) - set(reference))
    if missing or extra:
        raise ScoringError(f"request key mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    if not reference:
        raise ScoringError("no RIR pairs to score")
    keys = sorted(reference)

    def pair(key):
        ref = reference[key]
        gen = generated[key]
        if gen.sample_rate_hz != ref.sample_rate_hz:
            gen = resample(gen, ref.sample_rate_hz)
        return describe(gen), describe(ref)

    described = _pmap(pair, keys, jobs)
    return aggregate([g for g, _ in described], [r for _, r in described])


# ---------------------------------------------------------------- test set

class RenderedUtterance(NamedTuple):
    id: str
    audio: SampledSignal
    true_distance_m: float
    speech_path: str


def fit_length(signal: SampledSignal, n: int) -> SampledSignal:
    """Center-trim to ``n`` samples, or zero-pad at the end."""
    x = signal.samples
    if len(x) > n:
        start = (len(x) - n) // 2
        x = x[start:start + n]
    elif len(x) < n:
        x = np.pad(x, (0, n - len(x)))
    return signal.with_samples(x)


def list_speech(corpus) -> list:
    if isinstance(corpus, (str, os.PathLike)):
        files = sorted(str(p) for p in Path(corpus).rglob("*") if p.suffix.lower() == ".wav")
    else:
        files = sorted(str(p) for p in corpus)
    if not files:
        raise ScoringError(f"speech corpus {corpus} is empty")
    return files


def iter_test_set(manifest: ScenarioManifest, rirs: dict, speech_corpus, seed: int = 0,
                  sample_rate_hz: int = SDE_SAMPLE_RATE_HZ, duration_s: float = SDE_DURATION_S):
    """Yield reverberant test utterances one at a time.

    ``rirs`` maps position keys ``<room>_<position>`` to RIRs. Speech files
    are drawn per position without replacement (with replacement if the
    corpus is smaller than the speaker count) from a generator seeded with
    ``seed``; all draws happen before any audio is rendered.
    """
    files = list_speech(speech_corpus)
    rng = np.random.default_rng(seed)
    k = manifest.speakers_per_position
    positions = manifest.positions()
    draws = [rng.choice(len(files), size=k, replace=len(files) < k) for _ in positions]
    n_out = int(round(duration_s * sample_rate_hz))
    cache = {}

    def speech(i):
        if i not in cache:
            cache[i] = resample(read_wav(files[i]), sample_rate_hz)
        return cache[i]

    for pos, picks in zip(positions, draws):
        if pos.key not in rirs:
            raise ScoringError(f"missing RIR for test position {pos.key}")
        if pos.hidden:
            raise ScoringError(f"test position {pos.key} has hidden geometry; no distance label")
        rir = resample(rirs[pos.key], sample_rate_hz)
        d = distance(pos.source, pos.receiver)
        for slot, i in enumerate(picks):
            audio = fit_length(convolve(speech(int(i)), rir), n_out)
            yield RenderedUtterance(f"{pos.room}_{pos.id}_{slot}", audio, d, files[int(i)])


def build_test_set(manifest, rirs, speech_corpus, seed=0, **kwargs) -> list:
    return list(iter_test_set(manifest, rirs, speech_corpus, seed, **kwargs))


# ---------------------------------------------------------------- Task 2

@dataclass
class PredictionSet:
    rows: list

    @classmethod
    def from_mapping(cls, mapping) -> "PredictionSet":
        return cls([(str(k), float(v)) for k, v in mapping.items()])

    @classmethod
    def from_csv(cls, path, header=PREDICTION_HEADER) -> "PredictionSet":
        rows, problems = _read_distance_csv(path, header)
        if problems:
            raise ScoringError("; ".join(problems))
        return cls(rows)

    def to_csv(self, path, header=PREDICTION_HEADER):
        write_distance_csv(path, self.rows, header)


def _read_distance_csv(path, header):
    """Parse a two-column id/distance CSV, collecting every problem."""
    problems, rows = [], []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            first = next(reader, None)
            if first is None or tuple(c.strip() for c in first) != header:
                problems.append(f"bad header {first!r}, expected {','.join(header)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2:
                    problems.append(f"line {lineno}: expected 2 columns, got {len(row)}")
                    continue
                try:
                    value = float(row[1])
                except ValueError:
                    problems.append(f"line {lineno}: non-numeric distance {row[1]!r}")
                    continue
                rows.append((row[0].strip(), value))
    except (OSError, UnicodeDecodeError) as exc:
        raise SubmissionError(f"cannot read {path}: {exc}") from exc
    return rows, problems


def write_distance_csv(path, rows, header):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for uid, value in rows:
        writer.writerow([uid, repr(float(value))])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_truth_csv(path) -> dict:
    rows, problems = _read_distance_csv(path, TRUTH_HEADER)
    if problems:
        raise ScoringError("; ".join(problems))
    truth = dict(rows)
    if len(truth) != len(rows):
        raise ScoringError("duplicate utterance ids in truth file")
    return truth


@dataclass
class BinStats:
    label: str
    n: int
    mae_m: float
    mape_pct: float

    def to_dict(self):
        def f(v):
            return None if not math.isfinite(v) else v
        return {"n": self.n, "mae_m": f(self.mae_m), "mape_pct": f(self.mape_pct)}


@dataclass
class DistanceReport:
    overall: BinStats
    bins: list

    def to_dict(self) -> dict:
        return {"overall": self.overall.to_dict(), "bins": {b.label: b.to_dict() for b in self.bins}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_table(self, label: str = "Submission") -> str:
        groups = [self.overall] + list(self.bins)
        head1 = f"{'':<16}" + "".join(f"| {g.label:^19} " for g in groups)
        head2 = f"{'Model':<16}" + "".join(f"| {'MAE [m]':>8} {'MAPE [%]':>9} " for _ in groups)
        cells = []
        for g in groups:
            mae = f"{g.mae_m:.3f}" if math.isfinite(g.mae_m) else "-"
            mape = f"{g.mape_pct:.1f}%" if math.isfinite(g.mape_pct) else "-"
            cells.append(f"| {mae:>8} {mape:>9} ")
        return "\n".join([head1, head2, f"{label[:16]:<16}" + "".join(cells)]) + "\n"


def _stats(label, errors, truths):
    n = len(errors)
    if n == 0:
        return BinStats(label, 0, math.nan, math.nan)
    return BinStats(label, n, math.fsum(errors) / n,
                    100.0 * math.fsum(e / t for e, t in zip(errors, truths)) / n)


def bin_label(true_distance_m: float) -> str:
    for lo, hi, label in DISTANCE_BINS:
        if lo <= true_distance_m < hi:
            return label
    raise ScoringError(f"distance {true_distance_m} outside every bin")


def score_task2(predictions, truth: dict) -> DistanceReport:
    """Distance MAE (m) and MAPE (%) overall and per true-distance bin.

    Errors are pooled per utterance. Bins are left-inclusive.
    """
    rows = predictions.rows if isinstance(predictions, PredictionSet) else list(
        predictions.items() if isinstance(predictions, dict) else predictions)
    ids = [uid for uid, _ in rows]
    dupes = sorted({uid for uid in ids if ids.count(uid) > 1}) if len(set(ids)) != len(ids) else []
    missing = sorted(set(truth) - set(ids))
    extra = sorted(set(ids) - set(truth))
    if dupes or missing or extra:
        raise ScoringError(f"prediction ids do not match truth: duplicate {dupes[:5]}, "
                           f"missing {missing[:5]}, extra {extra[:5]}")
    bad = [uid for uid, v in rows if not (math.isfinite(v) and v > 0)]
    if bad:
        raise ScoringError(f"non-positive or non-finite predictions for {bad[:5]}")
    pred = dict(rows)
    # fixed order over sorted ids makes the report independent of CSV row order
    order = sorted(truth)
    errors = [abs(pred[u] - truth[u]) for u in order]
    truths = [truth[u] for u in order]
    if any(not t > 0 for t in truths):
        raise ScoringError("true distances must be positive")
    bins = []
    for lo, hi, label in DISTANCE_BINS:
        sel = [i for i, t in enumerate(truths) if lo <= t < hi]
        bins.append(_stats(label, [errors[i] for i in sel], [truths[i] for i in sel]))
    return DistanceReport(_stats("Overall", errors, truths), bins)


# ---------------------------------------------------------------- submissions

@dataclass
class ValidationReport:
    task: int
    checked: int
    violations: list

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {"task": self.task, "valid": self.valid, "checked": self.checked,
                "violations": list(self.violations)}

    def __str__(self):
        if self.valid:
            return f"Task {self.task}: valid ({self.checked} items checked)"
        lines = [f"Task {self.task}: {len(self.violations)} violation(s)"]
        lines += [f"  - {v}" for v in self.violations]
        return "\n".join(lines)


def validate_submission(task: int, bundle, manifest) -> ValidationReport:
    """Check a submission bundle against one or more scenario manifests.

    Task 1 bundles are directories of ``<request_id>.wav``; Task 2 bundles
    are a predictions CSV (or a directory holding ``predictions.csv``).
    Every violation is collected; only an unreadable bundle raises.
    """
    manifests = _as_manifest_list(manifest)
    bundle = Path(bundle)
    if task == 1:
        return _validate_task1(bundle, manifests)
    if task == 2:
        return _validate_task2(bundle, manifests)
    raise ValueError(f"task must be 1 or 2, got {task}")


def _validate_task1(bundle: Path, manifests) -> ValidationReport:
    if not bundle.is_dir():
        raise SubmissionError(f"Task-1 bundle {bundle} is not a readable directory")
    expected = {}
    for m in manifests:
        for req in m.requests():
            expected[req.id] = m
    try:
        present = {p.name: p for p in bundle.iterdir() if p.is_file()}
    except OSError as exc:
        raise SubmissionError(f"cannot list {bundle}: {exc}") from exc
    violations = []
    n_expected = len(expected)
    n_wavs = sum(1 for name in present if name.lower().endswith(".wav"))
    if n_wavs != n_expected:
        violations.append(f"expected {n_expected} WAV files, found {n_wavs}")
    for rid in sorted(expected):
        if f"{rid}.wav" not in present:
            violations.append(f"missing RIR for request id {rid} ({rid}.wav)")
    for name in sorted(present):
        stem, ext = os.path.splitext(name)
        if ext != ".wav" or stem not in expected:
            violations.append(f"unexpected file {name} (naming convention is <request_id>.wav)")
    checked = 0
    for rid in sorted(expected):
        path = present.get(f"{rid}.wav")
        if path is None:
            continue
        m = expected[rid]
        checked += 1
        try:
            sig = read_wav(path)
        except (WavFormatError, ValueError, OSError) as exc:
            violations.append(f"{path.name}: unreadable WAV ({exc})")
            continue
        if sig.sample_rate_hz != m.sample_rate_hz:
            violations.append(f"{path.name}: sample rate {sig.sample_rate_hz} Hz, "
                              f"expected {m.sample_rate_hz} Hz")
        if sig.duration_s > m.max_rir_duration_s:
            violations.append(f"{path.name}: duration {sig.duration_s:.3f} s exceeds "
                              f"{m.max_rir_duration_s} s")
        if not np.any(sig.samples):
            violations.append(f"{path.name}: silent RIR")
    return ValidationReport(1, checked, violations)


def _validate_task2(bundle: Path, manifests) -> ValidationReport:
    path = bundle / "predictions.csv" if bundle.is_dir() else bundle
    if not path.is_file():
        raise SubmissionError(f"Task-2 bundle {path} is not a readable file")
    rows, violations = _read_distance_csv(path, PREDICTION_HEADER)
    expected = [uid for m in manifests for uid in m.utterance_ids()]
    expected_set = set(expected)
    if len(rows) != len(expected):
        violations.append(f"expected {len(expected)} prediction rows, found {len(rows)}")
    seen = set()
    for uid, value in rows:
        if uid in seen:
            violations.append(f"duplicate utterance id {uid}")
        seen.add(uid)
        if uid not in expected_set:
            violations.append(f"unknown utterance id {uid}")
        if not (math.isfinite(value) and value > 0):
            violations.append(f"utterance {uid}: distance must be positive, got {value}")
    for uid in expected:
        if uid not in seen:
            violations.append(f"missing utterance id {uid}")
    return ValidationReport(2, len(rows), violations)
