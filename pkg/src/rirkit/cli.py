"""Command-line entry point: ``rirkit <subcommand>``.

Every subcommand accepts ``--seed``, ``--jobs`` and ``--output-dir``. Exit
status is 0 when every item succeeded and 1 otherwise.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import harness
from .geometry import GeometryError, distance, generate_receiver_grid, load_scene
from .metrics import MetricError, describe
from .signal import read_wav, write_wav
from .synthesis import EnrollmentEntry, IsmConfig, augment_from_enrollment, image_source_rir

DEFAULT_SEED = 20250406

log = logging.getLogger("rirkit")


def _map(fn, items, jobs):
    """Apply ``fn`` to each item, returning (result, error) pairs in input order."""
    def safe(item):
        try:
            return fn(item), None
        except Exception as exc:  # per-item failures are reported, not raised
            return None, f"{type(exc).__name__}: {exc}"

    if jobs <= 1 or len(items) <= 1:
        return [safe(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(safe, items))


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _sidecar(path, room, source, receiver, generator, seed, **extra):
    meta = {"room": room, "source": list(source), "receiver": list(receiver),
            "distance_m": distance(source, receiver), "generator": generator, "seed": seed}
    meta.update(extra)
    _dump_json(meta, path)


def cmd_describe(args) -> int:
    def run(path):
        return describe(read_wav(path)).to_dict()

    results = _map(run, args.rir, args.jobs)
    entries, failed = [], 0
    for path, (desc, err) in zip(args.rir, results):
        if err is None:
            entries.append({"file": str(path), **desc})
        else:
            failed += 1
            entries.append({"file": str(path), "error": err})
    text = json.dumps(entries, indent=2, ensure_ascii=False)
    print(text)
    if args.output_dir:
        _dump_json(entries, Path(args.output_dir) / "descriptors.json")
    return 1 if failed else 0


def cmd_synth(args) -> int:
    scene = load_scene(args.scene)
    config = IsmConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = IsmConfig.from_dict(json.load(fh))
    if args.max_order is not None:
        config = IsmConfig.from_dict({**config.to_dict(), "max_order": args.max_order})
    if args.grid:
        receivers = generate_receiver_grid(scene, args.spacing, args.elevations, args.clearance,
                                           args.furniture_clearance)
    else:
        receivers = list(scene.receivers)
    if not scene.sources or not receivers:
        log.error("scene needs at least one source and one receiver (or --grid)")
        return 1
    jobs = [(si, s, ri, r) for si, s in enumerate(scene.sources) for ri, r in enumerate(receivers)]
    out = Path(args.output_dir or ".")

    def run(job):
        si, s, ri, r = job
        rir = image_source_rir(scene, s, r, config)
        stem = f"{scene.label}_s{si}_r{ri:03d}"
        write_wav(rir, out / f"{stem}.wav", args.format)
        _sidecar(out / f"{stem}.json", scene.label, s, r, "image-source", args.seed,
                 max_order=config.max_order, sample_rate_hz=config.sample_rate_hz)
        return stem

    return _report(jobs, _map(run, jobs, args.jobs), lambda j: f"s{j[0]} r{j[2]}")


def _report(items, results, name):
    failed = 0
    for item, (res, err) in zip(items, results):
        if err is not None:
            failed += 1
            print(f"FAILED {name(item)}: {err}", file=sys.stderr)
        else:
            print(res)
    return 1 if failed else 0


def _load_enrollment(directory):
    entries, names = [], []
    for wav in sorted(Path(directory).glob("*.wav")):
        meta_path = wav.with_suffix(".json")
        if not meta_path.exists():
            raise FileNotFoundError(f"missing sidecar {meta_path}")
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        entries.append(EnrollmentEntry(read_wav(wav), tuple(meta["source"]), tuple(meta["receiver"])))
        names.append(wav.stem)
    if not entries:
        raise FileNotFoundError(f"no enrollment WAVs in {directory}")
    return entries, names


def cmd_augment(args) -> int:
    entries, _ = _load_enrollment(args.enrollment)
    with open(args.targets, encoding="utf-8") as fh:
        data = json.load(fh)
    targets = data["targets"] if isinstance(data, dict) else data
    room = data.get("room", "room") if isinstance(data, dict) else "room"
    out = Path(args.output_dir or ".")
    items = [(str(t.get("id", f"target_{k:03d}")), tuple(t["source"]), tuple(t["receiver"]))
             for k, t in enumerate(targets)]

    def run(item):
        tid, s, r = item
        rir = augment_from_enrollment(entries, s, r)
        write_wav(rir, out / f"{tid}.wav", args.format)
        _sidecar(out / f"{tid}.json", room, s, r, "enrollment-transplant", args.seed)
        return tid

    return _report(items, _map(run, items, args.jobs), lambda i: i[0])


def _wav_dir(directory):
    return {p.stem: p for p in sorted(Path(directory).glob("*.wav"))}


def cmd_score_task1(args) -> int:
    gen_paths, ref_paths = _wav_dir(args.generated), _wav_dir(args.reference)
    keys = sorted(set(gen_paths) | set(ref_paths))
    loaded = _map(lambda k: (read_wav(gen_paths[k]), read_wav(ref_paths[k])), keys, args.jobs)
    errors = [f"{k}: {err}" for k, (_, err) in zip(keys, loaded) if err is not None]
    if errors:
        for e in errors:
            print(f"FAILED {e}", file=sys.stderr)
        return 1
    generated = {k: pair[0] for k, (pair, _) in zip(keys, loaded)}
    reference = {k: pair[1] for k, (pair, _) in zip(keys, loaded)}
    try:
        report = harness.score_task1(generated, reference, jobs=args.jobs)
    except (harness.ScoringError, MetricError) as exc:
        print(f"FAILED {exc}", file=sys.stderr)
        return 1
    out = Path(args.output_dir or ".")
    (out / "task1_report.json").write_text(report.to_json(), encoding="utf-8")
    table = report.to_table(args.label)
    (out / "task1_report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def cmd_score_task2(args) -> int:
    try:
        predictions = harness.PredictionSet.from_csv(args.predictions)
        truth = harness.read_truth_csv(args.truth)
        report = harness.score_task2(predictions, truth)
    except (harness.ScoringError, harness.SubmissionError) as exc:
        print(f"FAILED {exc}", file=sys.stderr)
        return 1
    out = Path(args.output_dir or ".")
    (out / "task2_report.json").write_text(report.to_json(), encoding="utf-8")
    table = report.to_table(args.label)
    (out / "task2_report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def cmd_reverb(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    rirs, failed = {}, 0
    for pos in manifest.positions():
        if pos.rir is not None:
            path = manifest.resolve(pos.rir)
        elif args.rirs:
            path = Path(args.rirs) / f"{pos.key}.wav"
        else:
            print(f"FAILED {pos.key}: no RIR path in manifest and no --rirs", file=sys.stderr)
            failed += 1
            continue
        try:
            rirs[pos.key] = read_wav(path)
        except (OSError, ValueError) as exc:
            print(f"FAILED {pos.key}: {exc}", file=sys.stderr)
            failed += 1
    if failed:
        return 1
    out = Path(args.output_dir or ".")
    utt_dir = out / "utterances"
    utt_dir.mkdir(parents=True, exist_ok=True)
    truth = []
    for utt in harness.iter_test_set(manifest, rirs, args.speech, args.seed):
        write_wav(utt.audio, utt_dir / f"{utt.id}.wav", args.format)
        truth.append((utt.id, utt.true_distance_m))
        print(utt.id)
    harness.write_distance_csv(out / "truth.csv", truth, harness.TRUTH_HEADER)
    return 0


def cmd_validate(args) -> int:
    manifests = harness.load_challenge(args.manifest)
    report = harness.validate_submission(args.task, args.bundle, manifests)
    print(report)
    if args.output_dir:
        _dump_json(report.to_dict(), Path(args.output_dir) / f"task{args.task}_validation.json")
    return 0 if report.valid else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default: %(default)s)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="parallel workers; results do not depend on it")
    common.add_argument("--output-dir", default=None, help="directory for output files")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rirkit", description="RIR generation and challenge scoring toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", parents=[common], help="T20 / DRR descriptors of RIR WAVs")
    p.add_argument("--rir", nargs="+", required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("synth", parents=[common], help="image-source RIRs for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--config", help="IsmConfig JSON")
    p.add_argument("--max-order", type=int)
    p.add_argument("--grid", action="store_true", help="use a receiver grid instead of scene receivers")
    p.add_argument("--spacing", type=float, default=0.5)
    p.add_argument("--clearance", type=float, default=0.25)
    p.add_argument("--furniture-clearance", type=float, default=0.25)
    p.add_argument("--elevations", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    p.add_argument("--format", choices=["float32", "pcm16"], default="float32")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", parents=[common], help="generate RIRs from enrollment RIRs")
    p.add_argument("--enrollment", required=True, help="directory of WAVs with JSON sidecars")
    p.add_argument("--targets", required=True, help="JSON list of {id, source, receiver}")
    p.add_argument("--format", choices=["float32", "pcm16"], default="float32")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("score-task1", parents=[common], help="T20 MAPE, EDF MSE, DRR MSE")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--label", default="Generated")
    p.set_defaults(func=cmd_score_task1)

    p = sub.add_parser("score-task2", parents=[common], help="distance MAE / MAPE by bin")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--label", default="Submission")
    p.set_defaults(func=cmd_score_task2)

    p = sub.add_parser("reverb", parents=[common], help="render the reverberant speech test set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--speech", required=True, help="directory of mono speech WAVs")
    p.add_argument("--rirs", help="directory of <room>_<position>.wav when the manifest has no paths")
    p.add_argument("--format", choices=["float32", "pcm16"], default="float32")
    p.set_defaults(func=cmd_reverb)

    p = sub.add_parser("validate", parents=[common], help="check a submission bundle")
    p.add_argument("--task", type=int, choices=[1, 2], required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True, help="scenario or challenge manifest JSON")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.jobs = max(1, args.jobs)
    if args.output_dir:
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
