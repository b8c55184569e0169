"""Command-line entry point: fetch / label / eval / tune subcommands."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .annotations import load_annotation_dir
from .config import load_config
from .evaluation import AnnotatedRecording, GridSearchSpace
from .fetch import fetch_metadata, write_fetch_manifest
from .pipeline import TARGET_SAMPLE_RATE, discover_recordings, run_eval, run_label, run_tune
from . import audio_io

log = logging.getLogger("birdlabel")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config (INI)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="birdlabel",
        description="Strong-label focal bird recordings by segmenting, "
        "featurizing, and density-clustering sound units.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fetch_p = sub.add_parser("fetch", help="retrieve and sample recording metadata")
    _add_common(fetch_p)
    fetch_p.add_argument(
        "--endpoint",
        required=True,
        help="API base URL or path to a recorded JSON fixture",
    )

    label_p = sub.add_parser("label", help="segment, featurize, and cluster recordings")
    _add_common(label_p)
    label_p.add_argument("--input", default=None, help="override io.input_dir")

    eval_p = sub.add_parser("eval", help="label and score against annotations")
    _add_common(eval_p)
    eval_p.add_argument("--input", default=None, help="override io.input_dir")
    eval_p.add_argument("--annotations", required=True, help="annotation directory")

    tune_p = sub.add_parser("tune", help="grid-search segmentation parameters")
    _add_common(tune_p)
    tune_p.add_argument("--input", default=None, help="override io.input_dir")
    tune_p.add_argument("--annotations", required=True, help="annotation directory")
    tune_p.add_argument("--factor-step", type=int, default=2)
    tune_p.add_argument("--threshold-step", type=float, default=3.0)
    return parser


def _input_recordings(config, override):
    input_dir = override or config.io.input_dir
    if not input_dir:
        raise SystemExit("no input directory (set io.input_dir or pass --input)")
    return discover_recordings(input_dir)


def cmd_fetch(args) -> int:
    config = load_config(args.config)
    flt = config.fetch
    if args.seed is not None:
        flt = dataclasses.replace(flt, random_seed=args.seed)
    if not flt.species:
        raise SystemExit("config [fetch] species is empty")
    result = fetch_metadata(flt, args.endpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fetch_manifest(result, out / "fetch_manifest.csv")
    for warning in result.warnings:
        log.warning(warning)
    print(f"fetched {len(result.records)} records (seed {result.seed})")
    print("note: the archive serves mp3; convert to PCM WAV before labelling")
    return 0


def cmd_label(args) -> int:
    config = load_config(args.config)
    recordings = _input_recordings(config, args.input)
    result = run_label(config, recordings, args.out, jobs=args.jobs)
    for species_result in result.per_species:
        print(species_result.summary())
    print(f"manifest: {result.manifest_path}")
    return 1 if result.all_failed else 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    recordings = _input_recordings(config, args.input)
    annotations = load_annotation_dir(args.annotations)
    report = run_eval(config, recordings, annotations, args.out, jobs=args.jobs)
    print(
        f"macro precision {report.macro_precision:.3f}, "
        f"recall {report.macro_recall:.3f}, f1 {report.macro_f1:.3f}"
    )
    print(
        f"median noise: initial {100 * report.median_initial_noise:.1f}% -> "
        f"final {100 * report.median_final_noise:.1f}%"
    )
    return 0


def cmd_tune(args) -> int:
    config = load_config(args.config)
    paths = _input_recordings(config, args.input)
    annotations = load_annotation_dir(args.annotations)
    recordings = []
    for species, path in paths:
        boxes = annotations.boxes_for(path.stem)
        if not boxes:
            log.warning("no annotations for %s; excluded from tuning", path.stem)
            continue
        clip = audio_io.load_audio(path, TARGET_SAMPLE_RATE)
        recordings.append(AnnotatedRecording(clip, species, tuple(boxes)))
    if not recordings:
        raise SystemExit("no annotated recordings to tune on")
    space = GridSearchSpace(
        factor_step=args.factor_step, threshold_step_db=args.threshold_step
    )
    result = run_tune(config, recordings, space, args.out)
    best = result.best
    print(
        f"best: time {best.time_factor}, freq {best.freq_factor}, "
        f"thresholds {best.t_high_db:.0f}/{best.t_low_db:.0f} dB "
        f"(median IOU {result.best_score:.3f})"
    )
    return 0


_COMMANDS = {"fetch": cmd_fetch, "label": cmd_label, "eval": cmd_eval, "tune": cmd_tune}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
