"""End-to-end orchestration: label, evaluate, and tune batches of recordings.

Recordings are grouped by species (the weak label), segmented into ROIs,
featurized, and clustered per species into signal/noise. Errors are confined
to the recording or species they occur in; outputs are written through a
single deterministic serializer so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import audio_io, segmentation
from .annotations import AnnotationSet
from .clustering import NOISE, SpeciesClassification, classify_species
from .config import PipelineConfig
from .evaluation import (
    AnnotatedRecording,
    EvalReport,
    GridSearchResult,
    GridSearchSpace,
    confusion,
    grid_search,
    iou,
    macro_report,
    species_metrics,
)
from .features import FeatureError, FeatureVector, build_gabor_bank, featurize
from .segmentation import RoiBox, segment_recording

log = logging.getLogger("birdlabel")

TRUTH_IOU_THRESHOLD = 0.5
TARGET_SAMPLE_RATE = 44100


class PipelineError(Exception):
    pass


@dataclass
class RoiRecord:
    """One segmented ROI with its clustering outcome."""

    box: RoiBox
    cluster_id: int = -1
    feature_ok: bool = True
    feature_vector: Optional[FeatureVector] = None
    roi_clip: Optional[audio_io.AudioClip] = None


@dataclass
class SpeciesResult:
    species: str
    rois: list[RoiRecord] = field(default_factory=list)
    eps: float = float("nan")
    min_pts: int = 0
    diagnostics: list[str] = field(default_factory=list)
    failed_files: list[str] = field(default_factory=list)

    def summary(self) -> str:
        n_signal = sum(1 for r in self.rois if r.box.predicted_label == "signal")
        parts = [
            f"{self.species}: {len(self.rois)} rois, "
            f"{n_signal} signal, {len(self.rois) - n_signal} noise"
        ]
        if self.failed_files:
            parts.append(f"{len(self.failed_files)} file(s) failed")
        if self.diagnostics:
            parts.append("; ".join(self.diagnostics))
        return " | ".join(parts)


@dataclass
class LabelRunResult:
    per_species: list[SpeciesResult]
    manifest_path: Optional[Path] = None
    cluster_report_path: Optional[Path] = None

    @property
    def all_failed(self) -> bool:
        return bool(self.per_species) and all(
            not s.rois and s.failed_files for s in self.per_species
        )


def discover_recordings(input_dir) -> list[tuple[str, Path]]:
    """Find ``<input_dir>/<species>/*.wav``, sorted for determinism."""
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise PipelineError(f"input directory not found: {input_dir}")
    found = []
    for species_dir in sorted(p for p in input_dir.iterdir() if p.is_dir()):
        for wav in sorted(species_dir.glob("*.wav")):
            found.append((species_dir.name, wav))
    if not found:
        raise PipelineError(f"no <species>/*.wav recordings under {input_dir}")
    return found


def select_song_excerpt(
    clip: audio_io.AudioClip,
    params: segmentation.SegmentationParams,
    excerpt_s: float,
) -> audio_io.AudioClip:
    """Keep ``excerpt_s`` seconds starting at the first segmented ROI onset.

    Falls back to the head of the recording when nothing is segmented or the
    clip is already short enough.
    """
    if clip.duration_s <= excerpt_s:
        return clip
    boxes = segment_recording(clip, params)
    start = boxes[0].t_min if boxes else 0.0
    start = min(start, clip.duration_s - excerpt_s)
    return audio_io.trim(clip, start, start + excerpt_s)


def _process_recording(
    species: str, path: Path, config: PipelineConfig, bank
) -> tuple[list[RoiRecord], list[str]]:
    """Segment and featurize one recording; returns (records, diagnostics)."""
    clip = audio_io.load_audio(path, TARGET_SAMPLE_RATE)
    if config.io.excerpt_s > 0:
        clip = select_song_excerpt(clip, config.segmentation, config.io.excerpt_s)
    boxes = segment_recording(clip, config.segmentation)
    records, diags = [], []
    for box in boxes:
        box.species = species
        record = RoiRecord(box=box)
        try:
            roi_clip = segmentation.extract_roi_audio(clip, box)
            record.feature_vector = featurize(
                roi_clip, config.features, bank, roi_id=box.roi_id
            )
            record.roi_clip = roi_clip
        except FeatureError as exc:
            record.feature_ok = False
            record.feature_vector = None
            record.roi_clip = None
            diags.append(f"{box.roi_id}: {exc}; labeled noise")
        records.append(record)
    return records, diags


def run_label(
    config: PipelineConfig,
    recordings: Sequence[tuple[str, Path]],
    out_dir,
    jobs: int = 1,
) -> LabelRunResult:
    """Segment, featurize, and cluster every recording; write the manifest.

    Per-species ROI sets are clustered together across files. A recording
    that fails to load or segment is skipped with a diagnostic; a species
    fails only if all its recordings fail.
    """
    if not recordings:
        raise PipelineError("no recordings to label")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bank = build_gabor_bank(config.features)

    by_species: dict[str, list[Path]] = {}
    for species, path in recordings:
        by_species.setdefault(species, []).append(path)

    results = []
    for species in sorted(by_species):
        paths = sorted(by_species[species])
        result = SpeciesResult(species=species)

        def work(path: Path):
            return _process_recording(species, path, config, bank)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_guarded(work), paths))
        else:
            outcomes = [_guarded(work)(p) for p in paths]
        for path, outcome in zip(paths, outcomes):
            if isinstance(outcome, Exception):
                result.failed_files.append(str(path))
                result.diagnostics.append(f"{path.name}: {outcome}")
                log.warning("skipping %s: %s", path, outcome)
                continue
            records, diags = outcome
            result.rois.extend(records)
            result.diagnostics.extend(diags)

        featurized = [r for r in result.rois if r.feature_ok]
        classification = classify_species(
            [r.feature_vector for r in featurized],
            minpts_fraction=config.clustering.minpts_fraction,
        )
        result.eps = classification.eps
        result.min_pts = classification.min_pts
        result.diagnostics.extend(classification.diagnostics)
        for record, label, cid in zip(
            featurized, classification.labels, classification.assignment.labels
        ):
            record.box.predicted_label = label
            record.cluster_id = int(cid)
        for record in result.rois:
            if not record.feature_ok:
                record.box.predicted_label = NOISE
                record.cluster_id = -1
        results.append(result)

    manifest_path = out_dir / "roi_manifest.csv"
    report_path = out_dir / "cluster_report.csv"
    _write_manifest(results, manifest_path)
    _write_cluster_report(results, report_path)
    if config.io.export_roi_wavs:
        roi_dir = out_dir / "rois"
        roi_dir.mkdir(exist_ok=True)
        for result in results:
            for record in result.rois:
                if record.roi_clip is not None:
                    audio_io.save_wav(record.roi_clip, roi_dir / f"{record.box.roi_id}.wav")
    return LabelRunResult(results, manifest_path, report_path)


def _guarded(fn):
    def wrapped(arg):
        try:
            return fn(arg)
        except Exception as exc:  # confine any per-file failure
            return exc

    return wrapped


def _write_manifest(results: Sequence[SpeciesResult], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "roi_id",
                "source_id",
                "species",
                "t_min_s",
                "t_max_s",
                "f_min_hz",
                "f_max_hz",
                "predicted_label",
                "cluster_id",
            ]
        )
        for result in results:
            for record in sorted(result.rois, key=lambda r: r.box.roi_id):
                b = record.box
                writer.writerow(
                    [
                        b.roi_id,
                        b.source_id,
                        b.species,
                        f"{b.t_min:.6f}",
                        f"{b.t_max:.6f}",
                        f"{b.f_min:.6f}",
                        f"{b.f_max:.6f}",
                        b.predicted_label,
                        record.cluster_id,
                    ]
                )


def _write_cluster_report(results: Sequence[SpeciesResult], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["roi_id", "species", "cluster_id", "predicted_label", "eps_used", "min_pts_used"]
        )
        for result in results:
            for record in sorted(result.rois, key=lambda r: r.box.roi_id):
                writer.writerow(
                    [
                        record.box.roi_id,
                        result.species,
                        record.cluster_id,
                        record.box.predicted_label,
                        f"{result.eps:.9g}",
                        result.min_pts,
                    ]
                )


def assign_truth(
    boxes: Sequence[RoiBox], truth_boxes: Sequence[RoiBox], threshold: float = TRUTH_IOU_THRESHOLD
) -> None:
    """Set truth labels in place: signal iff IOU with a signal box > threshold."""
    signal_boxes = [t for t in truth_boxes if t.truth_label == "signal"]
    for box in boxes:
        hit = any(iou(box, t) > threshold for t in signal_boxes)
        box.truth_label = "signal" if hit else "noise"


def run_eval(
    config: PipelineConfig,
    recordings: Sequence[tuple[str, Path]],
    annotations: AnnotationSet,
    out_dir,
    jobs: int = 1,
) -> EvalReport:
    """Label the corpus, assign truth from annotations, and write reports."""
    out_dir = Path(out_dir)
    label_result = run_label(config, recordings, out_dir, jobs=jobs)
    metrics = []
    for result in label_result.per_species:
        if not result.rois:
            log.warning("species %s produced no ROIs; skipped in report", result.species)
            continue
        for record in result.rois:
            # boxes from an excerpt carry a sample offset in their source_id;
            # annotations are keyed and timed on the original recording
            base, offset = audio_io.split_source_id(record.box.source_id)
            truth = annotations.boxes_for(base)
            if not truth:
                log.warning("no annotations for %s", base)
            shift = offset / TARGET_SAMPLE_RATE
            probe = RoiBox(
                record.box.t_min + shift,
                record.box.t_max + shift,
                record.box.f_min,
                record.box.f_max,
            )
            assign_truth([probe], truth)
            record.box.truth_label = probe.truth_label
        predicted = [r.box.predicted_label for r in result.rois]
        truth = [r.box.truth_label for r in result.rois]
        counts = confusion(predicted, truth)
        metrics.append(
            species_metrics(
                counts,
                n_truth_noise=counts.fp + counts.tn,
                n_total=counts.total,
                species=result.species,
            )
        )
    if not metrics:
        raise PipelineError("no species produced evaluable ROIs")
    report = macro_report(metrics)
    _write_eval_report(report, out_dir)
    return report


def _write_eval_report(report: EvalReport, out_dir: Path) -> None:
    with open(out_dir / "species_metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["species", "initial_noise_pct", "final_noise_pct", "precision", "recall", "f1"]
        )
        for m in report.per_species:
            writer.writerow(
                [
                    m.species,
                    f"{100 * m.initial_noise:.2f}",
                    f"{100 * m.final_noise:.2f}",
                    f"{m.precision:.4f}",
                    f"{m.recall:.4f}",
                    f"{m.f1:.4f}",
                ]
            )
    with open(out_dir / "noise_plot_data.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["species", "initial_noise_pct", "final_noise_pct"])
        for m in report.per_species:
            writer.writerow(
                [m.species, f"{100 * m.initial_noise:.2f}", f"{100 * m.final_noise:.2f}"]
            )
    with open(out_dir / "macro_summary.txt", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"species_count = {len(report.per_species)}\n")
        fh.write(f"macro_precision = {report.macro_precision:.4f}\n")
        fh.write(f"macro_recall = {report.macro_recall:.4f}\n")
        fh.write(f"macro_f1 = {report.macro_f1:.4f}\n")
        fh.write(f"median_initial_noise_pct = {100 * report.median_initial_noise:.2f}\n")
        fh.write(f"median_final_noise_pct = {100 * report.median_final_noise:.2f}\n")


def run_tune(
    config: PipelineConfig,
    recordings: Sequence[AnnotatedRecording],
    space: GridSearchSpace,
    out_dir,
) -> GridSearchResult:
    """Grid-search the segmentation parameters and write the outcome.

    Produces ``score_table.csv`` plus ``tuned_config.ini`` (the input config
    with the winning segmentation parameters substituted).
    """
    from dataclasses import replace

    from .config import save_config

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = grid_search(recordings, space)
    with open(out_dir / "score_table.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_factor", "freq_factor", "t_high_db", "t_low_db", "median_iou"])
        for row in result.table:
            writer.writerow(
                [
                    row.time_factor,
                    row.freq_factor,
                    f"{row.t_high_db:.1f}",
                    f"{row.t_low_db:.1f}",
                    f"{row.median_iou:.6f}",
                ]
            )
    tuned = replace(config, segmentation=result.best)
    save_config(tuned, out_dir / "tuned_config.ini")
    return result
