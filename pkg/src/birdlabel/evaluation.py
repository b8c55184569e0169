"""Scoring and tuning: IOU against expert boxes, segmentation grid search,
confusion metrics, noise metrics, and MinPts sweeps."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .audio_io import AudioClip
from .clustering import NOISE, SIGNAL, classify_species
from .features import FeatureVector
from .segmentation import (
    RoiBox,
    SegmentationParams,
    recording_spectrogram,
    segment_spectrogram,
)


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class SpeciesMetrics:
    """Per-species rates; ``final_noise`` is 1 - precision by construction."""

    species: str
    n_total: int
    n_truth_noise: int
    initial_noise: float
    precision: float
    recall: float
    f1: float
    final_noise: float
    precision_undefined: bool = False
    recall_undefined: bool = False


@dataclass(frozen=True)
class EvalReport:
    per_species: tuple[SpeciesMetrics, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    median_initial_noise: float
    median_final_noise: float


# Outer bounds of the tuning space; narrower sweeps must stay inside them.
TIME_FACTOR_RANGE = (6, 18)
FREQ_FACTOR_RANGE = (4, 30)
T_HIGH_RANGE = (10.0, 40.0)
T_LOW_RANGE = (7.0, 37.0)


@dataclass(frozen=True)
class GridSearchSpace:
    """4-parameter sweep for the segmentation stage.

    Ranges are fixed outer bounds; step sizes (and optional narrower bounds)
    are configurable. Only combinations with ``t_low < t_high`` are
    evaluated.
    """

    factor_step: int = 2
    threshold_step_db: float = 3.0
    time_bounds: tuple[int, int] = TIME_FACTOR_RANGE
    freq_bounds: tuple[int, int] = FREQ_FACTOR_RANGE
    t_high_bounds: tuple[float, float] = T_HIGH_RANGE
    t_low_bounds: tuple[float, float] = T_LOW_RANGE

    def __post_init__(self):
        for bounds, outer, name in (
            (self.time_bounds, TIME_FACTOR_RANGE, "time_bounds"),
            (self.freq_bounds, FREQ_FACTOR_RANGE, "freq_bounds"),
            (self.t_high_bounds, T_HIGH_RANGE, "t_high_bounds"),
            (self.t_low_bounds, T_LOW_RANGE, "t_low_bounds"),
        ):
            if not outer[0] <= bounds[0] <= bounds[1] <= outer[1]:
                raise ValueError(f"{name} {bounds} outside allowed range {outer}")
        if self.factor_step < 1 or self.threshold_step_db <= 0:
            raise ValueError("steps must be positive")

    def combinations(self) -> list[tuple[int, int, float, float]]:
        """Lexicographically ordered (time, freq, t_high, t_low) tuples."""
        times = range(self.time_bounds[0], self.time_bounds[1] + 1, self.factor_step)
        freqs = range(self.freq_bounds[0], self.freq_bounds[1] + 1, self.factor_step)
        t_highs = np.arange(
            self.t_high_bounds[0], self.t_high_bounds[1] + 1e-9, self.threshold_step_db
        )
        t_lows = np.arange(
            self.t_low_bounds[0], self.t_low_bounds[1] + 1e-9, self.threshold_step_db
        )
        combos = [
            (tf, ff, float(th), float(tl))
            for tf, ff, th, tl in itertools.product(times, freqs, t_highs, t_lows)
            if tl < th
        ]
        if not combos:
            raise EvaluationError("grid space is empty after the t_low < t_high filter")
        return combos


@dataclass(frozen=True)
class AnnotatedRecording:
    """A recording together with its expert ROI boxes."""

    clip: AudioClip
    species: str
    boxes: tuple[RoiBox, ...]


@dataclass(frozen=True)
class GridPoint:
    time_factor: int
    freq_factor: int
    t_high_db: float
    t_low_db: float
    median_iou: float


@dataclass(frozen=True)
class GridSearchResult:
    best: SegmentationParams
    best_score: float
    table: tuple[GridPoint, ...]


def iou(a: RoiBox, b: RoiBox) -> float:
    """Intersection over union of two boxes, in seconds x hertz."""
    t_overlap = max(0.0, min(a.t_max, b.t_max) - max(a.t_min, b.t_min))
    f_overlap = max(0.0, min(a.f_max, b.f_max) - max(a.f_min, b.f_min))
    intersection = t_overlap * f_overlap
    union = (
        a.duration_s * a.bandwidth_hz + b.duration_s * b.bandwidth_hz - intersection
    )
    return intersection / union if union > 0 else 0.0


def score_file(manual: Sequence[RoiBox], auto: Sequence[RoiBox]) -> float:
    """Median IOU of manual boxes after greedy one-to-one matching.

    Pairs are matched in descending IOU order without replacement; manual
    boxes left unmatched (or matched at zero overlap) score 0.
    """
    if not manual:
        raise EvaluationError("score_file needs at least one manual box")
    pairs = sorted(
        (
            (iou(m, a), mi, ai)
            for mi, m in enumerate(manual)
            for ai, a in enumerate(auto)
        ),
        key=lambda p: (-p[0], p[1], p[2]),
    )
    scores = np.zeros(len(manual))
    used_manual: set[int] = set()
    used_auto: set[int] = set()
    for value, mi, ai in pairs:
        if value <= 0.0:
            break
        if mi in used_manual or ai in used_auto:
            continue
        scores[mi] = value
        used_manual.add(mi)
        used_auto.add(ai)
    return float(np.median(scores))


def grid_search(
    recordings: Sequence[AnnotatedRecording], space: GridSearchSpace
) -> GridSearchResult:
    """Exhaustive sweep of the segmentation parameters.

    For each combination every file is segmented and scored; per-file medians
    are reduced to a per-species median, then to a median across species. The
    argmax combination wins, ties going to the lexicographically smallest
    parameter tuple. Full-resolution spectrograms are computed once per file
    and shared across combinations.
    """
    if not recordings:
        raise EvaluationError("grid_search needs at least one annotated recording")
    for rec in recordings:
        if not rec.boxes:
            raise EvaluationError(
                f"recording {rec.clip.source_id!r} has no manual boxes"
            )
    specs = [recording_spectrogram(rec.clip) for rec in recordings]
    species_names = sorted({rec.species for rec in recordings})

    table = []
    best_combo: Optional[tuple] = None
    best_score = -1.0
    for tf, ff, th, tl in space.combinations():
        params = SegmentationParams(
            time_factor=tf, freq_factor=ff, t_high_db=th, t_low_db=tl
        )
        file_scores: dict[str, list[float]] = {name: [] for name in species_names}
        for rec, spec in zip(recordings, specs):
            auto = segment_spectrogram(spec, params, source_id=rec.clip.source_id)
            file_scores[rec.species].append(score_file(list(rec.boxes), auto))
        per_species = [float(np.median(file_scores[name])) for name in species_names]
        overall = float(np.median(per_species))
        table.append(GridPoint(tf, ff, th, tl, overall))
        if overall > best_score:
            best_score = overall
            best_combo = (tf, ff, th, tl)
    best = SegmentationParams(
        time_factor=best_combo[0],
        freq_factor=best_combo[1],
        t_high_db=best_combo[2],
        t_low_db=best_combo[3],
    )
    return GridSearchResult(best, best_score, tuple(table))


def confusion(predicted: Sequence[str], truth: Sequence[str]) -> ConfusionCounts:
    """Standard counts with signal as the positive class."""
    if len(predicted) != len(truth):
        raise EvaluationError(
            f"label lists differ in length ({len(predicted)} vs {len(truth)})"
        )
    tp = fp = tn = fn = 0
    for pred, true in zip(predicted, truth):
        if pred not in (SIGNAL, NOISE) or true not in (SIGNAL, NOISE):
            raise EvaluationError(f"labels must be 'signal' or 'noise', got ({pred!r}, {true!r})")
        if pred == SIGNAL and true == SIGNAL:
            tp += 1
        elif pred == SIGNAL:
            fp += 1
        elif true == SIGNAL:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def species_metrics(
    counts: ConfusionCounts, n_truth_noise: int, n_total: int, species: str = ""
) -> SpeciesMetrics:
    """Noise and quality rates for one species.

    Zero denominators yield a rate of 0 with the matching ``*_undefined``
    flag; ``final_noise`` is always exactly ``1 - precision`` so a species
    with no predicted signal reports 100% final noise, flagged.
    """
    if n_total <= 0:
        raise EvaluationError("n_total must be positive")
    if counts.total != n_total:
        raise EvaluationError(
            f"confusion counts sum to {counts.total}, expected n_total={n_total}"
        )
    if counts.fp + counts.tn != n_truth_noise:
        raise EvaluationError(
            f"n_truth_noise={n_truth_noise} inconsistent with counts "
            f"(fp + tn = {counts.fp + counts.tn})"
        )
    precision_undefined = counts.tp + counts.fp == 0
    recall_undefined = counts.tp + counts.fn == 0
    precision = 0.0 if precision_undefined else counts.tp / (counts.tp + counts.fp)
    recall = 0.0 if recall_undefined else counts.tp / (counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return SpeciesMetrics(
        species=species,
        n_total=n_total,
        n_truth_noise=n_truth_noise,
        initial_noise=n_truth_noise / n_total,
        precision=precision,
        recall=recall,
        f1=f1,
        final_noise=1.0 - precision,
        precision_undefined=precision_undefined,
        recall_undefined=recall_undefined,
    )


def macro_report(per_species: Sequence[SpeciesMetrics]) -> EvalReport:
    """Unweighted means of precision/recall/F1 and medians of noise rates."""
    if not per_species:
        raise EvaluationError("macro_report needs at least one species")
    return EvalReport(
        per_species=tuple(per_species),
        macro_precision=float(np.mean([m.precision for m in per_species])),
        macro_recall=float(np.mean([m.recall for m in per_species])),
        macro_f1=float(np.mean([m.f1 for m in per_species])),
        median_initial_noise=float(np.median([m.initial_noise for m in per_species])),
        median_final_noise=float(np.median([m.final_noise for m in per_species])),
    )


@dataclass(frozen=True)
class SweepRow:
    fraction: float
    macro_precision: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best_fraction: float


def minpts_sweep(
    species_sets: Mapping[str, tuple[Sequence[FeatureVector], Sequence[str]]],
    fractions: Optional[Iterable[float]] = None,
) -> SweepResult:
    """Macro precision as a function of the MinPts fraction.

    ``species_sets`` maps species to (feature vectors, truth labels). The
    default sweep covers 1%..50% in 1% steps; the best fraction is the
    argmax, ties going to the smallest fraction.
    """
    if fractions is None:
        fractions = [p / 100.0 for p in range(1, 51)]
    rows = []
    for fraction in fractions:
        precisions = []
        for species, (features, truth) in sorted(species_sets.items()):
            predicted = classify_species(features, minpts_fraction=fraction).labels
            counts = confusion(predicted, list(truth))
            metrics = species_metrics(
                counts, counts.fp + counts.tn, counts.total, species=species
            )
            precisions.append(metrics.precision)
        rows.append(SweepRow(float(fraction), float(np.mean(precisions))))
    best = max(rows, key=lambda r: (r.macro_precision, -r.fraction))
    return SweepResult(tuple(rows), best.fraction)
