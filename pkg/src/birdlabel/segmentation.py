"""Time-frequency segmentation of salient sounds.

Binarizes the noise-flattened spectrogram with double-threshold hysteresis,
extracts 8-connected components as bounding boxes, merges nearby boxes, drops
short ones, and cuts the matching audio. Thresholds in
:class:`SegmentationParams` are expressed in dB above the flattened
background (see :func:`birdlabel.spectrogram.noise_reference_db`), which
keeps box counts invariant to uniform gain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .audio_io import AudioClip, BandpassSpec, bandpass, trim
from .spectrogram import (
    DECIBEL,
    Spectrogram,
    SpectrogramError,
    StftParams,
    downscale,
    estimate_noise_profile,
    noise_reference_db,
    stft_magnitude,
    subtract_noise_to_db,
)

# Fixed pre-processing chain: wide band-pass against rumble and codec
# artefacts, then a 2048/1024 Hann STFT.
SEGMENT_BAND_LOW_HZ = 100.0
SEGMENT_BAND_HIGH_HZ = 18000.0
SEGMENT_BANDPASS_ORDER = 15
SEGMENT_STFT_WINDOW = 2048
SEGMENT_STFT_HOP = 1024
NOISE_SMOOTHING_BANDS = 25

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class SegmentationError(Exception):
    pass


@dataclass(frozen=True)
class SegmentationParams:
    """Knobs of the segmentation stage.

    ``t_high_db`` seeds regions, ``t_low_db`` grows them; both are dB above
    the flattened background. Defaults are the tuned operating point.
    """

    time_factor: int = 10
    freq_factor: int = 15
    t_high_db: float = 37.0
    t_low_db: float = 33.0
    merge_time_gap_s: float = 0.24
    merge_freq_gap_hz: float = 170.0
    min_duration_s: float = 0.36

    def __post_init__(self):
        if self.time_factor < 1 or self.freq_factor < 1:
            raise ValueError("downscale factors must be >= 1")
        if self.t_low_db >= self.t_high_db:
            raise ValueError(
                f"t_low_db ({self.t_low_db}) must be below t_high_db ({self.t_high_db})"
            )
        if min(self.merge_time_gap_s, self.merge_freq_gap_hz, self.min_duration_s) <= 0:
            raise ValueError("merge gaps and min_duration_s must be positive")


@dataclass
class RoiBox:
    """Time-frequency bounding box with provenance and optional labels."""

    t_min: float
    t_max: float
    f_min: float
    f_max: float
    source_id: str = ""
    species: str = ""
    roi_id: str = ""
    truth_label: Optional[str] = None
    predicted_label: Optional[str] = None

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError(f"need t_min < t_max, got ({self.t_min}, {self.t_max})")
        if not self.f_min < self.f_max:
            raise ValueError(f"need f_min < f_max, got ({self.f_min}, {self.f_max})")
        for label in (self.truth_label, self.predicted_label):
            if label is not None and label not in ("signal", "noise"):
                raise ValueError(f"labels must be 'signal' or 'noise', got {label!r}")

    @property
    def duration_s(self) -> float:
        return self.t_max - self.t_min

    @property
    def bandwidth_hz(self) -> float:
        return self.f_max - self.f_min


def hysteresis_binarize(
    spec: Spectrogram, t_high: float, t_low: float
) -> np.ndarray:
    """Double-threshold binarization on a dB spectrogram.

    A pixel is selected iff it is >= ``t_low`` and 8-connected, through
    pixels >= ``t_low``, to at least one seed pixel >= ``t_high``.
    Thresholds here are absolute values in the grid's dB scale.
    """
    if spec.scale != DECIBEL:
        raise SpectrogramError("hysteresis_binarize expects a dB spectrogram")
    if t_low >= t_high:
        raise ValueError(f"t_low ({t_low}) must be below t_high ({t_high})")
    low = spec.values >= t_low
    labels, _ = ndimage.label(low, structure=_EIGHT_CONNECTED)
    seed_labels = np.unique(labels[spec.values >= t_high])
    seed_labels = seed_labels[seed_labels > 0]
    if seed_labels.size == 0:
        return np.zeros_like(low)
    return np.isin(labels, seed_labels)


def _bin_halfwidth(axis: np.ndarray, index: int) -> float:
    """Half of the local bin spacing at ``index`` (0 for singleton axes)."""
    if len(axis) < 2:
        return 0.0
    if index + 1 < len(axis):
        return (axis[index + 1] - axis[index]) / 2.0
    return (axis[index] - axis[index - 1]) / 2.0


def boxes_from_mask(
    mask: np.ndarray,
    freq_axis: np.ndarray,
    time_axis: np.ndarray,
    source_id: str = "",
) -> list[RoiBox]:
    """One box per 8-connected mask component.

    Boxes span the component's min/max bin centers. A component confined to a
    single row or column is expanded by half a bin on each side so the box
    keeps a positive extent.
    """
    if mask.shape != (len(freq_axis), len(time_axis)):
        raise ValueError(
            f"mask shape {mask.shape} does not match axes "
            f"({len(freq_axis)}, {len(time_axis)})"
        )
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    boxes = []
    for i, slices in enumerate(ndimage.find_objects(labels)):
        rows, cols = slices
        r0, r1 = rows.start, rows.stop - 1
        c0, c1 = cols.start, cols.stop - 1
        t_min, t_max = float(time_axis[c0]), float(time_axis[c1])
        f_min, f_max = float(freq_axis[r0]), float(freq_axis[r1])
        if c0 == c1:
            half = _bin_halfwidth(time_axis, c0)
            t_min, t_max = t_min - half, t_max + half
        if r0 == r1:
            half = _bin_halfwidth(freq_axis, r0)
            f_min, f_max = f_min - half, f_max + half
        f_min = max(f_min, 0.0)
        t_min = max(t_min, 0.0)
        boxes.append(
            RoiBox(t_min, t_max, f_min, f_max, source_id=source_id, roi_id=f"{i:04d}")
        )
    return boxes


def _axis_gap(a_min: float, a_max: float, b_min: float, b_max: float) -> float:
    """Distance between nearest interval edges; 0 when they overlap."""
    return max(b_min - a_max, a_min - b_max, 0.0)


def merge_boxes(
    boxes: list[RoiBox], merge_time_gap: float, merge_freq_gap: float
) -> list[RoiBox]:
    """Merge boxes that are close in both time and frequency, to fixpoint.

    Any pair whose time gap is < ``merge_time_gap`` AND whose frequency gap
    is < ``merge_freq_gap`` becomes its union box; the scan repeats until no
    pair qualifies. Because boxes only grow, the fixpoint is independent of
    merge order. Output is sorted by (t_min, f_min).
    """
    merged = list(boxes)
    changed = True
    while changed:
        changed = False
        for i in range(len(merged)):
            for j in range(i + 1, len(merged)):
                a, b = merged[i], merged[j]
                t_gap = _axis_gap(a.t_min, a.t_max, b.t_min, b.t_max)
                f_gap = _axis_gap(a.f_min, a.f_max, b.f_min, b.f_max)
                if t_gap < merge_time_gap and f_gap < merge_freq_gap:
                    merged[i] = RoiBox(
                        min(a.t_min, b.t_min),
                        max(a.t_max, b.t_max),
                        min(a.f_min, b.f_min),
                        max(a.f_max, b.f_max),
                        source_id=a.source_id,
                        species=a.species,
                        roi_id=min(a.roi_id, b.roi_id),
                    )
                    del merged[j]
                    changed = True
                    break
            if changed:
                break
    return sorted(merged, key=lambda b: (b.t_min, b.f_min))


def filter_short(boxes: list[RoiBox], min_duration: float) -> list[RoiBox]:
    """Keep boxes lasting at least ``min_duration`` seconds (inclusive)."""
    return [b for b in boxes if b.duration_s >= min_duration]


def extract_roi_audio(clip: AudioClip, box: RoiBox) -> AudioClip:
    """Cut a box out of the audio: trim in time, band-pass in frequency.

    The band-pass is a 15th-order zero-phase Butterworth between the box's
    frequency limits. ``f_max`` at or above Nyquist is clamped to
    0.999 * Nyquist with a warning.
    """
    if box.t_min < -1e-9 or box.t_max > clip.duration_s + 1e-9:
        raise SegmentationError(
            f"box ({box.t_min:.3f}, {box.t_max:.3f}) s outside clip of "
            f"{clip.duration_s:.3f} s"
        )
    nyquist = clip.sample_rate / 2.0
    f_max = box.f_max
    if f_max >= nyquist:
        warnings.warn(
            f"roi {box.roi_id!r}: f_max {f_max:.0f} Hz clamped below Nyquist",
            stacklevel=2,
        )
        f_max = 0.999 * nyquist
    f_min = max(box.f_min, 1.0)
    cut = trim(clip, max(box.t_min, 0.0), min(box.t_max, clip.duration_s))
    return bandpass(cut, BandpassSpec(f_min, f_max, SEGMENT_BANDPASS_ORDER))


def recording_spectrogram(clip: AudioClip) -> Spectrogram:
    """Band-passed full-resolution magnitude spectrogram of a recording.

    This is the parameter-independent front half of
    :func:`segment_recording`; batch tuners compute it once per file and
    reuse it across parameter combinations.
    """
    band = bandpass(
        clip,
        BandpassSpec(SEGMENT_BAND_LOW_HZ, SEGMENT_BAND_HIGH_HZ, SEGMENT_BANDPASS_ORDER),
    )
    return stft_magnitude(
        band,
        StftParams(SEGMENT_STFT_WINDOW, SEGMENT_STFT_HOP, "hann", clip.sample_rate),
    )


def segment_spectrogram(
    spec: Spectrogram, params: SegmentationParams, source_id: str = ""
) -> list[RoiBox]:
    """Segment a full-resolution linear spectrogram into ROI boxes."""
    down = downscale(spec, params.time_factor, params.freq_factor)
    profile = estimate_noise_profile(down, NOISE_SMOOTHING_BANDS)
    db = subtract_noise_to_db(down, profile)
    ref = noise_reference_db(profile)
    mask = hysteresis_binarize(db, ref + params.t_high_db, ref + params.t_low_db)
    boxes = boxes_from_mask(mask, down.freq_axis, down.time_axis, source_id)
    boxes = merge_boxes(boxes, params.merge_time_gap_s, params.merge_freq_gap_hz)
    boxes = filter_short(boxes, params.min_duration_s)
    for k, box in enumerate(boxes):
        box.roi_id = f"{source_id}-{k:04d}" if source_id else f"{k:04d}"
    return boxes


def segment_recording(clip: AudioClip, params: SegmentationParams) -> list[RoiBox]:
    """Full segmentation chain for one recording.

    band-pass -> STFT -> downscale -> noise flattening -> hysteresis ->
    boxes -> merge -> duration filter. Box ids are sequential per recording.
    """
    spec = recording_spectrogram(clip)
    return segment_spectrogram(spec, params, source_id=clip.source_id)


def write_roi_manifest(boxes: list[RoiBox], path) -> None:
    """CSV of segmented boxes (times in s, frequencies in Hz)."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["roi_id", "source_id", "species", "t_min_s", "t_max_s", "f_min_hz", "f_max_hz"]
        )
        for b in boxes:
            writer.writerow(
                [
                    b.roi_id,
                    b.source_id,
                    b.species,
                    f"{b.t_min:.6f}",
                    f"{b.t_max:.6f}",
                    f"{b.f_min:.6f}",
                    f"{b.f_max:.6f}",
                ]
            )
