"""Import/export of expert box annotations in Audacity label-track format.

Each record is one or two tab-separated lines:

    <start_s>\t<end_s>\t<label>
    \\\t<f_low_hz>\t<f_high_hz>        (optional frequency line)

The frequency line starts with a single backslash, matching Audacity's
spectral-selection export. A record without a frequency line is treated as a
full-band box with a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .segmentation import RoiBox

# Frequency extent assigned to label records without a spectral selection.
FULL_BAND_LOW_HZ = 0.0
FULL_BAND_HIGH_HZ = 22050.0

SIGNAL_TOKEN = "signal"


class AnnotationError(Exception):
    pass


@dataclass
class AnnotationSet:
    """Truth boxes per source recording."""

    boxes_by_source: dict[str, list[RoiBox]] = field(default_factory=dict)
    annotator: str = ""

    def sources(self) -> list[str]:
        return sorted(self.boxes_by_source)

    def boxes_for(self, source_id: str) -> list[RoiBox]:
        return self.boxes_by_source.get(source_id, [])


def _parse_float(token: str, path, line_no: int) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise AnnotationError(f"{path}:{line_no}: not a number: {token!r}") from exc


def import_annotations(
    path, source_id: Optional[str] = None, signal_token: str = SIGNAL_TOKEN
) -> list[RoiBox]:
    """Parse one Audacity label track into truth-labeled boxes.

    Any label text other than ``signal_token`` maps to noise. Malformed lines
    raise with their line number.
    """
    path = Path(path)
    if source_id is None:
        source_id = path.stem
    boxes: list[RoiBox] = []
    pending: Optional[tuple[float, float, str, int]] = None

    def flush(pending_record, f_low, f_high):
        start, end, label, line_no = pending_record
        if not start < end:
            raise AnnotationError(f"{path}:{line_no}: start must be before end")
        truth = "signal" if label == signal_token else "noise"
        boxes.append(
            RoiBox(
                start,
                end,
                f_low,
                f_high,
                source_id=source_id,
                roi_id=f"{source_id}-ann{len(boxes):04d}",
                truth_label=truth,
            )
        )

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if fields[0] == "\\":
                if pending is None:
                    raise AnnotationError(
                        f"{path}:{line_no}: frequency line without a label line"
                    )
                if len(fields) != 3:
                    raise AnnotationError(
                        f"{path}:{line_no}: frequency line needs 2 values"
                    )
                f_low = _parse_float(fields[1], path, line_no)
                f_high = _parse_float(fields[2], path, line_no)
                flush(pending, f_low, f_high)
                pending = None
                continue
            if pending is not None:
                warnings.warn(
                    f"{path}:{pending[3]}: no frequency pair; using full band",
                    stacklevel=2,
                )
                flush(pending, FULL_BAND_LOW_HZ, FULL_BAND_HIGH_HZ)
                pending = None
            if len(fields) != 3:
                raise AnnotationError(
                    f"{path}:{line_no}: expected 'start<TAB>end<TAB>label'"
                )
            start = _parse_float(fields[0], path, line_no)
            end = _parse_float(fields[1], path, line_no)
            pending = (start, end, fields[2], line_no)
    if pending is not None:
        warnings.warn(
            f"{path}:{pending[3]}: no frequency pair; using full band", stacklevel=2
        )
        flush(pending, FULL_BAND_LOW_HZ, FULL_BAND_HIGH_HZ)
    return boxes


def export_annotations(boxes: Sequence[RoiBox], path) -> None:
    """Write boxes in the two-line Audacity label format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for box in boxes:
            label = box.truth_label or "noise"
            fh.write(f"{box.t_min:.6f}\t{box.t_max:.6f}\t{label}\n")
            fh.write(f"\\\t{box.f_min:.6f}\t{box.f_max:.6f}\n")


def load_annotation_dir(
    directory, signal_token: str = SIGNAL_TOKEN, annotator: str = ""
) -> AnnotationSet:
    """Load every ``<source_id>.txt`` label track under a directory tree."""
    directory = Path(directory)
    if not directory.is_dir():
        raise AnnotationError(f"not a directory: {directory}")
    out = AnnotationSet(annotator=annotator)
    for path in sorted(directory.rglob("*.txt")):
        out.boxes_by_source[path.stem] = import_annotations(
            path, source_id=path.stem, signal_token=signal_token
        )
    return out
