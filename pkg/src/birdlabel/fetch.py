"""Offline-testable metadata client for a Xeno-Canto-compatible JSON API.

The client downloads recording metadata, filters it by sound type, quality,
and duration, and draws a seeded random sample. Tests (and CI) replay
recorded JSON fixtures from disk; no live network is required. Audio files
themselves are not downloaded here: the archive serves mp3, which must be
converted to PCM WAV externally before entering the pipeline.
"""

from __future__ import annotations

import json
import random
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional


class FetchError(Exception):
    pass


@dataclass(frozen=True)
class QueryFilter:
    """Metadata conditions plus the sampling recipe."""

    species: str
    sound_type: str = "song"
    quality: tuple[str, ...] = ("A", "B")
    min_duration_s: float = 20.0
    max_duration_s: float = 180.0
    max_results: int = 100
    sample_size: int = 20
    random_seed: int = 0

    def __post_init__(self):
        if not 0 < self.min_duration_s < self.max_duration_s:
            raise ValueError(
                f"duration bounds must be positive and ordered, got "
                f"({self.min_duration_s}, {self.max_duration_s})"
            )
        if not 0 < self.sample_size <= self.max_results:
            raise ValueError(
                f"need 0 < sample_size <= max_results, got "
                f"({self.sample_size}, {self.max_results})"
            )


@dataclass(frozen=True)
class RecordingRecord:
    id: str
    genus: str
    species: str
    sound_type: str
    quality: str
    length_s: float
    file_url: str


@dataclass(frozen=True)
class FetchResult:
    records: tuple[RecordingRecord, ...]
    seed: int
    warnings: tuple[str, ...] = ()


def parse_length_s(text: str) -> float:
    """Parse a ``mm:ss`` or ``h:mm:ss`` length field into seconds."""
    parts = text.strip().split(":")
    if not 1 <= len(parts) <= 3 or not all(p.isdigit() for p in parts):
        raise FetchError(f"malformed length field: {text!r}")
    seconds = 0.0
    for part in parts:
        seconds = seconds * 60 + int(part)
    return seconds


def _parse_record(raw: dict) -> RecordingRecord:
    try:
        return RecordingRecord(
            id=str(raw["id"]),
            genus=raw.get("gen", ""),
            species=raw.get("sp", ""),
            sound_type=raw.get("type", ""),
            quality=raw.get("q", ""),
            length_s=parse_length_s(raw["length"]),
            file_url=raw.get("file", ""),
        )
    except KeyError as exc:
        raise FetchError(f"record missing field {exc}") from exc


def _http_get_json(url: str, retries: int, backoff_s: float, sleep: Callable) -> dict:
    last_exc: Optional[Exception] = None
    for attempt in range(retries):
        try:
            with urllib.request.urlopen(url, timeout=30) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError) as exc:
            last_exc = exc
            if attempt + 1 < retries:
                sleep(backoff_s * 2**attempt)
    raise FetchError(f"GET {url} failed after {retries} attempts: {last_exc}")


def _load_payload(
    endpoint: str, query: str, retries: int, backoff_s: float, sleep: Callable
) -> dict:
    if endpoint.startswith(("http://", "https://")):
        url = f"{endpoint}?query={urllib.parse.quote(query)}"
        return _http_get_json(url, retries, backoff_s, sleep)
    path = Path(endpoint)
    if not path.exists():
        raise FetchError(f"fixture not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def fetch_metadata(
    flt: QueryFilter,
    endpoint: str,
    retries: int = 3,
    backoff_s: float = 1.0,
    sleep: Callable = time.sleep,
) -> FetchResult:
    """Retrieve, filter, and sample recording metadata.

    ``endpoint`` is either an http(s) base URL or a path to a recorded JSON
    fixture with the same schema (``{"recordings": [...]}``). Records must
    match the sound type (substring of the free-text type field,
    case-insensitive), carry an accepted quality rating, and fall inside the
    duration window; at most ``max_results`` survivors are kept before a
    seeded sample of ``sample_size`` is drawn. Results are sorted by id.
    """
    payload = _load_payload(endpoint, flt.species, retries, backoff_s, sleep)
    if "recordings" not in payload or not isinstance(payload["recordings"], list):
        raise FetchError("malformed response: missing 'recordings' list")
    records = [_parse_record(raw) for raw in payload["recordings"]]
    passing = [
        r
        for r in records
        if flt.sound_type.lower() in r.sound_type.lower()
        and r.quality in flt.quality
        and flt.min_duration_s <= r.length_s <= flt.max_duration_s
    ]
    passing = passing[: flt.max_results]
    warnings = []
    if len(passing) <= flt.sample_size:
        sampled = passing
        if len(passing) < flt.sample_size:
            warnings.append(
                f"only {len(passing)} records pass the filters; "
                f"requested sample of {flt.sample_size}"
            )
    else:
        rng = random.Random(flt.random_seed)
        sampled = rng.sample(passing, flt.sample_size)
    sampled = sorted(sampled, key=lambda r: r.id)
    return FetchResult(tuple(sampled), flt.random_seed, tuple(warnings))


def write_fetch_manifest(result: FetchResult, path) -> None:
    """CSV of the sampled records, with the sampling seed in a leading row."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["# random_seed", result.seed])
        writer.writerow(["id", "genus", "species", "sound_type", "quality", "length_s", "file_url"])
        for r in result.records:
            writer.writerow(
                [r.id, r.genus, r.species, r.sound_type, r.quality, f"{r.length_s:.1f}", r.file_url]
            )
