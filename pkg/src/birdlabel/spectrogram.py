"""STFT magnitude spectrograms and stationary-noise flattening.

The processing chain here mirrors the image-domain pre-processing of the
pipeline: STFT -> block-mean downscale -> per-band noise profile -> noise
subtraction and dB conversion. All functions are pure; spectrograms are
immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .audio_io import AudioClip

# dB floor conventions: magnitudes are converted with 20*log10(x + eps) and
# clamped at floor_db, so exact zeros land exactly on the floor.
DB_EPSILON = 1e-10
DB_FLOOR = -200.0

LINEAR = "linear"
DECIBEL = "dB"


class SpectrogramError(Exception):
    """Raised for malformed spectrogram inputs or impossible parameters."""


@dataclass(frozen=True)
class Spectrogram:
    """2-D magnitude grid with explicit axes.

    ``values`` is ``[n_freq, n_time]``; ``freq_axis`` holds the center
    frequency (Hz) of each row, ``time_axis`` the center time (s) of each
    column, both strictly ascending. ``scale`` tags the grid as linear
    magnitude or dB.
    """

    values: np.ndarray
    freq_axis: np.ndarray
    time_axis: np.ndarray
    scale: str = LINEAR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        freq = np.asarray(self.freq_axis, dtype=np.float64)
        time = np.asarray(self.time_axis, dtype=np.float64)
        if values.ndim != 2:
            raise SpectrogramError(f"values must be 2-D, got shape {values.shape}")
        if values.shape != (len(freq), len(time)):
            raise SpectrogramError(
                f"axes ({len(freq)}, {len(time)}) do not match grid {values.shape}"
            )
        for name, axis in (("freq_axis", freq), ("time_axis", time)):
            if len(axis) > 1 and not np.all(np.diff(axis) > 0):
                raise SpectrogramError(f"{name} must be strictly ascending")
        if self.scale not in (LINEAR, DECIBEL):
            raise SpectrogramError(f"unknown scale tag {self.scale!r}")
        if self.scale == LINEAR and values.size and values.min() < 0:
            raise SpectrogramError("linear-scale magnitudes must be non-negative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq_axis", freq)
        object.__setattr__(self, "time_axis", time)

    @property
    def n_freq(self) -> int:
        return self.values.shape[0]

    @property
    def n_time(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StftParams:
    window_size: int = 2048
    hop: int = 1024
    window_fn: str = "hann"
    sample_rate: int = 44100

    def __post_init__(self):
        if not 0 < self.hop <= self.window_size:
            raise SpectrogramError(
                f"need 0 < hop <= window_size, got ({self.hop}, {self.window_size})"
            )
        if self.window_fn != "hann":
            raise SpectrogramError(f"unsupported window: {self.window_fn}")


@dataclass(frozen=True)
class NoiseProfile:
    """Per-frequency-band stationary level, smoothed along frequency."""

    per_band_level: np.ndarray
    smoothing_bands: int

    def __post_init__(self):
        object.__setattr__(
            self, "per_band_level", np.asarray(self.per_band_level, dtype=np.float64)
        )


def stft_magnitude(clip: AudioClip, params: StftParams) -> Spectrogram:
    """Hann-windowed STFT magnitude.

    Frames start at multiples of ``hop``; the frame count is
    ``floor((n - window) / hop) + 1`` with no padding, so a clip shorter than
    one window is an error. Row count is ``window_size // 2 + 1``.
    """
    n = len(clip.samples)
    if n < params.window_size:
        raise SpectrogramError(
            f"clip of {n} samples is shorter than one window ({params.window_size})"
        )
    window = get_window("hann", params.window_size, fftbins=True)
    frames = sliding_window_view(clip.samples, params.window_size)[:: params.hop]
    mags = np.abs(np.fft.rfft(frames * window, axis=1)).T
    freq_axis = np.fft.rfftfreq(params.window_size, 1.0 / params.sample_rate)
    starts = np.arange(frames.shape[0]) * params.hop
    time_axis = (starts + params.window_size / 2.0) / params.sample_rate
    return Spectrogram(mags, freq_axis, time_axis, LINEAR)


def _block_starts(n: int, factor: int) -> np.ndarray:
    return np.arange(0, n, factor)


def downscale(spec: Spectrogram, time_factor: int, freq_factor: int) -> Spectrogram:
    """Reduce ``freq_factor x time_factor`` pixel blocks to their mean.

    A trailing partial block is averaged over its actual extent rather than
    dropped, so the tail spacing of the output axes can be slightly tighter
    than the interior spacing. Axes are re-centered on block centers.
    """
    if time_factor < 1 or freq_factor < 1:
        raise SpectrogramError(
            f"downscale factors must be >= 1, got ({time_factor}, {freq_factor})"
        )
    if spec.scale != LINEAR:
        raise SpectrogramError("downscale expects a linear-scale spectrogram")
    rows = _block_starts(spec.n_freq, freq_factor)
    cols = _block_starts(spec.n_time, time_factor)
    row_counts = np.diff(np.append(rows, spec.n_freq))
    col_counts = np.diff(np.append(cols, spec.n_time))
    sums = np.add.reduceat(np.add.reduceat(spec.values, rows, axis=0), cols, axis=1)
    values = sums / np.outer(row_counts, col_counts)
    freq_axis = np.add.reduceat(spec.freq_axis, rows) / row_counts
    time_axis = np.add.reduceat(spec.time_axis, cols) / col_counts
    return Spectrogram(values, freq_axis, time_axis, LINEAR)


def estimate_noise_profile(spec: Spectrogram, smoothing_bands: int = 25) -> NoiseProfile:
    """Per-band time-average, then a running mean across frequency bands.

    The running-mean window is centered and truncated at the edges (each
    output value is the mean over the bands actually inside the window).
    """
    if spec.scale != LINEAR:
        raise SpectrogramError("noise profile is estimated on the linear scale")
    if smoothing_bands < 1:
        raise SpectrogramError(f"smoothing_bands must be >= 1, got {smoothing_bands}")
    raw = spec.values.mean(axis=1)
    if smoothing_bands == 1 or len(raw) == 1:
        return NoiseProfile(raw, smoothing_bands)
    kernel = np.ones(smoothing_bands)
    summed = np.convolve(raw, kernel, mode="same")
    counts = np.convolve(np.ones_like(raw), kernel, mode="same")
    return NoiseProfile(summed / counts, smoothing_bands)


def subtract_noise_to_db(
    spec: Spectrogram, profile: NoiseProfile, floor_db: float = DB_FLOOR
) -> Spectrogram:
    """Subtract the per-band profile (clamped at 0) and convert to dB.

    The subtraction happens in the linear-magnitude domain; the residual is
    converted with ``20*log10(x + eps)`` and clamped at ``floor_db``, so a
    pixel that exactly matches its band's profile lands on the floor.
    """
    if spec.scale != LINEAR:
        raise SpectrogramError("noise subtraction expects a linear-scale spectrogram")
    level = profile.per_band_level
    if len(level) != spec.n_freq:
        raise SpectrogramError(
            f"profile has {len(level)} bands, spectrogram has {spec.n_freq}"
        )
    residual = np.maximum(spec.values - level[:, None], 0.0)
    db = np.maximum(20.0 * np.log10(residual + DB_EPSILON), floor_db)
    return Spectrogram(db, spec.freq_axis, spec.time_axis, DECIBEL)


def noise_reference_db(profile: NoiseProfile) -> float:
    """dB level of the background that the flattening removed.

    Segmentation thresholds are expressed relative to this anchor (the median
    pre-subtraction band level), which makes them portable across recordings
    and invariant to uniform gain.
    """
    return float(20.0 * np.log10(np.median(profile.per_band_level) + DB_EPSILON))


def dump_csv(spec: Spectrogram, path) -> None:
    """Debug dump as dense CSV for golden-file comparisons.

    First line: scale tag. Second line: time axis. Remaining lines: one row
    per frequency band, ascending, with the band's center frequency first.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"scale,{spec.scale}\n")
        fh.write("time," + ",".join(f"{t:.9g}" for t in spec.time_axis) + "\n")
        for f_hz, row in zip(spec.freq_axis, spec.values):
            fh.write(f"{f_hz:.9g}," + ",".join(f"{v:.9g}" for v in row) + "\n")


def load_csv(path) -> Spectrogram:
    """Inverse of :func:`dump_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    scale = lines[0].split(",", 1)[1]
    time_axis = np.array([float(v) for v in lines[1].split(",")[1:]])
    freq_axis, rows = [], []
    for ln in lines[2:]:
        parts = ln.split(",")
        freq_axis.append(float(parts[0]))
        rows.append([float(v) for v in parts[1:]])
    return Spectrogram(np.array(rows), np.array(freq_axis), time_axis, scale)
