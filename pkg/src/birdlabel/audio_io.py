"""Audio loading, resampling, filtering, and trimming.

Every operation here is pure: it returns a new :class:`AudioClip` and never
mutates its inputs, so clips can be shared freely across threads and batch
workers. Input format is PCM WAV only; compressed formats must be converted
externally before entering the pipeline.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import butter, resample_poly, sosfiltfilt

# Kaiser beta 7.0 gives ~72 dB stop-band rejection in the polyphase resampler.
_RESAMPLE_WINDOW = ("kaiser", 7.0)

_OFFSET_RE = re.compile(r"^(?P<base>.*)@s=(?P<offset>\d+)$")


class AudioIOError(Exception):
    """Raised when audio cannot be loaded or a filter cannot be applied."""


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer with its sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1]. ``source_id``
    identifies the origin file plus any trim offset (``<base>@s=<samples>``).
    Treat instances as immutable values.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth band-pass description.

    ``order`` is the design order of the underlying low/high-pass prototype;
    the filter is realized as second-order sections and applied zero-phase.
    """

    low_hz: float
    high_hz: float
    order: int = 15

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz:
            raise ValueError(
                f"need 0 < low_hz < high_hz, got ({self.low_hz}, {self.high_hz})"
            )
        if self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order}")


def _to_float(data: np.ndarray) -> np.ndarray:
    """Scale integer PCM to [-1, 1]; pass float data through."""
    if data.dtype == np.int16:
        return data / 32768.0
    if data.dtype == np.int32:
        return data / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise AudioIOError(f"unsupported WAV sample format: {data.dtype}")


def load_audio(path, target_rate: int = 44100) -> AudioClip:
    """Load a PCM WAV file as a mono clip resampled to ``target_rate``.

    Multi-channel files are mixed down by averaging channels. Amplitudes are
    scaled to [-1, 1] according to the integer sample width.

    Raises:
        AudioIOError: missing file, non-WAV/compressed input (convert to PCM
            WAV externally), or zero-length audio.
    """
    path = Path(path)
    if not path.exists():
        raise AudioIOError(f"no such file: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # chunk warnings from odd encoders
            rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioIOError(
            f"{path}: cannot decode ({exc}); external conversion to PCM WAV is required"
        ) from exc
    if data.size == 0:
        raise AudioIOError(f"{path}: zero-length audio")
    samples = _to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    clip = AudioClip(samples, rate, source_id=path.stem)
    return resample(clip, target_rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase resample to ``target_rate`` (identity when rates match)."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    g = math.gcd(target_rate, clip.sample_rate)
    out = resample_poly(
        clip.samples, target_rate // g, clip.sample_rate // g, window=_RESAMPLE_WINDOW
    )
    return AudioClip(out, target_rate, clip.source_id)


def bandpass(clip: AudioClip, spec: BandpassSpec) -> AudioClip:
    """Zero-phase Butterworth band-pass.

    The filter is designed as second-order sections and applied forward and
    backward (``sosfiltfilt``), which keeps high orders numerically stable
    and preserves event timing. Output length equals input length.
    """
    nyquist = clip.sample_rate / 2.0
    if spec.high_hz >= nyquist:
        raise AudioIOError(
            f"high_hz {spec.high_hz} must be below Nyquist {nyquist} Hz"
        )
    sos = butter(
        spec.order,
        [spec.low_hz, spec.high_hz],
        btype="bandpass",
        fs=clip.sample_rate,
        output="sos",
    )
    try:
        out = sosfiltfilt(sos, clip.samples)
    except ValueError as exc:
        raise AudioIOError(f"bandpass failed on {clip.source_id!r}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise AudioIOError(
            f"bandpass numerically unstable for band ({spec.low_hz}, {spec.high_hz}) "
            f"order {spec.order} at {clip.sample_rate} Hz"
        )
    return AudioClip(out, clip.sample_rate, clip.source_id)


def trim(clip: AudioClip, t_start: float, t_end: float) -> AudioClip:
    """Cut ``[t_start, t_end)`` seconds to sample bounds ``[floor, ceil)``.

    The absolute sample offset is recorded in ``source_id`` so that repeated
    trims compose exactly.
    """
    if not 0.0 <= t_start < t_end <= clip.duration_s + 1e-9:
        raise ValueError(
            f"invalid trim bounds ({t_start}, {t_end}) for clip of "
            f"{clip.duration_s:.6f} s"
        )
    i0 = int(math.floor(t_start * clip.sample_rate))
    i1 = min(int(math.ceil(t_end * clip.sample_rate)), len(clip.samples))
    m = _OFFSET_RE.match(clip.source_id)
    if m:
        base, prev = m.group("base"), int(m.group("offset"))
    else:
        base, prev = clip.source_id, 0
    return AudioClip(
        clip.samples[i0:i1], clip.sample_rate, f"{base}@s={prev + i0}"
    )


def split_source_id(source_id: str) -> tuple[str, int]:
    """Split ``<base>@s=<offset>`` into (base, offset in samples)."""
    m = _OFFSET_RE.match(source_id)
    if m:
        return m.group("base"), int(m.group("offset"))
    return source_id, 0


def save_wav(clip: AudioClip, path) -> None:
    """Write a clip as 16-bit PCM WAV (values clipped to [-1, 1])."""
    pcm = np.clip(clip.samples, -1.0, 1.0)
    wavfile.write(path, clip.sample_rate, (pcm * 32767.0).astype(np.int16))
