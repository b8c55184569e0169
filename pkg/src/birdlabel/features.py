"""Per-ROI descriptors: 48 Gabor wavelet coefficients plus spectral centroid.

The descriptor is computed on a dedicated spectrogram (24 kHz / 512-sample
window / 250-11000 Hz band) that differs from the segmentation resolution.
Each ROI yields a 49-dimensional vector: the mean absolute response of the
max-normalized magnitude grid to each of 48 oriented Gabor kernels, plus the
energy-weighted mean frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import irfft2, next_fast_len, rfft2

from .audio_io import AudioClip, BandpassSpec, bandpass, resample
from .spectrogram import LINEAR, Spectrogram, StftParams, stft_magnitude

ORIENTATIONS_DEG = (0.0, 90.0, 45.0, 135.0)
ORIENTATION_NAMES = {0.0: "vertical", 90.0: "horizontal", 45.0: "diag45", 135.0: "diag135"}
PHASES = ("even", "odd")

# Gabor parameterization, fixed for the whole bank: isotropic Gaussian
# envelope with a two-octave frequency bandwidth (sigma ~ 0.312 * wavelength)
# truncated at 2.5 sigma; wavelengths double per scale starting at 4 px.
BASE_WAVELENGTH_PX = 4.0
SIGMA_PER_WAVELENGTH = (1.0 / math.pi) * math.sqrt(math.log(2) / 2.0) * (2**2 + 1) / (2**2 - 1)
TRUNCATE_SIGMAS = 2.5


class FeatureError(Exception):
    pass


@dataclass(frozen=True)
class FeatureParams:
    """Resolution of the feature spectrogram and shape of the filter bank."""

    sample_rate: int = 24000
    window_size: int = 512
    hop: int = 256
    band_low_hz: float = 250.0
    band_high_hz: float = 11000.0
    n_scales: int = 6

    def __post_init__(self):
        n_kernels = self.n_scales * len(ORIENTATIONS_DEG) * len(PHASES)
        if n_kernels != 48:
            raise ValueError(
                f"bank must hold 48 kernels, params give {n_kernels}"
            )
        if not 0 < self.band_low_hz < self.band_high_hz < self.sample_rate / 2:
            raise ValueError(
                f"band ({self.band_low_hz}, {self.band_high_hz}) invalid "
                f"at {self.sample_rate} Hz"
            )


@dataclass(frozen=True)
class GaborKernel:
    array: np.ndarray
    scale_index: int
    wavelength_px: float
    orientation_deg: float
    phase: str


@dataclass(frozen=True)
class GaborBank:
    kernels: tuple[GaborKernel, ...]
    # kernel spectra keyed by (kernel index, fft shape); shared read-only use
    # of a bank across workers at worst recomputes an entry
    _fft_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.kernels)

    def kernel_spectrum(self, index: int, fshape: tuple[int, int]) -> np.ndarray:
        key = (index, fshape)
        spectrum = self._fft_cache.get(key)
        if spectrum is None:
            spectrum = rfft2(self.kernels[index].array, fshape)
            self._fft_cache[key] = spectrum
        return spectrum


@dataclass(frozen=True)
class FeatureVector:
    """49-entry descriptor of one ROI: 48 wavelet coefficients + centroid."""

    wavelet: np.ndarray
    centroid_hz: float
    roi_id: str = ""

    def __post_init__(self):
        wavelet = np.asarray(self.wavelet, dtype=np.float64)
        if wavelet.shape != (48,):
            raise ValueError(f"wavelet block must have 48 entries, got {wavelet.shape}")
        if not np.all(np.isfinite(wavelet)) or not math.isfinite(self.centroid_hz):
            raise ValueError("feature vector must be finite")
        if wavelet.min() < 0:
            raise ValueError("wavelet coefficients are mean absolute responses, >= 0")
        object.__setattr__(self, "wavelet", wavelet)

    def as_array(self) -> np.ndarray:
        return np.append(self.wavelet, self.centroid_hz)


def _gabor_kernel(wavelength: float, theta_deg: float, phase: str) -> np.ndarray:
    sigma = SIGMA_PER_WAVELENGTH * wavelength
    half = int(math.ceil(TRUNCATE_SIGMAS * sigma))
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    theta = math.radians(theta_deg)
    along = x * math.cos(theta) + y * math.sin(theta)
    envelope = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    carrier = 2.0 * math.pi * along / wavelength
    wave = np.cos(carrier) if phase == "even" else np.sin(carrier)
    kernel = envelope * wave
    kernel -= kernel.mean()
    return kernel / np.linalg.norm(kernel)


def build_gabor_bank(params: FeatureParams = FeatureParams()) -> GaborBank:
    """48 zero-mean, unit-norm kernels: 6 scales x 4 orientations x 2 phases.

    Orientation is the direction of the carrier in (time, frequency) pixel
    space: 0 deg varies along time (responds to vertical spectrogram
    structure such as broadband pulses), 90 deg along frequency (steady
    tones), 45/135 deg to up/down sweeps. Phases are the quadrature pair.
    """
    kernels = []
    for scale in range(params.n_scales):
        wavelength = BASE_WAVELENGTH_PX * (2.0**scale)
        for theta in ORIENTATIONS_DEG:
            for phase in PHASES:
                kernels.append(
                    GaborKernel(_gabor_kernel(wavelength, theta, phase), scale, wavelength, theta, phase)
                )
    return GaborBank(tuple(kernels))


def roi_feature_spectrogram(roi_audio: AudioClip, params: FeatureParams) -> Spectrogram:
    """Resample, band-pass, and STFT an ROI at the feature resolution."""
    resampled = resample(roi_audio, params.sample_rate)
    if len(resampled) < params.window_size:
        raise FeatureError(
            f"roi {roi_audio.source_id!r} too short for one feature window "
            f"({len(resampled)} < {params.window_size} samples at "
            f"{params.sample_rate} Hz)"
        )
    filtered = bandpass(resampled, BandpassSpec(params.band_low_hz, params.band_high_hz, 15))
    return stft_magnitude(
        filtered, StftParams(params.window_size, params.hop, "hann", params.sample_rate)
    )


def wavelet_features(spec: Spectrogram, bank: GaborBank) -> np.ndarray:
    """Mean absolute Gabor response per kernel on the max-normalized grid.

    The grid is padded symmetrically by each kernel's half-extent before a
    valid-region convolution, so the response field matches the grid size
    even when a kernel outgrows the ROI. Max-normalization makes the
    coefficients invariant to uniform gain of the ROI audio.
    """
    if spec.scale != LINEAR:
        raise FeatureError("wavelet features are computed on linear magnitudes")
    grid = spec.values
    peak = grid.max()
    if peak > 0:
        grid = grid / peak
    coeffs = np.empty(len(bank.kernels))
    by_half: dict[int, list[int]] = {}
    for i, kernel in enumerate(bank.kernels):
        by_half.setdefault(kernel.array.shape[0] // 2, []).append(i)
    for half, indices in by_half.items():
        # one forward transform per kernel size, shared by its 8 kernels
        padded = np.pad(grid, half, mode="symmetric")
        size = 2 * half + 1
        fshape = (
            next_fast_len(padded.shape[0] + size - 1, real=True),
            next_fast_len(padded.shape[1] + size - 1, real=True),
        )
        grid_spectrum = rfft2(padded, fshape)
        for i in indices:
            product = grid_spectrum * bank.kernel_spectrum(i, fshape)
            full = irfft2(product, fshape)
            valid = full[
                2 * half : 2 * half + grid.shape[0],
                2 * half : 2 * half + grid.shape[1],
            ]
            coeffs[i] = np.abs(valid).mean()
    return coeffs


def spectral_centroid(spec: Spectrogram) -> float:
    """Energy-weighted mean frequency of the time-averaged spectrum."""
    if spec.scale != LINEAR:
        raise FeatureError("spectral centroid is computed on linear magnitudes")
    energy = spec.values.mean(axis=1)
    total = energy.sum()
    if total <= 0:
        raise FeatureError("cannot compute the centroid of an all-zero spectrogram")
    return float((spec.freq_axis * energy).sum() / total)


def featurize(
    roi_audio: AudioClip,
    params: FeatureParams,
    bank: GaborBank,
    roi_id: str = "",
) -> FeatureVector:
    """Full 49-entry descriptor for one ROI clip."""
    spec = roi_feature_spectrogram(roi_audio, params)
    wavelet = wavelet_features(spec, bank)
    centroid = spectral_centroid(spec)
    return FeatureVector(wavelet, centroid, roi_id=roi_id or roi_audio.source_id)


def write_feature_table(vectors, path) -> None:
    """CSV with one row per ROI: ``roi_id, w00..w47, centroid_hz``."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["roi_id"] + [f"w{i:02d}" for i in range(48)] + ["centroid_hz"])
        for fv in vectors:
            writer.writerow(
                [fv.roi_id]
                + [f"{w:.9g}" for w in fv.wavelet]
                + [f"{fv.centroid_hz:.6f}"]
            )
