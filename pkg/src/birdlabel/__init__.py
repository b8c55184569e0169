"""birdlabel: strong labels for weakly labelled focal bird recordings.

The pipeline segments time-frequency regions of interest from spectrograms,
describes each one with 48 Gabor wavelet coefficients plus the spectral
centroid, and separates the focal species' song from everything else with
density clustering. An evaluation harness scores segmentations against
expert boxes and measures label-noise reduction.
"""

from .audio_io import AudioClip, BandpassSpec, bandpass, load_audio, resample, trim
from .clustering import (
    ClusterAssignment,
    DbscanParams,
    classify_species,
    dbscan,
    find_knee,
    kdist_curve,
    standardize,
)
from .evaluation import (
    AnnotatedRecording,
    ConfusionCounts,
    EvalReport,
    GridSearchSpace,
    confusion,
    grid_search,
    iou,
    macro_report,
    minpts_sweep,
    score_file,
    species_metrics,
)
from .features import (
    FeatureParams,
    FeatureVector,
    GaborBank,
    build_gabor_bank,
    featurize,
    roi_feature_spectrogram,
    spectral_centroid,
    wavelet_features,
)
from .segmentation import (
    RoiBox,
    SegmentationParams,
    boxes_from_mask,
    extract_roi_audio,
    filter_short,
    hysteresis_binarize,
    merge_boxes,
    segment_recording,
)
from .spectrogram import (
    NoiseProfile,
    Spectrogram,
    StftParams,
    downscale,
    estimate_noise_profile,
    stft_magnitude,
    subtract_noise_to_db,
)

__version__ = "0.1.0"
