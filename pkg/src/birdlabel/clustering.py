"""Unsupervised signal/noise separation per species.

Feature vectors are z-scored, a radius is read off the knee of the sorted
K-dist curve, and DBSCAN partitions the set; the largest cluster is taken as
the focal species' signal, everything else (smaller clusters and outliers)
as noise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from .features import FeatureVector

NOISE_LABEL = -1
_UNVISITED = -2

SIGNAL = "signal"
NOISE = "noise"

# Below this many ROIs a density estimate is meaningless; the whole species
# set is labeled noise with a diagnostic instead of clustering.
MIN_ROIS_FOR_CLUSTERING = 10


class ClusteringError(Exception):
    pass


@dataclass(frozen=True)
class DbscanParams:
    """Euclidean radius and core-point threshold in standardized space."""

    eps: float
    min_pts: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-point labels aligned with input order; -1 marks outliers."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def cluster_sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels[self.labels >= 0], return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


@dataclass(frozen=True)
class KneeResult:
    index: int
    value: float
    fallback: bool = False


@dataclass
class SpeciesClassification:
    """Outcome of :func:`classify_species` for one species' ROI set."""

    labels: list[str]
    assignment: ClusterAssignment
    eps: float
    min_pts: int
    diagnostics: list[str] = field(default_factory=list)


def _as_matrix(features: Union[Sequence[FeatureVector], np.ndarray]) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=np.float64)
    return np.array([fv.as_array() for fv in features], dtype=np.float64)


def standardize(
    features: Union[Sequence[FeatureVector], np.ndarray],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift/scale each dimension to mean 0, std 1 (population std).

    Zero-variance dimensions are left at 0 so constant features cannot blow
    up distances. Returns ``(matrix, mean, std)``.
    """
    X = _as_matrix(features)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ClusteringError("standardize needs at least 2 points")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    Z = np.where(std > 0, (X - mean) / np.where(std > 0, std, 1.0), 0.0)
    return Z, mean, std


def kdist_curve(points: np.ndarray, k: int) -> np.ndarray:
    """Ascending curve of each point's mean distance to its k nearest others."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k < n:
        raise ClusteringError(f"need 1 <= k < n, got k={k} with n={n}")
    dists = np.sort(cdist(points, points), axis=1)
    per_point = dists[:, 1 : k + 1].mean(axis=1)  # column 0 is self
    return np.sort(per_point)


def find_knee(curve: np.ndarray) -> KneeResult:
    """Knee of an ascending curve via the normalized difference maximum.

    x and y are normalized to [0, 1] and the knee is the argmax of
    ``y_norm - x_norm``. When the difference curve is never positive (flat or
    straight-line curves have no knee) the value at the 90th-percentile
    position is returned with the ``fallback`` flag set.
    """
    curve = np.asarray(curve, dtype=np.float64)
    n = len(curve)
    if n < 3:
        raise ClusteringError(f"knee detection needs >= 3 points, got {n}")
    x_norm = np.arange(n) / (n - 1)
    span = curve[-1] - curve[0]
    y_norm = (curve - curve[0]) / span if span > 0 else np.zeros(n)
    diff = y_norm - x_norm
    if diff.max() > 0:
        idx = int(np.argmax(diff))
        return KneeResult(idx, float(curve[idx]), fallback=False)
    idx = int(np.floor(0.9 * (n - 1)))
    return KneeResult(idx, float(curve[idx]), fallback=True)


def dbscan(points: np.ndarray, params: DbscanParams) -> ClusterAssignment:
    """Classic density-based clustering.

    A point is core iff its closed eps-ball (including itself) holds at least
    ``min_pts`` points. Clusters are grown from cores in input order, so a
    border point reachable from several clusters lands in the one discovered
    first; the partition is otherwise order-independent.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ClusteringError("dbscan needs a non-empty 2-D point matrix")
    n = len(points)
    within = cdist(points, points) <= params.eps
    is_core = within.sum(axis=1) >= params.min_pts
    neighbors = [np.flatnonzero(within[i]) for i in range(n)]

    labels = np.full(n, _UNVISITED)
    cluster_id = 0
    for i in range(n):
        if labels[i] != _UNVISITED or not is_core[i]:
            continue
        labels[i] = cluster_id
        seeds = deque(neighbors[i])
        while seeds:
            j = seeds.popleft()
            if labels[j] == NOISE_LABEL:
                labels[j] = cluster_id  # noise becomes a border point
            if labels[j] != _UNVISITED:
                continue
            labels[j] = cluster_id
            if is_core[j]:
                seeds.extend(neighbors[j])
        cluster_id += 1
    labels[labels == _UNVISITED] = NOISE_LABEL
    return ClusterAssignment(labels)


def classify_species(
    features: Union[Sequence[FeatureVector], np.ndarray],
    minpts_fraction: float = 0.10,
) -> SpeciesClassification:
    """Label each ROI of one species as signal or noise.

    z-score -> min_pts = max(2, round(fraction * n)) -> K-dist curve with
    k = min_pts -> knee -> eps -> DBSCAN. ROIs in the largest cluster (ties
    broken toward the lowest cluster id) are signal; all others, including
    outliers and smaller clusters, are noise.
    """
    if not 0 < minpts_fraction < 1:
        raise ClusteringError(f"minpts_fraction must be in (0, 1), got {minpts_fraction}")
    X = _as_matrix(features)
    n = len(X)
    if n < MIN_ROIS_FOR_CLUSTERING:
        return SpeciesClassification(
            labels=[NOISE] * n,
            assignment=ClusterAssignment(np.full(n, NOISE_LABEL)),
            eps=float("nan"),
            min_pts=0,
            diagnostics=[f"too few ROIs for clustering (n={n} < {MIN_ROIS_FOR_CLUSTERING})"],
        )
    diagnostics = []
    Z, _, _ = standardize(X)
    min_pts = max(2, round(minpts_fraction * n))
    knee = find_knee(kdist_curve(Z, min_pts))
    if knee.fallback:
        diagnostics.append("kdist curve has no knee; eps from 90th-percentile fallback")
    eps = max(knee.value, 1e-12)  # identical points give a zero-radius knee
    assignment = dbscan(Z, DbscanParams(eps, min_pts))
    sizes = assignment.cluster_sizes()
    if not sizes:
        diagnostics.append("no cluster found; all ROIs labeled noise")
        return SpeciesClassification([NOISE] * n, assignment, eps, min_pts, diagnostics)
    largest = max(sizes, key=lambda cid: (sizes[cid], -cid))
    labels = [SIGNAL if lab == largest else NOISE for lab in assignment.labels]
    return SpeciesClassification(labels, assignment, eps, min_pts, diagnostics)
