"""Classic cloud-to-cloud metrics: accuracy, completeness, chamfer
distance, and mean map entropy."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import chain

import numpy as np

from .geometry import COV_EPSILON, gaussian_entropy_batch
from .registration import CorrespondenceSet
from .spatial import SpatialIndex, _points_of

__all__ = [
    "MmeResult",
    "accuracy",
    "chamfer_distance",
    "completeness",
    "mean_map_entropy",
]

M_TO_CM = 100.0

# queries per chunk; bounds the transient neighbor-list memory
_MME_CHUNK = 16384


def accuracy(corr: CorrespondenceSet) -> float | None:
    """Mean inlier distance in cm, or None when no pair passed the gate."""
    if len(corr) == 0:
        return None
    return M_TO_CM * float(corr.distances.mean())


def completeness(corr: CorrespondenceSet) -> float:
    """Fraction of ground-truth points with a match inside the gate."""
    return len(corr) / corr.n_gt


def chamfer_distance(gt, est, workers: int = 1,
                     gt_index: SpatialIndex | None = None,
                     est_index: SpatialIndex | None = None) -> float:
    """Sum of the two directional mean nearest-neighbor distances, in cm.

    No threshold is applied: a single far outlier moves the result, by
    design of the metric.
    """
    gt_pts = _points_of(gt)
    est_pts = _points_of(est)
    if len(gt_pts) == 0 or len(est_pts) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    ei = est_index if est_index is not None else SpatialIndex(est_pts)
    gi = gt_index if gt_index is not None else SpatialIndex(gt_pts)
    d_gt_to_est, _ = ei.query(gt_pts, workers=workers)
    d_est_to_gt, _ = gi.query(est_pts, workers=workers)
    return M_TO_CM * (float(d_gt_to_est.mean()) + float(d_est_to_gt.mean()))


@dataclass(frozen=True)
class MmeResult:
    value: float | None  # mean per-point entropy; None when nothing qualified
    n_valid: int
    n_excluded: int


def mean_map_entropy(cloud, radius: float = 0.1, min_neighbors: int = 10,
                     workers: int = 1, formula: str = "entropy") -> MmeResult:
    """Mean differential entropy of per-point local covariances.

    Each point with at least ``min_neighbors`` other points inside
    ``radius`` contributes the entropy of the Gaussian fitted to its
    neighborhood (the point itself included, covariance regularized).
    ``formula="min_eigenvalue"`` switches the per-point value to
    -log(lambda_min) of the same covariance.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if min_neighbors < 1:
        raise ValueError("min_neighbors must be >= 1")
    if formula not in ("entropy", "min_eigenvalue"):
        raise ValueError(f"unknown formula {formula!r}")
    pts = _points_of(cloud)
    if len(pts) == 0:
        raise ValueError("cloud is empty")
    index = SpatialIndex(pts)

    total = 0.0
    n_valid = 0
    n_excluded = 0
    for start in range(0, len(pts), _MME_CHUNK):
        queries = pts[start:start + _MME_CHUNK]
        lists = index.radius_neighbor_lists(queries, radius, workers=workers)
        lens = np.fromiter((len(l) for l in lists), dtype=np.int64,
                           count=len(lists))
        # the ball always contains the query point itself
        valid = lens >= min_neighbors + 1
        n_excluded += int((~valid).sum())
        if not valid.any():
            continue
        keep = np.nonzero(valid)[0]
        vlens = lens[keep]
        flat = np.fromiter(
            chain.from_iterable(lists[i] for i in keep),
            dtype=np.int64, count=int(vlens.sum()),
        )
        # neighborhood coordinates relative to each query point: keeps the
        # moment sums well conditioned far from the origin
        local = pts[flat] - np.repeat(queries[keep], vlens, axis=0)
        starts = np.zeros(len(keep), dtype=np.int64)
        np.cumsum(vlens[:-1], out=starts[1:])
        sums = np.add.reduceat(local, starts, axis=0)
        prods = np.add.reduceat(
            local[:, [0, 0, 0, 1, 1, 2]] * local[:, [1, 2, 0, 1, 2, 2]],
            starts, axis=0,
        )
        counts = vlens.astype(np.float64)
        mu = sums / counts[:, None]
        cov = np.empty((len(keep), 3, 3))
        cov[:, 0, 1] = cov[:, 1, 0] = prods[:, 0] - counts * mu[:, 0] * mu[:, 1]
        cov[:, 0, 2] = cov[:, 2, 0] = prods[:, 1] - counts * mu[:, 0] * mu[:, 2]
        cov[:, 0, 0] = prods[:, 2] - counts * mu[:, 0] ** 2
        cov[:, 1, 1] = prods[:, 3] - counts * mu[:, 1] ** 2
        cov[:, 1, 2] = cov[:, 2, 1] = prods[:, 4] - counts * mu[:, 1] * mu[:, 2]
        cov[:, 2, 2] = prods[:, 5] - counts * mu[:, 2] ** 2
        cov /= (counts - 1.0)[:, None, None]
        cov += COV_EPSILON * np.eye(3)

        if formula == "entropy":
            total += float(gaussian_entropy_batch(cov).sum())
        else:
            smallest = np.clip(np.linalg.eigvalsh(cov)[:, 0], 1e-300, None)
            total += float(-np.log(smallest).sum())
        n_valid += len(keep)

    value = total / n_valid if n_valid else None
    return MmeResult(value=value, n_valid=n_valid, n_excluded=n_excluded)
