"""KD-tree queries and PCA surface normals.

The index is immutable after construction; concurrent read-only queries
are safe. Query results do not depend on the thread count: scipy
partitions query batches across workers but computes each answer
independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud

__all__ = ["NormalCloud", "SpatialIndex", "build_index", "estimate_normals"]

# relative eigenvalue threshold below which a neighborhood counts as
# rank-deficient (collinear or degenerate)
_RANK_TOL = 1e-8


def _points_of(cloud_or_points) -> np.ndarray:
    if isinstance(cloud_or_points, PointCloud):
        return cloud_or_points.points
    pts = np.ascontiguousarray(np.asarray(cloud_or_points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
    return pts


class SpatialIndex:
    """Balanced KD-tree over a point cloud."""

    __slots__ = ("points", "_tree")

    def __init__(self, cloud_or_points) -> None:
        pts = _points_of(cloud_or_points)
        if len(pts) == 0:
            raise ValueError("cannot index an empty cloud")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, query) -> tuple[int, float]:
        """Nearest indexed point to a single query; ties go to the lowest id."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        k = 2 if len(self) > 1 else 1
        dist, idx = self._tree.query(q, k=k)
        dist = np.atleast_1d(dist)
        idx = np.atleast_1d(idx)
        if k == 1 or dist[1] > dist[0]:
            return int(idx[0]), float(dist[0])
        # exact tie among the top two: rank every point at the minimum
        # distance and return the smallest id
        candidates = np.asarray(
            self._tree.query_ball_point(q, float(dist[0]) * (1.0 + 1e-12) + 1e-300),
            dtype=np.int64,
        )
        d = np.sqrt(((self.points[candidates] - q) ** 2).sum(axis=1))
        best = d.min()
        return int(candidates[d == best].min()), float(best)

    def query(self, queries: np.ndarray, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Batch nearest-neighbor distances and ids (no tie canonicalization).

        Metric code consumes the distances, which are unique regardless
        of which point attains them; use nearest() where the id of a
        tied point matters.
        """
        dist, idx = self._tree.query(np.asarray(queries, dtype=np.float64),
                                     workers=workers)
        return dist, idx

    def radius_neighbors(self, query, radius: float) -> np.ndarray:
        """Ids of all points with distance <= radius, sorted ascending."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        q = np.asarray(query, dtype=np.float64).reshape(3)
        ids = self._tree.query_ball_point(q, float(radius))
        return np.sort(np.asarray(ids, dtype=np.int64))

    def radius_neighbor_lists(self, queries: np.ndarray, radius: float,
                              workers: int = 1) -> list:
        """Raw per-query neighbor id lists; callers chunk large batches."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        return self._tree.query_ball_point(
            np.asarray(queries, dtype=np.float64), float(radius), workers=workers
        )

    def knn(self, queries: np.ndarray, k: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        dist, idx = self._tree.query(np.asarray(queries, dtype=np.float64),
                                     k=k, workers=workers)
        return dist, idx


def build_index(cloud_or_points) -> SpatialIndex:
    return SpatialIndex(cloud_or_points)


@dataclass(frozen=True)
class NormalCloud:
    """Unit normals per point; rank-deficient neighborhoods are flagged
    invalid rather than given fabricated directions."""

    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if self.normals.shape != (len(self.valid), 3):
            raise ValueError("normals and valid flags disagree in length")


def estimate_normals(cloud_or_points, k: int = 20, workers: int = 1) -> NormalCloud:
    """PCA normals from the k nearest neighbors of each point.

    The normal is the eigenvector of the neighborhood covariance with
    the smallest eigenvalue, sign-canonicalized so that n_z > 0 (n_y
    breaks n_z = 0, then n_x). Neighborhoods whose covariance has rank
    < 2 are marked invalid.
    """
    pts = _points_of(cloud_or_points)
    if k < 3:
        raise ValueError("k must be >= 3")
    if len(pts) < k:
        raise ValueError(f"cloud has {len(pts)} points, need at least k={k}")
    index = SpatialIndex(pts)
    _, idx = index.knn(pts, k=k, workers=workers)

    # covariances in coordinates relative to each query point: immune to
    # catastrophic cancellation for far-from-origin maps
    neigh = pts[idx] - pts[:, None, :]
    mu = neigh.mean(axis=1)
    centered = neigh - mu[:, None, :]
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k - 1)

    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0].copy()
    scale = eigvals[:, 2]
    valid = (scale > 0.0) & (eigvals[:, 1] > _RANK_TOL * np.maximum(scale, 1e-300))

    # canonical sign: n_z >= 0, ties broken by n_y then n_x
    nz, ny, nx = normals[:, 2], normals[:, 1], normals[:, 0]
    flip = (nz < 0) | ((nz == 0) & (ny < 0)) | ((nz == 0) & (ny == 0) & (nx < 0))
    normals[flip] *= -1.0

    norms = np.linalg.norm(normals, axis=1)
    nonzero = norms > 0
    normals[nonzero] /= norms[nonzero, None]
    valid &= nonzero
    return NormalCloud(normals=normals, valid=valid)
