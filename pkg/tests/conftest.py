"""Shared fixtures and slow-but-obvious reference implementations.

The oracles here trade speed for transparency: cyclic Jacobi instead of
LAPACK, linear scans instead of trees, per-voxel group-by instead of the
fused accumulator. Metric tests compare the package against these.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from mapmetrics import PointCloud, SceneSpec, add_gaussian_noise, synth_scene

COV_EPS = 1e-9


def jacobi_eigh3(matrix, sweeps: int = 60):
    """Eigendecomposition of a symmetric 3x3 via cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).
    """
    a = np.array(matrix, dtype=np.float64)
    v = np.eye(3)
    for _ in range(sweeps):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        scale = max(1.0, abs(a[0, 0]), abs(a[1, 1]), abs(a[2, 2]))
        if off < 1e-15 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            if a[p, q] == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def psd_sqrt_oracle(matrix) -> np.ndarray:
    w, v = jacobi_eigh3(matrix)
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


def wasserstein_oracle(mean_a, cov_a, mean_b, cov_b) -> float:
    sb = psd_sqrt_oracle(cov_b)
    inner = sb @ np.asarray(cov_a) @ sb
    cross = psd_sqrt_oracle((inner + inner.T) / 2.0)
    d = np.asarray(mean_a, dtype=float) - np.asarray(mean_b, dtype=float)
    radicand = float(d @ d) + float(np.trace(cov_a + cov_b - 2.0 * cross))
    return math.sqrt(max(radicand, 0.0))


def brute_nn(queries, points):
    """Linear-scan nearest neighbors; ties resolve to the lowest id."""
    q = np.asarray(queries, dtype=float)[:, None, :]
    p = np.asarray(points, dtype=float)[None, :, :]
    d2 = ((q - p) ** 2).sum(axis=-1)
    idx = d2.argmin(axis=1)
    return np.sqrt(d2[np.arange(len(idx)), idx]), idx


def chamfer_oracle(pts_a, pts_b) -> float:
    d_ab, _ = brute_nn(pts_a, pts_b)
    d_ba, _ = brute_nn(pts_b, pts_a)
    return 100.0 * (float(d_ab.mean()) + float(d_ba.mean()))


def voxel_groupby_oracle(points, voxel_size, origin=(0.0, 0.0, 0.0)):
    """Per-voxel (count, mean, covariance) by explicit group-by.

    Covariance is the unbiased estimate plus the same diagonal
    regularization the package applies; None for single-point voxels.
    """
    pts = np.asarray(points, dtype=float)
    shifted = pts - np.asarray(origin, dtype=float)
    idx = np.floor(shifted / voxel_size).astype(np.int64)
    out = {}
    for key in map(tuple, np.unique(idx, axis=0)):
        sel = pts[np.all(idx == key, axis=1)]
        n = len(sel)
        mu = sel.mean(axis=0)
        if n >= 2:
            d = sel - mu
            cov = d.T @ d / (n - 1) + COV_EPS * np.eye(3)
        else:
            cov = None
        out[key] = (n, mu, cov)
    return out


def mme_oracle(points, radius, min_neighbors):
    """Per-point entropy by brute-force ball queries; returns
    (mean over valid points or None, n_valid)."""
    pts = np.asarray(points, dtype=float)
    values = []
    for i in range(len(pts)):
        d = np.sqrt(((pts - pts[i]) ** 2).sum(axis=1))
        ball = pts[d <= radius]
        if len(ball) - 1 < min_neighbors:
            continue
        mu = ball.mean(axis=0)
        dev = ball - mu
        cov = dev.T @ dev / (len(ball) - 1) + COV_EPS * np.eye(3)
        w, _ = jacobi_eigh3(cov)
        values.append(0.5 * (3.0 * math.log(2.0 * math.pi * math.e)
                             + math.log(float(np.prod(w)))))
    if not values:
        return None, 0
    return float(np.mean(values)), len(values)


def random_spd(rng, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(3, 3))
    return scale * (a @ a.T) + 1e-6 * np.eye(3)


@pytest.fixture(scope="session")
def room_pair():
    """A small box room and a mildly noisy copy, shared where any
    realistic cloud pair will do."""
    gt = synth_scene(SceneSpec("box", (10.0, 8.0, 3.0), 120.0, seed=5))
    est = add_gaussian_noise(gt, 1.0, 1.0, seed=9)
    return gt, est


@pytest.fixture(scope="session")
def small_cloud():
    rng = np.random.default_rng(42)
    return PointCloud(rng.random((400, 3)) * 4.0)
