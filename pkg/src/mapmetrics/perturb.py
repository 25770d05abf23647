"""Controlled degradation of point clouds, plus synthetic test scenes.

Both degradation modes displace a chosen fraction of points by an
isotropic Gaussian step; they differ only in intent (noise: small
sigma, typically most points; outliers: large sigma, a small subset).
Draws come from numpy's PCG64 generator seeded explicitly, so a given
(cloud, spec) pair always yields the same result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud

__all__ = [
    "PerturbSpec",
    "SceneSpec",
    "add_gaussian_noise",
    "apply_perturbation",
    "inject_outliers",
    "synth_scene",
]

_MODES = ("noise", "outlier")
_KINDS = ("box", "sheet", "corridor")


@dataclass(frozen=True)
class PerturbSpec:
    """Which points move, and how far.

    fraction is the share of points displaced, in (0, 1]; sigma_cm the
    per-axis standard deviation of the displacement.
    """

    mode: str
    fraction: float
    sigma_cm: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.sigma_cm <= 0.0:
            raise ValueError(f"sigma_cm must be positive, got {self.sigma_cm}")


def _displace(cloud: PointCloud, spec: PerturbSpec) -> PointCloud:
    n = len(cloud)
    m = math.ceil(spec.fraction * n)
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(n, size=m, replace=False)
    points = cloud.points.copy()
    points[chosen] += rng.normal(0.0, spec.sigma_cm / 100.0, size=(m, 3))
    return PointCloud(points, colors=cloud.colors)


def apply_perturbation(cloud: PointCloud, spec: PerturbSpec) -> PointCloud:
    return _displace(cloud, spec)


def add_gaussian_noise(cloud: PointCloud, fraction: float, sigma_cm: float,
                       seed: int = 0) -> PointCloud:
    return _displace(cloud, PerturbSpec("noise", fraction, sigma_cm, seed))


def inject_outliers(cloud: PointCloud, fraction: float, sigma_cm: float,
                    seed: int = 0) -> PointCloud:
    return _displace(cloud, PerturbSpec("outlier", fraction, sigma_cm, seed))


@dataclass(frozen=True)
class SceneSpec:
    """A simple planar scene: an enclosed box room, a single sheet, or
    a corridor (box without the two end walls)."""

    kind: str
    extents: tuple[float, float, float]
    density: float  # points per square meter
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if len(self.extents) != 3 or any(e <= 0 for e in self.extents):
            raise ValueError("extents must be three positive lengths")
        if self.density <= 0.0:
            raise ValueError(f"density must be positive, got {self.density}")


def _faces(spec: SceneSpec):
    """(constant axis, value, free axis a, length a, free axis b, length b)"""
    lx, ly, lz = spec.extents
    floor = (2, 0.0, 0, lx, 1, ly)
    ceiling = (2, lz, 0, lx, 1, ly)
    wall_y0 = (1, 0.0, 0, lx, 2, lz)
    wall_y1 = (1, ly, 0, lx, 2, lz)
    wall_x0 = (0, 0.0, 1, ly, 2, lz)
    wall_x1 = (0, lx, 1, ly, 2, lz)
    if spec.kind == "sheet":
        return [floor]
    if spec.kind == "corridor":
        return [floor, ceiling, wall_y0, wall_y1]
    return [floor, ceiling, wall_y0, wall_y1, wall_x0, wall_x1]


def synth_scene(spec: SceneSpec) -> PointCloud:
    """Sample the scene's faces uniformly at the requested density.

    The total count is ceil(area * density), split across faces by
    largest remainder so every face gets its exact share.
    """
    faces = _faces(spec)
    areas = np.array([f[3] * f[5] for f in faces])
    total_area = areas.sum()
    total = math.ceil(total_area * spec.density)

    quota = total * areas / total_area
    counts = np.floor(quota).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1

    rng = np.random.default_rng(spec.seed)
    points = np.empty((total, 3))
    row = 0
    for (axis, value, fa, la, fb, lb), n in zip(faces, counts):
        u = rng.random((n, 2))
        block = points[row:row + n]
        block[:, axis] = value
        block[:, fa] = u[:, 0] * la
        block[:, fb] = u[:, 1] * lb
        row += n
    return PointCloud(points)
