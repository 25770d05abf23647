"""Point-to-plane ICP alignment and threshold-filtered correspondences.

The solver is damped Gauss-Newton on the small-angle parameterization:
each iteration re-associates nearest neighbors, solves the 6x6 normal
system accumulated in fixed order, and left-composes the Rodrigues
exponential of the increment. Steps that would increase the objective
on the current association are halved until they do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, so3_exp
from .spatial import SpatialIndex, _points_of, estimate_normals

__all__ = [
    "CorrespondenceSet",
    "DegenerateGeometryError",
    "IcpError",
    "IcpParams",
    "IcpResult",
    "build_correspondences",
    "icp_point_to_plane",
]

_MIN_CLOUD = 100
_MIN_CORRESPONDENCES = 6
_MAX_CONDITION = 1e12
_MAX_HALVINGS = 9


class IcpError(RuntimeError):
    """Alignment failed; the message names the failing iteration."""


class DegenerateGeometryError(IcpError):
    """The normal system is numerically singular (under-constrained scene)."""


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    eps_translation: float = 1e-4  # m
    eps_rotation: float = 1e-4  # rad
    max_correspondence_distance: float = 1.0  # m
    normal_k: int = 20

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("eps_translation", "eps_rotation", "max_correspondence_distance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.normal_k < 3:
            raise ValueError("normal_k must be >= 3")


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    iterations: int
    residual: float  # m, mean |n . (T p - q)| at the final pose
    converged: bool
    residual_history: tuple[float, ...]  # RMS residual per accepted iteration


@dataclass(frozen=True)
class CorrespondenceSet:
    """Nearest-neighbor pairs anchored on ground-truth points, gated by
    a distance threshold; every stored distance is strictly below it."""

    gt_ids: np.ndarray
    est_ids: np.ndarray
    distances: np.ndarray  # m
    n_gt: int
    n_est: int

    def __len__(self) -> int:
        return len(self.distances)


def build_correspondences(gt, est, tau: float, workers: int = 1,
                          est_index: SpatialIndex | None = None) -> CorrespondenceSet:
    """For each ground-truth point, keep its est nearest neighbor iff the
    distance is < tau. The est cloud must already be aligned."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    gt_pts = _points_of(gt)
    index = est_index if est_index is not None else SpatialIndex(est)
    dist, nn = index.query(gt_pts, workers=workers)
    mask = dist < tau
    return CorrespondenceSet(
        gt_ids=np.nonzero(mask)[0].astype(np.int64),
        est_ids=nn[mask].astype(np.int64),
        distances=dist[mask],
        n_gt=len(gt_pts),
        n_est=len(index),
    )


def _association(gt_index: SpatialIndex, normals, valid, points, max_dist,
                 workers, iteration_label):
    dist, nn = gt_index.query(points, workers=workers)
    mask = (dist < max_dist) & valid[nn]
    m = int(mask.sum())
    if m < _MIN_CORRESPONDENCES:
        raise IcpError(
            f"{iteration_label}: only {m} valid correspondences within "
            f"{max_dist} m (need >= {_MIN_CORRESPONDENCES})"
        )
    p = points[mask]
    q = gt_index.points[nn[mask]]
    n = normals[nn[mask]]
    r = np.einsum("ij,ij->i", p - q, n)
    return p, q, n, r


def icp_point_to_plane(est, gt, init: RigidTransform | None = None,
                       params: IcpParams | None = None,
                       workers: int = 1) -> IcpResult:
    """Align est onto gt by minimizing squared point-to-plane residuals.

    Surface normals are estimated on gt once with k-NN PCA; points whose
    nearest gt normal is invalid (rank-deficient neighborhood) are
    excluded from the residuals. Raises IcpError when an iteration has
    fewer than 6 usable correspondences and DegenerateGeometryError when
    the 6x6 system's condition number exceeds 1e12.
    """
    params = params if params is not None else IcpParams()
    est_pts = _points_of(est)
    gt_pts = _points_of(gt)
    if len(est_pts) < _MIN_CLOUD or len(gt_pts) < _MIN_CLOUD:
        raise ValueError(
            f"both clouds need >= {_MIN_CLOUD} points, "
            f"got est={len(est_pts)}, gt={len(gt_pts)}"
        )

    normal_cloud = estimate_normals(gt_pts, k=params.normal_k, workers=workers)
    gt_index = SpatialIndex(gt_pts)
    transform = init if init is not None else RigidTransform.identity()

    history: list[float] = []
    converged = False
    iterations = 0
    for it in range(1, params.max_iterations + 1):
        iterations = it
        moved = transform.apply(est_pts)
        p, q, n, r = _association(
            gt_index, normal_cloud.normals, normal_cloud.valid, moved,
            params.max_correspondence_distance, workers, f"iteration {it}",
        )
        m = len(r)
        obj = float(r @ r) / m
        history.append(obj**0.5)

        a = np.hstack([np.cross(p, n), n])
        h = a.T @ a
        g = a.T @ r
        cond = float(np.linalg.cond(h))
        if not np.isfinite(cond) or cond > _MAX_CONDITION:
            raise DegenerateGeometryError(
                f"iteration {it}: normal-system condition {cond:.3e} exceeds "
                f"{_MAX_CONDITION:.0e}; geometry does not constrain all six axes"
            )
        step = np.linalg.solve(h, -g)

        delta = None
        scale = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = RigidTransform(so3_exp(scale * step[:3]), scale * step[3:])
            r_cand = np.einsum("ij,ij->i", cand.apply(p) - q, n)
            if float(r_cand @ r_cand) / m <= obj + 1e-15:
                delta = cand
                break
            scale *= 0.5
        if delta is None:
            # no descent direction left on this association: local optimum
            converged = True
            break

        transform = delta.compose(transform)
        if (
            float(np.linalg.norm(scale * step[:3])) < params.eps_rotation
            and float(np.linalg.norm(scale * step[3:])) < params.eps_translation
        ):
            converged = True
            break

    # final residual at the accepted pose, on a fresh association
    moved = transform.apply(est_pts)
    _, _, _, r = _association(
        gt_index, normal_cloud.normals, normal_cloud.valid, moved,
        params.max_correspondence_distance, workers, "final evaluation",
    )
    return IcpResult(
        transform=transform,
        iterations=iterations,
        residual=float(np.abs(r).mean()),
        converged=converged,
        residual_history=tuple(history),
    )
