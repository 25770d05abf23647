"""Rigid transforms, symmetric 3x3 matrix algebra, and the closed-form
transport distance between trivariate Gaussians.

All lengths are meters. Covariances are regularized with a small isotropic
floor before any distance or entropy computation so that rank-deficient
fits (planar or linear point neighborhoods) stay positive definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "COV_EPSILON",
    "Gaussian3",
    "RigidTransform",
    "apply_transform",
    "gaussian_entropy",
    "gaussian_entropy_batch",
    "regularize_covariance",
    "so3_exp",
    "spd_sqrt",
    "wasserstein_gaussian",
    "wasserstein_gaussian_batch",
]

# m^2, added to every fitted covariance before use
COV_EPSILON = 1e-9

_ROTATION_TOL = 1e-9
_EIGENVALUE_FLOOR = -1e-9

_LOG_2PI_E = math.log(2.0 * math.pi * math.e)


def _as_vector3(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(3).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


def _as_matrix3(value, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=np.float64).reshape(3, 3).copy()
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    return m


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector (radians)."""
    omega = _as_vector3(omega, "omega")
    angle = float(np.linalg.norm(omega))
    k = np.array(
        [
            [0.0, -omega[2], omega[1]],
            [omega[2], 0.0, -omega[0]],
            [-omega[1], omega[0], 0.0],
        ]
    )
    if angle < 1e-12:
        # second-order Taylor keeps orthonormality within 1e-24 here
        return np.eye(3) + k + 0.5 * (k @ k)
    return (
        np.eye(3)
        + (math.sin(angle) / angle) * k
        + ((1.0 - math.cos(angle)) / angle**2) * (k @ k)
    )


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: ``x -> rotation @ x + translation``.

    The rotation must be orthonormal with determinant +1 within 1e-9;
    construction fails otherwise.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = _as_matrix3(self.rotation, "rotation")
        t = _as_vector3(self.translation, "translation")
        ortho_err = float(np.abs(r.T @ r - np.eye(3)).max())
        if ortho_err > _ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (max error {ortho_err:.3e})")
        det_err = abs(float(np.linalg.det(r)) - 1.0)
        if det_err > _ROTATION_TOL:
            raise ValueError(f"rotation determinant differs from +1 by {det_err:.3e}")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(
        cls, axis: np.ndarray, angle_rad: float, translation: np.ndarray | None = None
    ) -> "RigidTransform":
        axis = _as_vector3(axis, "axis")
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            raise ValueError("axis must be nonzero")
        t = np.zeros(3) if translation is None else translation
        return cls(so3_exp(axis / norm * float(angle_rad)), t)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        """Build from a 4x4 homogeneous matrix or a flat row-major 16-vector."""
        m = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        bottom = m[3]
        if not np.allclose(bottom, [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError(f"last row must be [0 0 0 1], got {bottom}")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to an (N, 3) array (or a single 3-vector)."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = pts.reshape(-1, 3)
        out = pts @ self.rotation.T + self.translation
        return out[0] if single else out

    def rotation_angle(self) -> float:
        """Magnitude of the rotation in radians."""
        c = (float(np.trace(self.rotation)) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))


def apply_transform(transform: RigidTransform, cloud):
    """Rigidly transform a cloud, preserving point order and colors."""
    from .cloud import PointCloud

    if len(cloud) == 0:
        raise ValueError("cannot transform an empty cloud")
    return PointCloud(transform.apply(cloud.points), colors=cloud.colors)


@dataclass(frozen=True)
class Gaussian3:
    """Trivariate Gaussian with mean (m) and covariance (m^2)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mu = _as_vector3(self.mean, "mean")
        cov = _as_matrix3(self.covariance, "covariance")
        asym = float(np.abs(cov - cov.T).max())
        if asym > 1e-9:
            raise ValueError(f"covariance is not symmetric (max asymmetry {asym:.3e})")
        mu.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)


def regularize_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and add the isotropic floor ``COV_EPSILON * I``."""
    c = np.asarray(cov, dtype=np.float64)
    c = 0.5 * (c + np.swapaxes(c, -1, -2))
    return c + COV_EPSILON * np.eye(3)


def _check_spd(eigenvalues: np.ndarray) -> None:
    low = float(eigenvalues.min())
    if low < _EIGENVALUE_FLOOR:
        raise ValueError(
            f"matrix has eigenvalue {low:.6e} below the tolerated floor "
            f"{_EIGENVALUE_FLOOR:.0e}; covariance is corrupted upstream"
        )


def spd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD (or nearly-SPD) 3x3 matrix.

    Eigenvalues in [-1e-9, 0) are treated as numerical noise and clamped
    to zero; anything lower raises ValueError.
    """
    m = _as_matrix3(matrix, "matrix")
    if float(np.abs(m - m.T).max()) > 1e-9:
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(m)
    _check_spd(w)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _sqrt_psd_batch(covs: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(covs)
    _check_spd(w)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def wasserstein_gaussian_batch(
    means_a: np.ndarray,
    covs_a: np.ndarray,
    means_b: np.ndarray,
    covs_b: np.ndarray,
) -> np.ndarray:
    """Pairwise closed-form 2-Wasserstein distances between Gaussian rows.

    Computes sqrt(||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2))
    per row, clamping the radicand at zero. Rows whose covariances are
    bitwise identical take a fast path where the trace term is exactly
    zero, so equal-covariance pairs return exactly the mean distance.
    """
    ma = np.asarray(means_a, dtype=np.float64).reshape(-1, 3)
    mb = np.asarray(means_b, dtype=np.float64).reshape(-1, 3)
    ca = np.asarray(covs_a, dtype=np.float64).reshape(-1, 3, 3)
    cb = np.asarray(covs_b, dtype=np.float64).reshape(-1, 3, 3)
    if not (len(ma) == len(mb) == len(ca) == len(cb)):
        raise ValueError("batch lengths differ")

    mean_sq = np.einsum("ij,ij->i", ma - mb, ma - mb)
    trace_term = np.zeros(len(ma))
    differ = ~np.all(ca == cb, axis=(1, 2))
    if np.any(differ):
        sb = _sqrt_psd_batch(cb[differ])
        inner = sb @ ca[differ] @ sb
        cross = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
        trace_term[differ] = (
            np.trace(ca[differ], axis1=1, axis2=2)
            + np.trace(cb[differ], axis1=1, axis2=2)
            - 2.0 * np.sqrt(cross).sum(axis=1)
        )
    return np.sqrt(np.clip(mean_sq + trace_term, 0.0, None))


def wasserstein_gaussian(a: Gaussian3, b: Gaussian3) -> float:
    """Closed-form 2-Wasserstein distance between two Gaussians, in meters."""
    return float(
        wasserstein_gaussian_batch(
            a.mean[None], a.covariance[None], b.mean[None], b.covariance[None]
        )[0]
    )


def _det3(covs: np.ndarray) -> np.ndarray:
    c = covs
    return (
        c[..., 0, 0] * (c[..., 1, 1] * c[..., 2, 2] - c[..., 1, 2] * c[..., 2, 1])
        - c[..., 0, 1] * (c[..., 1, 0] * c[..., 2, 2] - c[..., 1, 2] * c[..., 2, 0])
        + c[..., 0, 2] * (c[..., 1, 0] * c[..., 2, 1] - c[..., 1, 1] * c[..., 2, 0])
    )


def gaussian_entropy_batch(covs: np.ndarray) -> np.ndarray:
    """Differential entropy 0.5*ln((2 pi e)^3 det S) per covariance row."""
    det = _det3(np.asarray(covs, dtype=np.float64))
    # regularized SPD inputs keep det > 0; the floor only guards roundoff
    det = np.maximum(det, 1e-300)
    return 0.5 * (3.0 * _LOG_2PI_E + np.log(det))


def gaussian_entropy(cov: np.ndarray) -> float:
    return float(gaussian_entropy_batch(np.asarray(cov)[None])[0])
