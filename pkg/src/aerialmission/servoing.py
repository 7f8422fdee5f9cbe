"""Image-based visual servoing with full and reduced interaction matrices.

Features are normalized image points ``x = (u - cx)/fx``, ``y = (v - cy)/fy``
with a depth estimate ``Z``.  The reduced model keeps the camera twist
components ``(Xdot, Ydot, Zdot, psidot)``; ``psidot`` is the rotation rate
about the optical axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateFeatures(ValueError):
    """Stacked interaction matrix is rank deficient."""


@dataclass(frozen=True)
class NormalizedFeature:
    x: float
    y: float
    Z: float

    @classmethod
    def from_pixel(cls, u, v, Z, intrinsics):
        return cls((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, Z)


def _check_depth(f: NormalizedFeature):
    if not f.Z > 0.0:
        raise ValueError(f"feature depth must be positive, got {f.Z}")


def feature_error(s, s_star) -> np.ndarray:
    """Concatenated ``(x - x*, y - y*)`` pairs."""
    if len(s) != len(s_star):
        raise ValueError("feature and goal lists differ in length")
    e = np.empty(2 * len(s))
    for i, (f, g) in enumerate(zip(s, s_star)):
        e[2 * i] = f.x - g[0]
        e[2 * i + 1] = f.y - g[1]
    return e


def interaction_row_full(f: NormalizedFeature) -> np.ndarray:
    _check_depth(f)
    x, y, iz = f.x, f.y, 1.0 / f.Z
    return np.array(
        [
            [-iz, 0.0, x * iz, x * y, -(1.0 + x * x), y],
            [0.0, -iz, y * iz, 1.0 + y * y, -x * y, -x],
        ]
    )


def interaction_row_reduced(f: NormalizedFeature) -> np.ndarray:
    _check_depth(f)
    x, y, iz = f.x, f.y, 1.0 / f.Z
    return np.array([[-iz, 0.0, x * iz, y], [0.0, -iz, y * iz, -x]])


def stack_reduced(features) -> np.ndarray:
    return np.vstack([interaction_row_reduced(f) for f in features])


@dataclass
class IbvsParams:
    gain: float = 0.8
    damping: float = 1e-9
    min_singular: float = 1e-6
    yaw_weight: float = 1.0
    tol_px: float = 8.0


def ibvs_velocity(features, goals, gain: float = 0.8, damping: float = 1e-9, min_singular: float = 1e-6, yaw_weight: float = 1.0) -> np.ndarray:
    """Camera twist ``-gain * pinv(L) e`` from the stacked reduced interaction matrix.

    The pseudo-inverse is applied through the damped normal equations
    ``(L^T L + damping I) v = L^T e``.  Raises :class:`DegenerateFeatures`
    when the smallest singular value of ``L`` is below ``min_singular``.
    """
    if len(features) < 2:
        raise ValueError("at least two feature points are required")
    if gain <= 0:
        raise ValueError("gain must be positive")
    L = stack_reduced(features)
    e = feature_error(features, goals)
    LtL = L.T @ L
    if np.sqrt(max(np.linalg.eigvalsh(LtL)[0], 0.0)) < min_singular:
        raise DegenerateFeatures("interaction matrix rank < 4")
    A = LtL + damping * np.eye(4)
    rhs = -gain * (L.T @ e)
    v = np.linalg.solve(A, rhs)
    # one refinement pass removes the O(damping) bias of the regularized solve
    v += np.linalg.solve(A, rhs - LtL @ v)
    v[3] *= yaw_weight
    return v


def servo_converged(e, tol_px: float, intrinsics) -> bool:
    """Every per-point pixel-equivalent error strictly below ``tol_px``."""
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        return True
    ex = np.abs(e[0::2]) * intrinsics.fx
    ey = np.abs(e[1::2]) * intrinsics.fy
    return bool(max(ex.max(), ey.max()) < tol_px)


def pixel_rms(e, intrinsics) -> float:
    e = np.asarray(e, dtype=float)
    sq = (e[0::2] * intrinsics.fx) ** 2 + (e[1::2] * intrinsics.fy) ** 2
    return float(np.sqrt(np.mean(sq)))


def twist_to_world(twist, yaw: float, pitch: float) -> tuple:
    """Map a reduced camera twist to a world velocity and UAV yaw rate.

    The camera rotation about its optical axis maps onto UAV yaw for a
    downward-looking camera (pitch 90 deg): yaw rate = -psidot there.
    """
    from .sensing import camera_rotation

    R = camera_rotation(yaw, pitch)
    vel = R @ np.asarray(twist[:3], dtype=float)
    yaw_rate = -float(twist[3]) * np.sin(pitch)
    return vel, yaw_rate
