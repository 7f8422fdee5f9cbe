"""Line-of-sight guidance and the local-interaction control laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensing import CameraIntrinsics, PixelPoint, camera_rotation
from .world import Pose, wrap_angle

UP = np.array([0.0, 0.0, 1.0])


def los_vector(intrinsics: CameraIntrinsics, target: PixelPoint) -> np.ndarray:
    """Camera-frame ray through the target centroid, third component exactly 1."""
    return np.array([(target.u - intrinsics.cx) / intrinsics.fx, (target.v - intrinsics.cy) / intrinsics.fy, 1.0])


@dataclass
class PursuitParams:
    pursuit_speed: float = 1.5
    k_u: float = 3.0
    k_v: float = 3.0
    upward_bias: float = math.radians(5.0)
    los_timeout: float = 5.0
    detection_timeout: float = 2.0
    convergence_box: float = 12.0  # pixels
    goal_fraction: float = 0.15  # centroid this fraction of image height above centre
    max_speed: float = 2.0
    k_ball: float = 2.0

    def __post_init__(self):
        if min(self.pursuit_speed, self.los_timeout, self.detection_timeout, self.max_speed) <= 0:
            raise ValueError("speeds and timeouts must be positive")

    def r_y_goal(self, intrinsics: CameraIntrinsics) -> float:
        return -self.goal_fraction * intrinsics.height / intrinsics.fy


def camera_to_world(vec_cam, yaw: float, pitch: float = 0.0) -> np.ndarray:
    return camera_rotation(yaw, pitch) @ np.asarray(vec_cam, dtype=float)


def saturate(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > limit:
        return v * (limit / n)
    return v


def lateral_vertical(yaw: float, lateral: float, vertical: float) -> np.ndarray:
    """World velocity from a body-right component and a world-up component (no forward part)."""
    return np.array([math.sin(yaw) * lateral, -math.cos(yaw) * lateral, vertical])


def position_target_in_image(los, params: PursuitParams, intrinsics: CameraIntrinsics, yaw: float = 0.0):
    """Centre the target laterally and hold it ``goal_fraction`` above image centre.

    Returns ``(world velocity, converged)``.  Moving the camera right shifts
    the target left in the image, so the lateral command has the sign of
    ``r_x``; vertical likewise follows ``r_y - r_y_goal`` (camera Y is down).
    ``yaw`` is the frame the controller believes the camera has.
    """
    ey = los[1] - params.r_y_goal(intrinsics)
    lateral = params.k_u * los[0]
    vertical = -params.k_v * ey
    cmd = saturate(lateral_vertical(yaw, lateral, vertical), params.max_speed)
    converged = abs(los[0] * intrinsics.fx) < params.convergence_box and abs(ey * intrinsics.fy) < params.convergence_box
    return cmd, converged


def pursue_along_los(los, params: PursuitParams, yaw: float = 0.0, pitch: float = 0.0) -> np.ndarray:
    """Constant-speed motion along the LOS, tilted up by ``upward_bias``."""
    d = camera_to_world(los, yaw, pitch)
    d /= np.linalg.norm(d)
    horiz = math.hypot(d[0], d[1])
    elev = math.atan2(d[2], horiz) + params.upward_bias
    if horiz > 1e-12:
        hx, hy = d[0] / horiz, d[1] / horiz
    else:
        hx, hy = math.cos(yaw), math.sin(yaw)
    return params.pursuit_speed * np.array([math.cos(elev) * hx, math.cos(elev) * hy, math.sin(elev)])


def ball_refine(los, params: PursuitParams, yaw: float = 0.0) -> np.ndarray:
    """Zero forward motion; lateral/vertical velocity proportional to the LOS offsets."""
    cmd = lateral_vertical(yaw, params.k_ball * los[0], -params.k_ball * los[1])
    return saturate(cmd, params.max_speed)


@dataclass
class WaypointCommand:
    velocity: np.ndarray
    yaw_rate: float
    index: int
    done: bool


def follow_waypoints(
    current: Pose,
    plan,
    index: int,
    cruise_speed: float = 2.0,
    capture_radius: float = 1.0,
    heading: str | float = "path",
    k_p: float = 1.0,
    k_yaw: float = 2.0,
    yaw_rate_max: float = math.radians(90.0),
    cyclic: bool = False,
) -> WaypointCommand:
    """Saturated proportional velocity toward the active waypoint.

    ``heading`` is ``"path"`` (face the active waypoint), ``"hold"`` (no
    yaw command) or a fixed yaw angle in radians.  Past the final waypoint
    the command is zero and ``done`` is set, unless ``cyclic``.
    """
    if len(plan) == 0:
        raise ValueError("empty plan")
    n = len(plan)
    if index >= n and not cyclic:
        return WaypointCommand(np.zeros(3), 0.0, index, True)
    index %= n
    p = current.position
    target = np.asarray(plan[index], dtype=float)
    err = target - p
    if float(np.linalg.norm(err)) < capture_radius:
        index += 1
        if index >= n:
            if not cyclic:
                return WaypointCommand(np.zeros(3), 0.0, index, True)
            index = 0
        target = np.asarray(plan[index], dtype=float)
        err = target - p
    vel = saturate(k_p * err, cruise_speed)
    yaw_rate = 0.0
    if heading == "path":
        if math.hypot(err[0], err[1]) > 0.2:
            want = math.atan2(err[1], err[0])
            yaw_rate = k_yaw * wrap_angle(want - current.yaw)
    elif heading != "hold":
        yaw_rate = k_yaw * wrap_angle(float(heading) - current.yaw)
    yaw_rate = max(-yaw_rate_max, min(yaw_rate_max, yaw_rate))
    return WaypointCommand(vel, yaw_rate, index, False)
