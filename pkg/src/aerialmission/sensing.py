"""Synthetic sensors: pinhole camera, parametric detector, thermal imager, 1-D rangers.

Camera frame: +Z along the optical axis, +X right, +Y down (pixel v grows
downward).  Gimbal pitch is positive when the camera tilts down; the
camera yaw is the UAV yaw plus the ``gimbal_offset_yaw`` fault.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .world import Pose, WorldState, surface_height

BEHIND = None


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


THERMAL_INTRINSICS = CameraIntrinsics(150.0, 150.0, 80.0, 60.0, 160, 120)


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float


@dataclass
class CameraPose:
    position: np.ndarray
    yaw: float
    pitch: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        return camera_rotation(self.yaw, self.pitch)


def camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """Columns are the camera X (right), Y (down), Z (optical) axes in world coordinates."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    f = np.array([cy, sy, 0.0])
    d = np.array([0.0, 0.0, -1.0])
    right = np.array([sy, -cy, 0.0])
    z_axis = cp * f + sp * d
    y_axis = -sp * f + cp * d
    return np.column_stack([right, y_axis, z_axis])


def camera_pose(uav_pose: Pose, pitch: float, offset=(0.0, 0.0, 0.0), true_frame: bool = True) -> CameraPose:
    """Camera pose from the UAV pose; ``true_frame=False`` ignores the gimbal yaw fault."""
    yaw = uav_pose.yaw + (uav_pose.gimbal_offset_yaw if true_frame else 0.0)
    c, s = math.cos(uav_pose.yaw), math.sin(uav_pose.yaw)
    ox, oy, oz = offset
    pos = uav_pose.position + np.array([c * ox - s * oy, s * ox + c * oy, oz])
    return CameraPose(pos, yaw, pitch)


def to_camera(cam: CameraPose, world_point) -> np.ndarray:
    return cam.rotation.T @ (np.asarray(world_point, dtype=float) - cam.position)


def project(intrinsics: CameraIntrinsics, cam: CameraPose, world_point):
    """Pinhole projection; returns ``BEHIND`` (None) when the point is not in front."""
    X, Y, Z = to_camera(cam, world_point)
    if Z <= 0.0:
        return BEHIND
    return PixelPoint(intrinsics.fx * X / Z + intrinsics.cx, intrinsics.fy * Y / Z + intrinsics.cy)


# -- detector --------------------------------------------------------------

DETECTION_CLASSES = ("balloon", "ball", "block_red", "block_green", "block_blue", "block_orange", "structure", "fire")


@dataclass
class Detection:
    cls: str
    bbox: tuple
    centroid: PixelPoint
    confidence: float = 1.0
    target_id: str | None = None  # ground truth only, never read by mission logic

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if not (u0 < u1 and v0 < v1):
            raise ValueError("degenerate bbox")

    @property
    def side(self) -> float:
        return min(self.bbox[2] - self.bbox[0], self.bbox[3] - self.bbox[1])

    @property
    def area(self) -> float:
        return (self.bbox[2] - self.bbox[0]) * (self.bbox[3] - self.bbox[1])


@dataclass
class DetectorChannel:
    fn_rate: float = 0.0
    fp_rate: float = 0.0  # mean false positives per frame (Poisson)
    centroid_sigma: float = 0.0
    balloon_min_side: float = 90.0  # about 4 m for a 0.6 m balloon at f=600
    ball_min_side: float = 6.0  # about 15 m for the 0.15 m ball
    bottom_mask_fraction: float = 0.40
    classes: tuple = ("balloon",)
    max_range: float = 60.0


def target_class(spec) -> str:
    if spec.kind == "block":
        return f"block_{spec.color}"
    return spec.kind


def detect(intrinsics: CameraIntrinsics, cam: CameraPose, world: WorldState, channel: DetectorChannel, rng=None) -> list:
    """Parametric stand-in for a learned detector."""
    out = []
    W, H = intrinsics.width, intrinsics.height
    for ts in world.targets:
        spec = ts.spec
        cls = target_class(spec)
        if cls not in channel.classes or not ts.alive or ts.attached:
            continue
        pc = to_camera(cam, ts.position)
        Z = pc[2]
        if Z <= 0.05 or Z > channel.max_range:
            continue
        u = intrinsics.fx * pc[0] / Z + intrinsics.cx
        v = intrinsics.fy * pc[1] / Z + intrinsics.cy
        if not (0.0 <= u < W and 0.0 <= v < H):
            continue
        if world.building is not None and world.building.occluded(cam.position, ts.position):
            continue
        if channel.fn_rate > 0.0 and rng.random() < channel.fn_rate:
            continue
        if channel.centroid_sigma > 0.0:
            u += rng.normal(0.0, channel.centroid_sigma)
            v += rng.normal(0.0, channel.centroid_sigma)
        if spec.kind == "block":
            r = 0.5 * max(spec.size[0], spec.size[1])
        else:
            r = spec.radius
        hu = max(intrinsics.fx * r / Z, 0.5)
        hv = max(intrinsics.fy * r / Z, 0.5)
        out.append(Detection(cls, (u - hu, v - hv, u + hu, v + hv), PixelPoint(u, v), 1.0, spec.id))
    if channel.fp_rate > 0.0:
        for _ in range(int(rng.poisson(channel.fp_rate))):
            cls = channel.classes[int(rng.integers(len(channel.classes)))]
            u, v = rng.uniform(0, W), rng.uniform(0, H)
            h = rng.uniform(5.0, 120.0)
            out.append(Detection(cls, (u - h, v - h, u + h, v + h), PixelPoint(u, v), float(rng.uniform(0.3, 1.0)), None))
    keep = []
    for d in out:
        if d.cls == "ball":
            if d.centroid.v > (1.0 - channel.bottom_mask_fraction) * H or d.side < channel.ball_min_side:
                continue
        if d.cls == "balloon" and d.side < channel.balloon_min_side:
            continue
        keep.append(d)
    return keep


def largest(detections, cls: str):
    best = None
    for d in detections:
        if d.cls == cls and (best is None or d.area > best.area):
            best = d
    return best


# -- thermal ----------------------------------------------------------------


@dataclass
class ThermalConfig:
    ambient: int = 3000
    fire: int = 12000
    warm: int = 5000
    noise_sigma: float = 0.0


@dataclass
class ThermalImage:
    width: int
    height: int
    values: np.ndarray  # uint16, shape (height, width)

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError("grid does not match dimensions")


def render_thermal(intrinsics: CameraIntrinsics, cam: CameraPose, world: WorldState, cfg: ThermalConfig | None = None, rng=None) -> ThermalImage:
    cfg = cfg or ThermalConfig()
    W, H = intrinsics.width, intrinsics.height
    img = np.full((H, W), float(cfg.ambient))
    for ts in world.targets:
        spec = ts.spec
        if spec.kind != "fire" or not (spec.active or spec.hot_inactive):
            continue
        hot = ts.position + np.asarray(spec.hot_offset, dtype=float)
        pc = to_camera(cam, hot)
        if pc[2] <= 0.05:
            continue
        if world.building is not None and world.building.occluded(cam.position, hot):
            continue
        u = intrinsics.fx * pc[0] / pc[2] + intrinsics.cx
        v = intrinsics.fy * pc[1] / pc[2] + intrinsics.cy
        r = intrinsics.fx * spec.fire_radius / pc[2]
        u0, u1 = max(int(math.floor(u - r)), 0), min(int(math.ceil(u + r)) + 1, W)
        v0, v1 = max(int(math.floor(v - r)), 0), min(int(math.ceil(v + r)) + 1, H)
        if u0 >= u1 or v0 >= v1:
            continue
        vv, uu = np.mgrid[v0:v1, u0:u1]
        disc = (uu + 0.5 - u) ** 2 + (vv + 0.5 - v) ** 2 <= r * r
        level = cfg.fire if spec.active else cfg.warm
        patch = img[v0:v1, u0:u1]
        patch[disc] = np.maximum(patch[disc], level)
    if cfg.noise_sigma > 0.0:
        img += rng.normal(0.0, cfg.noise_sigma, img.shape)
    return ThermalImage(W, H, np.clip(np.rint(img), 0, 65535).astype(np.uint16))


def thermal_noise_bound(cfg: ThermalConfig) -> float:
    """Largest pixel noise sigma for which a mid-level threshold separates fire from ambient at 6 sigma."""
    return (cfg.fire - cfg.ambient) / 12.0


def threshold_fires(img: ThermalImage, threshold: float, min_area: int = 30) -> list:
    """Binary threshold, connected components, small blobs dropped; largest first."""
    mask = img.values >= threshold
    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    out = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(np.count_nonzero(labels[sl] == k))
        if area < min_area:
            continue
        vv, uu = np.nonzero(labels[sl] == k)
        cu = float(uu.mean()) + sl[1].start + 0.5
        cv = float(vv.mean()) + sl[0].start + 0.5
        bbox = (float(sl[1].start), float(sl[0].start), float(sl[1].stop), float(sl[0].stop))
        out.append((area, Detection("fire", bbox, PixelPoint(cu, cv))))
    out.sort(key=lambda a: -a[0])
    return [d for _, d in out]


# -- range sensors ------------------------------------------------------------


@dataclass(frozen=True)
class RangeReading:
    distance: float | None  # None is NO_RETURN
    max_range: float

    @property
    def no_return(self) -> bool:
        return self.distance is None

    def filtered_value(self) -> float:
        return self.max_range if self.distance is None else self.distance


@dataclass
class RangeConfig:
    forward_max: float = 60.0
    sigma: float = 0.02
    p_fault: float = 0.0
    down_max: float = 60.0
    short_max: float = 3.0


def range_forward(uav_pose: Pose, world: WorldState, max_range: float = 60.0, cfg: RangeConfig | None = None, rng=None) -> RangeReading:
    cfg = cfg or RangeConfig(forward_max=max_range, sigma=0.0)
    if cfg.p_fault > 0.0 and rng.random() < cfg.p_fault:
        if rng.random() < 0.5:
            return RangeReading(None, max_range)
        return RangeReading(float(rng.uniform(0.2, max_range)), max_range)
    if world.building is None:
        return RangeReading(None, max_range)
    hit = world.building.first_hit(uav_pose.position, uav_pose.forward, max_range)
    if hit is None or hit[1] == "window":
        return RangeReading(None, max_range)
    d = hit[0]
    if cfg.sigma > 0.0:
        d += rng.normal(0.0, cfg.sigma)
    return RangeReading(min(max(d, 1e-3), max_range), max_range)


def range_down(uav_pose: Pose, world: WorldState, max_range: float = 60.0) -> RangeReading:
    p = uav_pose.position
    d = p[2] - surface_height(world, p[0], p[1])
    if d > max_range:
        return RangeReading(None, max_range)
    return RangeReading(max(d, 1e-3), max_range)


def range_short(uav_pose: Pose, world: WorldState, max_range: float = 3.0) -> RangeReading:
    """Manipulator-base ranger: distance from the pad to whatever is beneath it."""
    cfg = world.config
    p = uav_pose.position
    pad_z = p[2] - cfg.manipulator_length
    if any(ts.attached for ts in world.targets):
        return RangeReading(cfg.short_sensor_recess, max_range)
    d = pad_z - surface_height(world, p[0], p[1])
    if d > max_range:
        return RangeReading(None, max_range)
    return RangeReading(max(d, 1e-3), max_range)
