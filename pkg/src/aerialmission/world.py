"""Kinematic world: UAV under velocity commands, moving targets, wind, GPS noise.

Frames: world x east, y north, z up.  Body +x is the heading direction
given by ``yaw`` (counter-clockwise from world x), body +y is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

BALLOON_DIAMETER = 0.6
BALLOON_POLE_HEIGHT = 2.5
BALL_DIAMETER = 0.15
BALL_SPEED = 8.0
STRUCTURE_HEIGHT = 1.7
FIRE_OPENING_DIAMETER = 0.12


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def wrap_angle(a: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass
class Pose:
    position: np.ndarray
    yaw: float = 0.0
    gimbal_offset_yaw: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.yaw = wrap_angle(self.yaw)

    @property
    def forward(self) -> np.ndarray:
        return vec3(math.cos(self.yaw), math.sin(self.yaw), 0.0)

    @property
    def left(self) -> np.ndarray:
        return vec3(-math.sin(self.yaw), math.cos(self.yaw), 0.0)


@dataclass
class UavState:
    pose: Pose
    velocity: np.ndarray = field(default_factory=vec3)
    commanded_velocity: np.ndarray = field(default_factory=vec3)
    yaw_rate: float = 0.0
    gimbal_pitch: float = 0.0


@dataclass
class Command:
    """Velocity command plus actuator flags.

    ``gimbal_pitch`` None keeps the current pitch; ``release`` opens the gripper.
    """

    velocity: np.ndarray = field(default_factory=vec3)
    yaw_rate: float = 0.0
    gimbal_pitch: float | None = None
    release: bool = False
    pump: bool = False


@dataclass
class TargetSpec:
    kind: str  # balloon | ball | block | structure | fire
    anchor: np.ndarray
    id: str = ""
    # balloon
    diameter: float = BALLOON_DIAMETER
    pole_height: float = BALLOON_POLE_HEIGHT
    sway_gain: float = 0.1  # m of sway per m/s of wind
    sway_period: float = 4.0
    tether_length: float = 1.0
    # ball: figure-8 full extents along x and y, anchor is the crossing point
    extents: tuple = (40.0, 20.0)
    speed: float = BALL_SPEED
    heading: float = 0.0
    # block
    color: str = "red"
    mass: float = 1.0
    size: tuple = (0.3, 0.2, 0.2)
    patch: tuple = (0.15, 0.1)
    # structure: top segment endpoints (one side of the W)
    segment: tuple = ()
    channel_width: float = 0.3
    height: float = STRUCTURE_HEIGHT
    # fire
    normal: tuple = (0.0, -1.0, 0.0)
    opening_diameter: float = FIRE_OPENING_DIAMETER
    fire_radius: float = 0.3
    hot_offset: tuple = (0.0, 0.0, 0.0)  # hot region centre relative to the opening
    active: bool = True
    hot_inactive: bool = False

    def __post_init__(self):
        if self.kind not in ("balloon", "ball", "block", "structure", "fire"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        self.anchor = np.asarray(self.anchor, dtype=float)
        if self.kind == "ball" and self.diameter == BALLOON_DIAMETER:
            self.diameter = BALL_DIAMETER
        for name in ("diameter", "pole_height", "speed", "mass", "height", "opening_diameter", "fire_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.extents) <= 0 or min(self.size) <= 0 or min(self.patch) <= 0:
            raise ValueError("dimensions must be positive")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter


@dataclass
class TargetState:
    spec: TargetSpec
    position: np.ndarray
    alive: bool = True
    phase: float = 0.0
    attached: bool = False
    weak_attach: bool = False
    contact_z: float = 0.0
    in_contact: bool = False


@dataclass
class Wall:
    """Vertical rectangular face from ``p0`` to ``p1`` (xy) with window apertures.

    Windows are ``(s0, s1, z0, z1)`` in wall coordinates: ``s`` along the
    wall from ``p0``, ``z`` height above ground.  Outward normal is the right
    side of ``p0 -> p1`` (walls listed counter-clockwise).
    """

    p0: tuple
    p1: tuple
    height: float
    windows: list = field(default_factory=list)

    def __post_init__(self):
        d = np.subtract(self.p1, self.p0).astype(float)
        self.length = float(np.hypot(*d))
        self.u = d / self.length
        self.n = np.array([self.u[1], -self.u[0]])

    def intersect(self, origin, direction):
        """Return ``(t, kind)`` of the ray hit, kind in {'solid', 'window'}, or None."""
        denom = direction[0] * self.n[0] + direction[1] * self.n[1]
        if abs(denom) < 1e-12:
            return None
        t = ((self.p0[0] - origin[0]) * self.n[0] + (self.p0[1] - origin[1]) * self.n[1]) / denom
        if t <= 1e-9:
            return None
        hx = origin[0] + t * direction[0]
        hy = origin[1] + t * direction[1]
        hz = origin[2] + t * direction[2]
        s = (hx - self.p0[0]) * self.u[0] + (hy - self.p0[1]) * self.u[1]
        if s < 0.0 or s > self.length or hz < 0.0 or hz > self.height:
            return None
        for s0, s1, z0, z1 in self.windows:
            if s0 <= s <= s1 and z0 <= hz <= z1:
                return t, "window"
        return t, "solid"


@dataclass
class Building:
    walls: list

    @classmethod
    def rectangle(cls, x0, y0, x1, y1, height, windows=None):
        """Axis-aligned box; ``windows[i]`` lists apertures of wall i (south, east, north, west)."""
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        windows = windows or [[], [], [], []]
        walls = [Wall(corners[i], corners[(i + 1) % 4], height, list(windows[i])) for i in range(4)]
        return cls(walls)

    def first_hit(self, origin, direction, max_t=math.inf):
        best = None
        for w in self.walls:
            hit = w.intersect(origin, direction)
            if hit is not None and hit[0] <= max_t and (best is None or hit[0] < best[0]):
                best = hit
        return best

    def occluded(self, a, b) -> bool:
        """True when a solid wall blocks the segment a->b (endpoints excluded)."""
        d = np.subtract(b, a)
        for w in self.walls:
            hit = w.intersect(a, d)
            if hit is not None and 1e-6 < hit[0] < 1.0 - 1e-6 and hit[1] == "solid":
                return True
        return False

    def contains_xy(self, p) -> bool:
        # convex, counter-clockwise walls
        for w in self.walls:
            if (p[0] - w.p0[0]) * w.n[0] + (p[1] - w.p0[1]) * w.n[1] > 0.0:
                return False
        return True


@dataclass
class WorldConfig:
    tau: float = 0.3
    v_max: float = 8.0
    yaw_rate_max: float = math.radians(90.0)
    wind_mean: tuple = (0.0, 0.0, 0.0)
    wind_ou_sigma: float = 0.0
    wind_ou_theta: float = 0.5
    wind_drift_gain: float = 0.0
    gps_sigma_good: float = 0.5
    gps_sigma_low: float = 5.0
    gps_p_drop: float = 0.3
    # propeller annulus (m): radii and height above the body centre
    prop_inner: float = 0.2
    prop_outer: float = 0.55
    prop_height: float = 0.0
    body_radius: float = 0.3
    downdraft_fail_prob: float = 0.0
    # ball net: sphere above the body
    net_offset: tuple = (0.0, 0.0, 0.5)
    net_radius: float = 0.4
    # manipulator pad below the body, attach radii from the patch centre
    manipulator: bool = False
    manipulator_length: float = 0.6
    attach_radius: float = 0.06
    partial_radius: float = 0.10
    weak_drop_height: float = 0.3
    short_sensor_recess: float = 0.005


@dataclass
class WorldState:
    time: float
    uav: UavState
    targets: list
    wind: np.ndarray
    rng_seed: int = 0
    config: WorldConfig = field(default_factory=WorldConfig)
    building: Building | None = None
    rng: np.random.Generator | None = None
    disturbance: np.ndarray = field(default_factory=vec3)
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.rng is None:
            from .rng import stream

            self.rng = stream(self.rng_seed, "world")

    def target(self, target_id: str) -> TargetState:
        for t in self.targets:
            if t.spec.id == target_id:
                return t
        raise KeyError(target_id)


# -- target motion ---------------------------------------------------------


@lru_cache(maxsize=32)
def _lemniscate_table(a: float, b: float, n: int = 8192):
    theta = np.linspace(0.0, 2.0 * np.pi, n + 1)
    dx = a * np.cos(theta)
    dy = b * np.cos(2.0 * theta)
    speed = np.hypot(dx, dy)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(theta))])
    return theta, s


def lemniscate_length(extent_x: float, extent_y: float) -> float:
    theta, s = _lemniscate_table(0.5 * extent_x, extent_y)
    return float(s[-1])


def ball_period(spec: TargetSpec) -> float:
    return lemniscate_length(*spec.extents) / spec.speed


def ball_position(spec: TargetSpec, t: float) -> np.ndarray:
    """Constant-speed point on a Gerono lemniscate ``x = A sin th, y = B sin th cos th``.

    ``extents`` are the full widths, so ``A = ex/2`` and ``B = ey``.  The
    curve is rotated by ``spec.heading`` and centred on the anchor.
    """
    if spec.kind != "ball":
        raise ValueError("ball_position needs a ball spec")
    a, b = 0.5 * spec.extents[0], spec.extents[1]
    theta_tab, s_tab = _lemniscate_table(a, b)
    s = math.fmod(spec.speed * t, s_tab[-1])
    if s < 0:
        s += s_tab[-1]
    th = float(np.interp(s, s_tab, theta_tab))
    x = a * math.sin(th)
    y = b * math.sin(th) * math.cos(th)
    c, sn = math.cos(spec.heading), math.sin(spec.heading)
    return spec.anchor + vec3(c * x - sn * y, sn * x + c * y, 0.0)


def balloon_position(spec: TargetSpec, t: float, wind, phase: float = 0.0) -> np.ndarray:
    """Pole-top balloon centre displaced by a wind-driven horizontal sinusoid."""
    if spec.kind != "balloon":
        raise ValueError("balloon_position needs a balloon spec")
    base = spec.anchor + vec3(0.0, 0.0, spec.pole_height + 0.5 * spec.diameter)
    wx, wy = float(wind[0]), float(wind[1])
    speed = math.hypot(wx, wy)
    if speed == 0.0:
        return base
    amp = min(spec.sway_gain * speed, spec.tether_length)
    k = amp * math.sin(2.0 * math.pi * t / spec.sway_period + phase) / speed
    return base + vec3(k * wx, k * wy, 0.0)


def target_position(ts: TargetState, t: float, wind) -> np.ndarray:
    spec = ts.spec
    if spec.kind == "ball":
        return ball_position(spec, t)
    if spec.kind == "balloon":
        return balloon_position(spec, t, wind, ts.phase)
    return ts.position


# -- contacts ----------------------------------------------------------------


def propeller_hits(cfg: WorldConfig, uav_pos, centre, radius) -> bool:
    """Propeller annulus (horizontal ring at rotor height) intersects a sphere."""
    dz = uav_pos[2] + cfg.prop_height - centre[2]
    if abs(dz) >= radius:
        return False
    rho = math.sqrt(radius * radius - dz * dz)
    d = math.hypot(uav_pos[0] - centre[0], uav_pos[1] - centre[1])
    return d - rho < cfg.prop_outer and d + rho > cfg.prop_inner


def surface_height(world: WorldState, x: float, y: float, exclude=None) -> float:
    """Height of the highest block/structure top under (x, y); 0 for bare ground."""
    h = 0.0
    for ts in world.targets:
        spec = ts.spec
        if ts is exclude or ts.attached:
            continue
        if spec.kind == "block":
            hl, hw = 0.5 * spec.size[0], 0.5 * spec.size[1]
            if abs(x - ts.position[0]) <= hl and abs(y - ts.position[1]) <= hw:
                h = max(h, ts.position[2])
        elif spec.kind == "structure" and len(spec.segment) == 2:
            if _near_segment(spec, x, y):
                h = max(h, spec.height)
    return h


def _near_segment(spec: TargetSpec, x, y) -> bool:
    p0, p1 = np.asarray(spec.segment[0], float), np.asarray(spec.segment[1], float)
    d = p1[:2] - p0[:2]
    L = float(np.hypot(*d))
    u = d / L
    rx, ry = x - p0[0], y - p0[1]
    s = rx * u[0] + ry * u[1]
    off = abs(-rx * u[1] + ry * u[0])
    return -0.1 <= s <= L + 0.1 and off <= 0.5 * spec.channel_width


def _contacts(world: WorldState):
    cfg = world.config
    uav = world.uav
    p = uav.pose.position
    for ts in world.targets:
        spec = ts.spec
        if spec.kind == "balloon" and ts.alive:
            r = 0.5 * spec.diameter
            hit = propeller_hits(cfg, p, ts.position, r)
            if hit and not ts.in_contact:
                if world.rng.random() >= cfg.downdraft_fail_prob:
                    ts.alive = False
                    world.events.append((world.time, "POP", spec.id, ""))
                else:
                    world.events.append((world.time, "DOWNDRAFT_MISS", spec.id, ""))
            ts.in_contact = hit
            pole_top = spec.anchor[2] + spec.pole_height
            d = math.hypot(p[0] - spec.anchor[0], p[1] - spec.anchor[1])
            if d < cfg.body_radius and p[2] - 0.1 < pole_top:
                world.events.append((world.time, "POLE_CONTACT", spec.id, ""))
        elif spec.kind == "ball" and ts.alive:
            net = p + np.asarray(cfg.net_offset)
            if float(np.linalg.norm(net - ts.position)) < cfg.net_radius + spec.radius:
                if not ts.in_contact:
                    world.events.append((world.time, "CATCH", spec.id, ""))
                ts.in_contact = True
            else:
                ts.in_contact = False


def _gripper(world: WorldState, release: bool):
    cfg = world.config
    uav = world.uav
    p = uav.pose.position
    pad = p - vec3(0.0, 0.0, cfg.manipulator_length)
    held = [ts for ts in world.targets if ts.attached]
    for ts in held:
        if release or (ts.weak_attach and pad[2] > ts.contact_z + cfg.weak_drop_height):
            ts.attached = False
            ts.weak_attach = False
            top = surface_height(world, pad[0], pad[1], exclude=ts)
            ts.position = vec3(pad[0], pad[1], top + ts.spec.size[2])
            world.events.append((world.time, "RELEASE" if release else "DROP", ts.spec.id, f"{ts.position[0]:.3f},{ts.position[1]:.3f},{ts.position[2]:.3f}"))
        else:
            ts.position = pad.copy()
    if any(ts.attached for ts in world.targets):
        return
    # pad resting on a surface
    top = surface_height(world, pad[0], pad[1])
    if pad[2] < top:
        p[2] = top + cfg.manipulator_length
        if uav.velocity[2] < 0:
            uav.velocity[2] = 0.0
        pad = p - vec3(0.0, 0.0, cfg.manipulator_length)
    if release:
        return
    for ts in world.targets:
        if ts.spec.kind != "block" or not ts.alive:
            continue
        hl, hw = 0.5 * ts.spec.size[0], 0.5 * ts.spec.size[1]
        over = abs(pad[0] - ts.position[0]) <= hl and abs(pad[1] - ts.position[1]) <= hw
        if over and pad[2] <= ts.position[2] + 1e-3:
            off = math.hypot(pad[0] - ts.position[0], pad[1] - ts.position[1])
            if off < cfg.partial_radius:
                ts.attached = True
                ts.weak_attach = off >= cfg.attach_radius
                ts.contact_z = pad[2]
                world.events.append((world.time, "ATTACH_WEAK" if ts.weak_attach else "ATTACH", ts.spec.id, f"{off:.4f}"))
            elif not ts.in_contact:
                world.events.append((world.time, "CONTACT_NO_ATTACH", ts.spec.id, f"{off:.4f}"))
            ts.in_contact = True
            return
        ts.in_contact = False


def _step_wind(world: WorldState, dt: float):
    cfg = world.config
    mean = np.asarray(cfg.wind_mean, dtype=float)
    if cfg.wind_ou_sigma > 0.0:
        dev = world.wind - mean
        dev += -cfg.wind_ou_theta * dev * dt + cfg.wind_ou_sigma * math.sqrt(dt) * world.rng.standard_normal(3) * np.array([1.0, 1.0, 0.0])
        world.wind = mean + dev
    else:
        world.wind = mean.copy()


def step_world(state: WorldState, command, dt: float) -> WorldState:
    """Advance the world by ``dt`` seconds under a velocity command.

    ``command`` is a :class:`Command` or a ``(velocity, yaw_rate)`` pair.
    The state is advanced in place and returned.  Commands faster than
    ``v_max`` are scaled down; non-finite commands raise ``ValueError``.
    """
    if not (0.0 < dt <= 0.1):
        raise ValueError("dt must be in (0, 0.1]")
    if not isinstance(command, Command):
        vel, yr = command
        command = Command(np.asarray(vel, dtype=float), float(yr))
    c = np.asarray(command.velocity, dtype=float)
    if not (np.all(np.isfinite(c)) and math.isfinite(command.yaw_rate)):
        raise ValueError("non-finite command")
    cfg = state.config
    speed = float(np.linalg.norm(c))
    if speed > cfg.v_max:
        c = c * (cfg.v_max / speed)
    yaw_rate = max(-cfg.yaw_rate_max, min(cfg.yaw_rate_max, command.yaw_rate))

    uav = state.uav
    a = math.exp(-dt / cfg.tau) if cfg.tau > 0 else 0.0
    uav.velocity = c + (uav.velocity - c) * a
    uav.commanded_velocity = c
    uav.yaw_rate = yaw_rate
    if command.gimbal_pitch is not None:
        uav.gimbal_pitch = float(command.gimbal_pitch)

    ground_v = uav.velocity + cfg.wind_drift_gain * state.wind + state.disturbance
    pos = uav.pose.position + ground_v * dt
    if pos[2] < 0.0:
        pos[2] = 0.0
        if uav.velocity[2] < 0.0:
            uav.velocity[2] = 0.0
    uav.pose.position = pos
    uav.pose.yaw = wrap_angle(uav.pose.yaw + yaw_rate * dt)

    state.time += dt
    _step_wind(state, dt)
    for ts in state.targets:
        if ts.spec.kind in ("ball", "balloon") and ts.alive:
            ts.position = target_position(ts, state.time, state.wind)
    if cfg.manipulator:
        _gripper(state, command.release)
    _contacts(state)
    return state


def noisy_gps(state: WorldState, health: str = "good", rng=None):
    """Position with zero-mean Gaussian noise; ``None`` when a low-health reading drops."""
    cfg = state.config
    rng = rng if rng is not None else state.rng
    if health not in ("good", "low"):
        raise ValueError(health)
    sigma = cfg.gps_sigma_good if health == "good" else cfg.gps_sigma_low
    if health == "low" and rng.random() < cfg.gps_p_drop:
        return None
    noise = rng.standard_normal(3) * sigma if sigma > 0 else np.zeros(3)
    return state.uav.pose.position + noise


TELEMETRY_BASE = ["time", "x", "y", "z", "yaw", "vx", "vy", "vz", "cmd_vx", "cmd_vy", "cmd_vz", "cmd_yaw_rate"]


def telemetry_header(state: WorldState) -> list:
    cols = list(TELEMETRY_BASE)
    for ts in state.targets:
        tid = ts.spec.id
        cols += [f"{tid}_x", f"{tid}_y", f"{tid}_z", f"{tid}_alive"]
    return cols


def telemetry_row(state: WorldState) -> list:
    u = state.uav
    p = u.pose.position
    row = [state.time, p[0], p[1], p[2], u.pose.yaw, *u.velocity, *u.commanded_velocity, u.yaw_rate]
    out = [f"{v:.6f}" for v in row]
    for ts in state.targets:
        out += [f"{ts.position[0]:.6f}", f"{ts.position[1]:.6f}", f"{ts.position[2]:.6f}", "1" if ts.alive else "0"]
    return out


def make_world(uav_position, yaw=0.0, targets=(), config=None, building=None, seed=0, rng=None, gimbal_offset_yaw=0.0, gimbal_pitch=0.0):
    """Convenience constructor placing targets at their t=0 positions."""
    config = config or WorldConfig()
    uav = UavState(Pose(np.asarray(uav_position, float), yaw, gimbal_offset_yaw), gimbal_pitch=gimbal_pitch)
    world = WorldState(0.0, uav, [], np.asarray(config.wind_mean, float).copy(), seed, config, building, rng)
    for spec in targets:
        if not spec.id:
            spec.id = f"{spec.kind}{len(world.targets)}"
        ts = TargetState(spec, spec.anchor.copy())
        if spec.kind == "balloon":
            ts.phase = float(world.rng.uniform(0.0, 2.0 * math.pi))
        ts.position = target_position(ts, 0.0, world.wind)
        if spec.kind == "fire":
            ts.alive = spec.active
        world.targets.append(ts)
    return world
