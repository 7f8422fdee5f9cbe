"""Global search plans, wall following and the spray cross pattern."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .sensing import RangeReading
from .world import Pose, wrap_angle


class SearchExhausted(Exception):
    pass


@dataclass
class ArenaSpec:
    """Rectangle given by four corners ``c0..c3`` (plan projection).

    Lawnmower rows run parallel to ``c0 -> c3`` and are stepped along
    ``c0 -> c1``.
    """

    corners: tuple
    sweep_width: float = 6.0
    altitude: float = 2.7
    speed: float = 2.0

    def __post_init__(self):
        self.corners = tuple(np.asarray(c, dtype=float)[:2] for c in self.corners)
        if len(self.corners) != 4:
            raise ValueError("arena needs four corners")
        if self.sweep_width <= 0:
            raise ValueError("sweep width must be positive")

    @classmethod
    def rectangle(cls, x0, y0, length_x, length_y, **kw):
        return cls(((x0, y0), (x0 + length_x, y0), (x0 + length_x, y0 + length_y), (x0, y0 + length_y)), **kw)

    @property
    def step_axis(self):
        d = self.corners[1] - self.corners[0]
        L = float(np.hypot(*d))
        return d / L, L

    @property
    def row_axis(self):
        d = self.corners[3] - self.corners[0]
        L = float(np.hypot(*d))
        return d / L, L

    @property
    def centre(self) -> np.ndarray:
        return np.mean(self.corners, axis=0)

    def clip(self, p) -> np.ndarray:
        (su, sl), (ru, rl) = self.step_axis, self.row_axis
        rel = np.asarray(p[:2], dtype=float) - self.corners[0]
        a = min(max(float(rel @ su), 0.0), sl)
        b = min(max(float(rel @ ru), 0.0), rl)
        xy = self.corners[0] + a * su + b * ru
        return np.array([xy[0], xy[1], p[2]])

    def contains(self, p, tol=1e-9) -> bool:
        (su, sl), (ru, rl) = self.step_axis, self.row_axis
        rel = np.asarray(p[:2], dtype=float) - self.corners[0]
        a, b = float(rel @ su), float(rel @ ru)
        return -tol <= a <= sl + tol and -tol <= b <= rl + tol


def forward_offsets(length: float, width: float) -> list:
    n = max(1, math.ceil(length / width - 1e-9))
    return [min(width / 2 + k * width, length - width / 2) if length > width else length / 2 for k in range(n)]


def reverse_offsets(length: float, width: float) -> list:
    n = math.ceil(length / width - 1e-9)
    offs = sorted({min(k * width, length) for k in range(n + 1)})
    return offs[::-1]


@dataclass
class LawnmowerPlan:
    waypoints: list
    forward_rows: list
    reverse_rows: list
    degenerate: bool = False


def lawnmower_plan(arena: ArenaSpec) -> LawnmowerPlan:
    """Boustrophedon forward pass plus a half-width shifted reverse pass."""
    (su, sl), (ru, rl) = arena.step_axis, arena.row_axis
    w = arena.sweep_width
    degenerate = w >= sl
    if degenerate:
        fwd, rev = [sl / 2], [sl / 2]
    else:
        fwd, rev = forward_offsets(sl, w), reverse_offsets(sl, w)
    c0 = arena.corners[0]
    wps = []
    flip = False
    for offs in (fwd, rev):
        for o in offs:
            a = c0 + o * su
            b = a + rl * ru
            ends = (b, a) if flip else (a, b)
            for e in ends:
                wps.append(np.array([e[0], e[1], arena.altitude]))
            flip = not flip
    return LawnmowerPlan(wps, fwd, rev, degenerate)


def square_loiter_plan(arena: ArenaSpec, altitudes=(10.0, 12.0), side: float | None = None) -> list:
    """Closed square laps about the arena centre, one lap per altitude in order."""
    if len(altitudes) == 0:
        raise ValueError("need at least one altitude")
    (su, sl), (ru, rl) = arena.step_axis, arena.row_axis
    side = side if side is not None else min(sl, rl) / 2
    c = arena.centre
    h = side / 2
    corners = [c - h * su - h * ru, c + h * su - h * ru, c + h * su + h * ru, c - h * su + h * ru]
    wps = []
    for alt in altitudes:
        for p in corners + [corners[0]]:
            wps.append(np.array([p[0], p[1], float(alt)]))
    return wps


def long_side_heading(arena: ArenaSpec) -> float:
    (su, sl), (ru, rl) = arena.step_axis, arena.row_axis
    d = su if sl >= rl else ru
    return math.atan2(d[1], d[0])


def gaussian_resample(center, sigma: float, rng, arena: ArenaSpec | None = None) -> np.ndarray:
    """Nearby search point: horizontal Gaussian perturbation, altitude kept."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    c = np.asarray(center, dtype=float)
    dx, dy = rng.normal(0.0, sigma, 2) if sigma > 0 else (0.0, 0.0)
    p = c + np.array([dx, dy, 0.0])
    return arena.clip(p) if arena is not None else p


def recover_plan(detect_point, current, climb: float = 2.0) -> list:
    """Up, back, and down to the point where the target was first detected."""
    d = np.asarray(detect_point, dtype=float)
    c = np.asarray(current, dtype=float)
    top = max(c[2], d[2]) + climb
    return [np.array([c[0], c[1], top]), np.array([d[0], d[1], top]), d.copy()]


def median_filter(window) -> float:
    if len(window) % 2 == 0:
        raise ValueError("median window must have odd length")
    return float(statistics.median(window))


# -- wall following -----------------------------------------------------------

NONE, EDGE, WINDOW_SKIPPED = "NONE", "EDGE", "WINDOW_SKIPPED"


@dataclass
class WallPlanState:
    min_wall_lengths: list
    altitude_schedule: list
    standoff: float = 1.2
    lateral_speed: float = 1.0
    window_len: int = 5
    edge_margin: float = 2.0
    k_forward: float = 1.0
    max_forward: float = 0.5
    wall_index: int = 0
    traveled: float = 0.0
    window: list = field(default_factory=list)
    altitude_index: int = 0
    edges_this_circuit: int = 0
    last_valid: float | None = None
    last_position: np.ndarray | None = None
    raw_high: bool = False
    edge_emitted: bool = False
    corner: np.ndarray | None = None

    def __post_init__(self):
        if self.window_len % 2 == 0:
            raise ValueError("window length must be odd")
        if self.standoff <= 0:
            raise ValueError("standoff must be positive")

    @property
    def edge_threshold(self) -> float:
        return self.standoff + self.edge_margin

    @property
    def min_length(self) -> float:
        return self.min_wall_lengths[self.wall_index % len(self.min_wall_lengths)]

    @property
    def altitude(self) -> float:
        return self.altitude_schedule[self.altitude_index]


def wall_follow_step(state: WallPlanState, reading: RangeReading, uav_pose: Pose, dt: float):
    """One tick of left-moving wall following at a fixed standoff.

    Returns ``(world velocity, state, event)``.  The state is updated in place.
    """
    raw = reading.filtered_value()
    state.window.append(raw)
    if len(state.window) > state.window_len:
        state.window.pop(0)
    win = state.window if len(state.window) % 2 == 1 else state.window[1:]
    filt = median_filter(win)

    p = uav_pose.position
    if state.last_position is not None:
        state.traveled += float(np.hypot(*(p[:2] - state.last_position[:2])))
    state.last_position = p.copy()

    event = NONE
    raw_high = raw > state.edge_threshold
    if filt > state.edge_threshold:
        forward = 0.0
        if state.traveled >= state.min_length and not state.edge_emitted:
            event = EDGE
            state.edge_emitted = True
        elif raw_high and not state.raw_high and not state.edge_emitted:
            event = WINDOW_SKIPPED
    else:
        state.last_valid = filt
        forward = state.k_forward * (filt - state.standoff)
        forward = max(-state.max_forward, min(state.max_forward, forward))
        if raw_high and not state.raw_high:
            event = WINDOW_SKIPPED
    state.raw_high = raw_high
    vel = forward * uav_pose.forward + state.lateral_speed * uav_pose.left
    vel[2] = 1.0 * (state.altitude - p[2])
    return vel, state, event


def corner_turn_plan(state: WallPlanState, uav_pose: Pose, arc_points: int = 4):
    """Waypoints around a convex corner after an EDGE, plus the new wall heading.

    The corner is estimated one standoff ahead of the UAV; the plan is an
    arc of radius ``standoff`` about it, ending square to the next wall with
    the heading turned 90 deg clockwise.  After four edges the final
    waypoint moves to the next scheduled altitude; raises
    :class:`SearchExhausted` when the schedule runs out.
    """
    s = state.standoff
    p = uav_pose.position
    f, l = uav_pose.forward, uav_pose.left
    corner = p + s * f
    state.corner = np.array([corner[0], corner[1], p[2]])
    wps = []
    for k in range(1, arc_points + 1):
        th = 0.5 * math.pi * k / arc_points
        q = corner + s * (-math.cos(th) * f + math.sin(th) * l)
        wps.append(np.array([q[0], q[1], p[2]]))
    heading = wrap_angle(uav_pose.yaw - math.pi / 2)
    state.edges_this_circuit += 1
    state.wall_index += 1
    if state.edges_this_circuit >= 4:
        state.edges_this_circuit = 0
        state.altitude_index += 1
        if state.altitude_index >= len(state.altitude_schedule):
            raise SearchExhausted("altitude schedule exhausted")
        last = wps[-1]
        wps.append(np.array([last[0], last[1], state.altitude]))
    return wps, heading


def reset_for_new_wall(state: WallPlanState):
    state.traveled = 0.0
    state.window.clear()
    state.last_position = None
    state.edge_emitted = False
    state.raw_high = False


def cross_pattern(center, half_side: float = 0.125, right=(1.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> list:
    """Five waypoints A, C, B, D, centre tracing both diagonals of a square.

    ``right`` and ``up`` span the wall-parallel plane.  A is upper-left,
    C lower-right, B upper-right, D lower-left.
    """
    if half_side <= 0:
        raise ValueError("half_side must be positive")
    c = np.asarray(center, dtype=float)
    r = np.asarray(right, dtype=float) * half_side
    u = np.asarray(up, dtype=float) * half_side
    return [c - r + u, c + r - u, c + r + u, c - r - u, c.copy()]


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def plan_to_csv(points, path):
    with open(path, "w") as fh:
        fh.write("index,x,y,z\n")
        for i, p in enumerate(points):
            fh.write(f"{i},{p[0]:.6f},{p[1]:.6f},{p[2]:.6f}\n")
