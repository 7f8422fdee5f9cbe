"""Firefighting: pre-align, wall following around the building, thermal
centering, range-based refinement, cross-pattern spray, land to refill."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fsm import MissionMachine, Observations, Transition
from ..guidance import follow_waypoints, saturate
from ..planning import EDGE, WINDOW_SKIPPED, SearchExhausted, WallPlanState, corner_turn_plan, cross_pattern, reset_for_new_wall, wall_follow_step
from ..rng import Streams
from ..sensing import THERMAL_INTRINSICS, CameraIntrinsics, RangeConfig, ThermalConfig, camera_pose, camera_rotation, range_down, range_forward, render_thermal, threshold_fires
from ..spray import PumpState, SprayCone, nozzle_position, spray_water
from ..world import Building, Pose, TargetSpec, make_world, wrap_angle
from .common import run_episode

STATES = ("TakeOff", "PreAlign", "WallFollow", "CornerTurn", "CenterFire", "RefineFire", "Spray", "ReRequestControl", "Land", "Landed")
THERMAL_STATES = ("WallFollow", "CenterFire", "RefineFire")


@dataclass
class FireConfig:
    altitude: float = 3.0
    altitude_schedule: tuple = (3.0, 6.0)
    min_wall_lengths: tuple = (9.0, 6.0, 9.0, 6.0)
    standoff: float = 1.2
    lateral_speed: float = 1.0
    prealign_offset: float = 2.0  # forward and left of the start
    confirm_frames: int = 3
    center_gain: float = 2.0  # m/s per unit normalized pixel error
    center_tol_px: float = 4.0
    center_frames: int = 3
    lost_timeout: float = 1.0
    spray_distance: float = 1.0  # nozzle-to-face distance held while spraying
    refine_tol: float = 0.05
    max_speed: float = 0.5
    distance_limit: float | None = None  # reject fires farther than this (off by default)
    reject_hold: float = 5.0  # s detections are ignored after a rejection
    cross: bool = True  # cross pattern, else hover in place
    cross_half_side: float = 0.125
    spray_speed: float = 0.1
    spray_time: float = 15.0  # a full tank at the nominal flow
    threshold: float = 7500.0  # counts, between ambient and fire
    min_blob: int = 30
    gps_resume: float = 1.0  # s of good GPS before resuming
    intrinsics: CameraIntrinsics = THERMAL_INTRINSICS
    nozzle: tuple = (0.15, 0.0, 0.0)


class FireMission(MissionMachine):
    NAME = "firefight"
    STATES = STATES
    TRANSITIONS = [
        Transition("TakeOff", "PreAlign", "at_altitude"),
        Transition("PreAlign", "WallFollow", "prealigned"),
        Transition("WallFollow", "ReRequestControl", "gps_low", -50),
        Transition("WallFollow", "CenterFire", "fire_detected", 0),
        Transition("WallFollow", "CornerTurn", "edge_detected", 1),
        Transition("CornerTurn", "Land", "search_exhausted", 0),
        Transition("CornerTurn", "WallFollow", "corner_done", 1),
        Transition("CenterFire", "ReRequestControl", "gps_low", -50),
        Transition("CenterFire", "WallFollow", "fire_lost", 0),
        Transition("CenterFire", "RefineFire", "fire_centered", 1),
        Transition("RefineFire", "ReRequestControl", "gps_low", -50),
        Transition("RefineFire", "WallFollow", "target_too_far", 0),
        Transition("RefineFire", "Spray", "refined", 1),
        Transition("Spray", "Land", "spray_done"),
        Transition("ReRequestControl", "WallFollow", "gps_restored"),
        Transition("Land", "Landed", "landed"),
    ]

    def __init__(self, config: FireConfig | None = None, clock_limit: float = 900.0):
        self.cfg = config or FireConfig()
        c = self.cfg
        self.wall = WallPlanState(list(c.min_wall_lengths), list(c.altitude_schedule), standoff=c.standoff, lateral_speed=c.lateral_speed)
        self.wall_heading = 0.0
        self.align_wp = None
        self.edge_pending = False
        self.corner_plan = []
        self.corner_index = 0
        self.corner_heading = 0.0
        self.exhausted = False
        self.fire_frames = 0
        self.last_fire = -math.inf
        self.centered = 0
        self.fire_estimate = None
        self.fire_depth = 0.0
        self.goal = None
        self.suppress_until = -math.inf
        self.pattern = []
        self.pattern_index = 0
        self.gps_good_since = 0.0
        self.edges = []  # (t, x, y) of every EDGE
        self.windows_skipped = 0
        self.fires_found = 0
        self.sprays = 0
        self.edges_before_fire = None
        super().__init__(clock_limit)

    @property
    def wants_thermal(self) -> bool:
        return self.state.name in THERMAL_STATES

    @property
    def pump_on(self) -> bool:
        return self.state.name == "Spray"

    def _fire(self, obs):
        return obs.fires[0] if obs.fires else None

    def tick(self, obs, dt):
        if obs.gps_ok:
            if self.gps_good_since is None:
                self.gps_good_since = obs.t
        else:
            self.gps_good_since = None
        if self._fire(obs) is not None and obs.t >= self.suppress_until:
            self.fire_frames += 1
            self.last_fire = obs.t
        else:
            self.fire_frames = 0
        return super().tick(obs, dt)

    def _yaw_hold(self, obs, heading):
        return float(np.clip(2.0 * wrap_angle(heading - obs.yaw), -1.0, 1.0))

    # -- guards -----------------------------------------------------------------
    def guard_at_altitude(self, obs):
        return abs(obs.position[2] - self.cfg.altitude) < 0.1

    def guard_prealigned(self, obs):
        return self.align_wp is not None and np.linalg.norm(obs.position - self.align_wp) < 0.1 and abs(wrap_angle(self.wall_heading - obs.yaw)) < 0.03

    def guard_gps_low(self, obs):
        return not obs.gps_ok

    def guard_gps_restored(self, obs):
        return self.gps_good_since is not None and obs.t - self.gps_good_since >= self.cfg.gps_resume

    def guard_fire_detected(self, obs):
        return self.fire_frames >= self.cfg.confirm_frames

    def guard_edge_detected(self, obs):
        return self.edge_pending

    def guard_search_exhausted(self, obs):
        return self.exhausted

    def guard_corner_done(self, obs):
        return self.corner_index >= len(self.corner_plan) and abs(wrap_angle(self.corner_heading - obs.yaw)) < 0.03

    def guard_fire_lost(self, obs):
        return obs.t - self.last_fire >= self.cfg.lost_timeout

    def guard_fire_centered(self, obs):
        return self.centered >= self.cfg.center_frames

    def guard_target_too_far(self, obs):
        return self.cfg.distance_limit is not None and self.fire_depth > self.cfg.distance_limit

    def guard_refined(self, obs):
        return self.goal is not None and np.linalg.norm(self.goal - self._nozzle(obs)) < self.cfg.refine_tol and np.linalg.norm(obs.velocity) < 0.1

    def guard_spray_done(self, obs):
        return self.time_in_state(obs) >= self.cfg.spray_time

    # -- hooks ------------------------------------------------------------------
    def enter_PreAlign(self, obs):
        p = Pose(obs.position, obs.yaw)
        d = self.cfg.prealign_offset
        self.align_wp = obs.position + d * p.forward + d * p.left
        self.align_wp[2] = self.cfg.altitude
        self.wall_heading = wrap_angle(obs.yaw - math.pi / 2)  # 90 deg clockwise

    def enter_WallFollow(self, obs):
        self.edge_pending = False

    def enter_CornerTurn(self, obs):
        self.edge_pending = False
        self.corner_index = 0
        try:
            self.corner_plan, self.corner_heading = corner_turn_plan(self.wall, Pose(obs.position, obs.yaw))
        except SearchExhausted:
            self.exhausted = True
            self.corner_plan = []
            self.note(obs.t, "SEARCH_EXHAUSTED")

    def exit_CornerTurn(self, obs):
        if not self.exhausted:
            reset_for_new_wall(self.wall)
            self.wall_heading = self.corner_heading

    def enter_CenterFire(self, obs):
        self.centered = 0
        if self.fires_found == 0:
            self.edges_before_fire = len(self.edges)
        self.fires_found += 1
        self.note(obs.t, "FIRE_DETECTED", f"{obs.position[0]:.3f} {obs.position[1]:.3f} {obs.position[2]:.3f}")

    def enter_RefineFire(self, obs):
        # 3-D fire location from the pixel ray and the forward range, assuming the UAV faces the wall
        c = self.cfg.intrinsics
        d = self._fire(obs)
        reading = obs.range_forward
        self.fire_depth = reading.filtered_value() if reading is not None else math.inf
        self.goal = None
        if d is None:
            return
        ray = np.array([(d.centroid.u - c.cx) / c.fx, (d.centroid.v - c.cy) / c.fy, 1.0])
        self.fire_estimate = obs.position + camera_rotation(obs.yaw, 0.0) @ (ray * self.fire_depth)
        if self.guard_target_too_far(obs):
            self.note(obs.t, "FIRE_REJECTED", f"depth {self.fire_depth:.2f}")
            self.suppress_until = obs.t + self.cfg.reject_hold
            return
        f = Pose(obs.position, obs.yaw).forward
        self.goal = self.fire_estimate - self.cfg.spray_distance * f
        self.note(obs.t, "FIRE_LOCALIZED", " ".join(f"{v:.3f}" for v in self.fire_estimate))

    def enter_Spray(self, obs):
        self.sprays += 1
        p = Pose(obs.position, obs.yaw)
        if self.cfg.cross:
            self.pattern = cross_pattern(self.goal, self.cfg.cross_half_side, right=-p.left, up=(0.0, 0.0, 1.0))
        else:
            self.pattern = [self.goal.copy()]
        self.pattern_index = 0
        if obs.extra.get("tank_empty"):
            self.note(obs.t, "WATER_SUPPLY_TOO_LOW")

    # -- behaviours -------------------------------------------------------------
    def _nozzle(self, obs):
        return nozzle_position(Pose(obs.position, obs.yaw), SprayCone(nozzle=self.cfg.nozzle))

    def run_TakeOff(self, obs, dt):
        return np.array([0.0, 0.0, np.clip(self.cfg.altitude - obs.position[2], -self.takeoff_rate, self.takeoff_rate)]), 0.0

    def run_PreAlign(self, obs, dt):
        vel = saturate(self.align_wp - obs.position, 1.0)
        yr = self._yaw_hold(obs, self.wall_heading) if np.linalg.norm(self.align_wp - obs.position) < 0.3 else 0.0
        return vel, yr

    def run_WallFollow(self, obs, dt):
        vel, _, ev = wall_follow_step(self.wall, obs.range_forward, Pose(obs.position, obs.yaw), dt)
        if ev == EDGE:
            self.edge_pending = True
            self.edges.append((obs.t, float(obs.position[0]), float(obs.position[1])))
            self.note(obs.t, "EDGE", f"{obs.position[0]:.3f} {obs.position[1]:.3f}")
        elif ev == WINDOW_SKIPPED:
            self.windows_skipped += 1
            self.note(obs.t, "WINDOW_SKIPPED", f"{obs.position[0]:.3f} {obs.position[1]:.3f}")
        return vel, self._yaw_hold(obs, self.wall_heading)

    def run_CornerTurn(self, obs, dt):
        if self.corner_index < len(self.corner_plan):
            c = self.wall.corner
            face = math.atan2(c[1] - obs.position[1], c[0] - obs.position[0])
            wc = follow_waypoints(Pose(obs.position, obs.yaw), self.corner_plan, self.corner_index, cruise_speed=0.6, capture_radius=0.1, heading=face, k_p=1.5)
            self.corner_index = wc.index
            return wc.velocity, wc.yaw_rate
        return np.zeros(3), self._yaw_hold(obs, self.corner_heading)

    def run_CenterFire(self, obs, dt):
        d = self._fire(obs)
        p = Pose(obs.position, obs.yaw)
        if d is None:
            self.centered = 0
            return np.zeros(3), self._yaw_hold(obs, self.wall_heading)
        c = self.cfg.intrinsics
        ex = (d.centroid.u - c.cx) / c.fx
        ey = (d.centroid.v - c.cy) / c.fy
        if abs(ex * c.fx) < self.cfg.center_tol_px and abs(ey * c.fy) < self.cfg.center_tol_px:
            self.centered += 1
        else:
            self.centered = 0
        vel = -self.cfg.center_gain * ex * p.left
        vel[2] = -self.cfg.center_gain * ey
        r = obs.range_forward
        if r is not None and not r.no_return:
            vel += float(np.clip(r.distance - self.cfg.standoff, -self.cfg.max_speed, self.cfg.max_speed)) * p.forward
        return saturate(vel, self.cfg.max_speed), self._yaw_hold(obs, self.wall_heading)

    def run_RefineFire(self, obs, dt):
        if self.goal is None:
            return np.zeros(3), self._yaw_hold(obs, self.wall_heading)
        return saturate(1.0 * (self.goal - self._nozzle(obs)), self.cfg.max_speed), self._yaw_hold(obs, self.wall_heading)

    def run_Spray(self, obs, dt):
        here = self._nozzle(obs)
        if len(self.pattern) == 1:
            return saturate(1.0 * (self.pattern[0] - here), self.cfg.max_speed), self._yaw_hold(obs, self.wall_heading)
        wc = follow_waypoints(Pose(here, obs.yaw), self.pattern, self.pattern_index, self.cfg.spray_speed, 0.02, heading=self.wall_heading, k_p=2.0, cyclic=True)
        self.pattern_index = wc.index
        return wc.velocity, wc.yaw_rate

    def run_ReRequestControl(self, obs, dt):
        return np.zeros(3), 0.0


def firefight_mission(config: FireConfig | None = None, clock_limit: float = 900.0) -> FireMission:
    return FireMission(config, clock_limit)


# -- sensing ---------------------------------------------------------------------


@dataclass
class FireSensors:
    intrinsics: CameraIntrinsics = THERMAL_INTRINSICS
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    ranger: RangeConfig = field(default_factory=RangeConfig)
    gps_low: tuple = ()  # (t0, t1) intervals of low GPS health


def fire_observer(sensors: FireSensors, streams: Streams, pump: PumpState | None = None):
    rng = streams["sensing"]
    frng = streams["faults"]
    cfg = FireConfig()

    def observe(world, machine) -> Observations:
        uav = world.uav
        fires = []
        if getattr(machine, "wants_thermal", True):
            c = machine.cfg if hasattr(machine, "cfg") else cfg
            img = render_thermal(sensors.intrinsics, camera_pose(uav.pose, 0.0), world, sensors.thermal, rng)
            fires = threshold_fires(img, c.threshold, c.min_blob)
        reading = range_forward(uav.pose, world, sensors.ranger.forward_max, sensors.ranger, frng if sensors.ranger.p_fault > 0 else rng)
        gps_ok = not any(t0 <= world.time < t1 for t0, t1 in sensors.gps_low)
        return Observations(
            t=world.time,
            position=uav.pose.position.copy(),
            velocity=uav.velocity.copy(),
            yaw=uav.pose.yaw,
            gps_ok=gps_ok,
            fires=fires,
            range_forward=reading,
            range_down=range_down(uav.pose, world),
            extra={"tank_empty": pump is not None and pump.empty},
        )

    return observe


# -- scenarios -------------------------------------------------------------------

BUILDING = (0.0, 0.0, 12.0, 8.0, 10.0)
HOT_SIGMA = 0.15  # m, hot-region centre to opening offset per axis (localization error)


def _wall_windows(length: float, rng, width: float = 1.0, z=(2.2, 3.8)):
    """Two windows inside the stretch covered before the minimum wall length."""
    out = []
    for frac in (0.45, 0.7):
        c = frac * length + rng.uniform(-0.3, 0.3)
        out.append((c - width / 2, c + width / 2, z[0], z[1]))
    return out


def firefight_world(seed: int, windows: bool = True, fire: bool = True, fire_s: float | None = None, fire_active: bool = True, hot_sigma: float = HOT_SIGMA):
    """12 x 8 m building, UAV on the ground east of the south-east corner facing
    the east wall; the first wall followed is the south face."""
    streams = Streams(seed)
    rng = streams["mission"]
    x0, y0, x1, y1, h = BUILDING
    lengths = (x1 - x0, y1 - y0, x1 - x0, y1 - y0)
    wins = [_wall_windows(L, rng) if windows else [] for L in lengths]
    building = Building.rectangle(x0, y0, x1, y1, h, wins)
    targets = []
    if fire:
        if fire_s is None:
            blocked = [(a - 0.6, b + 0.6) for a, b, _, _ in wins[0]]
            while True:
                fire_s = float(rng.uniform(1.5, 10.5))
                if not any(a <= fire_s <= b for a, b in blocked):
                    break
        z = 3.0 + float(rng.uniform(-0.3, 0.3))
        hot = (float(rng.normal(0.0, hot_sigma)), 0.0, float(rng.normal(0.0, hot_sigma))) if hot_sigma > 0 else (0.0, 0.0, 0.0)
        targets.append(TargetSpec("fire", (x0 + fire_s, y0, z), id="fire", normal=(0.0, -1.0, 0.0), active=fire_active, hot_offset=hot))
    world = make_world((x1 + 1.5, y0 + 0.8, 0.0), yaw=math.pi, targets=targets, building=building, rng=streams["world"])
    return world, streams


def window_false_positive_world(seed: int = 0):
    """Inactive fire on the south face; a hot source deep inside the building
    lines up with a south window at the search altitude."""
    streams = Streams(seed)
    x0, y0, x1, y1, h = BUILDING
    wins = [[(5.5, 6.5, 2.2, 3.8)], [], [], []]
    building = Building.rectangle(x0, y0, x1, y1, h, wins)
    targets = [
        TargetSpec("fire", (9.0, y0, 3.0), id="fire_near", active=False),
        TargetSpec("fire", (6.0, y1 - 0.1, 3.0), id="fire_far", normal=(0.0, -1.0, 0.0)),
    ]
    world = make_world((x1 + 1.5, y0 + 0.8, 0.0), yaw=math.pi, targets=targets, building=building, rng=streams["world"])
    return world, streams


@dataclass
class FireRun:
    state: str
    edges: list
    found_first_pass: bool
    window_entry: bool
    delivered_ml: float
    outcome: str
    result: object = None


def _nearest_fire(world, nozzle):
    best, dmin = None, math.inf
    for ts in world.targets:
        if ts.spec.kind == "fire":
            d = float(np.linalg.norm(ts.position - nozzle))
            if d < dmin:
                best, dmin = ts, d
    return best


def firefight_setup(world, streams, config: FireConfig | None = None, sensors: FireSensors | None = None, pump: PumpState | None = None, cone: SprayCone | None = None, clock_limit: float = 900.0, stop_after_first_wall: bool = False):
    """Machine, observer, per-tick monitor and a ``finish(result) -> FireRun`` for one episode."""
    config = config or FireConfig()
    sensors = sensors or FireSensors()
    pump = pump if pump is not None else PumpState()
    cone = cone or SprayCone(nozzle=config.nozzle)
    machine = FireMission(config, clock_limit)
    srng = streams["spray"]
    entered = {"hit": False}

    def monitor(w, m):
        if m.pump_on:
            fire = _nearest_fire(w, nozzle_position(w.uav.pose, cone))
            if fire is not None:
                spray_water(w.uav.pose, fire, pump, 0.05, cone, srng)
        if w.building is not None and w.building.contains_xy(w.uav.pose.position):
            w.events.append((w.time, "WINDOW_ENTRY", "", f"{w.uav.pose.position[0]:.3f} {w.uav.pose.position[1]:.3f}"))
            entered["hit"] = True
            return True
        if stop_after_first_wall and (m.fires_found > 0 or m.edges):
            return True
        return False

    def finish(res) -> FireRun:
        found = machine.fires_found > 0 and machine.edges_before_fire == 0
        if entered["hit"]:
            outcome = "window_entry"
        elif machine.sprays == 0:
            outcome = "not_sprayed" if machine.fires_found else "no_fire_found"
        elif pump.stuck:
            outcome = "stuck_pump_stopper"
        elif any(n[1] == "WATER_SUPPLY_TOO_LOW" for n in machine.notes):
            outcome = "water_supply_too_low"
        elif pump.delivered > 0:
            outcome = "extinguished"
        else:
            outcome = "missed_opening"
        return FireRun(machine.state.name, machine.edges, found, entered["hit"], pump.delivered, outcome, res)

    return machine, fire_observer(sensors, streams, pump), monitor, finish


def run_firefight(world, streams, config: FireConfig | None = None, sensors: FireSensors | None = None, pump: PumpState | None = None, cone: SprayCone | None = None, clock_limit: float = 900.0, stop_after_first_wall: bool = False, record: bool = False) -> FireRun:
    machine, observe, monitor, finish = firefight_setup(world, streams, config, sensors, pump, cone, clock_limit, stop_after_first_wall)
    return finish(run_episode(world, machine, observe, stop_when=monitor, record=record))
