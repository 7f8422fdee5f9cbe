"""Balloon popping: lawnmower search, LOS positioning, pursuit, up-back-down recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fsm import MissionMachine, Observations, Transition
from ..guidance import PursuitParams, follow_waypoints, los_vector, position_target_in_image, pursue_along_los
from ..planning import ArenaSpec, lawnmower_plan, recover_plan
from ..rng import Streams
from ..sensing import CameraIntrinsics, DetectorChannel, camera_pose, detect, largest, range_down
from ..world import Pose, TargetSpec, WorldConfig, make_world
from .common import run_episode

STATES = ("TakeOff", "GlobalSearch", "PositionTargetInImage", "PursueTarget", "RecoverToGlobalSearchPosition", "Land", "Landed")


@dataclass
class BalloonConfig:
    altitude: float = 2.7
    cruise_speed: float = 2.0
    capture_radius: float = 1.0
    recover_climb: float = 2.0
    confirm_frames: int = 3  # consecutive frames before a detection counts as valid
    recovery: bool = True
    params: PursuitParams = field(default_factory=PursuitParams)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)


class BalloonMission(MissionMachine):
    NAME = "balloon"
    STATES = STATES

    def __init__(self, plan, config: BalloonConfig | None = None, clock_limit: float = 900.0):
        self.cfg = config or BalloonConfig()
        self.plan = [np.asarray(p, dtype=float) for p in plan]
        if not self.plan:
            raise ValueError("balloon mission needs a search plan")
        self.plan_index = 0
        self.seen_frames = 0
        self.last_seen = -np.inf
        self.detect_point = None
        self.recover_wps = []
        self.recover_index = 0
        self.pursuit_velocity = np.zeros(3)
        self.recoveries = 0
        self.attempts = 0
        super().__init__(clock_limit)

    def build_transitions(self):
        t = [
            Transition("TakeOff", "GlobalSearch", "at_altitude"),
            Transition("GlobalSearch", "PositionTargetInImage", "valid_target_detected"),
            Transition("PositionTargetInImage", "GlobalSearch", "detection_timeout", 0),
            Transition("PositionTargetInImage", "PursueTarget", "converged", 1),
            Transition("PursueTarget", "PositionTargetInImage", "los_timeout", 0),
            Transition("RecoverToGlobalSearchPosition", "GlobalSearch", "recover_done"),
            Transition("Land", "Landed", "landed"),
        ]
        if self.cfg.recovery:
            t.append(Transition("PursueTarget", "RecoverToGlobalSearchPosition", "target_detection_timeout", 1))
        else:
            t.append(Transition("PursueTarget", "GlobalSearch", "target_detection_timeout", 1))
        self.TRANSITIONS = t
        return super().build_transitions()

    # -- perception helpers ---------------------------------------------------
    def _target(self, obs):
        return largest(obs.detections, "balloon")

    def _update_seen(self, obs):
        if self._target(obs) is not None:
            self.seen_frames += 1
            self.last_seen = obs.t
        else:
            self.seen_frames = 0

    def tick(self, obs, dt):
        self._update_seen(obs)
        return super().tick(obs, dt)

    # -- guards -----------------------------------------------------------------
    def guard_at_altitude(self, obs):
        return abs(obs.position[2] - self.cfg.altitude) < 0.1

    def guard_valid_target_detected(self, obs):
        return self.seen_frames >= self.cfg.confirm_frames

    def guard_detection_timeout(self, obs):
        return obs.t - max(self.last_seen, self.state.entered_at) >= self.cfg.params.detection_timeout

    guard_target_detection_timeout = guard_detection_timeout

    def guard_converged(self, obs):
        d = self._target(obs)
        if d is None:
            return False
        _, conv = position_target_in_image(los_vector(self.cfg.intrinsics, d.centroid), self.cfg.params, self.cfg.intrinsics, obs.yaw)
        return conv

    def guard_los_timeout(self, obs):
        return self.time_in_state(obs) >= self.cfg.params.los_timeout and self._target(obs) is not None

    def guard_recover_done(self, obs):
        return self.recover_index >= len(self.recover_wps)

    # -- entry hooks --------------------------------------------------------
    def exit_GlobalSearch(self, obs):
        self.detect_point = obs.position.copy()

    def enter_PursueTarget(self, obs):
        self.attempts += 1
        d = self._target(obs)
        p = self.cfg.params
        los = los_vector(self.cfg.intrinsics, d.centroid)
        # aim below the centroid by the upward-LOS goal so the rotors meet the lower half
        aim = np.array([los[0], los[1] - p.r_y_goal(self.cfg.intrinsics), 1.0])
        self.pursuit_velocity = pursue_along_los(aim, p, obs.yaw, obs.gimbal_pitch)

    def enter_RecoverToGlobalSearchPosition(self, obs):
        self.recoveries += 1
        self.recover_wps = recover_plan(self.detect_point, obs.position, self.cfg.recover_climb)
        self.recover_index = 0

    # -- behaviours ----------------------------------------------------------
    def run_TakeOff(self, obs, dt):
        return np.array([0.0, 0.0, np.clip(self.cfg.altitude - obs.position[2], -self.takeoff_rate, self.takeoff_rate)]), 0.0

    def run_GlobalSearch(self, obs, dt):
        wc = follow_waypoints(Pose(obs.position, obs.yaw), self.plan, self.plan_index, self.cfg.cruise_speed, self.cfg.capture_radius, heading="path", cyclic=True)
        self.plan_index = wc.index
        return wc.velocity, wc.yaw_rate

    def run_PositionTargetInImage(self, obs, dt):
        d = self._target(obs)
        if d is None:
            return np.zeros(3), 0.0
        cmd, _ = position_target_in_image(los_vector(self.cfg.intrinsics, d.centroid), self.cfg.params, self.cfg.intrinsics, obs.yaw)
        return cmd, 0.0

    def run_PursueTarget(self, obs, dt):
        return self.pursuit_velocity, 0.0

    def run_RecoverToGlobalSearchPosition(self, obs, dt):
        wc = follow_waypoints(Pose(obs.position, obs.yaw), self.recover_wps, self.recover_index, self.cfg.cruise_speed, 0.3, heading="hold")
        self.recover_index = wc.index
        return wc.velocity, wc.yaw_rate


@dataclass
class BalloonSensors:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    channel: DetectorChannel = field(default_factory=DetectorChannel)
    pitch: float = 0.0


def balloon_observer(sensors: BalloonSensors, streams: Streams):
    rng = streams["sensing"]

    def observe(world, machine) -> Observations:
        uav = world.uav
        cam = camera_pose(uav.pose, sensors.pitch)
        dets = detect(sensors.intrinsics, cam, world, sensors.channel, rng)
        return Observations(
            t=world.time,
            position=uav.pose.position.copy(),
            velocity=uav.velocity.copy(),
            yaw=uav.pose.yaw,
            gimbal_pitch=sensors.pitch,
            detections=dets,
            range_down=range_down(uav.pose, world),
        )

    return observe


def balloon_mission(plan, config: BalloonConfig | None = None, clock_limit: float = 900.0) -> BalloonMission:
    return BalloonMission(plan, config, clock_limit)


# -- scenarios ----------------------------------------------------------------------

FAULT_WIND = 8.0  # m/s crosswind; sway amplitude 0.8 m at the default gain
FAULT_OFFSET_DEG = 10.0


@dataclass
class BalloonRun:
    popped: bool
    attempts: int
    recoveries: int
    state: str
    result: object = None


def balloon_world(seed: int, gimbal_offset_deg: float = FAULT_OFFSET_DEG, wind: float = FAULT_WIND, balloon=(3.0, 20.0)):
    """12 x 60 m strip searched by a lawnmower; one balloon on the first row."""
    streams = Streams(seed)
    cfg = WorldConfig(wind_mean=(wind, 0.0, 0.0))
    targets = [TargetSpec("balloon", (balloon[0], balloon[1], 0.0), id="balloon")] if balloon is not None else []
    world = make_world((3.0, 0.0, 0.0), yaw=math.pi / 2, targets=targets, config=cfg, rng=streams["world"], gimbal_offset_yaw=math.radians(gimbal_offset_deg))
    plan = lawnmower_plan(ArenaSpec.rectangle(0.0, 0.0, 12.0, 60.0)).waypoints
    return world, plan, streams


def run_balloon(seed: int, recovery: bool = True, gimbal_offset_deg: float = FAULT_OFFSET_DEG, wind: float = FAULT_WIND, clock_limit: float = 120.0, until_pop: bool = True, balloon=(3.0, 20.0), record: bool = False) -> BalloonRun:
    world, plan, streams = balloon_world(seed, gimbal_offset_deg, wind, balloon)
    machine = BalloonMission(plan, BalloonConfig(recovery=recovery), clock_limit)

    def stop(w, m):
        return until_pop and bool(w.targets) and not any(t.alive for t in w.targets)

    res = run_episode(world, machine, balloon_observer(BalloonSensors(), streams), stop_when=stop, record=record)
    return BalloonRun(res.count("POP") > 0, machine.attempts, machine.recoveries, machine.state.name, res)
