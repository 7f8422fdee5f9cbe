"""Ball catching: square loiter search and the LOS position-refinement loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fsm import MissionMachine, Observations, Transition
from ..guidance import PursuitParams, ball_refine, follow_waypoints, los_vector
from ..rng import Streams
from ..sensing import CameraIntrinsics, DetectorChannel, camera_pose, detect, largest, range_down
from ..world import Pose, TargetSpec, ball_period, make_world, wrap_angle
from .common import DT, run_episode

STATES = ("TakeOff", "GlobalSearch", "LosServoing", "WaitInPlace", "Land", "Landed")


@dataclass
class BallConfig:
    altitude: float = 10.0
    heading: float = 0.0  # fixed yaw during search, aligned with the arena long side
    cruise_speed: float = 2.0
    capture_radius: float = 1.0
    confirm_frames: int = 2
    out_of_view: float = 0.5  # s without a detection before waiting in place
    ball_period: float = 15.24  # s; wait timeout is two periods
    wait_periods: float = 2.0
    params: PursuitParams = field(default_factory=PursuitParams)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    @property
    def wait_timeout(self) -> float:
        return self.wait_periods * self.ball_period


class BallMission(MissionMachine):
    NAME = "ball"
    STATES = STATES
    TRANSITIONS = [
        Transition("TakeOff", "GlobalSearch", "at_altitude"),
        Transition("GlobalSearch", "LosServoing", "ball_detected"),
        Transition("LosServoing", "WaitInPlace", "target_out_of_view"),
        Transition("WaitInPlace", "LosServoing", "ball_detected", 0),
        Transition("WaitInPlace", "GlobalSearch", "wait_timeout", 1),
        Transition("Land", "Landed", "landed"),
    ]

    def __init__(self, plan, config: BallConfig | None = None, clock_limit: float = 900.0):
        self.cfg = config or BallConfig()
        self.plan = [np.asarray(p, dtype=float) for p in plan]
        if not self.plan:
            raise ValueError("ball mission needs a loiter plan")
        self.plan_index = 0
        self.seen_frames = 0
        self.last_seen = -np.inf
        self.passes = 0
        self.pass_positions = []  # UAV position at the end of each servo pass
        self.trace = []  # (t, u, v, pass index) of every servoed detection
        super().__init__(clock_limit)

    def _target(self, obs):
        return largest(obs.detections, "ball")

    def tick(self, obs, dt):
        if self._target(obs) is not None:
            self.seen_frames += 1
            self.last_seen = obs.t
        else:
            self.seen_frames = 0
        return super().tick(obs, dt)

    def guard_at_altitude(self, obs):
        return abs(obs.position[2] - self.cfg.altitude) < 0.1

    def guard_ball_detected(self, obs):
        return self.seen_frames >= self.cfg.confirm_frames

    def guard_target_out_of_view(self, obs):
        return obs.t - self.last_seen >= self.cfg.out_of_view

    def guard_wait_timeout(self, obs):
        return self.time_in_state(obs) >= self.cfg.wait_timeout

    def enter_LosServoing(self, obs):
        self.passes += 1

    def exit_LosServoing(self, obs):
        self.pass_positions.append(obs.position.copy())

    def run_TakeOff(self, obs, dt):
        return np.array([0.0, 0.0, np.clip(self.cfg.altitude - obs.position[2], -self.takeoff_rate, self.takeoff_rate)]), 0.0

    def _hold_heading(self, obs):
        return float(np.clip(2.0 * wrap_angle(self.cfg.heading - obs.yaw), -1.0, 1.0))

    def run_GlobalSearch(self, obs, dt):
        wc = follow_waypoints(Pose(obs.position, obs.yaw), self.plan, self.plan_index, self.cfg.cruise_speed, self.cfg.capture_radius, heading=self.cfg.heading, cyclic=True)
        self.plan_index = wc.index
        return wc.velocity, wc.yaw_rate

    def run_LosServoing(self, obs, dt):
        d = self._target(obs)
        if d is None:
            return np.zeros(3), self._hold_heading(obs)
        self.trace.append((obs.t, d.centroid.u, d.centroid.v, self.passes))
        los = los_vector(self.cfg.intrinsics, d.centroid)
        return ball_refine(los, self.cfg.params, obs.yaw), self._hold_heading(obs)

    def run_WaitInPlace(self, obs, dt):
        return np.zeros(3), self._hold_heading(obs)


@dataclass
class BallSensors:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    channel: DetectorChannel = field(default_factory=lambda: DetectorChannel(classes=("ball",), max_range=60.0))
    pitch: float = 0.0


def ball_observer(sensors: BallSensors, streams: Streams):
    rng = streams["sensing"]

    def observe(world, machine) -> Observations:
        uav = world.uav
        cam = camera_pose(uav.pose, sensors.pitch)
        return Observations(
            t=world.time,
            position=uav.pose.position.copy(),
            velocity=uav.velocity.copy(),
            yaw=uav.pose.yaw,
            gimbal_pitch=sensors.pitch,
            detections=detect(sensors.intrinsics, cam, world, sensors.channel, rng),
            range_down=range_down(uav.pose, world),
        )

    return observe


def ball_mission(plan, config: BallConfig | None = None, clock_limit: float = 900.0) -> BallMission:
    return BallMission(plan, config, clock_limit)


TRACE_HEADER = ["t", "u", "v", "pass"]


@dataclass
class BallRun:
    catches: int
    per_period: list  # minimum net-to-ball distance in each full ball period
    passes: int
    trace: list

    @property
    def final_closest(self) -> float:
        return self.per_period[-1]


def receding_ball_world(seed: int, lateral=(2.5, 4.0), below=(1.0, 2.0), standoff: float = 3.0):
    """Ball path rotated so its crossing branch runs along +x; the UAV hovers
    behind the crossing, offset to the side and below, facing +x.  Each lap
    the ball comes from behind, passes over the UAV and recedes ahead of it.
    """
    streams = Streams(seed)
    rng = streams["scenario"]
    ball = TargetSpec("ball", (0.0, 0.0, 10.0), id="ball", heading=-np.pi / 4)
    p0 = np.array([-standoff + rng.normal(0.0, 0.5), rng.uniform(*lateral), 10.0 - rng.uniform(*below)])
    world = make_world(p0, yaw=0.0, targets=[ball], rng=streams["world"])
    return world, streams


def run_receding_ball(seed: int, clock_limit: float = 110.0, centroid_sigma: float = 2.0, k_ball: float | None = None) -> BallRun:
    world, streams = receding_ball_world(seed)
    p0 = world.uav.pose.position.copy()
    params = PursuitParams() if k_ball is None else PursuitParams(k_ball=k_ball)
    machine = BallMission([p0], BallConfig(altitude=p0[2], heading=0.0, params=params, ball_period=ball_period(world.targets[0].spec)), clock_limit)
    sensors = BallSensors(channel=DetectorChannel(classes=("ball",), centroid_sigma=centroid_sigma))
    net = np.asarray(world.config.net_offset)
    dists = []

    def track(w, m):
        dists.append(float(np.linalg.norm(w.uav.pose.position + net - w.targets[0].position)))
        return w.time >= clock_limit - 1e-9

    res = run_episode(world, machine, ball_observer(sensors, streams), stop_when=track, record=False)
    n = max(1, int(round(ball_period(world.targets[0].spec) / DT)))
    per = [min(dists[i : i + n]) for i in range(0, len(dists) - n + 1, n)]
    return BallRun(res.count("CATCH"), per, machine.passes, machine.trace)
