"""Stochastic spray cone: how much pumped water lands in a fire target's opening.

Each call samples droplet directions in a cone around the nozzle axis
(the UAV forward direction, tilted by a per-call axis wobble for the
pump's inconsistent stream) and ranges around a nominal throw.  A droplet
counts when its straight path meets the target face within the opening
radius before its range runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TANK_CAPACITY = 1.5  # L


@dataclass
class PumpState:
    remaining: float = TANK_CAPACITY  # L
    flow_rate: float = 0.1  # L/s
    stuck: bool = False  # leakage stopper never ejected: no flow at all
    delivered: float = 0.0  # mL into the opening so far

    def __post_init__(self):
        if self.remaining < 0 or self.flow_rate <= 0:
            raise ValueError("invalid pump state")

    @property
    def empty(self) -> bool:
        return self.remaining <= 1e-12


@dataclass
class SprayCone:
    spread: float = 0.06  # rad, per-droplet angular sigma about the axis
    wobble: float = 0.04  # rad, per-tick axis sigma
    throw: float = 2.0  # m, nominal range
    throw_sigma: float = 0.3
    droplets: int = 200
    nozzle: tuple = (0.15, 0.0, 0.0)  # body frame offset

    def __post_init__(self):
        if min(self.spread, self.wobble, self.throw_sigma) < 0 or self.throw <= 0 or self.droplets < 1:
            raise ValueError("invalid cone")


def nozzle_position(uav_pose, cone: SprayCone) -> np.ndarray:
    c, s = math.cos(uav_pose.yaw), math.sin(uav_pose.yaw)
    ox, oy, oz = cone.nozzle
    return uav_pose.position + np.array([c * ox - s * oy, s * ox + c * oy, oz])


def _directions(yaw: float, dyaw, dpitch) -> np.ndarray:
    a = yaw + dyaw
    cp = np.cos(dpitch)
    return np.stack([cp * np.cos(a), cp * np.sin(a), np.sin(dpitch)], axis=-1)


def spray_water(uav_pose, fire, pump: PumpState, duration: float, cone: SprayCone | None = None, rng=None):
    """Run the pump for ``duration`` s; returns (mL in the opening, pump).

    ``fire`` is a fire :class:`TargetState` (its position is the opening
    centre, ``spec.normal`` the outward face normal).  The pump state is
    updated in place.
    """
    cone = cone or SprayCone()
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if pump.stuck or pump.empty or duration == 0:
        return 0.0, pump
    volume = min(pump.flow_rate * duration, pump.remaining)
    pump.remaining = max(pump.remaining - volume, 0.0)
    n = cone.droplets
    if rng is None:
        dyaw = np.zeros(n)
        dpitch = np.zeros(n)
        ranges = np.full(n, cone.throw)
    else:
        wy, wp = rng.normal(0.0, cone.wobble, 2) if cone.wobble > 0 else (0.0, 0.0)
        dyaw = wy + (rng.normal(0.0, cone.spread, n) if cone.spread > 0 else np.zeros(n))
        dpitch = wp + (rng.normal(0.0, cone.spread, n) if cone.spread > 0 else np.zeros(n))
        ranges = cone.throw + (rng.normal(0.0, cone.throw_sigma, n) if cone.throw_sigma > 0 else np.zeros(n))
    d = _directions(uav_pose.yaw, dyaw, dpitch)
    o = nozzle_position(uav_pose, cone)
    normal = np.asarray(fire.spec.normal, dtype=float)
    centre = np.asarray(fire.position, dtype=float)
    denom = d @ normal
    hit = denom < -1e-9
    t = np.where(hit, ((centre - o) @ normal) / np.where(hit, denom, -1.0), np.inf)
    hit &= (t > 0) & (t <= ranges)
    pts = o + np.where(hit, t, 0.0)[:, None] * d
    inside = hit & (np.linalg.norm(pts - centre, axis=1) <= fire.spec.opening_diameter / 2.0)
    ml = 1000.0 * volume * float(np.count_nonzero(inside)) / n
    pump.delivered += ml
    return ml, pump
