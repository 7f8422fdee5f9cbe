"""Generic mission executive: states, prioritized guarded transitions, timers, audit log.

A concrete mission subclasses :class:`MissionMachine`, lists its
``TRANSITIONS`` and implements ``guard_<name>(obs)`` predicates and
``run_<State>(obs, dt)`` behaviours (optionally ``enter_<State>(obs)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .world import Command

ANY = "*"


class MachineError(Exception):
    """Raised at construction for malformed transition tables."""


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: str
    priority: int = 0


@dataclass
class MissionState:
    name: str
    entered_at: float = 0.0


@dataclass
class MissionClock:
    elapsed: float = 0.0
    limit: float = 900.0
    battery: float = 900.0

    @property
    def expired(self) -> bool:
        return self.elapsed >= self.limit - 1e-9 or self.battery <= 1e-9


@dataclass(frozen=True)
class AuditEvent:
    t: float
    mission: str
    source: str
    target: str
    guard: str
    details: str = ""

    def row(self):
        return [f"{self.t:.3f}", self.mission, self.source, self.target, self.guard, self.details]


EVENT_HEADER = ["t", "mission", "from", "to", "guard", "details"]


@dataclass
class Observations:
    """What the mission logic may read each tick (no ground truth)."""

    t: float
    position: np.ndarray
    velocity: np.ndarray
    yaw: float
    gimbal_pitch: float = 0.0
    gps_ok: bool = True
    detections: list = field(default_factory=list)
    fires: list = field(default_factory=list)
    corners: list | None = None
    corner_depths: list | None = None
    range_forward: object = None
    range_down: object = None
    range_short: object = None
    extra: dict = field(default_factory=dict)


class MissionMachine:
    NAME = "mission"
    STATES: tuple = ()
    TERMINAL: tuple = ("Landed",)
    INITIAL = "TakeOff"
    TRANSITIONS: list = []

    def __init__(self, clock_limit: float = 900.0, battery: float | None = None):
        self.clock = MissionClock(0.0, clock_limit, battery if battery is not None else clock_limit)
        self.battery_capacity = self.clock.battery
        self.transitions = self.build_transitions()
        self._validate()
        self.state = MissionState(self.INITIAL, 0.0)
        self.events: list = [AuditEvent(0.0, self.NAME, "", self.INITIAL, "init")]
        self.timers: dict = {}
        self.notes: list = []  # (t, kind, details) non-transition audit lines

    # -- construction -------------------------------------------------------
    def build_transitions(self) -> list:
        base = [Transition(s, "Land", "clock_expired", -100) for s in self.STATES if s not in ("Land",) + tuple(self.TERMINAL)]
        return base + list(self.TRANSITIONS)

    def _validate(self):
        names = set(self.STATES)
        for t in self.transitions:
            if t.source != ANY and t.source not in names:
                raise MachineError(f"unknown source state {t.source}")
            if t.target not in names:
                raise MachineError(f"unknown target state {t.target}")
            if not hasattr(self, f"guard_{t.guard}"):
                raise MachineError(f"missing guard {t.guard}")
        for s in self.STATES:
            if s in self.TERMINAL:
                continue
            if not any(t.source in (s, ANY) for t in self.transitions):
                raise MachineError(f"dead-end state {s}")
            if not hasattr(self, f"run_{s}"):
                raise MachineError(f"missing behaviour for {s}")

    # -- helpers --------------------------------------------------------------
    @property
    def name(self) -> str:
        return self.state.name

    @property
    def done(self) -> bool:
        return self.state.name in self.TERMINAL

    def time_in_state(self, obs) -> float:
        return obs.t - self.state.entered_at

    def note(self, t, kind, details=""):
        self.notes.append((t, kind, details))
        self.events.append(AuditEvent(t, self.NAME, self.state.name, self.state.name, kind, details))

    def guard_clock_expired(self, obs) -> bool:
        return self.clock.expired

    def enabled(self, name):
        return sorted((t for t in self.transitions if t.source in (name, ANY)), key=lambda t: t.priority)

    # -- tick -------------------------------------------------------------------
    def tick(self, obs: Observations, dt: float):
        self.clock.elapsed = obs.t
        self.clock.battery = max(self.battery_capacity - obs.t, 0.0)
        fired = None
        if not self.done:
            for t in self.enabled(self.state.name):
                if t.source == ANY and t.target == self.state.name:
                    continue
                if getattr(self, f"guard_{t.guard}")(obs):
                    fired = t
                    break
        if fired is not None:
            self.transition(obs, fired.target, fired.guard, self.transition_details(fired, obs))
        if self.done:
            return self.state, Command(), fired
        cmd = getattr(self, f"run_{self.state.name}")(obs, dt)
        if not isinstance(cmd, Command):
            vel, yr = cmd
            cmd = Command(np.asarray(vel, dtype=float), float(yr))
        return self.state, cmd, fired

    def transition(self, obs, target, guard, details=""):
        src = self.state.name
        exit_hook = getattr(self, f"exit_{src}", None)
        if exit_hook:
            exit_hook(obs)
        self.state = MissionState(target, obs.t)
        self.events.append(AuditEvent(obs.t, self.NAME, src, target, guard, details))
        hook = getattr(self, f"enter_{target}", None)
        if hook:
            hook(obs)

    def transition_details(self, t: Transition, obs) -> str:
        return ""

    # -- shared behaviours --------------------------------------------------
    takeoff_rate = 1.0
    land_rate = 1.0

    def run_Land(self, obs, dt):
        return np.array([0.0, 0.0, -self.land_rate]), 0.0

    def guard_landed(self, obs) -> bool:
        alt = obs.range_down.distance if obs.range_down is not None and obs.range_down.distance is not None else obs.position[2]
        return alt <= 0.05

    def to_dot(self) -> str:
        lines = [f"digraph {self.NAME} {{"]
        for s in self.STATES:
            shape = "doublecircle" if s in self.TERMINAL else "box"
            lines.append(f'  "{s}" [shape={shape}];')
        for t in self.transitions:
            srcs = [s for s in self.STATES if s not in self.TERMINAL] if t.source == ANY else [t.source]
            for s in srcs:
                lines.append(f'  "{s}" -> "{t.target}" [label="{t.guard}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def fsm_tick(machine: MissionMachine, observations: Observations, dt: float):
    """Evaluate guards in priority order, fire at most one transition, run the active state."""
    state, cmd, fired = machine.tick(observations, dt)
    return state, cmd, ([machine.events[-1]] if fired is not None else [])
