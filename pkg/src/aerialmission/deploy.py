"""Automated startup sequencing against scripted, simulated devices.

A plan is a list of :class:`StartupStep` run one at a time in dependency
order on a simulated clock.  Blocking steps wait for their condition (a
device registering, a service coming up, all required streams alive) or
time out; a failed step stops everything downstream.  The logger and the
mission are launched back to back without blocking on each other, and
afterwards the watchdog and logger keep observing the streams, the
autonomous-mode switch and the arm state until the observation window ends.

Everything is driven by a :class:`DeviceScript`, so identical scripts
replay to identical timelines.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

KINDS = (
    "wait_for_device",
    "enable_flags",
    "start_service",
    "fixed_sleep",
    "launch_sensors",
    "watchdog_gate",
    "start_detector",
    "start_logger",
    "start_mission",
)
PHASES = ("booting", "waiting_streams", "streams_ok", "failed", "mission_running")
INDICATOR = {
    "booting": ("white", "blink"),
    "waiting_streams": ("yellow", "blink"),
    "streams_ok": ("green", "solid"),
    "failed": ("red", "solid"),
    "mission_running": ("blue", "solid"),
}
DEFAULT_TIMEOUT = 30.0
DEBOUNCE = 1.0
DT = 0.05


class PlanError(Exception):
    pass


@dataclass(frozen=True)
class StartupStep:
    name: str
    kind: str
    timeout: float = DEFAULT_TIMEOUT
    dependencies: tuple = ()
    target: str = ""  # device, service or detector name
    duration: float = 0.0  # fixed_sleep length
    streams: tuple = ()  # watchdog_gate: required streams

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlanError(f"unknown step kind {self.kind}")
        if self.timeout <= 0 or self.duration < 0:
            raise PlanError(f"step {self.name}: timeout must be positive")
        object.__setattr__(self, "dependencies", tuple(self.dependencies))
        object.__setattr__(self, "streams", tuple(self.streams))


# -- planning --------------------------------------------------------------------------------


def _find_cycle(steps: list) -> list:
    deps = {s.name: s.dependencies for s in steps}
    colour = {}
    stack = []

    def visit(n):
        colour[n] = 1
        stack.append(n)
        for d in deps.get(n, ()):
            if colour.get(d) == 1:
                return stack[stack.index(d) :] + [d]
            if colour.get(d) is None:
                found = visit(d)
                if found:
                    return found
        colour[n] = 2
        stack.pop()
        return None

    for s in steps:
        if colour.get(s.name) is None:
            found = visit(s.name)
            if found:
                return found
    return []


def sequence_plan(steps) -> list:
    """Topological order, choosing the earliest ready step in input order each time."""
    steps = list(steps)
    names = [s.name for s in steps]
    if len(set(names)) != len(names):
        raise PlanError("duplicate step names")
    for s in steps:
        for d in s.dependencies:
            if d not in names:
                raise PlanError(f"step {s.name} depends on unknown step {d}")
    done, order = set(), []
    pending = list(steps)
    while pending:
        ready = next((s for s in pending if all(d in done for d in s.dependencies)), None)
        if ready is None:
            raise PlanError("dependency cycle: " + " -> ".join(_find_cycle(pending)))
        order.append(ready)
        done.add(ready.name)
        pending.remove(ready)
    return order


MISSION_SENSORS = {
    "balloon": ("odometry", "gimbal_camera"),
    "ball": ("odometry", "gimbal_camera"),
    "pickplace": ("odometry", "gimbal_camera", "short_laser"),
    "firefight": ("odometry", "thermal_camera", "forward_laser"),
}


def default_plan(mission: str = "balloon", pause: float = 3.0) -> list:
    """Startup order: device wait, flags, core service, 2 s sleep, SDK and core stack,
    pause, sensors, stream watchdog, detector (camera-detection missions only), logger, mission."""
    if mission not in MISSION_SENSORS:
        raise PlanError(f"unknown mission {mission}")
    steps = [
        StartupStep("wait_serial", "wait_for_device", target="dji_serial"),
        StartupStep("enable_flags", "enable_flags", dependencies=("wait_serial",), target="dji_serial"),
        StartupStep("roscore", "start_service", dependencies=("enable_flags",), target="roscore"),
        StartupStep("roscore_sleep", "fixed_sleep", dependencies=("roscore",), duration=2.0),
        StartupStep("sdk_core_stack", "start_service", dependencies=("roscore_sleep",), target="dji_sdk"),
        StartupStep("stack_pause", "fixed_sleep", dependencies=("sdk_core_stack",), duration=pause),
        StartupStep("sensors", "launch_sensors", dependencies=("stack_pause",), target="dji_sdk"),
        StartupStep("watchdog", "watchdog_gate", dependencies=("sensors",), streams=MISSION_SENSORS[mission]),
    ]
    last = "watchdog"
    if mission != "firefight":
        steps.append(StartupStep("detector", "start_detector", dependencies=("watchdog",), target="detector"))
        last = "detector"
    steps.append(StartupStep("logger", "start_logger", dependencies=(last,)))
    steps.append(StartupStep("mission", "start_mission", dependencies=("logger",)))
    return steps


# -- scripted devices ------------------------------------------------------------------------


@dataclass
class StreamScript:
    rate: float  # Hz
    producer: str = "sensors"  # "sensors" (launch_sensors step) or a service name
    delay: float = 0.5  # first message this long after the producer starts
    gaps: list = field(default_factory=list)  # absolute [start, end) intervals with no messages
    stop: float | None = None  # absolute time the stream dies

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("stream rate must be positive")
        self.gaps = [tuple(g) for g in self.gaps]


@dataclass
class DeviceScript:
    devices: dict = field(default_factory=lambda: {"dji_serial": 1.0})  # name -> registration time (None: never)
    services: dict = field(default_factory=lambda: {"roscore": 0.5, "dji_sdk": 1.5, "detector": 2.0})  # start-up delays
    service_deaths: dict = field(default_factory=dict)  # name -> absolute death time
    streams: dict = field(default_factory=dict)  # name -> StreamScript
    auto_mode: float | None = None  # absolute time the RC switches to autonomous mode
    armed: float | None = None  # absolute time the vehicle is armed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["streams"] = {k: asdict(v) for k, v in self.streams.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceScript":
        d = dict(d)
        d["streams"] = {k: StreamScript(**v) for k, v in d.get("streams", {}).items()}
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeviceScript":
        return cls.from_dict(json.loads(text))


def healthy_script(mission: str = "balloon") -> DeviceScript:
    streams = {"odometry": StreamScript(50.0, producer="dji_sdk", delay=1.0)}
    for name in MISSION_SENSORS[mission][1:]:
        streams[name] = StreamScript(30.0 if "camera" in name else 20.0, delay=1.5)
    return DeviceScript(streams=streams, auto_mode=20.0, armed=22.0)


# -- stream health and watchdog --------------------------------------------------------------


@dataclass(frozen=True)
class StreamHealth:
    name: str
    age: float  # s since the last message (inf when none yet)
    rate: float  # required Hz

    @property
    def status(self) -> str:
        if math.isinf(self.age):
            return "absent"
        return "alive" if self.age < 2.0 / self.rate else "stale"


def _last_message(s: StreamScript, first: float, now: float, stop: float = math.inf) -> float | None:
    """Time of the most recent message at or before ``now`` (None if none yet).

    Messages fall at ``first + k / rate`` except inside gaps and after ``stop``.
    """
    end = min(now, stop - 1e-9)
    while True:
        gap = next(((a, b) for a, b in s.gaps if a <= end < b), None)
        if gap is None:
            if end < first - 1e-9:
                return None
            t = first + math.floor((end - first) * s.rate + 1e-9) / s.rate
            gap = next(((a, b) for a, b in s.gaps if a <= t < b), None)
            if gap is None:
                return t
        end = gap[0] - 1e-9


class Watchdog:
    """Aggregate stream liveness with a debounce before declaring failure."""

    def __init__(self, debounce: float = DEBOUNCE):
        self.debounce = debounce
        self.bad_since: dict = {}
        self.ever_ok = False
        self.ok = False

    def tick(self, streams, now: float):
        for s in streams:
            if s.status == "alive":
                self.bad_since.pop(s.name, None)
            else:
                self.bad_since.setdefault(s.name, now)
        all_alive = all(s.status == "alive" for s in streams)
        if all_alive:
            self.ok = True
        elif self.ok and any(now - t >= self.debounce - 1e-9 for t in self.bad_since.values()):
            self.ok = False
        self.ever_ok |= self.ok
        phase = "streams_ok" if self.ok else ("failed" if self.ever_ok else "waiting_streams")
        return self.ok, phase


def watchdog_tick(watchdog: Watchdog, streams, now: float):
    return watchdog.tick(streams, now)


# -- running ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class TimelineEntry:
    step: str
    start: float
    end: float
    outcome: str  # ok | timeout | failed


@dataclass
class SequenceResult:
    timeline: list = field(default_factory=list)
    indicators: list = field(default_factory=list)  # (t, phase) on every change
    events: list = field(default_factory=list)  # (t, kind, detail)
    skipped: list = field(default_factory=list)

    @property
    def phase(self) -> str:
        return self.indicators[-1][1]

    def phases(self) -> list:
        return [p for _, p in self.indicators]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["step", "start", "end", "outcome"])
        for e in self.timeline:
            w.writerow([e.step, f"{e.start:.2f}", f"{e.end:.2f}", e.outcome])
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"timeline": [asdict(e) for e in self.timeline], "indicators": self.indicators, "events": self.events, "skipped": self.skipped},
            sort_keys=True,
        )


class _Sim:
    def __init__(self, script: DeviceScript, dt: float):
        self.script = script
        self.dt = dt
        self.k = 0
        self.launched: dict = {}  # service / "sensors" -> launch time
        self.up: dict = {}  # service -> time it came up

    @property
    def now(self) -> float:
        return round(self.k * self.dt, 9)

    def advance(self):
        self.k += 1

    def device_ready(self, name: str) -> bool:
        t = self.script.devices.get(name)
        return t is not None and self.now >= t - 1e-9

    def service_alive(self, name: str) -> bool:
        t = self.up.get(name)
        if t is None or self.now < t - 1e-9:
            return False
        death = self.script.service_deaths.get(name)
        return death is None or self.now < death - 1e-9

    def launch_service(self, name: str):
        self.launched[name] = self.now
        delay = self.script.services.get(name)
        if delay is not None:
            self.up[name] = round(self.now + delay, 9)

    def stream_health(self, names) -> list:
        out = []
        for n in names:
            s = self.script.streams.get(n)
            if s is None:
                out.append(StreamHealth(n, math.inf, 1.0))
                continue
            producer = self.launched.get("sensors") if s.producer == "sensors" else self.up.get(s.producer)
            stop = min(math.inf if s.stop is None else s.stop, self.script.service_deaths.get(s.producer, math.inf))
            last = None if producer is None else _last_message(s, producer + s.delay, self.now, stop)
            out.append(StreamHealth(n, math.inf if last is None else round(self.now - last, 9), s.rate))
        return out

    def flag(self, t: float | None) -> bool:
        return t is not None and self.now >= t - 1e-9


def run_sequence(plan, script: DeviceScript, observe: float = 10.0, dt: float = DT) -> SequenceResult:
    """Execute ``plan`` on the simulated clock; see the module docstring."""
    order = sequence_plan(plan)
    sim = _Sim(script, dt)
    res = SequenceResult()
    gate_streams: tuple = ()
    watchdog = Watchdog()
    state = {"phase": None, "logging": False, "logger": False, "mission": False, "takeoff": False}

    def indicate(phase):
        if phase != state["phase"]:
            state["phase"] = phase
            res.indicators.append((sim.now, phase))

    def observers():
        # logically concurrent observers, evaluated once per tick
        if gate_streams and state["mission"]:
            ok, _ = watchdog.tick(sim.stream_health(gate_streams), sim.now)
            indicate("mission_running" if ok else "failed")
        if state["logger"]:
            want = sim.flag(script.auto_mode) and sim.flag(script.armed)
            if want != state["logging"]:
                state["logging"] = want
                res.events.append((sim.now, "LOGGING_STARTED" if want else "LOGGING_STOPPED", ""))
        if state["mission"] and not state["takeoff"] and sim.flag(script.armed):
            state["takeoff"] = True
            res.events.append((sim.now, "TAKEOFF_COMMANDED", ""))

    indicate("booting")
    failed_at = None
    for i, step in enumerate(order):
        start = sim.now
        outcome = None
        if step.kind == "fixed_sleep":
            end_k = sim.k + int(round(step.duration / dt))
            while sim.k < end_k:
                sim.advance()
                observers()
            outcome = "ok"
        elif step.kind == "enable_flags":
            outcome = "ok" if sim.device_ready(step.target) else "failed"
        elif step.kind == "launch_sensors":
            if step.target and not sim.service_alive(step.target):
                outcome = "failed"  # service probe says the SDK has died
            else:
                sim.launched["sensors"] = sim.now
                outcome = "ok"
        elif step.kind == "start_logger":
            state["logger"] = True
            res.events.append((sim.now, "LOGGER_IDLE", ""))
            outcome = "ok"
        elif step.kind == "start_mission":
            state["mission"] = True
            indicate("mission_running")
            outcome = "ok"
        else:
            if step.kind in ("start_service", "start_detector"):
                sim.launch_service(step.target)
            if step.kind == "watchdog_gate":
                gate_streams = step.streams
                indicate("waiting_streams")
            while True:
                if step.kind == "wait_for_device":
                    done = sim.device_ready(step.target)
                elif step.kind == "watchdog_gate":
                    done, _ = watchdog.tick(sim.stream_health(step.streams), sim.now)
                else:
                    done = sim.service_alive(step.target)
                if done:
                    outcome = "ok"
                    break
                if sim.now - start >= step.timeout - 1e-9:
                    outcome = "timeout"
                    break
                sim.advance()
                observers()
            if step.kind == "watchdog_gate" and outcome == "ok":
                indicate("streams_ok")
        res.timeline.append(TimelineEntry(step.name, start, sim.now, outcome))
        if outcome != "ok":
            indicate("failed")
            res.events.append((sim.now, "STEP_" + outcome.upper(), step.name))
            res.skipped = [s.name for s in order[i + 1 :]]
            failed_at = sim.now
            break
    if failed_at is None:
        end_k = sim.k + int(round(observe / dt))
        while sim.k < end_k:
            sim.advance()
            observers()
    return res
