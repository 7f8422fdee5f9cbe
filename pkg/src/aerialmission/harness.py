"""Scenario runs, Monte Carlo sweeps, subtask tallies and artifact export.

A run first replays the scripted deployment sequence; the mission only
starts if the sequencer reaches its ``mission`` step.  Tallies are computed
from the merged event log alone (plus the scenario), so re-tallying a stored
log reproduces the record exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .deploy import DeviceScript, default_plan, healthy_script, run_sequence
from .fsm import EVENT_HEADER
from .missions.ball import BallConfig, BallMission, BallSensors, ball_observer
from .missions.balloon import BalloonConfig, BalloonMission, BalloonSensors, balloon_observer
from .missions.common import EpisodeResult, run_episode
from .missions.firefight import FireConfig, FireSensors, firefight_setup
from .missions.pickplace import DescentDrift, PickPlaceConfig, PickPlaceMission, PickSensors, pick_observer
from .planning import ArenaSpec, lawnmower_plan, long_side_heading, square_loiter_plan
from .rng import Streams
from .scenario import apply_overrides, scenario_hash, validate
from .sensing import DetectorChannel, RangeConfig, ThermalConfig
from .spray import PumpState
from .world import Building, TargetSpec, WorldConfig, ball_period, make_world

SUCCESS = {"balloon": "all_popped", "ball": "caught", "pickplace": "all_placed", "firefight": "extinguished"}
TALLY_NAMES = {
    "balloon": ("Target identification", "Pop sequence", "Recover & pop"),
    "ball": ("Target identification", "Interception"),
    "pickplace": ("Block detection", "Visual servoing convergence", "Single-attempt block pickup", "Re-attempt pickup", "Block placement"),
    "firefight": ("Wall following", "Fire detection", "Fire extinguishing"),
}
TRAJECTORY_HEADER = ["t", "x", "y"]
ALTITUDE_HEADER = ["t", "z", "state"]
TRACE_HEADER = ["t", "u", "v", "pass"]
DEPLOY_HEADER = ["step", "start", "end", "outcome"]
BLOCK_ON_GROUND_Z = 0.2  # resting height of a block top on the ground


class RunAborted(RuntimeError):
    """A run hit a runtime contract violation; the partial event log was flushed first."""


# -- building a run -------------------------------------------------------------------------


def _targets(sc) -> list:
    residual = sc["faults"].get("residual_hot_fires", 0)
    out = []
    fires = 0
    for i, t in enumerate(sc["targets"]):
        kw = {k: v for k, v in t.items() if k not in ("kind", "anchor", "id")}
        for k in ("extents", "normal", "hot_offset"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if t["kind"] == "fire":
            if fires < residual:
                kw["active"] = False
                kw["hot_inactive"] = True
            fires += 1
        out.append(TargetSpec(t["kind"], tuple(t["anchor"]), id=t.get("id") or f"{t['kind']}{i}", **kw))
    return out


def fire_states(sc) -> dict:
    """Fire id -> active flag after the residual-hot fault is applied."""
    return {s.id: s.active for s in _targets(sc) if s.kind == "fire"}


def _mission_config(cls, sc, **defaults):
    kw = dict(defaults)
    for k, v in sc["mission_config"].items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    return cls(**kw)


def _world_config(sc, **extra) -> WorldConfig:
    kw = dict(sc["world"])
    if "wind_mean" in kw:
        kw["wind_mean"] = tuple(kw["wind_mean"])
    return WorldConfig(**kw, **extra)


def _arena(sc) -> ArenaSpec:
    a = sc["arena"]
    kw = {"sweep_width": a["sweep_width"]} if "sweep_width" in a else {}
    return ArenaSpec.rectangle(a["origin"][0], a["origin"][1], a["size"][0], a["size"][1], **kw)


def _start(sc, position, yaw):
    uav = sc["uav"]
    return tuple(uav.get("position", position)), float(uav.get("yaw", yaw))


def _channel(sc, **kw) -> DetectorChannel:
    f = sc["faults"]
    return DetectorChannel(fn_rate=f.get("detector_fn", 0.0), fp_rate=f.get("detector_fp", 0.0), centroid_sigma=sc["sensing"].get("centroid_sigma", 0.0), **kw)


@dataclass
class Setup:
    world: object
    machine: object
    observe: object
    stop_when: object = None
    complete: object = None  # (world, machine) -> bool, ends the mission early when set
    finish: object = None  # mission-specific post-processing of the episode result
    trace: object = None  # () -> rows of (t, u, v, pass)


def _balloon(sc, streams) -> Setup:
    plan = lawnmower_plan(_arena(sc)).waypoints
    p0, p1 = plan[0], plan[1]
    pos, yaw = _start(sc, (p0[0], p0[1], 0.0), math.atan2(p1[1] - p0[1], p1[0] - p0[0]))
    world = make_world(pos, yaw, _targets(sc), _world_config(sc), rng=streams["world"], gimbal_offset_yaw=math.radians(sc["faults"].get("gimbal_offset_deg", 0.0)))
    machine = BalloonMission(plan, _mission_config(BalloonConfig, sc), sc["clock_limit"])
    observe = balloon_observer(BalloonSensors(channel=_channel(sc)), streams)
    balloons = [t for t in world.targets if t.spec.kind == "balloon"]
    return Setup(world, machine, observe, complete=lambda w, m: bool(balloons) and not any(t.alive for t in balloons))


def _ball(sc, streams) -> Setup:
    arena = _arena(sc)
    altitudes = sc["arena"].get("altitudes", [10.0, 12.0])
    plan = square_loiter_plan(arena, altitudes)
    pos, yaw = _start(sc, (plan[0][0], plan[0][1], 0.0), long_side_heading(arena))
    targets = _targets(sc)
    world = make_world(pos, yaw, targets, _world_config(sc), rng=streams["world"], gimbal_offset_yaw=math.radians(sc["faults"].get("gimbal_offset_deg", 0.0)))
    cfg = _mission_config(BallConfig, sc, altitude=float(altitudes[0]), heading=long_side_heading(arena), ball_period=ball_period(targets[0]))
    machine = BallMission(plan, cfg, sc["clock_limit"])
    observe = ball_observer(BallSensors(channel=_channel(sc, classes=("ball",))), streams)
    return Setup(world, machine, observe, complete=lambda w, m: any(e[1] == "CATCH" for e in w.events), trace=lambda: machine.trace)


def _pickplace(sc, streams) -> Setup:
    site = tuple(sc["arena"]["origin"]) if "arena" in sc else (0.0, 0.0)
    st = sc["structure"]
    (ax, ay), (bx, by) = st["segment"]
    kw = {k: st[k] for k in ("height", "channel_width") if k in st}
    structure = TargetSpec("structure", ((ax + bx) / 2, (ay + by) / 2, 0.0), id="structure", segment=((ax, ay), (bx, by)), **kw)
    pos, yaw = _start(sc, (site[0], site[1] - 2.0, 0.0), 0.0)
    blocks = _targets(sc)
    world = make_world(pos, yaw, blocks + [structure], _world_config(sc, manipulator=True), rng=streams["world"])
    machine = PickPlaceMission(site, structure, _mission_config(PickPlaceConfig, sc), sc["clock_limit"], rng=streams["mission"])
    drift = DescentDrift(sc["faults"].get("descent_drift_sigma", 0.0), streams["disturbance"])
    loss = sc["faults"].get("track_loss", [])
    base = pick_observer(PickSensors(track_loss=tuple(loss[0]) if loss else ()), structure)

    def observe(w, m):
        drift.apply(w, m)
        return base(w, m)

    n = len(blocks)
    return Setup(world, machine, observe, complete=lambda w, m: n > 0 and sum(1 for e in w.events if e[1] == "RELEASE") >= n)


def _firefight(sc, streams) -> Setup:
    b = sc["building"]
    x0, y0, x1, y1 = b["corners"]
    windows = [[tuple(w) for w in wall] for wall in b.get("windows", [[], [], [], []])]
    building = Building.rectangle(x0, y0, x1, y1, b["height"], windows)
    pos, yaw = _start(sc, (x1 + 1.5, y0 + 0.8, 0.0), math.pi)
    world = make_world(pos, yaw, _targets(sc), _world_config(sc), building=building, rng=streams["world"])
    f, s = sc["faults"], sc["sensing"]
    sensors = FireSensors(
        # residual-hot fires read as hot as live ones, so a threshold detector cannot tell them apart
        thermal=ThermalConfig(noise_sigma=s.get("thermal_noise", 0.0), **({"warm": ThermalConfig().fire} if f.get("residual_hot_fires", 0) else {})),
        ranger=RangeConfig(sigma=s.get("range_sigma", 0.02), p_fault=f.get("range_fault_prob", 0.0)),
        gps_low=tuple(tuple(iv) for iv in f.get("low_gps_intervals", [])),
    )
    p_stuck = f.get("stuck_stopper_prob", 0.0)
    pump = PumpState(stuck=bool(p_stuck > 0 and streams["faults"].random() < p_stuck))
    machine, observe, monitor, finish = firefight_setup(world, streams, _mission_config(FireConfig, sc), sensors, pump, clock_limit=sc["clock_limit"])

    def done(res):
        run = finish(res)
        outcome = run.outcome
        if machine.sprays:
            fires = [t for t in world.targets if t.spec.kind == "fire"]
            target = min(fires, key=lambda t: float(np.linalg.norm(t.position - world.uav.pose.position))) if fires else None
            world.events.append((world.time, "WATER_DELIVERED", target.spec.id if target else "", f"{run.delivered_ml:.3f}"))
            if outcome == "extinguished" and target is not None and not target.spec.active:
                outcome = "residual_hot_sprayed"
        return outcome

    return Setup(world, machine, observe, stop_when=monitor, finish=done)


BUILDERS = {"balloon": _balloon, "ball": _ball, "pickplace": _pickplace, "firefight": _firefight}


# -- tallies from the event log ----------------------------------------------------------------


def _parse(rows):
    """Split event rows into transitions, notes and world events."""
    trans, notes, world = [], [], []
    for r in rows[1:] if rows and rows[0] == EVENT_HEADER else rows:
        t = float(r[0])
        if r[1] == "world":
            tid, _, details = r[5].partition(" ")
            world.append((t, r[4], tid, details))
        elif r[1] == "harness":
            continue
        elif r[2] == r[3]:
            notes.append((t, r[4], r[5]))
        elif r[2]:
            trans.append((t, r[2], r[3], r[4]))
    return trans, notes, world


def _intervals(trans, state):
    """(start, end, next state) for each visit of ``state``."""
    out = []
    for i, (t, _, dst, _) in enumerate(trans):
        if dst == state:
            nxt = next(((t2, d2) for t2, s2, d2, _ in trans[i + 1 :] if s2 == state), (math.inf, None))
            out.append((t, nxt[0], nxt[1]))
    return out


def tally_events(sc: dict, rows) -> dict:
    """Subtask tallies ``name -> [successes, trials]`` from an event log."""
    mission = sc["mission"]
    trans, notes, world = _parse(rows)
    kinds = lambda kind: [w for w in world if w[1] == kind]  # noqa: E731
    if mission == "balloon":
        n_balloons = sum(1 for t in sc["targets"] if t["kind"] == "balloon")
        engaged = {w[2] for w in world if w[1] in ("POP", "POLE_CONTACT", "DOWNDRAFT_MISS")}
        pops = [w[0] for w in kinds("POP")]
        pursuits = [(a, b, nxt, any(a <= t <= b for t in pops)) for a, b, nxt in _intervals(trans, "PursueTarget")]
        recover = [i for i, p in enumerate(pursuits) if not p[3] and p[2] == "RecoverToGlobalSearchPosition"]
        recovered = [i for i in recover if i + 1 < len(pursuits) and pursuits[i + 1][3]]
        return {
            "Target identification": [min(len(engaged), n_balloons), n_balloons],
            "Pop sequence": [sum(p[3] for p in pursuits), len(pursuits)],
            "Recover & pop": [len(recovered), len(recover)],
        }
    if mission == "ball":
        found = any(s == "GlobalSearch" and d == "LosServoing" for _, s, d, _ in trans)
        passes = sum(1 for _, _, d, _ in trans if d == "LosServoing")
        return {"Target identification": [int(found), 1], "Interception": [len(kinds("CATCH")), passes]}
    if mission == "pickplace":
        searches = _intervals(trans, "SearchBlock")
        servos = _intervals(trans, "ServoBlock")
        confirmed = [t for t, _, _, g in trans if g == "pickup_confirmed"]
        recoveries = _intervals(trans, "RecoverToBlock")
        starts = sorted([(r[0], "recover") for r in recoveries] + [(t, "confirm") for t in confirmed])
        redone = [a for a, b in zip(starts, starts[1:]) if a[1] == "recover" and b[1] == "confirm"]
        placed = [w for w in kinds("RELEASE") if float(w[3].split(",")[2]) > BLOCK_ON_GROUND_Z + 0.05]
        return {
            "Block detection": [sum(1 for s in searches if s[2] == "ServoBlock"), sum(1 for s in searches if s[2] is not None)],
            "Visual servoing convergence": [sum(1 for s in servos if s[2] == "DescendOpenLoop"), sum(1 for s in servos if s[2] is not None)],
            "Single-attempt block pickup": [len(confirmed), sum(1 for n in notes if n[1] == "PICKUP_ATTEMPT")],
            "Re-attempt pickup": [len(redone), len(recoveries)],
            "Block placement": [len(placed), len(confirmed)],
        }
    active = fire_states(sc)
    followed = any(d == "WallFollow" for _, _, d, _ in trans)
    detected = [n[0] for n in notes if n[1] == "FIRE_DETECTED"]
    localized = [n[0] for n in notes if n[1] == "FIRE_LOCALIZED"]
    good = [t for i, t in enumerate(detected) if any(t <= u < (detected[i + 1] if i + 1 < len(detected) else math.inf) for u in localized)]
    sprays = sum(1 for _, _, d, _ in trans if d == "Spray")
    wet = [w for w in kinds("WATER_DELIVERED") if float(w[3]) > 0 and active.get(w[2], False)]
    return {
        "Wall following": [int(followed and not kinds("WINDOW_ENTRY")), int(followed)],
        "Fire detection": [len(good), len(detected)],
        "Fire extinguishing": [len(wet), sprays],
    }


# -- records -----------------------------------------------------------------------------------


@dataclass
class RunRecord:
    name: str
    mission: str
    scenario_hash: str
    seed: int
    outcome: str
    tallies: dict
    deployment_phase: str
    mission_start: float | None  # deployment clock time the mission step completed
    final_time: float
    telemetry: str | None = None  # file names, relative to the record's directory
    events: str | None = None
    deployment: str | None = None
    trace: str | None = None
    root: str | None = field(default=None, repr=False, compare=False)
    event_rows: list = field(default_factory=list, repr=False, compare=False)

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS[self.mission]

    @property
    def exit_code(self) -> int:
        return 0 if self.success else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["root"], d["event_rows"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path) as fh:
            rec = cls(**json.load(fh))
        rec.root = os.path.dirname(os.path.abspath(path))
        return rec

    def path(self, name) -> str:
        return os.path.join(self.root, name)


def _csv_text(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0] if rows else [], rows[1:]


def run_scenario(sc: dict, out: str | None = None) -> RunRecord:
    """Deployment sequence, then the mission; artifacts go to ``out`` when given."""
    sc = validate(sc)
    mission = sc["mission"]
    streams = Streams(sc["seed"])
    dep = sc["deployment"]
    script = DeviceScript.from_dict(dep["script"]) if dep.get("script") is not None else healthy_script(mission)
    seq = run_sequence(default_plan(mission), script, observe=dep["observe"]) if dep["enabled"] else None
    started = seq is None or any(e.step == "mission" and e.outcome == "ok" for e in seq.timeline)
    mission_start = None if seq is None else next((e.end for e in seq.timeline if e.step == "mission" and e.outcome == "ok"), None)
    prefix = f"{sc['name']}_seed{sc['seed']}"
    names = {k: f"{prefix}_{k}.csv" for k in ("telemetry", "events", "deployment", "trace")}
    if out is not None:
        os.makedirs(out, exist_ok=True)
        _write(os.path.join(out, names["deployment"]), seq.to_csv() if seq is not None else _csv_text([], DEPLOY_HEADER))

    def flush(header, telemetry, rows, trace):
        if out is None:
            return
        _write(os.path.join(out, names["telemetry"]), _csv_text(telemetry, header))
        _write(os.path.join(out, names["events"]), _csv_text(rows[1:], rows[0]))
        _write(os.path.join(out, names["trace"]), _csv_text(trace, TRACE_HEADER))

    if not started:
        rows = [EVENT_HEADER, ["0.000", "harness", "", "", "DEPLOYMENT_FAILED", seq.phase]]
        flush(["time"], [], rows, [])
        tallies = {k: [0, 0] for k in TALLY_NAMES[mission]}
        outcome, final_time = "deployment_failed", 0.0
    else:
        setup = BUILDERS[mission](sc, streams)
        world, machine = setup.world, setup.machine
        observe = setup.observe
        if sc["stop_on_complete"] and setup.complete is not None:
            base = observe
            ended = []

            def observe(w, m):
                if not ended and setup.complete(w, m):
                    ended.append(w.time)
                    m.note(w.time, "MISSION_COMPLETE")
                    m.clock.limit = w.time
                return base(w, m)

        record = sc["record"]["telemetry"]
        try:
            res = run_episode(world, machine, observe, stop_when=setup.stop_when, record=record)
        except Exception as exc:
            rows = EpisodeResult(world, machine).event_rows() + [[f"{world.time:.3f}", "harness", "", "", "RUN_ABORTED", type(exc).__name__]]
            flush(["time"], [], rows, [])
            raise RunAborted(f"{prefix}: {exc}") from exc
        outcome = setup.finish(res) if setup.finish is not None else None
        rows = res.event_rows()
        trace = [(f"{t:.3f}", f"{u:.3f}", f"{v:.3f}", p) for t, u, v, p in setup.trace()] if setup.trace is not None else []
        flush(res.header or ["time"], res.telemetry, rows, trace)
        tallies = tally_events(sc, rows)
        if outcome is None:
            outcome = _outcome(mission, world)
        final_time = round(world.time, 6)
    rec = RunRecord(sc["name"], mission, scenario_hash(sc), sc["seed"], outcome, tallies, seq.phase if seq is not None else "disabled", mission_start, final_time, root=out, event_rows=rows)
    if out is not None:
        rec.telemetry, rec.events, rec.deployment, rec.trace = names["telemetry"], names["events"], names["deployment"], names["trace"]
        rec.root = os.path.abspath(out)
        _write(os.path.join(out, f"{prefix}_record.json"), rec.to_json())
    return rec


def _outcome(mission, world) -> str:
    if mission == "balloon":
        balloons = [t for t in world.targets if t.spec.kind == "balloon"]
        return "all_popped" if balloons and not any(t.alive for t in balloons) else "incomplete"
    if mission == "ball":
        return "caught" if any(e[1] == "CATCH" for e in world.events) else "not_caught"
    blocks = [t for t in world.targets if t.spec.kind == "block"]
    released = sum(1 for e in world.events if e[1] == "RELEASE")
    return "all_placed" if blocks and released >= len(blocks) else "incomplete"


# -- Monte Carlo -------------------------------------------------------------------------------


def wilson(k: int, n: int, confidence: float = 0.95):
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(k, n).proportion_ci(confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def grid_cells(grid: dict | None) -> list:
    """Cartesian product of ``{key: [values]}`` as lists of (key, value) overrides."""
    if not grid:
        return [[]]
    keys = list(grid)
    return [list(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _one(args):
    sc, overrides, seed = args
    t0 = time.perf_counter()
    try:
        rec = run_scenario(validate(apply_overrides(sc, list(overrides) + [("seed", seed)])))
        out = {"seed": seed, "outcome": rec.outcome, "success": rec.success, "tallies": rec.tallies}
    except Exception as exc:  # recorded, the sweep goes on
        out = {"seed": seed, "outcome": "error", "success": False, "tallies": {}, "error": f"{type(exc).__name__}: {exc}"}
    return out, time.perf_counter() - t0


@dataclass
class SweepReport:
    scenario_hash: str
    seeds: list
    cells: list  # one dict per grid cell
    timing: dict = field(default_factory=dict, compare=False)

    def cell(self, **overrides) -> dict:
        for c in self.cells:
            if all(c["overrides"].get(k) == v for k, v in overrides.items()):
                return c
        raise KeyError(overrides)

    def to_dict(self, timing: bool = False) -> dict:
        d = {"scenario_hash": self.scenario_hash, "seeds": self.seeds, "cells": self.cells}
        if timing:
            d["timing"] = self.timing
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=1, sort_keys=True) + "\n"


def monte_carlo(sc: dict, seeds, grid: dict | None = None, workers: int = 1) -> SweepReport:
    """Every grid cell run on every seed; runs are independent, so ``workers`` > 1 runs them in processes."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("monte_carlo needs at least one seed")
    base = validate(sc)
    cells = grid_cells(grid)
    jobs = [(base, tuple(cell), seed) for cell in cells for seed in seeds]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_one(j) for j in jobs]
    durations = [d for _, d in results]
    report = []
    for i, cell in enumerate(cells):
        runs = [r for r, _ in results[i * len(seeds) : (i + 1) * len(seeds)]]
        k = sum(r["success"] for r in runs)
        tallies = {}
        for r in runs:
            for name, (a, b) in r["tallies"].items():
                tallies.setdefault(name, [0, 0])
                tallies[name][0] += a
                tallies[name][1] += b
        lo, hi = wilson(k, len(runs))
        report.append(
            {
                "overrides": dict(cell),
                "runs": len(runs),
                "successes": k,
                "rate": k / len(runs),
                "wilson95": [lo, hi],
                "errors": sum(r["outcome"] == "error" for r in runs),
                "tallies": tallies,
                "outcomes": [r["outcome"] for r in runs],
            }
        )
    timing = {"total_s": time.perf_counter() - t0, "mean_run_s": float(np.mean(durations)), "max_run_s": float(np.max(durations)), "workers": workers}
    return SweepReport(scenario_hash(base), seeds, report, timing)


# -- plots ---------------------------------------------------------------------------------------


def _svg(series, xlabel: str, ylabel: str, title: str, equal: bool = False, width: int = 640, height: int = 480) -> str:
    """Minimal line plot; ``series`` is a list of (x array, y array)."""
    pts = [(x, y) for xs, ys in series for x, y in zip(xs, ys)]
    m = 50
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {height / 2:.0f})">{ylabel}</text>',
        f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" fill="none" stroke="black"/>',
    ]
    if pts:
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
        sx = (width - 2 * m) / max(x1 - x0, 1e-9)
        sy = (height - 2 * m) / max(y1 - y0, 1e-9)
        if equal:
            sx = sy = min(sx, sy)
        for xs_, ys_ in series:
            coords = " ".join(f"{m + (x - x0) * sx:.2f},{height - m - (y - y0) * sy:.2f}" for x, y in zip(xs_, ys_))
            lines.append(f'<polyline points="{coords}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
        lines.append(f'<text x="{m}" y="{height - m + 15}" font-size="10">{x0:.2f}</text>')
        lines.append(f'<text x="{width - m}" y="{height - m + 15}" font-size="10" text-anchor="end">{x0 + (width - 2 * m) / sx:.2f}</text>')
        lines.append(f'<text x="{m - 4}" y="{height - m}" font-size="10" text-anchor="end">{y0:.2f}</text>')
        lines.append(f'<text x="{m - 4}" y="{m + 10}" font-size="10" text-anchor="end">{y0 + (height - 2 * m) / sy:.2f}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def state_at(transitions, times) -> list:
    """Mission state in force at each time, from (t, from, to, guard) transitions."""
    out = []
    k = 0
    state = transitions[0][2] if transitions else ""
    for t in times:
        while k < len(transitions) and transitions[k][0] <= t + 1e-9:
            state = transitions[k][2]
            k += 1
        out.append(state)
    return out


def export_plots(record: RunRecord, out: str | None = None) -> dict:
    """Top-down trajectory, altitude-vs-time (annotated with the mission state) and
    image-frame detection trace, as CSV plus SVG.  Returns the written paths."""
    out = out or record.root
    os.makedirs(out, exist_ok=True)
    header, rows = _read_csv(record.path(record.telemetry)) if record.telemetry else ([], [])
    _, events = _read_csv(record.path(record.events)) if record.events else ([], [])
    _, trace = _read_csv(record.path(record.trace)) if record.trace else ([], [])
    col = {h: i for i, h in enumerate(header)}
    if rows and {"time", "x", "y", "z"} <= set(col):
        t = [float(r[col["time"]]) for r in rows]
        x = [float(r[col["x"]]) for r in rows]
        y = [float(r[col["y"]]) for r in rows]
        z = [float(r[col["z"]]) for r in rows]
    else:
        t, x, y, z = [], [], [], []
    trans, _, _ = _parse(events)
    init = [(0.0, "", r[3], "init") for r in events if r[1] not in ("world", "harness") and r[2] == "" and r[3]]
    states = state_at(init[:1] + trans, t)
    prefix = f"{record.name}_seed{record.seed}"
    paths = {k: os.path.join(out, f"{prefix}_{k}") for k in ("trajectory.csv", "trajectory.svg", "altitude.csv", "altitude.svg", "detections.csv", "detections.svg")}
    _write(paths["trajectory.csv"], _csv_text([(f"{a:.3f}", f"{b:.6f}", f"{c:.6f}") for a, b, c in zip(t, x, y)], TRAJECTORY_HEADER))
    _write(paths["trajectory.svg"], _svg([(x, y)] if x else [], "x (m)", "y (m)", f"{record.name} trajectory", equal=True))
    _write(paths["altitude.csv"], _csv_text([(f"{a:.3f}", f"{b:.6f}", s) for a, b, s in zip(t, z, states)], ALTITUDE_HEADER))
    _write(paths["altitude.svg"], _svg([(t, z)] if t else [], "t (s)", "z (m)", f"{record.name} altitude"))
    _write(paths["detections.csv"], _csv_text(trace, TRACE_HEADER))
    tu = [float(r[1]) for r in trace]
    tv = [-float(r[2]) for r in trace]
    _write(paths["detections.svg"], _svg([(tu, tv)] if tu else [], "u (px)", "-v (px)", f"{record.name} detections"))
    return paths
