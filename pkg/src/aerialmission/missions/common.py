"""Episode runner shared by all missions: observe, tick, step, record."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..fsm import EVENT_HEADER, MissionMachine
from ..world import WorldState, step_world, telemetry_header, telemetry_row

DT = 0.05


@dataclass
class EpisodeResult:
    world: WorldState
    machine: MissionMachine
    telemetry: list = field(default_factory=list)  # rows of formatted strings
    header: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def world_events(self):
        return self.world.events

    def count(self, kind: str) -> int:
        return sum(1 for e in self.world.events if e[1] == kind)

    def event_rows(self) -> list:
        """Machine transitions and notes merged with world events, in time order."""
        rows = [(e.t, 0, i, e.row()) for i, e in enumerate(self.machine.events)]
        for i, (t, kind, tid, details) in enumerate(self.world.events):
            rows.append((t, 1, i, [f"{t:.3f}", "world", "", "", kind, f"{tid} {details}".strip()]))
        rows.sort(key=lambda r: (round(r[0], 9), r[1], r[2]))
        return [EVENT_HEADER] + [r[3] for r in rows]


def run_episode(world: WorldState, machine: MissionMachine, observe, dt: float = DT, stop_when=None, record: bool = True, landing_slack: float | None = None) -> EpisodeResult:
    """Drive ``machine`` against ``world`` until it lands or the clock cap is hit.

    ``observe(world, machine)`` builds the per-tick :class:`Observations`.
    ``stop_when(world, machine)`` may end the run early (Monte Carlo fast
    path); it never alters what happened up to that point.  Telemetry never
    extends past the mission clock plus one landing descent.
    """
    res = EpisodeResult(world, machine, header=telemetry_header(world) if record else [])
    if landing_slack is None:
        landing_slack = 30.0
    cap = machine.clock.limit + landing_slack
    if record:
        res.telemetry.append(telemetry_row(world))
    while not machine.done and world.time < cap - 1e-9:
        obs = observe(world, machine)
        _, cmd, _ = machine.tick(obs, dt)
        if machine.done:
            break
        step_world(world, cmd, dt)
        if record:
            res.telemetry.append(telemetry_row(world))
        if stop_when is not None and stop_when(world, machine):
            res.stopped_early = True
            break
    return res


def write_csv(rows, path, header=None):
    with open(path, "w") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
