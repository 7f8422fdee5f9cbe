import math

import numpy as np
import pytest

from aerialmission.missions.firefight import FireConfig, FireSensors, firefight_world, run_firefight, window_false_positive_world
from aerialmission.rng import stream
from aerialmission.sensing import THERMAL_INTRINSICS, ThermalImage, camera_pose, render_thermal, threshold_fires
from aerialmission.spray import PumpState, SprayCone, spray_water
from aerialmission.world import Pose, TargetSpec, TargetState, make_world


def _fire(pos=(0.0, 1.0, 3.0)):
    spec = TargetSpec("fire", pos, normal=(0.0, -1.0, 0.0))
    return TargetState(spec, np.asarray(pos, float))


def _facing(dist=1.0, dx=0.0, dz=0.0):
    # nozzle 0.15 m ahead of the body, so the body sits dist + 0.15 back
    return Pose(np.array([dx, 1.0 - dist - 0.15, 3.0 + dz]), math.pi / 2)


# -- spray ----------------------------------------------------------------------------


def test_empty_tank_delivers_nothing():
    ml, pump = spray_water(_facing(), _fire(), PumpState(remaining=0.0), 1.0, SprayCone(), np.random.default_rng(0))
    assert ml == 0.0 and pump.remaining == 0.0


def test_stuck_stopper_delivers_nothing():
    pump = PumpState(stuck=True)
    ml, pump = spray_water(_facing(), _fire(), pump, 1.0, SprayCone(), np.random.default_rng(0))
    assert ml == 0.0 and pump.remaining == pytest.approx(1.5)


def test_degenerate_cone_full_flow():
    cone = SprayCone(spread=0.0, wobble=0.0, throw_sigma=0.0)
    pump = PumpState()
    ml, pump = spray_water(_facing(), _fire(), pump, 2.0, cone, np.random.default_rng(0))
    assert ml == pytest.approx(200.0)
    assert pump.remaining == pytest.approx(1.3)


def test_short_throw_and_wrong_side_miss():
    cone = SprayCone(spread=0.0, wobble=0.0, throw=0.5, throw_sigma=0.0)
    ml, _ = spray_water(_facing(), _fire(), PumpState(), 1.0, cone, np.random.default_rng(0))
    assert ml == 0.0
    away = Pose(np.array([0.0, 0.0, 3.0]), -math.pi / 2)
    ml, _ = spray_water(away, _fire(), PumpState(), 1.0, SprayCone(spread=0.0, wobble=0.0, throw_sigma=0.0))
    assert ml == 0.0


def test_off_axis_misses_opening():
    cone = SprayCone(spread=0.0, wobble=0.0, throw_sigma=0.0)
    ml, _ = spray_water(_facing(dx=0.07), _fire(), PumpState(), 1.0, cone)
    assert ml == 0.0


def test_tank_drains_to_zero():
    pump = PumpState()
    for _ in range(400):
        spray_water(_facing(), _fire(), pump, 0.05, SprayCone(), np.random.default_rng(1))
    assert pump.empty
    assert 0.0 <= pump.delivered <= 1500.0


# -- thermal thresholding ----------------------------------------------------------------


def test_threshold_drops_small_blobs_and_orders_by_area():
    v = np.full((120, 160), 3000, np.uint16)
    v[10:20, 10:20] = 12000  # 100 px
    v[50:80, 60:90] = 12000  # 900 px
    v[100:104, 140:144] = 12000  # 16 px, dropped
    dets = threshold_fires(ThermalImage(160, 120, v), 7500, 30)
    assert len(dets) == 2
    assert dets[0].bbox == (60.0, 50.0, 90.0, 80.0)
    assert (dets[0].centroid.u, dets[0].centroid.v) == (75.0, 65.0)


def test_threshold_centred_fire():
    w = make_world((0.0, -1.2, 3.0), yaw=math.pi / 2, targets=[TargetSpec("fire", (0.0, 0.0, 3.0))])
    img = render_thermal(THERMAL_INTRINSICS, camera_pose(w.uav.pose, 0.0), w)
    d = threshold_fires(img, 7500)[0]
    assert d.centroid.u == pytest.approx(THERMAL_INTRINSICS.cx, abs=0.5)
    assert d.centroid.v == pytest.approx(THERMAL_INTRINSICS.cy, abs=0.5)


# -- mission --------------------------------------------------------------------------------


def test_prealign_and_first_pass_fire():
    w, s = firefight_world(0)
    r = run_firefight(w, s)
    m = r.result.machine
    path = [e.target for e in m.events if e.source != e.target]
    assert path[:7] == ["TakeOff", "PreAlign", "WallFollow", "CenterFire", "RefineFire", "Spray", "Land"]
    assert r.found_first_pass and r.delivered_ml > 0 and r.outcome == "extinguished"
    assert r.state == "Landed"


def test_prealign_faces_first_wall():
    w, s = firefight_world(0, fire=False)
    r = run_firefight(w, s, FireConfig(altitude_schedule=(3.0,)), clock_limit=12.0)
    m = r.result.machine
    t_wf = next(e.t for e in m.events if e.target == "WallFollow")
    assert t_wf < 12.0
    assert m.wall_heading == pytest.approx(math.pi / 2)


def test_full_circuit_four_edges_at_corners():
    w, s = firefight_world(4, fire=False)
    r = run_firefight(w, s, FireConfig(altitude_schedule=(3.0,)))
    ends = [(0.0, 0.0), (0.0, 8.0), (12.0, 8.0), (12.0, 0.0)]
    assert len(r.edges) == 4
    for (_, x, y), c in zip(r.edges, ends):
        assert math.hypot(x - c[0], y - c[1]) < 1.5
    notes = [e.guard for e in r.result.machine.events]
    assert "SEARCH_EXHAUSTED" in notes and notes.count("WINDOW_SKIPPED") >= 8
    assert r.state == "Landed"


def test_window_false_positive_enters_window():
    w, s = window_false_positive_world()
    r = run_firefight(w, s, FireConfig(altitude_schedule=(3.0,)))
    assert r.window_entry and r.outcome == "window_entry"
    assert w.events[-1][1] == "WINDOW_ENTRY"
    assert r.state == "RefineFire"


def test_distance_limit_prevents_window_entry():
    w, s = window_false_positive_world()
    r = run_firefight(w, s, FireConfig(altitude_schedule=(3.0,), distance_limit=5.0))
    assert not r.window_entry
    assert any(e.guard == "FIRE_REJECTED" for e in r.result.machine.events)


def test_empty_tank_still_detects():
    w, s = firefight_world(0)
    r = run_firefight(w, s, pump=PumpState(remaining=0.0))
    assert r.delivered_ml == 0.0
    assert r.outcome == "water_supply_too_low"
    assert r.result.machine.fires_found >= 1


def test_stuck_stopper_outcome():
    w, s = firefight_world(0)
    r = run_firefight(w, s, pump=PumpState(stuck=True))
    assert r.delivered_ml == 0.0 and r.outcome == "stuck_pump_stopper"


def test_low_gps_rerequests_control_and_resumes():
    w, s = firefight_world(0)
    r = run_firefight(w, s, sensors=FireSensors(gps_low=((11.0, 13.0),)))
    path = [(e.source, e.target, e.guard) for e in r.result.machine.events if e.source != e.target]
    assert ("WallFollow", "ReRequestControl", "gps_low") in path
    assert ("ReRequestControl", "WallFollow", "gps_restored") in path
    back = next(e.t for e in r.result.machine.events if e.guard == "gps_restored")
    assert back >= 14.0 - 1e-9
    assert r.found_first_pass


def test_faulty_ranger_seeded_and_repeatable():
    a = stream(7, "faults").random(3)
    b = stream(7, "faults").random(3)
    assert np.array_equal(a, b)
