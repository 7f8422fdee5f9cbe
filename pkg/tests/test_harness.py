import csv
import filecmp
import json
import math
import os
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings, strategies as st

from aerialmission.cli import main, parse_grid, parse_seeds
from aerialmission.harness import RunAborted, RunRecord, export_plots, monte_carlo, run_scenario, tally_events, wilson
from aerialmission.missions.balloon import run_balloon
from aerialmission.planning import ArenaSpec, lawnmower_plan
from aerialmission.scenario import ScenarioError, apply_overrides, bundled_scenarios, load_scenario, scenario_hash, validate

SCEN = bundled_scenarios()


def _raw(name):
    with open(SCEN[name]) as fh:
        return json.load(fh)


def _sc(name, *overrides):
    return load_scenario(SCEN[name], list(overrides))


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- schema ------------------------------------------------------------------------------------


def test_bundled_scenarios_cover_every_mission():
    assert {_sc(n)["mission"] for n in SCEN} == {"balloon", "ball", "pickplace", "firefight"}


@pytest.mark.parametrize(
    "overrides, path",
    [
        (["colour=red"], "$"),
        (["faults.bogus=1"], "$.faults"),
        (["faults.detector_fn=1.5"], "$.faults.detector_fn"),
        (["version=2"], "$.version"),
        (["targets.0=1"], "$.targets"),
        (["mission_config.warp=3"], "$.mission_config.warp"),
        (["deployment.script={\"bogus\": 1}"], "$.deployment.script"),
        (["arena.size=[0, 5]"], "$.arena.size[0]"),
    ],
)
def test_schema_violations_report_json_path(overrides, path):
    with pytest.raises(ScenarioError) as err:
        load_scenario(SCEN["balloon_nominal"], overrides)
    assert err.value.path == path


def test_nested_target_error_path():
    raw = _raw("balloon_nominal")
    raw["targets"][2]["anchor"] = [1, 2]
    with pytest.raises(ScenarioError) as err:
        validate(raw)
    assert err.value.path == "$.targets[2].anchor"


def test_cross_field_rules():
    raw = _raw("balloon_nominal")
    raw["targets"].append({"kind": "fire", "anchor": [0, 0, 0]})
    with pytest.raises(ScenarioError, match=r"targets\[5\]\.kind"):
        validate(raw)
    raw = _raw("pickplace_three_blocks")
    del raw["structure"]
    with pytest.raises(ScenarioError, match="structure"):
        validate(raw)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["", "world", "faults", "sensing", "uav", "deployment", "record"]), st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_keys_rejected_anywhere(section, key):
    raw = _raw("balloon_nominal")
    node = raw if not section else raw.setdefault(section, {})
    if key in node or key in ("wind_mean", "tau", "v_max", "position", "yaw", "enabled", "observe", "script", "telemetry") or (not section and key in validate(_raw("balloon_nominal"))):
        return
    node[key] = 1
    with pytest.raises(ScenarioError):
        validate(raw)


def test_overrides_and_hash():
    raw = _raw("balloon_nominal")
    out = apply_overrides(raw, ["faults.gimbal_offset_deg=5", "mission_config.recovery=false", "name=x"])
    assert out["faults"]["gimbal_offset_deg"] == 5 and out["mission_config"]["recovery"] is False and out["name"] == "x"
    assert raw["name"] == "balloon_nominal"
    assert scenario_hash(validate(raw)) == scenario_hash(validate(_raw("balloon_nominal")))
    assert scenario_hash(validate(raw)) != scenario_hash(validate(out))
    with pytest.raises(ScenarioError):
        apply_overrides(raw, ["novalue"])


# -- single runs ---------------------------------------------------------------------------------


def test_nominal_balloons_all_identified_and_popped(tmp_path):
    sc = _sc("balloon_nominal")
    # independent check that the scenario is what the example describes: every balloon on a sweep row
    plan = lawnmower_plan(ArenaSpec.rectangle(0, 0, *sc["arena"]["size"])).waypoints
    rows = {float(p[0]) for p in plan}
    assert len(sc["targets"]) == 5 and all(t["anchor"][0] in rows for t in sc["targets"])
    rec = run_scenario(sc, str(tmp_path))
    assert rec.tallies["Target identification"] == [5, 5]
    assert rec.outcome == "all_popped" and rec.exit_code == 0
    pops = {r[5] for r in _csv(tmp_path / rec.events) if r[4] == "POP"}
    assert pops == {t["id"] for t in sc["targets"]}


@pytest.mark.parametrize("name", sorted(SCEN))
def test_same_seed_byte_identical_artifacts(tmp_path, name):
    sc = _sc(name, "clock_limit=120")
    a, b = run_scenario(sc, str(tmp_path / "a")), run_scenario(sc, str(tmp_path / "b"))
    files = sorted(os.listdir(tmp_path / "a"))
    assert files == sorted(os.listdir(tmp_path / "b")) and len(files) == 5
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert not mismatch and not errors
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("name", sorted(SCEN))
def test_tallies_recomputed_from_event_log(tmp_path, name):
    sc = _sc(name, "seed=2", "clock_limit=200")
    rec = run_scenario(sc, str(tmp_path))
    stored = RunRecord.load(tmp_path / f"{sc['name']}_seed2_record.json")
    assert tally_events(sc, _csv(stored.path(stored.events))) == stored.tallies == rec.tallies


def test_last_telemetry_within_clock_plus_landing(tmp_path):
    rec = run_scenario(_sc("ball_figure8", "clock_limit=40"), str(tmp_path))
    last = float(_csv(tmp_path / rec.telemetry)[-1][0])
    assert 40.0 <= last <= 40.0 + 30.0


def test_harness_matches_mission_runner():
    for seed in range(8):
        for rec in (True, False):
            sc = _sc("balloon_gimbal_fault", f"seed={seed}", f"mission_config.recovery={json.dumps(rec)}")
            assert (run_scenario(sc).outcome == "all_popped") == run_balloon(seed, recovery=rec).popped


def test_deployment_failure_skips_mission(tmp_path):
    raw = _raw("balloon_nominal")
    from aerialmission.deploy import healthy_script

    script = healthy_script("balloon")
    del script.streams["gimbal_camera"]
    raw["deployment"] = {"script": script.to_dict()}
    rec = run_scenario(raw, str(tmp_path))
    assert rec.outcome == "deployment_failed" and rec.exit_code == 1 and rec.deployment_phase == "failed"
    assert all(v == [0, 0] for v in rec.tallies.values())
    assert _csv(tmp_path / rec.telemetry) == [["time"]]
    assert _csv(tmp_path / rec.deployment)[-1] == ["watchdog", "8.00", "38.00", "timeout"]


def test_deployment_runs_first_and_can_be_disabled():
    rec = run_scenario(_sc("firefight_building"))
    assert rec.mission_start == 9.5 and rec.deployment_phase == "mission_running"  # no detector step for firefight
    rec = run_scenario(_sc("firefight_building", "deployment.enabled=false"))
    assert rec.mission_start is None and rec.deployment_phase == "disabled" and rec.outcome == "extinguished"


def test_contract_violation_flushes_event_log(tmp_path):
    with pytest.raises(RunAborted):
        run_scenario(_sc("balloon_nominal", "mission_config.confirm_frames=[1]"), str(tmp_path))
    rows = _csv(tmp_path / "balloon_nominal_seed0_events.csv")
    assert rows[0][0] == "t" and rows[-1][4] == "RUN_ABORTED"


# -- fault injection --------------------------------------------------------------------------------


def test_firefight_fault_block():
    assert run_scenario(_sc("firefight_building", "faults.stuck_stopper_prob=1")).outcome == "stuck_pump_stopper"
    rec = run_scenario(_sc("firefight_building", "faults.residual_hot_fires=1"))
    assert rec.outcome == "residual_hot_sprayed" and rec.tallies["Fire extinguishing"] == [0, 1]
    rec = run_scenario(_sc("firefight_building", "faults.low_gps_intervals=[[12, 13]]"))
    guards = [r[4] for r in rec.event_rows if r[3] == "ReRequestControl"]
    assert guards == ["gps_low"] and rec.outcome == "extinguished"


def test_detector_false_negatives_remove_pursuits():
    base = run_scenario(_sc("balloon_gimbal_fault", "faults.gimbal_offset_deg=0"))
    blind = run_scenario(_sc("balloon_gimbal_fault", "faults.gimbal_offset_deg=0", "faults.detector_fn=1"))
    assert base.tallies["Pop sequence"] == [1, 1]
    # never detected, so never pursued; the balloon on the first sweep row can still be flown into
    assert blind.tallies["Pop sequence"] == [0, 0]


def test_no_descent_drift_single_attempt_pickups():
    calm = run_scenario(_sc("pickplace_three_blocks", "faults.descent_drift_sigma=0"))
    assert calm.tallies["Single-attempt block pickup"] == [3, 3] and calm.outcome == "all_placed"


# -- Monte Carlo ---------------------------------------------------------------------------------------


def test_wilson_interval_formula():
    k, n, z = 12, 20, 1.959963984540054
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    assert wilson(k, n) == pytest.approx((centre - half, centre + half), abs=1e-9)
    assert wilson(0, 0) == (0.0, 1.0)


def test_zero_fault_cell_always_succeeds():
    rep = monte_carlo(_sc("firefight_building"), [0, 1, 2])
    assert rep.cells[0]["rate"] == 1.0 and rep.cells[0]["wilson95"][1] == 1.0


def test_recovery_cell_beats_no_recovery_and_regenerates():
    seeds = list(range(16))
    grid = {"mission_config.recovery": [True, False]}
    rep = monte_carlo(_sc("balloon_gimbal_fault"), seeds, grid)
    on, off = rep.cell(**{"mission_config.recovery": True}), rep.cell(**{"mission_config.recovery": False})
    assert on["rate"] > off["rate"]
    assert on["tallies"]["Recover & pop"][1] > 0
    again = monte_carlo(_sc("balloon_gimbal_fault"), seeds, grid, workers=2)
    assert again.to_json() == rep.to_json()
    assert "timing" in json.loads(rep.to_json(timing=True))


def test_failed_runs_are_recorded_and_sweep_continues():
    rep = monte_carlo(_sc("balloon_gimbal_fault"), [0, 1], {"mission_config.confirm_frames": [3, [1]]})
    assert rep.cells[0]["errors"] == 0 and rep.cells[1]["errors"] == 2
    assert rep.cells[1]["outcomes"] == ["error", "error"]
    with pytest.raises(ValueError):
        monte_carlo(_sc("balloon_gimbal_fault"), [])


# -- plots ---------------------------------------------------------------------------------------------


def _svg_ok(path):
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    return root


def test_pickplace_altitude_trace_phases(tmp_path):
    rec = run_scenario(_sc("pickplace_three_blocks", "faults.descent_drift_sigma=0"), str(tmp_path))
    paths = export_plots(rec)
    rows = [(float(t), float(z), s) for t, z, s in _csv(paths["altitude.csv"])[1:]]
    phases = []
    for t, z, s in rows:
        if not phases or phases[-1][0] != s:
            phases.append([s, z, z])
        phases[-1][2] = z
    order = [p[0] for p in phases]
    first = order.index("DescendOpenLoop")
    assert order[first : first + 6] == ["DescendOpenLoop", "CheckPickup", "TransitToStructure", "ServoStructure", "PlaceBlock", "AscendAfterPlace"]
    seg = {name: (a, b) for name, a, b in phases[first : first + 6]}
    assert seg["DescendOpenLoop"][1] < seg["DescendOpenLoop"][0]  # descend
    assert seg["CheckPickup"][1] > seg["CheckPickup"][0]  # ascend with the block
    assert seg["TransitToStructure"][1] > seg["CheckPickup"][1]  # transit at height
    assert seg["PlaceBlock"][1] < seg["PlaceBlock"][0]  # descend to release
    assert seg["AscendAfterPlace"][1] > seg["AscendAfterPlace"][0]
    _svg_ok(paths["altitude.svg"])
    assert len(_svg_ok(paths["trajectory.svg"]).findall("{http://www.w3.org/2000/svg}polyline")) == 1


def test_ball_detection_trace_schema(tmp_path):
    rec = run_scenario(_sc("ball_figure8", "clock_limit=60"), str(tmp_path))
    rows = _csv(export_plots(rec, str(tmp_path / "p"))["detections.csv"])
    assert rows[0] == ["t", "u", "v", "pass"] and len(rows) > 1
    assert all(int(r[3]) >= 1 for r in rows[1:])


def test_empty_run_gives_valid_empty_files(tmp_path):
    raw = _raw("firefight_building")
    raw["deployment"] = {"script": {"devices": {"dji_serial": None}}}
    rec = run_scenario(raw, str(tmp_path))
    paths = export_plots(rec)
    for k, header in (("trajectory.csv", ["t", "x", "y"]), ("altitude.csv", ["t", "z", "state"]), ("detections.csv", ["t", "u", "v", "pass"])):
        assert _csv(paths[k]) == [header]
    for k in ("trajectory.svg", "altitude.svg", "detections.svg"):
        assert not _svg_ok(paths[k]).findall("{http://www.w3.org/2000/svg}polyline")


# -- CLI -------------------------------------------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", "firefight_building", "--out", str(tmp_path)]) == 0
    assert main(["run", "--scenario", "ball_figure8", "--override", "clock_limit=20"]) == 1
    assert main(["run", "--scenario", "balloon_nominal", "--override", "faults.nope=1"]) == 2
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--scenario", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "$.faults" in err


def test_cli_seed_flag_and_validate(capsys):
    assert main(["validate", "--scenario", "balloon_nominal", "--seed", "18446744073709551615"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok balloon_nominal balloon ")
    assert main(["validate", "--scenario", "balloon_nominal", "--seed", "-1"]) == 2


def test_cli_sweep_plot_and_dot(tmp_path, capsys):
    assert main(["sweep", "--scenario", "balloon_gimbal_fault", "--seeds", "0:4", "--grid", "mission_config.recovery=true,false", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "balloon_gimbal_fault_sweep.json").read_text())
    assert [c["overrides"] for c in rep["cells"]] == [{"mission_config.recovery": True}, {"mission_config.recovery": False}]
    assert rep["seeds"] == [0, 1, 2, 3] and "timing" not in rep
    assert main(["plot", "--scenario", "balloon_gimbal_fault", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "balloon_gimbal_fault_seed0_trajectory.svg").exists()
    capsys.readouterr()
    assert main(["dot", "--mission", "pickplace"]) == 0
    dot = capsys.readouterr().out
    assert dot.startswith("digraph pickplace {") and '"CheckPickup" -> "RecoverToBlock"' in dot


def test_cli_parsers():
    assert parse_seeds("3:6") == [3, 4, 5] and parse_seeds("1,9") == [1, 9]
    assert parse_grid(["a.b=1,x,true", "c=[[1, 2], 3]"]) == {"a.b": [1, "x", True], "c": [[1, 2], 3]}
