import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerialmission.guidance import (
    PursuitParams,
    ball_refine,
    camera_to_world,
    follow_waypoints,
    los_vector,
    position_target_in_image,
    pursue_along_los,
    saturate,
)
from aerialmission.planning import ArenaSpec, lawnmower_plan
from aerialmission.sensing import CameraIntrinsics, DetectorChannel, PixelPoint, camera_pose, detect, largest, project
from aerialmission.world import Pose, TargetSpec, make_world, step_world

INTR = CameraIntrinsics()


def test_los_examples():
    assert np.array_equal(los_vector(INTR, PixelPoint(320, 240)), [0, 0, 1])
    assert np.array_equal(los_vector(INTR, PixelPoint(920, 240)), [1, 0, 1])
    # (470 - 320)/600 = 0.25, (390 - 240)/600 = 0.25
    assert np.array_equal(los_vector(INTR, PixelPoint(470, 390)), [0.25, 0.25, 1.0])


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(50, 2000), st.floats(50, 2000))
def test_los_formula_exact(u, v, fx, fy):
    intr = CameraIntrinsics(fx, fy, 320, 240, 640, 480)
    r = los_vector(intr, PixelPoint(u, v))
    assert r[2] == 1.0
    assert r[0] == pytest.approx((u - 320) / fx, rel=1e-12, abs=1e-15)
    assert r[1] == pytest.approx((v - 240) / fy, rel=1e-12, abs=1e-15)


def test_position_centered_converged():
    p = PursuitParams(goal_fraction=0.0)
    cmd, conv = position_target_in_image(np.array([0.0, 0.0, 1.0]), p, INTR)
    assert np.allclose(cmd, 0.0) and conv


@given(st.floats(-0.5, 0.5), st.floats(-0.4, 0.4), st.floats(-math.pi, math.pi))
def test_position_command_saturated_and_no_forward(rx, ry, yaw):
    p = PursuitParams(max_speed=0.7)
    cmd, _ = position_target_in_image(np.array([rx, ry, 1.0]), p, INTR, yaw)
    assert np.linalg.norm(cmd) <= 0.7 + 1e-12
    assert abs(cmd[:2] @ np.array([math.cos(yaw), math.sin(yaw)])) < 1e-12


def _centering_run(offset_px, seconds=6.0, yaw=0.0):
    spec = TargetSpec("balloon", (3.5 * math.cos(yaw), 3.5 * math.sin(yaw), 0.0))
    w = make_world((0.0, 0.0, 2.8), yaw=yaw, targets=[spec])
    # shift the UAV so the balloon appears offset_px to the right of centre
    w.uav.pose.position = w.uav.pose.position - w.uav.pose.left * (-offset_px / 600.0 * 3.5)
    params = PursuitParams()
    errs, conv_t = [], None
    for k in range(int(seconds / 0.05)):
        cam = camera_pose(w.uav.pose, 0.0)
        d = largest(detect(INTR, cam, w, DetectorChannel(balloon_min_side=0.0)), "balloon")
        los = los_vector(INTR, d.centroid)
        cmd, conv = position_target_in_image(los, params, INTR, w.uav.pose.yaw)
        goal_v = 240 + params.r_y_goal(INTR) * 600
        errs.append(math.hypot(d.centroid.u - 320, d.centroid.v - goal_v))
        if conv and conv_t is None:
            conv_t = k * 0.05
        step_world(w, (cmd, 0.0), 0.05)
    return np.array(errs), conv_t


def test_centering_closed_loop():
    errs, conv_t = _centering_run(100.0)
    assert errs[0] > 100.0
    assert conv_t is not None and conv_t <= 4.0
    tail = errs[int(1.0 / 0.05):]
    assert np.all(np.diff(tail) <= 1e-9)


def test_centering_closed_loop_other_heading():
    errs, conv_t = _centering_run(-100.0, yaw=2.2)
    assert conv_t is not None and conv_t <= 4.0


def test_pursue_centered_is_forward():
    p = PursuitParams(upward_bias=0.0)
    cmd = pursue_along_los(np.array([0.0, 0.0, 1.0]), p, yaw=0.0)
    assert np.allclose(cmd, [1.5, 0.0, 0.0])


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-math.pi, math.pi), st.floats(-0.5, 0.5))
def test_pursue_speed_constant(rx, ry, yaw, pitch):
    cmd = pursue_along_los(np.array([rx, ry, 1.0]), PursuitParams(), yaw, pitch)
    assert np.linalg.norm(cmd) == pytest.approx(1.5, rel=1e-12)


def test_upward_bias_raises_elevation():
    cmd = pursue_along_los(np.array([0.0, 0.0, 1.0]), PursuitParams(upward_bias=math.radians(5)))
    assert math.degrees(math.atan2(cmd[2], cmd[0])) == pytest.approx(5.0)


def test_pursuit_from_3m_pops_static_balloon():
    spec = TargetSpec("balloon", (3.0, 0.0, 0.0))
    w = make_world((0.0, 0.0, 2.8 - 0.15 - 0.1), targets=[spec])
    params = PursuitParams()
    for _ in range(100):
        cam = camera_pose(w.uav.pose, 0.0)
        d = largest(detect(INTR, cam, w, DetectorChannel(balloon_min_side=0.0)), "balloon")
        if d is None:
            break
        step_world(w, (pursue_along_los(los_vector(INTR, d.centroid), params, 0.0), 0.0), 0.05)
    for _ in range(40):
        step_world(w, ((1.0, 0, 0), 0.0), 0.05)
    assert not w.targets[0].alive


def test_gimbal_offset_rotates_command_by_delta():
    los = np.array([0.2, -0.1, 1.0])
    delta = math.radians(10)
    a = camera_to_world(los, 0.3, 0.2)
    b = camera_to_world(los, 0.3 + delta, 0.2)
    Rz = np.array([[math.cos(delta), -math.sin(delta), 0], [math.sin(delta), math.cos(delta), 0], [0, 0, 1]])
    assert np.allclose(Rz @ a, b, atol=1e-12)


def test_ball_refine_vanishing_los():
    p = PursuitParams()
    assert np.allclose(ball_refine(np.array([0.0, 0.0, 1.0]), p), 0.0)
    # ball at the left image edge: move left (body +y for yaw 0)
    cmd = ball_refine(np.array([-320 / 600, 0.0, 1.0]), p, yaw=0.0)
    assert cmd[1] > 0 and abs(cmd[1]) > abs(cmd[2]) and cmd[0] == pytest.approx(0.0)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.1, 10))
def test_saturate(x, y, z, limit):
    v = saturate(np.array([x, y, z]), limit)
    assert np.linalg.norm(v) <= limit * (1 + 1e-12)


def test_waypoint_capture_and_done():
    plan = [np.array([0.5, 0.0, 0.0]), np.array([5.0, 0.0, 0.0])]
    wc = follow_waypoints(Pose(np.zeros(3)), plan, 0)
    assert wc.index == 1 and not wc.done
    assert np.linalg.norm(wc.velocity) == pytest.approx(2.0)
    wc = follow_waypoints(Pose(np.array([5.0, 0.0, 0.0])), plan, 1)
    assert wc.done and np.allclose(wc.velocity, 0.0)
    with pytest.raises(ValueError):
        follow_waypoints(Pose(np.zeros(3)), [], 0)


def test_colinear_waypoints_straight_flight():
    plan = [np.array([x, 0.0, 3.0]) for x in (5.0, 10.0, 15.0)]
    w = make_world((0.0, 0.0, 3.0))
    idx, worst = 0, 0.0
    for _ in range(400):
        wc = follow_waypoints(w.uav.pose, plan, idx)
        idx = wc.index
        if wc.done:
            break
        step_world(w, (wc.velocity, wc.yaw_rate), 0.05)
        worst = max(worst, abs(w.uav.pose.position[1]))
    assert worst < 1e-12
    assert idx == 3


def test_lawnmower_turn_yaw_rate_peaks():
    arena = ArenaSpec.rectangle(0, 0, 18, 12, sweep_width=6.0)
    plan = lawnmower_plan(arena).waypoints
    w = make_world(plan[0], yaw=math.pi / 2)
    idx, rates = 0, []
    for _ in range(4000):
        wc = follow_waypoints(w.uav.pose, plan, idx, cruise_speed=2.0)
        idx = wc.index
        if wc.done:
            break
        step_world(w, (wc.velocity, wc.yaw_rate), 0.05)
        rates.append(abs(w.uav.yaw_rate))
    assert idx == len(plan)
    # corner turns saturate the yaw-rate limit
    assert max(rates) == pytest.approx(math.radians(90.0))
