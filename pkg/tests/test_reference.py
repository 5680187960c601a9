import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planc.lip import ImpactGeometry, LipParams, LipState, flow, impact_reset, orbital_energy
from planc.reference import (
    ARM_JOINTS,
    BEZIER_H,
    OutputReference,
    PlannerConfig,
    RomState,
    Side,
    StepStart,
    apex_control_height,
    arm_reference,
    bezier_eval,
    com_spline,
    desired_impact_velocity,
    desired_momentum,
    estimate_preimpact,
    eval_spline,
    lateral_hlip_reference,
    plan_step,
    sample_references,
    swing_reference,
)
from planc.terrain import Stone

CFG = PlannerConfig()
LIP = CFG.lip

# 40-digit solve of (I - A^2) x = (A B - B) u for the lateral step-to-step map,
# T = 0.4 s, u = -0.1 m (left stance)
ORBIT_REF = (-0.05, -0.087006549996970222151)
# sqrt(0.6 + 9.81 * 0.2^2)
LDES_REF = 0.99619275243298171668


def stone(x, top=0.0, y=0.0, depth=0.2, width=0.4):
    return Stone((x, y, top), depth, width, 1.0)


def rom(p, L, *, elapsed=0.0, lat=(0.05, -0.1), foot=(0.0, 0.05, 0.0), z=None, zd=0.0, side=Side.LEFT):
    sag = LipState(p, L)
    lat = LipState(*lat)
    z = foot[2] + CFG.z0 if z is None else z
    start = StepStart(sag, lat, z, zd, (foot[0] - 0.3, foot[1] - 0.1, foot[2]))
    return RomState(sag, lat, z, zd, elapsed, side, foot, start)


def de_casteljau(coeffs, s):
    pts = list(coeffs)
    while len(pts) > 1:
        pts = [(1 - s) * a + s * b for a, b in zip(pts, pts[1:])]
    return pts[0]


class TestMomentum:
    def test_reference_value(self):
        L = desired_momentum(CFG, 0.5)
        assert L == pytest.approx(LDES_REF, abs=1e-15)
        assert orbital_energy(LipState(-0.2, L), LIP) == pytest.approx(0.6, abs=1e-12)

    def test_degenerate_limit(self):
        cfg = SimpleNamespace(epsilon=1.0, e_star=0.0, g=9.81, z0=1.0)
        assert desired_momentum(cfg, 0.7) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(l=st.floats(0.1, 1.5), eps=st.floats(0.05, 0.95), e=st.floats(0.05, 2.0))
    def test_lands_on_target_energy(self, l, eps, e):
        cfg = PlannerConfig(epsilon=eps, e_star=e)
        L = desired_momentum(cfg, l)
        assert orbital_energy(LipState(-(1 - eps) * l, L), cfg.lip) == pytest.approx(e, abs=1e-12 * max(1, L * L))

    def test_impact_velocity_values(self):
        assert desired_impact_velocity(0.9, 0.9, 0.0, 1.3, 0.4) == 0.0
        assert desired_impact_velocity(1.0, 0.8, 0.1, 0.5, 0.5) == pytest.approx(0.5, abs=1e-15)
        with pytest.raises(ValueError):
            desired_impact_velocity(1.0, 0.8, 0.1, 0.5, 0.0)

    @settings(max_examples=300, deadline=None)
    @given(
        L_des=st.floats(0.2, 2.0),
        L_hat=st.floats(0.2, 2.0),
        h=st.floats(-0.3, 0.3),
        xd=st.floats(0.1, 2.0),
        l=st.floats(0.2, 1.2),
    )
    def test_impact_reset_inverse(self, L_des, L_hat, h, xd, l):
        u = desired_impact_velocity(L_des, L_hat, h, xd, l)
        assert impact_reset(L_hat, ImpactGeometry(l, h, xd, u)) == pytest.approx(L_des, abs=1e-12)


class TestEstimate:
    def test_zero_remaining_keeps_momentum(self):
        r = rom(0.1, 0.8, elapsed=0.3)
        est = estimate_preimpact(r, 0.0, CFG, 1.05)
        assert est.L == r.sagittal.L and est.p == r.sagittal.p

    def test_blend_endpoint_returns_desired(self):
        r = rom(0.1, 0.8, elapsed=0.3, z=0.97)
        est = estimate_preimpact(r, 0.0, CFG, 1.05)
        assert est.z == 1.05 and est.xdot == est.L / CFG.z0

    def test_blend_start_returns_current(self):
        r = rom(-0.1, 0.8, elapsed=0.0, z=0.97)
        est = estimate_preimpact(r, 0.4, CFG, 1.05)
        assert est.z == 0.97 and est.xdot == 0.8 / CFG.z0

    def test_momentum_from_flow(self):
        r = rom(-0.12, 0.9, elapsed=0.2)
        est = estimate_preimpact(r, 0.17, CFG, 1.0)
        f = flow(r.sagittal, LIP, 0.17)
        assert est.L == pytest.approx(f.L, abs=1e-12) and est.p == pytest.approx(f.p, abs=1e-12)

    def test_negative_remaining(self):
        with pytest.raises(ValueError):
            estimate_preimpact(rom(0.0, 1.0), -0.1, CFG, 1.0)


class TestSplines:
    def test_constant(self):
        c = com_spline(0.3, 0.0, 0.3, 0.0, 0.5)
        for s in np.linspace(0, 1, 11):
            smp = eval_spline(c, s, 0.5)
            assert smp.pos == 0.3 and smp.vel == 0.0 and smp.acc == 0.0

    @settings(max_examples=100, deadline=None)
    @given(
        p0=st.floats(-1, 1), v0=st.floats(-2, 2), p1=st.floats(-1, 1), v1=st.floats(-2, 2), T=st.floats(0.2, 0.8)
    )
    def test_boundary_conditions(self, p0, v0, p1, v1, T):
        c = com_spline(p0, v0, p1, v1, T)
        a, b = eval_spline(c, 0.0, T), eval_spline(c, 1.0, T)
        assert a.pos == p0
        assert b.pos == pytest.approx(p1, abs=1e-14)
        assert a.vel == pytest.approx(v0, abs=1e-14)
        assert b.vel == pytest.approx(v1, abs=1e-13)

    def test_time_scaling_by_finite_difference(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p0, p1 = rng.uniform(-1, 1, 2)
            v0, v1 = rng.uniform(-2, 2, 2)
            T = rng.uniform(0.2, 0.8)
            c = com_spline(p0, v0, p1, v1, T)
            dt = 1e-7
            fd = (eval_spline(c, dt / T, T).pos - eval_spline(c, 0.0, T).pos) / dt
            assert fd == pytest.approx(v0, abs=1e-5)

    def test_derivatives_by_finite_difference(self):
        c = com_spline(-0.2, 0.9, 0.35, 1.1, 0.45)
        h = 1e-6
        for s in np.linspace(0.1, 0.9, 9):
            mid = eval_spline(c, s, 0.45)
            lo, hi = eval_spline(c, s - h, 0.45), eval_spline(c, s + h, 0.45)
            assert (hi.pos - lo.pos) / (2 * h) / 0.45 == pytest.approx(mid.vel, abs=1e-6)
            h2 = 1e-4
            lo2, hi2 = eval_spline(c, s - h2, 0.45), eval_spline(c, s + h2, 0.45)
            acc = (hi2.pos - 2 * mid.pos + lo2.pos) / h2**2 / 0.45**2
            assert acc == pytest.approx(mid.acc, abs=1e-4)

    def test_clamped_flag(self):
        c = com_spline(0.0, 1.0, 0.5, 1.0, 0.5)
        out = eval_spline(c, 1.2, 0.5)
        assert out.clamped and out.pos == eval_spline(c, 1.0, 0.5).pos
        assert not eval_spline(c, 0.5, 0.5).clamped

    def test_nonpositive_duration(self):
        with pytest.raises(ValueError):
            com_spline(0, 0, 1, 0, 0.0)


class TestBezier:
    def test_horizontal_profile_endpoints(self):
        assert BEZIER_H == (0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
        assert bezier_eval(BEZIER_H, 0.0) == (0.0, 0.0)
        assert bezier_eval(BEZIER_H, 1.0) == (1.0, 0.0)

    def test_constant(self):
        for s in (0.0, 0.3, 1.0):
            v, d = bezier_eval([0.7] * 6, s)
            assert v == pytest.approx(0.7, abs=1e-15) and d == pytest.approx(0.0, abs=1e-15)

    def test_de_casteljau(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            c = rng.uniform(-1, 1, 6)
            assert bezier_eval(c, 0.5)[0] == pytest.approx(de_casteljau(c, 0.5), abs=1e-14)

    def test_derivative_by_finite_difference(self):
        c = [0.0, 0.2, 0.2, 0.2, 0.05, 0.05]
        h = 1e-6
        for s in (0.2, 0.5, 0.8):
            fd = (bezier_eval(c, s + h)[0] - bezier_eval(c, s - h)[0]) / (2 * h)
            assert fd == pytest.approx(bezier_eval(c, s)[1], abs=1e-8)

    def test_coefficient_count(self):
        with pytest.raises(ValueError):
            bezier_eval([0.0] * 5, 0.5)

    @pytest.mark.parametrize("z0,z1,apex", [(0.0, 0.0, 0.08), (0.0, 0.2, 0.28), (0.1, -0.15, 0.18)])
    def test_apex_reaches_clearance(self, z0, z1, apex):
        c = apex_control_height(z0, z1, apex)
        vals = [bezier_eval([z0, c, c, c, z1, z1], s)[0] for s in np.linspace(0, 1, 4001)]
        assert max(vals) >= apex - 1e-9


def flat_plan(**kw):
    stance, nxt = stone(0.0), stone(0.5)
    r = rom(-0.2, desired_momentum(CFG, 0.5), foot=(0.0, 0.05, 0.0))
    return plan_step(r, stance, nxt, stance, CFG, **kw), stance, nxt


class TestSwing:
    def test_liftoff(self):
        plan, *_ = flat_plan()
        pos, vel = swing_reference(plan, 0.0)
        np.testing.assert_array_equal(pos, plan.liftoff_swing_pose)
        assert vel[0] == 0.0 and vel[1] == 0.0

    def test_touchdown(self):
        plan, *_ = flat_plan()
        pos, vel = swing_reference(plan, 1.0)
        np.testing.assert_allclose(pos, [plan.l_des, plan.w_des, plan.h_des], atol=1e-15)
        np.testing.assert_allclose(vel, 0.0, atol=1e-15)

    def test_apex_over_stones(self):
        stance, nxt, prev = stone(0.0, 0.1), stone(0.6, 0.25), stone(-0.5, -0.1)
        r = rom(-0.24, 1.0, foot=(0.0, 0.05, 0.1))
        plan = plan_step(r, stance, nxt, prev, CFG)
        zs = [swing_reference(plan, s)[0][2] for s in np.linspace(0, 1, 2001)]
        assert max(zs) >= 0.25 - 0.1 + CFG.swing_clearance_margin - 1e-9
        assert plan.z_sw_max == pytest.approx(0.25 - 0.1 + CFG.swing_clearance_margin, abs=1e-15)


class TestLateral:
    def test_orbit_reference(self):
        hl = lateral_hlip_reference(LipState(0.0, 0.0), 0.4, CFG, side=Side.LEFT)
        assert hl.u_orbit == -0.1
        assert hl.boundary.p == pytest.approx(ORBIT_REF[0], abs=1e-15)
        assert hl.boundary.L == pytest.approx(ORBIT_REF[1], abs=1e-15)

    def test_on_orbit_places_nominal_width(self):
        hl = lateral_hlip_reference(LipState(*ORBIT_REF), 0.4, CFG, side=Side.LEFT)
        assert hl.w_des == pytest.approx(hl.u_orbit, abs=1e-14)

    def test_orbit_mirrors_between_sides(self):
        a = lateral_hlip_reference(LipState(0.0, 0.0), 0.4, CFG, side=Side.LEFT)
        b = lateral_hlip_reference(LipState(0.0, 0.0), 0.4, CFG, side=Side.RIGHT)
        assert b.boundary.p == -a.boundary.p and b.boundary.L == -a.boundary.L

    @staticmethod
    def _iterate(cfg, x0, T, steps, drift0=0.0):
        """Brute-force pre-impact to pre-impact iteration of the lateral map."""
        lam = LIP.lam
        x = LipState(*x0)
        side = Side.LEFT
        drift = drift0
        errs = []
        for _ in range(steps):
            hl = lateral_hlip_reference(x, T, cfg, side=side, drift=drift)
            errs.append((x.p - hl.boundary.p, x.L - hl.boundary.L, drift))
            u = hl.w_des
            drift += u - hl.u_orbit
            x = flow(LipState(x.p - u, x.L), LIP, T)
            side = Side(-int(side))
        return np.array(errs), lam

    def test_two_step_deadbeat_without_centering(self):
        cfg = dataclasses.replace(CFG, lateral_centering=0.0)
        rng = np.random.default_rng(5)
        for _ in range(100):
            x0 = ORBIT_REF[0] + rng.uniform(-0.05, 0.05), ORBIT_REF[1] + rng.uniform(-0.2, 0.2)
            errs, _ = self._iterate(cfg, x0, 0.4, 4)
            np.testing.assert_allclose(errs[2:, :2], 0.0, atol=1e-10)

    def test_three_step_deadbeat_with_centering(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            x0 = ORBIT_REF[0] + rng.uniform(-0.05, 0.05), ORBIT_REF[1] + rng.uniform(-0.2, 0.2)
            errs, _ = self._iterate(CFG, x0, 0.4, 5, drift0=rng.uniform(-0.05, 0.05))
            np.testing.assert_allclose(errs[3:], 0.0, atol=1e-10)


class TestPlanStep:
    def test_nominal_mid_step(self):
        l = 0.5
        L = desired_momentum(CFG, l)
        mid = flow(LipState(-(1 - CFG.epsilon) * l, L), LIP, 0.15)
        r = rom(mid.p, mid.L, elapsed=0.15)
        plan = plan_step(r, stone(0.0), stone(l), stone(0.0), CFG)
        assert CFG.t_min <= plan.T_s <= CFG.t_max
        assert math.isfinite(plan.u_des) and plan.h_des == 0.0
        assert plan.phase == pytest.approx(0.15 / plan.T_s, abs=1e-15)
        assert len(plan.bezier_h) == 6 and len(plan.bezier_v) == 6
        assert plan.timing_status == "reached"

    def test_at_switching_point_clamps_to_minimum(self):
        r = rom(CFG.epsilon * 0.5, 1.0)
        plan = plan_step(r, stone(0.0), stone(0.5), stone(0.0), CFG)
        assert plan.T_s == CFG.t_min

    def test_unreachable_falls_back_to_maximum(self):
        r = rom(-0.3, 0.2)
        plan = plan_step(r, stone(0.0), stone(0.5), stone(0.0), CFG)
        assert plan.timing_status == "unreachable" and plan.T_s == CFG.t_max

    def test_replanning_is_deterministic(self):
        a, *_ = flat_plan()
        b, *_ = flat_plan()
        assert a == b

    def test_fixed_timing_and_velocity(self):
        plan, *_ = flat_plan(fixed_T=0.4, fixed_udes=0.0)
        assert plan.T_s == 0.4 and plan.u_des == 0.0 and plan.timing_status == "fixed"

    def test_next_stone_must_be_ahead(self):
        with pytest.raises(ValueError):
            plan_step(rom(-0.1, 1.0), stone(0.0), stone(-0.1), stone(0.0), CFG)

    def test_foot_target_stays_on_stone(self):
        r = rom(-0.2, 0.99, lat=(0.4, 1.5))
        plan = plan_step(r, stone(0.0), stone(0.5), stone(0.0), CFG)
        half = 0.5 * 0.4 - CFG.foothold_margin
        assert -half - 1e-15 <= r.foot[1] + plan.w_des <= half + 1e-15


class TestSampleReferences:
    def test_straight_line_yaw_and_arm(self):
        plan, stance, nxt = flat_plan()
        ref = sample_references(plan, 0.0)
        assert ref.pelvis_yaw == 0.0 and ref.swing_yaw == 0.0
        assert ref.arm_joint_ref == CFG.arm_nominal
        assert len(ref.arm_joint_ref) == len(ARM_JOINTS)

    def test_heading_follows_stone_line(self):
        r = rom(-0.2, 1.0, foot=(0.0, 0.05, 0.0))
        plan = plan_step(r, stone(0.0), stone(0.4, y=0.1), stone(0.0), CFG)
        assert sample_references(plan, 0.3).pelvis_yaw == math.atan2(0.1, 0.4)

    def test_arm_swing_antiphase(self):
        plan, *_ = flat_plan()
        a = arm_reference(plan, 0.5)
        assert a[0] - CFG.arm_nominal[0] == pytest.approx(-(a[1] - CFG.arm_nominal[1]), abs=1e-15)
        assert a[0] != CFG.arm_nominal[0]

    def test_phase_range(self):
        plan, *_ = flat_plan()
        with pytest.raises(ValueError):
            sample_references(plan, 1.0)

    def test_all_entries_finite(self):
        plan, *_ = flat_plan()
        for s in np.linspace(0, 0.99, 12):
            ref = sample_references(plan, s)
            assert isinstance(ref, OutputReference)
            for arr in (ref.com_pos, ref.com_vel, ref.swing_pos, ref.swing_vel):
                assert np.all(np.isfinite(arr))


def test_config_validation():
    for bad in (dict(epsilon=1.0), dict(e_star=0.0), dict(t_min=0.9), dict(lateral_centering=1.5)):
        with pytest.raises(ValueError):
            PlannerConfig(**bad)


def test_lip_params_follow_config():
    assert CFG.lip == LipParams(CFG.z0, CFG.g)
