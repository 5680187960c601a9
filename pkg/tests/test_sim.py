import dataclasses
import math

import numpy as np
import pytest

from planc import _layout as lay
from planc.config import Config
from planc.lip import LipState, flow
from planc.reference import reference_vectors
from planc.sim import (
    DisturbanceSpec,
    apply_disturbance,
    apply_impact,
    check_guard,
    evaluate_success,
    event_bits,
    event_names,
    initial_state,
    make_plan,
    random_disturbances,
    replay_trace,
    rollout,
    rollout_rng,
    step_phase,
)
from planc.terrain import Stone, StoneSequence, generate_terrain

CFG = Config()
PL = CFG.planner


def with_sim(**kw):
    return dataclasses.replace(CFG, sim=dataclasses.replace(CFG.sim, **kw))


def stones(*xs):
    return StoneSequence("flat_stones", tuple(Stone((x, 0.0, 0.0), 0.2, 0.4, 1.0) for x in xs), 0.5, 0.0, 0)


@pytest.fixture(scope="module")
def flat_trace():
    seq = generate_terrain("flat_stones", 0.0, 0)
    return seq, rollout(seq, CFG)


class TestEnergyRegulation:
    def test_flat_success(self, flat_trace):
        seq, tr = flat_trace
        rep = evaluate_success(tr, seq)
        assert rep.success and rep.steps == len(seq) - 1
        assert max(abs(e - PL.e_star) for e in rep.energies[1:]) <= 1e-6

    @pytest.mark.parametrize("e0", [0.1, 0.35, 1.5])
    def test_regulates_from_any_start(self, e0):
        seq = generate_terrain("height_varying", 0.5, 3)
        rep = evaluate_success(rollout(seq, with_sim(init_energy=e0)), seq)
        assert rep.success
        assert max(abs(e - PL.e_star) for e in rep.energies[1:]) <= 1e-6

    def test_post_impact_position(self, flat_trace):
        _, tr = flat_trace
        x_sw = tr.impact_column("x_sw")
        np.testing.assert_allclose(tr.impact_column("p_plus"), -(1 - PL.epsilon) * x_sw, atol=1e-9)

    def test_switching_point_reached(self, flat_trace):
        _, tr = flat_trace
        p_minus, x_sw = tr.impact_column("p_minus"), tr.impact_column("x_sw")
        np.testing.assert_allclose(p_minus, PL.epsilon * x_sw, atol=1e-9)


class TestHybrid:
    def test_flow_between_rows(self, flat_trace):
        _, tr = flat_trace
        idx, t, p, L = tr.column("stance_index"), tr.column("t"), tr.column("p"), tr.column("L")
        impact = np.array([b & lay.EV_IMPACT for b in tr.events], bool)
        n = 0
        for k in range(len(tr) - 1):
            if idx[k] != idx[k + 1] or impact[k]:
                continue
            f = flow(LipState(p[k], L[k]), PL.lip, t[k + 1] - t[k])
            assert abs(f.p - p[k + 1]) <= 1e-12 and abs(f.L - L[k + 1]) <= 1e-12
            n += 1
        assert n > 400

    def test_com_continuous_across_impact(self, flat_trace):
        # the impact row is pre-impact; the next row is one tick of flow from the reset state
        _, tr = flat_trace
        rows = [k for k in range(len(tr) - 1) if tr.events[k] & lay.EV_IMPACT]
        assert len(rows) == 18  # the final impact closes the trace
        lx, p_plus, L_plus = (tr.impact_column(c) for c in ("landing_x", "p_plus", "L_plus"))
        t, com_x = tr.column("t"), tr.column("com_x")
        for j, k in enumerate(rows):
            assert lx[j] + p_plus[j] == pytest.approx(com_x[k], abs=1e-12)
            f = flow(LipState(p_plus[j], L_plus[j]), PL.lip, t[k + 1] - t[k])
            assert lx[j] + f.p == pytest.approx(com_x[k + 1], abs=1e-12)

    def test_phase_in_unit_interval(self, flat_trace):
        _, tr = flat_trace
        ph = tr.column("phase")
        assert ph.min() >= 0.0 and ph.max() <= 1.0

    def test_guard_waits_for_phase_one(self):
        seq = stones(0.0, 0.5, 1.0)
        s = initial_state(seq, PL)
        plan = make_plan(s, seq, PL)
        assert check_guard(s, plan) is None
        s = step_phase(s, plan, plan.T_s, PL)
        plan = make_plan(s, seq, PL)
        ev = check_guard(s, plan)
        assert ev is not None and ev.stone == 1
        assert ev.landing == ev.target

    def test_impact_reset_and_miss(self):
        seq = stones(0.0, 0.5, 1.0)
        s = initial_state(seq, PL)
        plan = make_plan(s, seq, PL)
        s = step_phase(s, plan, plan.T_s, PL)
        plan = make_plan(s, seq, PL)
        ev = check_guard(s, plan)
        nxt, rec = apply_impact(s, ev, seq)
        assert not rec.missed and nxt.stance_index == 1 and nxt.rom.elapsed == 0.0
        assert rec.energy_plus == pytest.approx(PL.e_star, abs=1e-12)
        assert nxt.swing_pose == s.rom.foot
        off = ev._replace(landing=(ev.landing[0] + 0.5, ev.landing[1], ev.landing[2]))
        gone, rec = apply_impact(s, off, seq)
        assert gone is None and rec.missed and rec.landing_error == pytest.approx(0.5, abs=1e-15)

    def test_bad_step(self):
        seq = stones(0.0, 0.5)
        s = initial_state(seq, PL)
        with pytest.raises(ValueError):
            step_phase(s, make_plan(s, seq, PL), 0.0, PL)


class TestFailures:
    def test_two_metre_gap_is_missed(self):
        seq = stones(0.0, 0.5, 2.7)
        tr = rollout(seq, CFG)
        rep = evaluate_success(tr, seq)
        assert tr.outcome == "miss" and not rep.success
        assert rep.failed_step == 1 and rep.steps == 1
        assert "miss" in tr.event_names(len(tr) - 1)

    def test_lateral_shove_falls(self):
        seq = generate_terrain("flat_stones", 0.0, 0)
        tr = rollout(seq, CFG, disturbance=DisturbanceSpec(((1.0, 0.0, 2.0, 0.0),), cap=3.0))
        assert tr.outcome == "fall" and not evaluate_success(tr, seq).success
        assert "fall" in tr.event_names(len(tr) - 1)

    def test_needs_two_stones(self):
        with pytest.raises(ValueError):
            rollout(stones(0.0), CFG)


class TestDisturbance:
    def test_momentum_jump(self):
        seq = stones(0.0, 0.5)
        s = initial_state(seq, PL)
        out, hit = apply_disturbance(s, DisturbanceSpec(((0.5, 0.1, 0.0, 0.0),)), 0.48, 0.5, PL.z0)
        assert hit
        assert out.rom.sagittal.L - s.rom.sagittal.L == pytest.approx(PL.z0 * 0.1, abs=1e-15)
        assert out.rom.lateral == s.rom.lateral

    def test_outside_window(self):
        s = initial_state(stones(0.0, 0.5), PL)
        out, hit = apply_disturbance(s, DisturbanceSpec(((0.5, 0.1, 0.0, 0.0),)), 0.5, 0.52)
        assert not hit and out is s

    def test_spread_kick_sums_to_total(self):
        s = initial_state(stones(0.0, 0.5), PL)
        spec = DisturbanceSpec(((0.1, 0.0, 0.2, 0.07),))
        total = s
        for k in range(20):
            total, _ = apply_disturbance(total, spec, 0.02 * k, 0.02 * (k + 1))
        assert total.rom.lateral.L - s.rom.lateral.L == pytest.approx(0.2, abs=1e-15)

    def test_cap(self):
        with pytest.raises(ValueError):
            DisturbanceSpec(((1.0, 0.4, 0.4, 0.0),))

    def test_replans_on_kick(self):
        seq = generate_terrain("flat_stones", 0.0, 0)
        tr = rollout(seq, CFG, disturbance=DisturbanceSpec(((1.0, 0.1, 0.0, 0.0),)))
        hits = [k for k in range(len(tr)) if tr.events[k] & lay.EV_DISTURBANCE]
        assert len(hits) == 1
        assert set(tr.event_names(hits[0])) == {"disturbance", "replanned_T"}
        assert tr.success

    def test_random_schedule(self):
        sim = dataclasses.replace(CFG.sim, disturb=True)
        spec = random_disturbances(np.random.default_rng(0), sim)
        (t0, dvx, dvy, dur), = spec.events
        assert 0.5 <= t0 <= 4.0 and math.hypot(dvx, dvy) <= 0.3 and dur == 0.0


class TestDeterminism:
    def test_same_seed_same_trace(self):
        cfg = with_sim(noise=True, disturb=True)
        seq = generate_terrain("height_varying", 1.0, 12)
        a = rollout(seq, cfg, rollout_rng(seq.kind, 12))
        b = rollout(seq, cfg, rollout_rng(seq.kind, 12))
        assert np.array_equal(a.rows, b.rows) and np.array_equal(a.impacts, b.impacts)
        assert a.outcome == b.outcome

    def test_streams_differ_by_seed(self):
        cfg = with_sim(noise=True)
        seq = generate_terrain("height_varying", 1.0, 12)
        a = rollout(seq, cfg, rollout_rng(seq.kind, 1))
        b = rollout(seq, cfg, rollout_rng(seq.kind, 2))
        assert not np.array_equal(a.impacts, b.impacts)


@pytest.mark.parametrize("kernel", ["python", "compiled"])
def test_replay_reproduces_rows(kernel):
    seq = generate_terrain("height_varying", 0.8, 2)
    cfg = with_sim(noise=True, disturb=True)
    tr = rollout(seq, cfg, rollout_rng(seq.kind, 2), kernel=kernel)
    assert np.array_equal(replay_trace(tr, seq, cfg), tr.rows, equal_nan=True)


def test_unrecorded_rollout_keeps_impacts(flat_trace):
    seq, full = flat_trace
    tr = rollout(seq, CFG, record=False)
    assert len(tr) == 0 and np.array_equal(tr.impacts, full.impacts)
    assert tr.v_max == full.v_max


def test_event_bits_round_trip():
    for bits in range(1, 128):
        assert event_bits(event_names(bits)) == bits
    with pytest.raises(ValueError):
        event_bits(["boom"])


@pytest.mark.parametrize("kind", ["flat_stones", "height_varying", "upstairs"])
def test_com_reference_continuous_across_switch(kind):
    # swing channels restart from the old stance foot by design; CoM channels must not jump
    seq = generate_terrain(kind, 0.5, 4)
    s = initial_state(seq, PL)
    for _ in range(6):
        plan = make_plan(s, seq, PL)
        s = step_phase(s, plan, plan.T_s - s.rom.elapsed, PL)
        plan = make_plan(s, seq, PL)
        end, _ = reference_vectors(plan, 1.0)
        s, _ = apply_impact(s, check_guard(s, plan), seq)
        start, _ = reference_vectors(make_plan(s, seq, PL), 0.0)
        np.testing.assert_allclose(end[:3], start[:3], rtol=0, atol=1e-9)
