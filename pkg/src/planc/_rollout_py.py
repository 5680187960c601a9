"""Reference rollout kernel assembled from the public single-tick operations.

Same signature and outputs as the compiled ``_rollout.run_rollout``.
"""

from __future__ import annotations

import math

import numpy as np

from . import _layout as lay
from .clf import block_value
from .lip import LipState, orbital_energy
from .reference import RomState, Side, StepStart, reference_vectors
from .sim import (
    DisturbanceSpec,
    SimState,
    apply_disturbance,
    apply_impact,
    check_guard,
    initial_state,
    make_plan,
    planner_from_params,
    step_phase,
    track,
)
from .terrain import Stone

P = lay.P
R = lay.R
I = lay.I


def _stones(arr: np.ndarray) -> list[Stone]:
    return [Stone((float(r[0]), float(r[1]), float(r[2])), float(r[3]), float(r[4]), float(r[5])) for r in arr]


def row_values(state: SimState, plan, cfg, rows_clf, c, alpha, V_prev, t_prev):
    """Numeric trace row for a state that has been tracked onto ``plan``.

    Returns ``(row, V)``. Shared with trace replay.
    """
    z0 = cfg.z0
    rom = state.rom
    fx, fy, fz = rom.foot
    pos, vel = reference_vectors(plan, plan.phase)
    com_x = fx + rom.sagittal.p
    com_y = fy + rom.lateral.p
    vx = rom.sagittal.L / z0
    vy = rom.lateral.L / z0
    actual_pos = (com_x, com_y, rom.com_z, state.swing_pose[0], state.swing_pose[1], state.swing_pose[2],
                  plan.heading, plan.heading)
    actual_vel = (vx, vy, rom.com_zd, float(vel[3]), float(vel[4]), float(vel[5]), 0.0, 0.0)
    eta = [actual_pos[i] - float(pos[i]) for i in range(8)] + [actual_vel[i] - float(vel[i]) for i in range(8)]
    V = block_value(eta, rows_clf)
    if t_prev is None:
        margin = c * V
    else:
        margin = (V - V_prev) / (state.t - t_prev) + c * V
    st = rom.start
    row = (
        state.t,
        plan.phase,
        float(state.stance_index),
        com_x,
        com_y,
        rom.com_z,
        vx,
        vy,
        rom.com_zd,
        state.swing_pose[0],
        state.swing_pose[1],
        state.swing_pose[2],
        rom.sagittal.p,
        rom.sagittal.L,
        orbital_energy(rom.sagittal, cfg.lip),
        plan.T_s,
        plan.u_des,
        V,
        margin,
        math.exp(-alpha * V),
        rom.lateral.p,
        rom.lateral.L,
        rom.elapsed,
        float(int(rom.side)),
        fx,
        fy,
        fz,
        st.sagittal.p,
        st.sagittal.L,
        st.lateral.p,
        st.lateral.L,
        st.com_z,
        st.com_zd,
        st.swing[0],
        st.swing[1],
        st.swing[2],
    )
    return row, V


def state_from_row(row) -> SimState:
    """Rebuild the simulator state stored in a numeric trace row."""
    r = [float(v) for v in row]
    start = StepStart(
        LipState(r[R["start_p"]], r[R["start_L"]]),
        LipState(r[R["start_py"]], r[R["start_Ly"]]),
        r[R["start_z"]],
        r[R["start_zd"]],
        (r[R["start_swx"]], r[R["start_swy"]], r[R["start_swz"]]),
    )
    rom = RomState(
        LipState(r[R["p"]], r[R["L"]]),
        LipState(r[R["py"]], r[R["Ly"]]),
        r[R["com_z"]],
        r[R["com_vz"]],
        r[R["elapsed"]],
        Side(int(r[R["side"]])),
        (r[R["foot_x"]], r[R["foot_y"]], r[R["foot_z"]]),
        start,
    )
    return SimState(
        r[R["t"]], r[R["phase"]], rom, (r[R["swing_x"]], r[R["swing_y"]], r[R["swing_z"]]), int(r[R["stance_index"]])
    )


def _impact_row(rec) -> tuple:
    ev = rec.event
    g = rec.geometry
    return (
        ev.t,
        float(ev.stone),
        *ev.landing,
        *ev.target,
        rec.p_minus,
        rec.L_minus,
        g.p_dot,
        g.z_dot,
        g.x_sw,
        rec.y_sw,
        g.z_sw,
        rec.L_plus,
        rec.p_plus,
        rec.lateral_plus.p,
        rec.lateral_plus.L,
        rec.energy_plus,
        rec.landing_error,
        1.0 if rec.missed else 0.0,
    )


def run_rollout(stones, params, clf_rows, noise_land, noise_vz, dist, record):
    params = np.asarray(params, dtype=np.float64)
    cfg = planner_from_params(params)
    seq = _stones(np.asarray(stones, dtype=np.float64))
    n = len(seq)
    z0 = cfg.z0
    dt = float(params[P["dt"]])
    reach = float(params[P["max_reach"]])
    fall_h = float(params[P["fall_height"]])
    lat_fall = float(params[P["lateral_fall"]])
    fixed_T = float(params[P["fixed_T"]])
    fixed_T = None if math.isnan(fixed_T) else fixed_T
    fixed_u = float(params[P["fixed_udes"]])
    fixed_u = None if math.isnan(fixed_u) else fixed_u
    c = float(params[P["clf_c"]])
    alpha = float(params[P["clf_alpha"]])
    rows_clf = [tuple(float(v) for v in r) for r in np.asarray(clf_rows)]
    spec = DisturbanceSpec(tuple(tuple(float(v) for v in r) for r in np.asarray(dist)), cap=math.inf)

    try:
        state = initial_state(
            seq, cfg, float(params[P["init_p"]]), float(params[P["init_energy"]]), fixed_T=fixed_T
        )
    except ValueError:
        return _pack([], [], [], 3, 0, math.inf, -math.inf)

    def plan_for(st):
        return make_plan(st, seq, cfg, fixed_T=fixed_T, fixed_udes=fixed_u)

    rows: list = []
    events: list = []
    impacts: list = []
    v_min = math.inf
    v_max = -math.inf
    V_prev = 0.0
    t_row_prev = None
    outcome = -1
    failed = -1
    pending = 0

    try:
        plan = plan_for(state)
        state = track(state, plan)
    except ValueError:
        return _pack(rows, events, impacts, lay.OUTCOMES.index("diverged"), 0, v_min, v_max)
    t_prev = -math.inf
    k = 0  # impacts so far

    while True:
        ev = pending
        pending = 0
        state, hit = apply_disturbance(state, spec, t_prev, state.t, z0)
        if hit:
            ev |= lay.EV_DISTURBANCE
            try:
                new = plan_for(state)
            except ValueError:
                outcome, failed = 3, state.stance_index
                new = None
            if new is None:
                ev |= lay.EV_DIVERGED
                row, V = row_values(state, plan, cfg, rows_clf, c, alpha, V_prev, t_row_prev)
                _emit(rows, events, row, ev, record)
                v_min, v_max = min(v_min, V), max(v_max, V)
                break
            if abs(new.T_s - plan.T_s) > lay.REPLAN_TOL:
                ev |= lay.EV_REPLAN
            plan = new
            state = track(state, plan)

        guard = check_guard(
            state,
            plan,
            noise=(float(noise_land[k, 0]), float(noise_land[k, 1]), float(noise_vz[k])),
            max_reach=reach,
            z0=z0,
        ) if plan.phase >= 1.0 else None

        row, V = row_values(state, plan, cfg, rows_clf, c, alpha, V_prev, t_row_prev)
        v_min, v_max = min(v_min, V), max(v_max, V)
        V_prev, t_row_prev = V, state.t

        if guard is not None:
            post, rec = apply_impact(state, guard, seq, cfg.lip)
            impacts.append(_impact_row(rec))
            ev |= lay.EV_IMPACT
            k += 1
            if post is None:
                ev |= lay.EV_MISS
                outcome, failed = 1, k - 1
            elif guard.stone == n - 1:
                ev |= lay.EV_SUCCESS
                outcome = 0
            _emit(rows, events, row, ev, record)
            if outcome >= 0:
                break
            state = post
            try:
                new = plan_for(state)
            except ValueError:
                outcome, failed = 3, state.stance_index
                _mark_last(events, lay.EV_DIVERGED, record)
                break
            plan = new
            state = track(state, plan)
        else:
            rom = state.rom
            vals = (rom.sagittal.p, rom.sagittal.L, rom.lateral.p, rom.lateral.L, rom.com_z, rom.com_zd, V)
            if not all(math.isfinite(v) for v in vals):
                ev |= lay.EV_DIVERGED
                outcome, failed = 3, state.stance_index
            elif rom.com_z < seq[state.stance_index].top + fall_h or abs(rom.lateral.p) > lat_fall:
                ev |= lay.EV_FALL
                outcome, failed = 2, state.stance_index
            _emit(rows, events, row, ev, record)
            if outcome >= 0:
                break

        h = min(dt, plan.T_s - state.rom.elapsed)
        t_prev = state.t
        state = step_phase(state, plan, h, cfg)
        try:
            new = plan_for(state)
        except ValueError:
            outcome, failed = 3, state.stance_index
            row, V = row_values(state, plan, cfg, rows_clf, c, alpha, V_prev, t_row_prev)
            _emit(rows, events, row, lay.EV_DIVERGED, record)
            break
        if abs(new.T_s - plan.T_s) > lay.REPLAN_TOL:
            pending |= lay.EV_REPLAN
        plan = new
        state = track(state, plan)

    return _pack(rows, events, impacts, outcome, failed, v_min, v_max)


def _emit(rows, events, row, ev, record):
    if record:
        rows.append(row)
        events.append(ev)


def _mark_last(events, bit, record):
    if record and events:
        events[-1] |= bit


def _pack(rows, events, impacts, outcome, failed, v_min, v_max):
    nr = len(lay.ROW_FIELDS)
    ni = len(lay.IMPACT_FIELDS)
    return (
        np.array(rows, dtype=np.float64).reshape(-1, nr),
        np.array(events, dtype=np.int64),
        np.array(impacts, dtype=np.float64).reshape(-1, ni),
        outcome,
        failed,
        v_min,
        v_max,
    )
