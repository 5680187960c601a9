"""Per-step planner and per-tick reference generator.

A :class:`StepPlan` is rebuilt from the current reduced-order state on every
tick. It fixes the step duration from the passive sagittal flow, chooses the
pre-impact vertical CoM velocity that lands the post-impact state on the
target orbital energy, and carries the cubic CoM splines and quintic Bézier
swing-foot curves that turn the plan into references at any phase.

Frames: sagittal and lateral CoM splines, swing-foot curves and foot targets
are expressed relative to the stance foot (z relative to the stance stone
top). The vertical CoM spline lives in world z. :func:`sample_references`
converts everything to world coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .lip import REACHED, LipParams, LipState, flow, time_to_target
from .terrain import Stone, virtual_slope

__all__ = [
    "Side",
    "PlannerConfig",
    "StepStart",
    "RomState",
    "Cubic",
    "SplineSample",
    "PreImpactEstimate",
    "HlipTarget",
    "StepPlan",
    "OutputReference",
    "ARM_JOINTS",
    "BEZIER_H",
    "plan_step",
    "desired_momentum",
    "desired_impact_velocity",
    "estimate_preimpact",
    "com_spline",
    "eval_spline",
    "bezier_eval",
    "apex_control_height",
    "swing_reference",
    "lateral_hlip_reference",
    "sample_references",
    "reference_vectors",
    "arm_reference",
]

# Remaining step time below which the guard is considered reached.
GUARD_TOL = 1e-9
BEZIER_H = (0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
_BINOM5 = (1.0, 5.0, 10.0, 10.0, 5.0, 1.0)
_BINOM4 = (1.0, 4.0, 6.0, 4.0, 1.0)
# Interior phases used to place the swing apex control height.
APEX_GRID = tuple(j / 32 for j in range(1, 32))

ARM_JOINTS = (
    "left_shoulder_pitch",
    "right_shoulder_pitch",
    "left_shoulder_roll",
    "right_shoulder_roll",
    "left_shoulder_yaw",
    "right_shoulder_yaw",
    "left_elbow",
    "right_elbow",
)


class Side(enum.IntEnum):
    """Stance foot. The swing foot is placed towards ``-side`` laterally."""

    LEFT = 1
    RIGHT = -1


@dataclass(frozen=True)
class PlannerConfig:
    epsilon: float = 0.6
    e_star: float = 0.6
    z0: float = 1.0
    g: float = 9.81
    w_nominal: float = 0.1
    t_min: float = 0.2
    t_max: float = 0.8
    swing_clearance_margin: float = 0.08
    blend_exponent: float = 1.0
    foothold_margin: float = 0.05
    lateral_centering: float = 1.0
    arm_swing_gain: float = 0.5
    arm_nominal: tuple[float, ...] = (0.2, 0.2, 0.2, -0.2, 0.0, 0.0, 0.6, 0.6)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.e_star > 0:
            raise ValueError(f"e_star must be positive, got {self.e_star}")
        if not 0 < self.t_min < self.t_max:
            raise ValueError(f"need 0 < t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.swing_clearance_margin < 0 or self.foothold_margin < 0:
            raise ValueError("margins must be nonnegative")
        if not 0.0 <= self.lateral_centering <= 1.0:
            raise ValueError(f"lateral_centering must lie in [0, 1], got {self.lateral_centering}")
        if not self.blend_exponent > 0:
            raise ValueError("blend_exponent must be positive")
        if len(self.arm_nominal) != len(ARM_JOINTS):
            raise ValueError(f"arm_nominal needs {len(ARM_JOINTS)} entries")
        LipParams(self.z0, self.g)

    @property
    def lip(self) -> LipParams:
        return LipParams(self.z0, self.g)


@dataclass(frozen=True, slots=True)
class StepStart:
    """Snapshot taken at lift-off; anchors the splines of the current step."""

    sagittal: LipState
    lateral: LipState
    com_z: float
    com_zd: float
    swing: tuple[float, float, float]


@dataclass(frozen=True, slots=True)
class RomState:
    sagittal: LipState
    lateral: LipState
    com_z: float
    com_zd: float
    elapsed: float
    side: Side
    foot: tuple[float, float, float]
    start: StepStart


class Cubic(NamedTuple):
    """c(s) = c0 + c1 s + c2 s^2 + c3 s^3 over phase s in [0, 1]."""

    c0: float
    c1: float
    c2: float
    c3: float


class SplineSample(NamedTuple):
    pos: float
    vel: float
    acc: float
    clamped: bool


class PreImpactEstimate(NamedTuple):
    p: float
    L: float
    xdot: float
    z: float


class HlipTarget(NamedTuple):
    w_des: float
    boundary: LipState
    u_orbit: float


@dataclass(frozen=True)
class StepPlan:
    T_s: float
    elapsed: float
    phase: float
    timing_status: str
    l_des: float
    h_des: float
    w_des: float
    heading: float
    L_des: float
    u_des: float
    estimate: PreImpactEstimate
    com_spline_x: Cubic
    com_spline_y: Cubic
    com_spline_z: Cubic
    lateral_boundary: LipState
    bezier_h: tuple[float, ...]
    bezier_v: tuple[float, ...]
    z_sw_max: float
    liftoff_swing_pose: tuple[float, float, float]
    origin: tuple[float, float, float]
    side: Side
    arm_amplitude: float
    arm_nominal: tuple[float, ...]


@dataclass(frozen=True)
class OutputReference:
    com_pos: np.ndarray
    com_vel: np.ndarray
    swing_pos: np.ndarray
    swing_vel: np.ndarray
    pelvis_yaw: float
    swing_yaw: float
    arm_joint_ref: tuple[float, ...]
    phase: float

    def __post_init__(self):
        if not 0.0 <= self.phase < 1.0:
            raise ValueError(f"phase must lie in [0, 1), got {self.phase}")


# -- momentum regulation ------------------------------------------------------


def desired_momentum(cfg: PlannerConfig, l_des: float, p_post: float | None = None) -> float:
    """Positive momentum putting the post-impact state on the E* orbit.

    ``p_post`` defaults to the nominal post-impact position ``-(1 - eps) l_des``.
    """
    if p_post is None:
        p_post = -(1.0 - cfg.epsilon) * l_des
    lam2 = cfg.g / cfg.z0
    return cfg.z0 * math.sqrt(cfg.e_star + lam2 * p_post * p_post)


def desired_impact_velocity(
    L_des: float, L_hat_minus: float, h_des: float, xdot_hat_minus: float, l_des: float
) -> float:
    if not l_des > 0:
        raise ValueError(f"l_des must be positive, got {l_des}")
    return (L_des - L_hat_minus + h_des * xdot_hat_minus) / l_des


def estimate_preimpact(
    current: RomState, T_remaining: float, cfg: PlannerConfig, z_desired: float
) -> PreImpactEstimate:
    """Pre-impact state: momentum and position from the closed-form flow,
    horizontal velocity and CoM height as phase-weighted blends of the desired
    pre-impact value and the current one."""
    if T_remaining < 0:
        raise ValueError(f"T_remaining must be nonnegative, got {T_remaining}")
    hat = flow(current.sagittal, cfg.lip, T_remaining)
    total = current.elapsed + T_remaining
    s = current.elapsed / total if total > 0 else 0.0
    w = s**cfg.blend_exponent
    xdot = w * (hat.L / cfg.z0) + (1.0 - w) * (current.sagittal.L / cfg.z0)
    z = w * z_desired + (1.0 - w) * current.com_z
    return PreImpactEstimate(hat.p, hat.L, xdot, z)


# -- splines ------------------------------------------------------------------


def com_spline(p_start: float, v_start: float, p_end: float, v_end: float, T_s: float) -> Cubic:
    """Cubic in phase matching positions and time-domain velocities at both ends."""
    if not T_s > 0:
        raise ValueError(f"T_s must be positive, got {T_s}")
    m0 = v_start * T_s
    m1 = v_end * T_s
    dp = p_end - p_start
    return Cubic(p_start, m0, 3.0 * dp - 2.0 * m0 - m1, -2.0 * dp + m0 + m1)


def eval_spline(spline: Cubic, s: float, T_s: float) -> SplineSample:
    clamped = not 0.0 <= s <= 1.0
    if clamped:
        s = min(max(s, 0.0), 1.0)
    c0, c1, c2, c3 = spline
    pos = c0 + s * (c1 + s * (c2 + s * c3))
    dpos = c1 + s * (2.0 * c2 + s * 3.0 * c3)
    ddpos = 2.0 * c2 + 6.0 * c3 * s
    return SplineSample(pos, dpos / T_s, ddpos / (T_s * T_s), clamped)


def bezier_eval(coeffs: Sequence[float], s: float) -> tuple[float, float]:
    """Degree-5 Bernstein evaluation and its phase derivative via the hodograph."""
    if len(coeffs) != 6:
        raise ValueError(f"expected 6 Bezier coefficients, got {len(coeffs)}")
    t = 1.0 - s
    val = 0.0
    for k in range(6):
        val += _BINOM5[k] * s**k * t ** (5 - k) * coeffs[k]
    der = 0.0
    for k in range(5):
        der += _BINOM4[k] * s**k * t ** (4 - k) * (coeffs[k + 1] - coeffs[k])
    return val, 5.0 * der


def apex_control_height(z_start: float, z_end: float, apex: float) -> float:
    """Control height ``c`` such that Bézier [z_start, c, c, c, z_end, z_end]
    peaks at ``apex`` (taken over the interior phase grid)."""
    best = math.inf
    for s in APEX_GRID:
        t = 1.0 - s
        b0 = t**5
        mid = 5.0 * s * t**4 + 10.0 * s**2 * t**3 + 10.0 * s**3 * t**2
        tail = 5.0 * s**4 * t + s**5
        c = (apex - z_start * b0 - z_end * tail) / mid
        if c < best:
            best = c
    return best


def swing_reference(plan: StepPlan, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Swing position and velocity relative to the stance foot at phase ``s``."""
    bh, dbh = bezier_eval(plan.bezier_h, s)
    bv, dbv = bezier_eval(plan.bezier_v, s)
    x0, y0, _ = plan.liftoff_swing_pose
    pos = np.array([(1.0 - bh) * x0 + bh * plan.l_des, (1.0 - bh) * y0 + bh * plan.w_des, bv])
    vel = np.array([dbh * (plan.l_des - x0), dbh * (plan.w_des - y0), dbv]) / plan.T_s
    return pos, vel


# -- lateral HLIP ----------------------------------------------------------------


def lateral_hlip_reference(
    lateral_state: LipState,
    T_s: float,
    cfg: PlannerConfig,
    params: LipParams | None = None,
    side: Side = Side.LEFT,
    drift: float = 0.0,
) -> HlipTarget:
    """Foot placement onto the period-2 orbit of the step-to-step map.

    ``lateral_state`` is the (predicted) pre-impact lateral state of the
    current step and ``drift`` the offset of the stance foot from its nominal
    line. The orbit alternates the displacement ``-side * w_nominal``. The
    error map is augmented with the foot offset (``df' = df + du``) and the
    gain places its poles at ``{0, 0, 1 - lateral_centering}``: the CoM error
    is removed in two steps while the gait recentres geometrically. With
    ``lateral_centering = 0`` this reduces to ``K = [1, coth(lam T) / (lam z0)]``.
    """
    params = params or cfg.lip
    lam = params.lam
    c = math.cosh(lam * T_s)
    s = math.sinh(lam * T_s)
    u_orbit = -int(side) * cfg.w_nominal
    # x* = (A + I)^-1 A e1 u for the 2x2 flow matrix, expanded in closed form
    a11, a12, a21 = c, s / (lam * params.z0), params.z0 * lam * s
    det = (a11 + 1.0) * (a11 + 1.0) - a12 * a21
    p_orb = ((a11 + 1.0) * a11 - a12 * a21) / det * u_orbit
    L_orb = (-a21 * a11 + (a11 + 1.0) * a21) / det * u_orbit
    rho = 1.0 - cfg.lateral_centering
    k1 = (2.0 * c - 1.0 - rho) / (2.0 * (c - 1.0))
    k2 = (2.0 * c + 1.0 - rho) / (2.0 * lam * params.z0 * s)
    k3 = (1.0 - rho) / (2.0 * (c - 1.0))
    w_des = u_orbit + k1 * (lateral_state.p - p_orb) + k2 * (lateral_state.L - L_orb) + k3 * drift
    return HlipTarget(w_des, LipState(p_orb, L_orb), u_orbit)


# -- planning -------------------------------------------------------------------------


def plan_step(
    rom: RomState,
    stance: Stone,
    nxt: Stone,
    prev: Stone,
    cfg: PlannerConfig,
    *,
    fixed_T: float | None = None,
    fixed_udes: float | None = None,
) -> StepPlan:
    params = cfg.lip
    z0 = cfg.z0
    fx, fy, fz = rom.foot
    elapsed = rom.elapsed

    l_des = nxt.center[0] - fx
    h_des = nxt.top - fz
    heading = virtual_slope(stance, nxt)[2]
    if not l_des > 0:
        raise ValueError(f"next stone must lie ahead of the stance foot (l_des={l_des})")

    # timing: remaining time chosen so that elapsed + remaining stays in the clamp
    if fixed_T is not None:
        remaining = max(fixed_T - elapsed, 0.0)
        status = "fixed"
    else:
        lo = max(cfg.t_min - elapsed, 0.0)
        hi = cfg.t_max - elapsed
        if hi <= lo:
            remaining, status = max(hi, 0.0), REACHED
        else:
            timing = time_to_target(rom.sagittal, params, cfg.epsilon * l_des, lo, hi)
            remaining, status = timing.duration, timing.status
    if remaining <= GUARD_TOL and elapsed > 0.0:
        remaining = 0.0
    T_s = elapsed + remaining
    phase = elapsed / T_s

    hat = flow(rom.sagittal, params, remaining)
    slope = h_des / l_des
    z_end = fz + z0 + slope * hat.p
    est = estimate_preimpact(rom, remaining, cfg, z_end)

    L_des = desired_momentum(cfg, l_des, hat.p - l_des)
    if fixed_udes is not None:
        u_des = fixed_udes
    else:
        u_des = desired_impact_velocity(L_des, est.L, h_des, est.xdot, l_des)

    start = rom.start
    spl_x = com_spline(start.sagittal.p, start.sagittal.L / z0, hat.p, hat.L / z0, T_s)
    spl_z = com_spline(start.com_z, start.com_zd, z_end, u_des, T_s)

    lat_hat = flow(rom.lateral, params, remaining)
    drift = fy - (nxt.center[1] + int(rom.side) * 0.5 * cfg.w_nominal)
    hl = lateral_hlip_reference(lat_hat, T_s, cfg, params, rom.side, drift)
    half = 0.5 * nxt.width_y - cfg.foothold_margin
    y_lo = nxt.center[1] - half - fy
    y_hi = nxt.center[1] + half - fy
    w_des = min(max(hl.w_des, y_lo), y_hi)
    # ends at the predicted pre-impact state, so the reference stays continuous
    # across the contact switch even off the orbit
    spl_y = com_spline(start.lateral.p, start.lateral.L / z0, lat_hat.p, lat_hat.L / z0, T_s)

    lift = (start.swing[0] - fx, start.swing[1] - fy, start.swing[2] - fz)
    z_sw_max = max(prev.top, stance.top, nxt.top) - fz + cfg.swing_clearance_margin
    ctrl = apex_control_height(lift[2], h_des, z_sw_max)
    bezier_v = (lift[2], ctrl, ctrl, ctrl, h_des, h_des)

    return StepPlan(
        T_s=T_s,
        elapsed=elapsed,
        phase=phase,
        timing_status=status,
        l_des=l_des,
        h_des=h_des,
        w_des=w_des,
        heading=heading,
        L_des=L_des,
        u_des=u_des,
        estimate=est,
        com_spline_x=spl_x,
        com_spline_y=spl_y,
        com_spline_z=spl_z,
        lateral_boundary=hl.boundary,
        bezier_h=BEZIER_H,
        bezier_v=bezier_v,
        z_sw_max=z_sw_max,
        liftoff_swing_pose=lift,
        origin=rom.foot,
        side=rom.side,
        arm_amplitude=cfg.arm_swing_gain * l_des,
        arm_nominal=tuple(cfg.arm_nominal),
    )


def arm_reference(plan: StepPlan, s: float) -> tuple[float, ...]:
    """Anti-phase shoulder-pitch swing; the arm opposite the swing leg leads."""
    swing = plan.arm_amplitude * math.sin(math.pi * s) * int(plan.side)
    ref = list(plan.arm_nominal)
    ref[0] -= swing
    ref[1] += swing
    return tuple(ref)


def reference_vectors(plan: StepPlan, s: float) -> tuple[np.ndarray, np.ndarray]:
    """World-frame desired (positions, velocities) over the eight tracked
    channels, valid on the closed phase interval [0, 1]."""
    ox, oy, oz = plan.origin
    T = plan.T_s
    sx = eval_spline(plan.com_spline_x, s, T)
    sy = eval_spline(plan.com_spline_y, s, T)
    sz = eval_spline(plan.com_spline_z, s, T)
    sw_pos, sw_vel = swing_reference(plan, s)
    pos = np.array(
        [ox + sx.pos, oy + sy.pos, sz.pos, ox + sw_pos[0], oy + sw_pos[1], oz + sw_pos[2], plan.heading, plan.heading]
    )
    vel = np.array([sx.vel, sy.vel, sz.vel, sw_vel[0], sw_vel[1], sw_vel[2], 0.0, 0.0])
    return pos, vel


def sample_references(plan: StepPlan, s: float) -> OutputReference:
    """World-frame desired outputs at phase ``s``."""
    pos, vel = reference_vectors(plan, s)
    return OutputReference(
        com_pos=pos[0:3],
        com_vel=vel[0:3],
        swing_pos=pos[3:6],
        swing_vel=vel[3:6],
        pelvis_yaw=plan.heading,
        swing_yaw=plan.heading,
        arm_joint_ref=arm_reference(plan, s),
        phase=s,
    )
