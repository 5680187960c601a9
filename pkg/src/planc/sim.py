"""Hybrid closed-loop rollouts on stepping stones.

The horizontal CoM channels evolve passively along the pendulum flow; the
vertical CoM and the swing foot are actuated and follow the planner
references exactly. The planner is rebuilt every tick. The guard is time
based: it fires once the step phase reaches 1, at which point the swing foot
lands (plus optional bounded noise), the angular momentum is reset about the
new contact and the stance switches.

Two interchangeable kernels run the loop: a compiled one and the
pure-Python reference in :mod:`planc._rollout_py`, which is built from the
public functions below. ``PLANC_PURE_PYTHON=1`` forces the latter.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _layout as lay
from .clf import assemble_P
from .lip import ImpactGeometry, LipParams, LipState, flow, impact_reset, orbital_energy
from .reference import PlannerConfig, RomState, Side, StepPlan, StepStart, plan_step, reference_vectors
from .terrain import FAMILIES, Stone, StoneSequence, contains

__all__ = [
    "SimState",
    "ImpactEvent",
    "ImpactRecord",
    "DisturbanceSpec",
    "RolloutTrace",
    "SuccessReport",
    "initial_state",
    "make_plan",
    "track",
    "step_phase",
    "check_guard",
    "apply_impact",
    "apply_disturbance",
    "random_disturbances",
    "rollout",
    "rollout_rng",
    "evaluate_success",
    "replay_trace",
    "kernel_name",
]


@dataclass(frozen=True, slots=True)
class SimState:
    t: float
    phase: float
    rom: RomState
    swing_pose: tuple[float, float, float]
    stance_index: int

    @property
    def sagittal(self) -> LipState:
        return self.rom.sagittal

    @property
    def lateral(self) -> LipState:
        return self.rom.lateral

    @property
    def com_z(self) -> float:
        return self.rom.com_z

    @property
    def com_z_dot(self) -> float:
        return self.rom.com_zd

    @property
    def stance_side(self) -> Side:
        return self.rom.side

    def com_position(self) -> tuple[float, float, float]:
        fx, fy, _ = self.rom.foot
        return fx + self.rom.sagittal.p, fy + self.rom.lateral.p, self.rom.com_z


class ImpactEvent(NamedTuple):
    t: float
    stone: int  # index of the stone being stepped onto
    landing: tuple[float, float, float]
    target: tuple[float, float, float]
    p_dot: float
    z_dot: float


class ImpactRecord(NamedTuple):
    event: ImpactEvent
    geometry: ImpactGeometry
    y_sw: float
    L_minus: float
    p_minus: float
    L_plus: float
    p_plus: float
    lateral_plus: LipState
    energy_plus: float
    landing_error: float
    missed: bool


@dataclass(frozen=True)
class DisturbanceSpec:
    """Schedule of horizontal velocity kicks ``(time, dvx, dvy, duration)``.

    A zero duration is an impulse at ``time``; a positive one spreads the same
    total velocity change uniformly over ``[time, time + duration)``.
    """

    events: tuple[tuple[float, float, float, float], ...] = ()
    cap: float = 0.5

    def __post_init__(self):
        for t, dvx, dvy, dur in self.events:
            if not all(math.isfinite(v) for v in (t, dvx, dvy, dur)) or dur < 0:
                raise ValueError(f"invalid disturbance entry {(t, dvx, dvy, dur)}")
            if math.hypot(dvx, dvy) > self.cap + 1e-12:
                raise ValueError(f"disturbance {math.hypot(dvx, dvy):.3f} m/s exceeds cap {self.cap}")

    def as_array(self) -> np.ndarray:
        return np.array(self.events, dtype=np.float64).reshape(-1, 4)


# -- single-tick operations ------------------------------------------------------


def _stones(seq) -> Sequence[Stone]:
    return seq.stones if isinstance(seq, StoneSequence) else seq


def initial_state(
    seq, cfg: PlannerConfig, init_p: float | None = None, init_energy: float = 0.6, *, fixed_T: float | None = None
) -> SimState:
    """Left foot on stone 0 at ``+w/2``, swing foot at ``-w/2``, CoM at height
    z0 moving forward with orbital energy ``init_energy``.

    ``init_p`` defaults to the nominal post-impact position ``-(1 - eps) l``
    for the first stone pair, so the first step looks like any other. The
    lateral channel starts on the period-2 orbit of the first planned step.
    """
    stones = _stones(seq)
    cx, cy, top = stones[0].center
    if init_p is None or math.isnan(init_p):
        init_p = -(1.0 - cfg.epsilon) * (stones[1].center[0] - cx)
    half = 0.5 * cfg.w_nominal
    foot = (cx, cy + half, top)
    lam2 = cfg.g / cfg.z0
    sag = LipState(init_p, cfg.z0 * math.sqrt(init_energy + lam2 * init_p * init_p))
    z = top + cfg.z0
    swing = (cx, cy - half, top)

    def build(lat):
        rom = RomState(sag, lat, z, 0.0, 0.0, Side.LEFT, foot, StepStart(sag, lat, z, 0.0, swing))
        return SimState(0.0, 0.0, rom, swing, 0)

    # lateral state does not enter the step timing, so one provisional plan suffices
    b = make_plan(build(LipState(-half, 0.0)), stones, cfg, fixed_T=fixed_T).lateral_boundary
    return build(LipState(b.p, -b.L))


def make_plan(state: SimState, seq, cfg: PlannerConfig, *, fixed_T=None, fixed_udes=None) -> StepPlan:
    stones = _stones(seq)
    i = state.stance_index
    stance = stones[i]
    prev = stones[i - 1] if i > 0 else stance
    return plan_step(state.rom, stance, stones[i + 1], prev, cfg, fixed_T=fixed_T, fixed_udes=fixed_udes)


def track(state: SimState, plan: StepPlan) -> SimState:
    """Exact tracking: actuated channels snap onto the references at the plan phase."""
    pos, vel = reference_vectors(plan, plan.phase)
    rom = replace(state.rom, com_z=float(pos[2]), com_zd=float(vel[2]))
    return replace(
        state, phase=plan.phase, rom=rom, swing_pose=(float(pos[3]), float(pos[4]), float(pos[5]))
    )


def step_phase(state: SimState, plan: StepPlan, dt: float, cfg: PlannerConfig) -> SimState:
    """Advance ``dt`` seconds: passive flow of both horizontal channels,
    actuated channels tracked exactly at the advanced phase (held at the
    terminal reference past phase 1)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    params = cfg.lip
    rom = state.rom
    elapsed = rom.elapsed + dt
    phase = elapsed / plan.T_s
    pos, vel = reference_vectors(plan, min(phase, 1.0))
    rom = replace(
        rom,
        sagittal=flow(rom.sagittal, params, dt),
        lateral=flow(rom.lateral, params, dt),
        com_z=float(pos[2]),
        com_zd=float(vel[2]),
        elapsed=elapsed,
    )
    return SimState(state.t + dt, phase, rom, (float(pos[3]), float(pos[4]), float(pos[5])), state.stance_index)


def check_guard(
    state: SimState,
    plan: StepPlan,
    *,
    noise: tuple[float, float, float] = (0.0, 0.0, 0.0),
    max_reach: float = math.inf,
    z0: float = 1.0,
) -> ImpactEvent | None:
    """Impact once the phase reaches 1. The landing point is the swing target
    plus ``noise[:2]``, with its x pulled back to within ``max_reach`` of the
    CoM; ``noise[2]`` perturbs the vertical CoM velocity at impact."""
    if plan.phase < 1.0:
        return None
    fx, fy, fz = state.rom.foot
    tx = fx + plan.l_des
    ty = fy + plan.w_des
    tz = fz + plan.h_des
    cx = fx + state.rom.sagittal.p
    lx = min(max(tx + noise[0], cx - max_reach), cx + max_reach)
    return ImpactEvent(
        state.t,
        state.stance_index + 1,
        (lx, ty + noise[1], tz),
        (tx, ty, tz),
        state.rom.sagittal.L / z0,
        state.rom.com_zd + noise[2],
    )


def apply_impact(
    state: SimState, event: ImpactEvent, seq, params: LipParams | None = None
) -> tuple[SimState | None, ImpactRecord]:
    """Contact switch. Returns ``(None, record)`` when the landing misses the stone.

    Sagittal momentum is reset about the new contact; both horizontal positions
    are rebased onto the new foot; lateral momentum carries over unchanged.
    """
    params = params or LipParams()
    stones = _stones(seq)
    rom = state.rom
    fx, fy, fz = rom.foot
    lx, ly, lz = event.landing
    geom = ImpactGeometry(lx - fx, lz - fz, event.p_dot, event.z_dot)
    L_plus = impact_reset(rom.sagittal.L, geom)
    sag_plus = LipState(rom.sagittal.p - geom.x_sw, L_plus)
    lat_plus = LipState(rom.lateral.p - (ly - fy), rom.lateral.L)
    ex = lx - event.target[0]
    ey = ly - event.target[1]
    err = math.sqrt(ex * ex + ey * ey)
    missed = not contains(stones[event.stone], (lx, ly))
    record = ImpactRecord(
        event,
        geom,
        ly - fy,
        rom.sagittal.L,
        rom.sagittal.p,
        L_plus,
        sag_plus.p,
        lat_plus,
        orbital_energy(sag_plus, params),
        err,
        missed,
    )
    if missed:
        return None, record
    start = StepStart(sag_plus, lat_plus, rom.com_z, event.z_dot, rom.foot)
    new_rom = RomState(
        sag_plus, lat_plus, rom.com_z, event.z_dot, 0.0, Side(-int(rom.side)), event.landing, start
    )
    return SimState(state.t, 0.0, new_rom, rom.foot, event.stone), record


def _window_fraction(t0: float, dur: float, a: float, b: float) -> float:
    """Share of a disturbance falling into the tick interval (a, b]."""
    if dur <= 0.0:
        return 1.0 if a < t0 <= b else 0.0
    lo = max(a, t0)
    hi = min(b, t0 + dur)
    return (hi - lo) / dur if hi > lo else 0.0


def apply_disturbance(
    state: SimState, spec: DisturbanceSpec | None, t_prev: float, t: float, z0: float = 1.0
) -> tuple[SimState, bool]:
    """Apply the part of every scheduled kick that falls in ``(t_prev, t]``.

    A velocity change ``dv`` enters the pendulum as a momentum change ``z0 dv``.
    Returns the new state and whether anything was applied.
    """
    if spec is None or not spec.events:
        return state, False
    rom = state.rom
    Lx = rom.sagittal.L
    Ly = rom.lateral.L
    hit = False
    for t0, dvx, dvy, dur in spec.events:
        f = _window_fraction(t0, dur, t_prev, t)
        if f > 0.0:
            Lx += z0 * dvx * f
            Ly += z0 * dvy * f
            hit = True
    if not hit:
        return state, False
    rom = replace(rom, sagittal=LipState(rom.sagittal.p, Lx), lateral=LipState(rom.lateral.p, Ly))
    return replace(state, rom=rom), True


def random_disturbances(rng: np.random.Generator, sim) -> DisturbanceSpec:
    """``sim.disturb_count`` kicks with uniform magnitude in [0, disturb_max],
    uniform direction and uniform time inside ``sim.disturb_window``."""
    events = []
    lo, hi = sim.disturb_window
    for _ in range(sim.disturb_count):
        t0 = float(rng.uniform(lo, hi))
        mag = float(rng.uniform(0.0, sim.disturb_max))
        ang = float(rng.uniform(-math.pi, math.pi))
        events.append((t0, mag * math.cos(ang), mag * math.sin(ang), sim.disturb_duration))
    return DisturbanceSpec(tuple(events), sim.disturb_cap)


def rollout_rng(kind: str, seed: int) -> np.random.Generator:
    """Noise/disturbance stream of one rollout, independent of the terrain stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(FAMILIES.index(kind), 1))
    return np.random.Generator(np.random.PCG64(ss))


# -- traces -------------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutTrace:
    rows: np.ndarray  # (n, len(ROW_FIELDS)); empty when recording was off
    events: np.ndarray  # (n,) event bit sets
    impacts: np.ndarray  # (k, len(IMPACT_FIELDS))
    outcome: str
    failed_step: int | None  # impact index of a miss, or the stance step of a fall
    v_min: float
    v_max: float
    kernel: str

    def __len__(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, lay.R[name]]

    def impact_column(self, name: str) -> np.ndarray:
        return self.impacts[:, lay.I[name]]

    def event_names(self, i: int) -> tuple[str, ...]:
        return event_names(int(self.events[i]))

    @property
    def success(self) -> bool:
        return self.outcome == "success"


def event_names(bits: int) -> tuple[str, ...]:
    return tuple(name for bit, name in lay.EVENT_NAMES if bits & bit)


def event_bits(names: Sequence[str]) -> int:
    table = {name: bit for bit, name in lay.EVENT_NAMES}
    bits = 0
    for name in names:
        if name not in table:
            raise ValueError(f"unknown event {name!r}")
        bits |= table[name]
    return bits


class SuccessReport(NamedTuple):
    success: bool
    outcome: str
    failed_step: int | None
    steps: int
    landing_errors: tuple[float, ...]
    energies: tuple[float, ...]
    v_min: float
    v_max: float

    @property
    def mean_landing_error(self) -> float:
        return float(np.mean(self.landing_errors)) if self.landing_errors else 0.0


def evaluate_success(trace: RolloutTrace, seq) -> SuccessReport:
    """Traversal succeeds when every impact landed on its stone and the last
    impact put the foot on the final stone without a fall."""
    imp = trace.impacts
    missed = imp[:, lay.I["missed"]] != 0.0
    landed = imp[~missed]
    last = len(_stones(seq)) - 1
    reached = landed.shape[0] > 0 and int(landed[-1, lay.I["stone"]]) == last
    success = bool(not missed.any() and reached and trace.outcome == "success")
    failed = None
    if missed.any():
        failed = int(np.argmax(missed))
    elif not success:
        failed = trace.failed_step
    return SuccessReport(
        success,
        trace.outcome,
        failed,
        int(landed.shape[0]),
        tuple(float(v) for v in imp[:, lay.I["landing_error"]]),
        tuple(float(v) for v in landed[:, lay.I["energy_plus"]]),
        trace.v_min,
        trace.v_max,
    )


# -- kernel selection and the rollout entry point -----------------------------------------


_KERNELS: dict = {}


def _load(name: str):
    if name not in _KERNELS:
        if name == "python":
            from . import _rollout_py as mod
        elif name == "compiled":
            from . import _rollout as mod
        else:
            raise ValueError(f"unknown kernel {name!r}")
        _KERNELS[name] = mod.run_rollout
    return _KERNELS[name]


def kernel_name() -> str:
    """Kernel used by default: "compiled" when the extension imports and
    ``PLANC_PURE_PYTHON`` is unset, otherwise "python"."""
    if os.environ.get("PLANC_PURE_PYTHON", "") not in ("", "0"):
        return "python"
    try:
        _load("compiled")
    except ImportError:
        return "python"
    return "compiled"


def get_kernel(name: str | None = None):
    name = name or kernel_name()
    return _load(name), name


def pack_params(cfg, *, fixed_T=None, fixed_udes=None, c=None, n_stones: int = 2) -> np.ndarray:
    """Flatten the planner and simulator settings into the kernel parameter vector."""
    pl, sim = cfg.planner, cfg.sim
    per_step = int(math.ceil(pl.t_max / sim.dt)) + 2
    vals = {
        "z0": pl.z0,
        "g": pl.g,
        "epsilon": pl.epsilon,
        "e_star": pl.e_star,
        "w_nominal": pl.w_nominal,
        "t_min": pl.t_min,
        "t_max": pl.t_max,
        "clearance": pl.swing_clearance_margin,
        "blend_exponent": pl.blend_exponent,
        "foothold_margin": pl.foothold_margin,
        "lateral_centering": pl.lateral_centering,
        "dt": sim.dt,
        "max_reach": sim.max_reach,
        "fall_height": sim.fall_height,
        "lateral_fall": sim.lateral_fall,
        "init_p": math.nan if sim.init_p is None else sim.init_p,
        "init_energy": sim.init_energy,
        "fixed_T": math.nan if fixed_T is None else float(fixed_T),
        "fixed_udes": math.nan if fixed_udes is None else float(fixed_udes),
        "clf_c": c,
        "clf_alpha": cfg.clf.alpha,
        "max_rows": float(per_step * (n_stones - 1) + 1),
    }
    return np.array([vals[name] for name in lay.PARAM_FIELDS], dtype=np.float64)


def planner_from_params(params: np.ndarray) -> PlannerConfig:
    P = lay.P
    return PlannerConfig(
        epsilon=float(params[P["epsilon"]]),
        e_star=float(params[P["e_star"]]),
        z0=float(params[P["z0"]]),
        g=float(params[P["g"]]),
        w_nominal=float(params[P["w_nominal"]]),
        t_min=float(params[P["t_min"]]),
        t_max=float(params[P["t_max"]]),
        swing_clearance_margin=float(params[P["clearance"]]),
        blend_exponent=float(params[P["blend_exponent"]]),
        foothold_margin=float(params[P["foothold_margin"]]),
        lateral_centering=float(params[P["lateral_centering"]]),
    )


def replay_trace(trace: RolloutTrace, seq, cfg, *, fixed_T=None, fixed_udes=None) -> np.ndarray:
    """Recompute every stored row from its own state columns.

    Each row's state is rebuilt, replanned and passed through the same row
    assembly as the rollout. Rows flagged ``diverged`` are copied unchanged;
    they carry a plan the state no longer admits.
    """
    from ._rollout_py import row_values, state_from_row

    pl = planner_from_params(pack_params(cfg, fixed_T=fixed_T, fixed_udes=fixed_udes, c=0.0, n_stones=len(seq)))
    clf = assemble_P(cfg.clf.channel_weights(), cfg.clf.c)
    rows_clf = [tuple(float(v) for v in r) for r in clf.block_rows()]
    out = np.array(trace.rows, copy=True)
    V_prev, t_prev = 0.0, None
    for i, row in enumerate(trace.rows):
        if int(trace.events[i]) & lay.EV_DIVERGED:
            continue
        state = state_from_row(row)
        plan = make_plan(state, seq, pl, fixed_T=fixed_T, fixed_udes=fixed_udes)
        out[i], V_prev = row_values(state, plan, pl, rows_clf, clf.c, cfg.clf.alpha, V_prev, t_prev)
        t_prev = state.t
    return out


def draw_noise(rng: np.random.Generator, sim, n_impacts: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-impact landing (dx, dy) and vertical-velocity offsets; zeros when off."""
    if not sim.noise:
        return np.zeros((n_impacts, 2)), np.zeros(n_impacts)
    land = rng.uniform(-sim.landing_noise, sim.landing_noise, size=(n_impacts, 2))
    vz = rng.uniform(-sim.vz_noise, sim.vz_noise, size=n_impacts)
    return land, vz


def rollout(
    seq: StoneSequence,
    cfg,
    rng: np.random.Generator | None = None,
    *,
    disturbance: DisturbanceSpec | None = None,
    fixed_T: float | None = None,
    fixed_udes: float | None = None,
    record: bool = True,
    kernel: str | None = None,
) -> RolloutTrace:
    """Closed-loop traversal of ``seq`` under the full configuration ``cfg``.

    ``rng`` feeds tracking noise (drawn first) and, when ``cfg.sim.disturb`` is
    set and no explicit ``disturbance`` is given, the random kick schedule.
    """
    if len(seq) < 2:
        raise ValueError("need at least two stones")
    if rng is None:
        rng = rollout_rng(seq.kind, seq.seed)
    n_imp = len(seq) - 1
    noise_land, noise_vz = draw_noise(rng, cfg.sim, n_imp)
    if disturbance is None and cfg.sim.disturb:
        disturbance = random_disturbances(rng, cfg.sim)
    dist = disturbance.as_array() if disturbance is not None else np.zeros((0, 4))
    clf = assemble_P(cfg.clf.channel_weights(), cfg.clf.c)
    params = pack_params(cfg, fixed_T=fixed_T, fixed_udes=fixed_udes, c=clf.c, n_stones=len(seq))
    run, name = get_kernel(kernel)
    rows, events, impacts, outcome, failed, vmin, vmax = run(
        seq.as_array(), params, clf.block_rows(), noise_land, np.ascontiguousarray(noise_vz), dist, record
    )
    return RolloutTrace(
        np.asarray(rows),
        np.asarray(events),
        np.asarray(impacts),
        lay.OUTCOMES[outcome],
        None if failed < 0 else int(failed),
        float(vmin),
        float(vmax),
        name,
    )
