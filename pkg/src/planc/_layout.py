"""Array layouts shared by the compiled and the pure-Python rollout kernels."""

PARAM_FIELDS = (
    "z0",
    "g",
    "epsilon",
    "e_star",
    "w_nominal",
    "t_min",
    "t_max",
    "clearance",
    "blend_exponent",
    "foothold_margin",
    "lateral_centering",
    "dt",
    "max_reach",
    "fall_height",
    "lateral_fall",
    "init_p",
    "init_energy",
    "fixed_T",  # nan = off
    "fixed_udes",  # nan = off
    "clf_c",
    "clf_alpha",
    "max_rows",
)
P = {name: i for i, name in enumerate(PARAM_FIELDS)}

# Columns written to the text trace, in order.
TRACE_COLUMNS = (
    "t",
    "phase",
    "stance_index",
    "com_x",
    "com_y",
    "com_z",
    "com_vx",
    "com_vy",
    "com_vz",
    "swing_x",
    "swing_y",
    "swing_z",
    "p",
    "L",
    "E",
    "T_s",
    "u_des",
    "V",
    "clf_margin",
    "reward",
    "event",
)

# Per-row numeric record: trace columns (minus the event text) followed by the
# state needed to rebuild the planner input.
ROW_FIELDS = TRACE_COLUMNS[:-1] + (
    "py",
    "Ly",
    "elapsed",
    "side",
    "foot_x",
    "foot_y",
    "foot_z",
    "start_p",
    "start_L",
    "start_py",
    "start_Ly",
    "start_z",
    "start_zd",
    "start_swx",
    "start_swy",
    "start_swz",
)
R = {name: i for i, name in enumerate(ROW_FIELDS)}

IMPACT_FIELDS = (
    "t",
    "stone",
    "landing_x",
    "landing_y",
    "landing_z",
    "target_x",
    "target_y",
    "target_z",
    "p_minus",
    "L_minus",
    "p_dot",
    "z_dot",
    "x_sw",
    "y_sw",
    "z_sw",
    "L_plus",
    "p_plus",
    "py_plus",
    "Ly_plus",
    "energy_plus",
    "landing_error",
    "missed",
)
I = {name: i for i, name in enumerate(IMPACT_FIELDS)}

EV_IMPACT = 1
EV_REPLAN = 2
EV_DISTURBANCE = 4
EV_SUCCESS = 8
EV_MISS = 16
EV_FALL = 32
EV_DIVERGED = 64
EVENT_NAMES = (
    (EV_IMPACT, "impact"),
    (EV_REPLAN, "replanned_T"),
    (EV_DISTURBANCE, "disturbance"),
    (EV_SUCCESS, "success"),
    (EV_MISS, "miss"),
    (EV_FALL, "fall"),
    (EV_DIVERGED, "diverged"),
)
TERMINAL_EVENTS = EV_SUCCESS | EV_MISS | EV_FALL | EV_DIVERGED

OUTCOMES = ("success", "miss", "fall", "diverged")

# Remaining-time tolerance for the T_s change that counts as a replan event.
REPLAN_TOL = 1e-9
