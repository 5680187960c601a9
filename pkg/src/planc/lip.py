"""Passive-ankle linear inverted pendulum: closed-form flow, orbital energy,
time-to-target inversion and the impact reset of angular momentum.

State convention: ``p`` is the horizontal CoM position relative to the stance
foot and ``L`` the mass-normalised angular momentum about the stance foot, so
that ``dp/dt = L / z0`` and ``dL/dt = g * p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "LipParams",
    "LipState",
    "ImpactGeometry",
    "StepTiming",
    "flow",
    "integrate_numeric",
    "orbital_energy",
    "time_to_target",
    "impact_reset",
    "step_matrices",
]

REACHED = "reached"
PASSED = "passed"
UNREACHABLE = "unreachable"


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite argument: {v!r}")


@dataclass(frozen=True, slots=True)
class LipParams:
    z0: float = 1.0
    g: float = 9.81

    def __post_init__(self):
        _check_finite(self.z0, self.g)
        if self.z0 <= 0 or self.g <= 0:
            raise ValueError(f"z0 and g must be positive, got z0={self.z0}, g={self.g}")

    @property
    def lam(self) -> float:
        """Natural frequency sqrt(g / z0), always derived from (z0, g)."""
        return math.sqrt(self.g / self.z0)


@dataclass(frozen=True, slots=True)
class LipState:
    p: float
    L: float

    def __post_init__(self):
        _check_finite(self.p, self.L)

    def velocity(self, params: LipParams) -> float:
        return self.L / params.z0


@dataclass(frozen=True, slots=True)
class ImpactGeometry:
    x_sw: float
    z_sw: float
    p_dot: float
    z_dot: float

    def __post_init__(self):
        _check_finite(self.x_sw, self.z_sw, self.p_dot, self.z_dot)


class StepTiming(NamedTuple):
    duration: float
    status: str
    raw: float
    clamped: bool


def flow(state: LipState, params: LipParams, t: float) -> LipState:
    _check_finite(t)
    if t < 0:
        raise ValueError(f"flow time must be nonnegative, got {t}")
    lam = params.lam
    c = math.cosh(lam * t)
    s = math.sinh(lam * t)
    p = c * state.p + s * state.L / (lam * params.z0)
    L = params.z0 * lam * s * state.p + c * state.L
    return LipState(p, L)


def step_matrices(params: LipParams, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Flow matrix A(T) and foot-placement input B(T) of the step-to-step map.

    Pre-impact to pre-impact: ``x[k+1] = A @ x[k] + B * u[k]`` where ``u`` is
    the displacement from the old stance foot to the new one.
    """
    lam = params.lam
    c = math.cosh(lam * T)
    s = math.sinh(lam * T)
    A = np.array([[c, s / (lam * params.z0)], [params.z0 * lam * s, c]])
    B = -A[:, 0].copy()
    return A, B


def integrate_numeric(state, params: LipParams, t, dt: float):
    """Classical RK4 on the pendulum ODE with a fixed step no larger than ``dt``.

    ``state`` may be a :class:`LipState` or a pair of arrays ``(p, L)``; ``t``
    may be a scalar or an array matching the batch. Each member of the batch is
    integrated with ``n = ceil(max(t) / dt)`` equal steps of ``t_i / n``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    scalar = isinstance(state, LipState)
    if scalar:
        p = np.array([state.p], dtype=float)
        L = np.array([state.L], dtype=float)
    else:
        p = np.array(state[0], dtype=float, ndmin=1)
        L = np.array(state[1], dtype=float, ndmin=1)
    t = np.broadcast_to(np.asarray(t, dtype=float), p.shape)
    if np.any(t < 0):
        raise ValueError("integration horizon must be nonnegative")
    n = max(1, int(math.ceil(float(t.max()) / dt - 1e-9)))
    h = t / n
    inv_z0 = 1.0 / params.z0
    g = params.g
    for _ in range(n):
        k1p = L * inv_z0
        k1L = g * p
        k2p = (L + 0.5 * h * k1L) * inv_z0
        k2L = g * (p + 0.5 * h * k1p)
        k3p = (L + 0.5 * h * k2L) * inv_z0
        k3L = g * (p + 0.5 * h * k2p)
        k4p = (L + h * k3L) * inv_z0
        k4L = g * (p + h * k3p)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        L = L + h / 6.0 * (k1L + 2.0 * k2L + 2.0 * k3L + k4L)
    if scalar:
        return LipState(float(p[0]), float(L[0]))
    return p, L


def orbital_energy(state: LipState, params: LipParams) -> float:
    lam = params.lam
    v = state.L / params.z0
    return v * v - lam * lam * state.p * state.p


def _raw_time_to_target(p0: float, L0: float, params: LipParams, target: float):
    lam = params.lam
    if p0 == target:
        return 0.0, REACHED
    a = p0
    b = L0 / (lam * params.z0)
    c = target
    apb = a + b
    roots = []
    if apb == 0.0:
        # p(t) = a * exp(-lam t): only the linear root exists
        if c != 0.0:
            roots.append(a / c)
    else:
        disc = c * c - a * a + b * b
        if disc < 0.0:
            return math.inf, UNREACHABLE
        sq = math.sqrt(disc)
        q = c + math.copysign(sq, c) if c != 0.0 else sq
        if q != 0.0:
            roots.append(q / apb)
            roots.append((a - b) / q)
        else:
            roots.append(c / apb)
    # u = exp(lam T) >= 1; allow one rounding step below 1 for "already there"
    future = [u for u in roots if u >= 1.0 - 4e-16]
    if future:
        u = min(future)
        return max(0.0, math.log(u)) / lam, REACHED
    if p0 > target and L0 > 0.0:
        return 0.0, PASSED
    return math.inf, UNREACHABLE


def time_to_target(
    state: LipState,
    params: LipParams,
    p_target: float,
    t_min: float = 0.2,
    t_max: float = 0.8,
) -> StepTiming:
    """Earliest time at which the passive flow reaches ``p_target``.

    Solves ``(a+b) u^2 - 2 c u + (a-b) = 0`` for ``u = exp(lam T)`` and takes the
    smallest root ``u >= 1``. A target that was already crossed while moving
    forward reports ``"passed"`` with zero raw time; a target the flow never
    reaches reports ``"unreachable"`` and falls back to ``t_max``.
    """
    _check_finite(p_target, t_min)
    if not t_min < t_max:
        raise ValueError(f"need t_min < t_max, got [{t_min}, {t_max}]")
    raw, status = _raw_time_to_target(state.p, state.L, params, p_target)
    if status == UNREACHABLE:
        return StepTiming(t_max, status, raw, True)
    dur = min(max(raw, t_min), t_max)
    return StepTiming(dur, status, raw, dur != raw)


def impact_reset(L_minus: float, geom: ImpactGeometry) -> float:
    """Angular momentum about the new contact point right after impact."""
    return L_minus + geom.x_sw * geom.z_dot - geom.z_sw * geom.p_dot
