"""Control Lyapunov function over output tracking errors.

Each output channel is treated as a feedback-linearised double integrator
``d2e/dt2 = v`` whose Riccati solution has a closed form. Channel blocks are
assembled into one matrix acting on ``eta = [y_a - y_d; dy_a - dy_d]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .reference import OutputReference

__all__ = [
    "CHANNELS",
    "ChannelWeights",
    "ClfMatrix",
    "solve_care_channel",
    "care_residual",
    "assemble_P",
    "lyapunov_value",
    "block_value",
    "decrease_margin",
    "decrease_holds",
    "clf_reward",
    "output_error",
]

CHANNELS = ("com_x", "com_y", "com_z", "swing_x", "swing_y", "swing_z", "pelvis_yaw", "swing_yaw")

_F = np.array([[0.0, 1.0], [0.0, 0.0]])
_G = np.array([[0.0], [1.0]])


@dataclass(frozen=True, slots=True)
class ChannelWeights:
    q_pos: float = 1.0
    q_vel: float = 0.1
    r: float = 1.0


def solve_care_channel(q_pos: float, q_vel: float, r: float) -> np.ndarray:
    if not (q_pos > 0 and r > 0 and q_vel >= 0):
        raise ValueError(f"need q_pos > 0, q_vel >= 0, r > 0; got ({q_pos}, {q_vel}, {r})")
    p12 = math.sqrt(q_pos * r)
    p22 = math.sqrt(r * q_vel + 2.0 * r * p12)
    p11 = p12 * p22 / r
    return np.array([[p11, p12], [p12, p22]])


def care_residual(P: np.ndarray, q_pos: float, q_vel: float, r: float) -> np.ndarray:
    Q = np.diag([q_pos, q_vel])
    return _F.T @ P + P @ _F - P @ _G @ _G.T @ P / r + Q


@dataclass(frozen=True)
class ClfMatrix:
    P: np.ndarray
    c: float
    weights: tuple[ChannelWeights, ...]
    blocks: tuple[np.ndarray, ...]

    @property
    def n_channels(self) -> int:
        return len(self.blocks)

    def block_rows(self) -> np.ndarray:
        """(n, 3) array of (p11, p12, p22) per channel."""
        return np.array([(B[0, 0], B[0, 1], B[1, 1]) for B in self.blocks])

    def closed_loop(self) -> np.ndarray:
        """Error dynamics under the Riccati feedback, in [pos; vel] layout."""
        n = self.n_channels
        F = np.zeros((2 * n, 2 * n))
        F[:n, n:] = np.eye(n)
        G = np.zeros((2 * n, n))
        G[n:, :] = np.eye(n)
        Rinv = np.diag([1.0 / w.r for w in self.weights])
        return F - G @ Rinv @ G.T @ self.P


def assemble_P(weights: Sequence[ChannelWeights | tuple], c: float | None = None) -> ClfMatrix:
    """Block-diagonal P permuted into [positions; velocities] ordering.

    ``c`` defaults to the guaranteed rate ``lmin(Q + P G R^-1 G^T P) / lmax(P)``.
    """
    ws = tuple(w if isinstance(w, ChannelWeights) else ChannelWeights(*w) for w in weights)
    if not ws:
        raise ValueError("need at least one channel")
    n = len(ws)
    blocks = tuple(solve_care_channel(w.q_pos, w.q_vel, w.r) for w in ws)
    P = np.zeros((2 * n, 2 * n))
    for i, B in enumerate(blocks):
        P[i, i] = B[0, 0]
        P[i, n + i] = P[n + i, i] = B[0, 1]
        P[n + i, n + i] = B[1, 1]
    if c is None:
        rates = []
        for w, B in zip(ws, blocks):
            Q = np.diag([w.q_pos, w.q_vel])
            M = Q + B @ _G @ _G.T @ B / w.r
            rates.append(np.linalg.eigvalsh(M)[0])
        c = float(min(rates) / np.linalg.eigvalsh(P)[-1])
    return ClfMatrix(P, float(c), ws, blocks)


def lyapunov_value(eta, M: ClfMatrix) -> float:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (M.P.shape[0],):
        raise ValueError(f"error vector of shape {eta.shape} does not match P {M.P.shape}")
    return 0.5 * float(eta @ M.P @ eta)


def block_value(eta, rows) -> float:
    """The same quadratic form as :func:`lyapunov_value`, summed channel by
    channel from (p11, p12, p22) rows. This is the order the rollout kernels use."""
    n = len(rows)
    V = 0.0
    for i in range(n):
        e = eta[i]
        d = eta[n + i]
        p11, p12, p22 = rows[i]
        V += p11 * e * e + 2.0 * p12 * e * d + p22 * d * d
    return 0.5 * V


def decrease_margin(V_prev: float, V_curr: float, dt: float, c: float) -> float:
    """Finite-difference ``dV/dt + c V``; nonpositive when the decrease holds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return (V_curr - V_prev) / dt + c * V_curr


def decrease_holds(V_prev: float, V_curr: float, dt: float, c: float, rtol: float = 1e-12) -> bool:
    """Exact discrete form of the decrease condition: V_curr <= V_prev exp(-c dt)."""
    bound = V_prev * math.exp(-c * dt)
    return V_curr <= bound + rtol * max(abs(bound), 1e-300)


def clf_reward(V: float, alpha: float = 1.0) -> float:
    if V < 0 or not alpha > 0:
        raise ValueError(f"need V >= 0 and alpha > 0, got V={V}, alpha={alpha}")
    return math.exp(-alpha * V)


def _stack(ref: OutputReference) -> tuple[np.ndarray, np.ndarray]:
    pos = np.concatenate([ref.com_pos, ref.swing_pos, [ref.pelvis_yaw, ref.swing_yaw]])
    # yaw references are constant within a step
    vel = np.concatenate([ref.com_vel, ref.swing_vel, [0.0, 0.0]])
    return pos, vel


def output_error(ref_d: OutputReference, actual: OutputReference) -> np.ndarray:
    """eta = [y_a - y_d; dy_a - dy_d] in the channel order of :data:`CHANNELS`."""
    pd, vd = _stack(ref_d)
    pa, va = _stack(actual)
    if pd.shape != pa.shape or vd.shape != va.shape:
        raise ValueError("reference and actual output layouts differ")
    return np.concatenate([pa - pd, va - vd])
