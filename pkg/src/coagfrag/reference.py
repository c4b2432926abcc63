"""Adaptive explicit reference integrator.

An independent cross-check for the fixed-point engine: classic embedded
Runge-Kutta 5(4) (Dormand-Prince coefficients, FSAL) with a deterministic
elementary step controller.  The right-hand side is assembled from the
same operator code path the fixed-point engine uses, so the two engines
differ only in their time discretisation.

The leakage ledger rides along as one extra state component with
derivative equal to the instantaneous over-truncation mass flux, so the
mass identity ``M1(t) + leakage(t) = const`` is a linear invariant and is
preserved by the Runge-Kutta steps to roundoff.

``splitting="lawson_diagonal"`` integrates the diagonal decay part exactly
through a per-stage integrating factor, which removes the breakup rates
from the step-size stability constraint.  The nonlinear part (daughter
inflow and coagulation) is still handled explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StiffnessError
from .kinetics import CoagulationKernel, FragmentationModel
from .operators import TruncationMode, apply_fragmentation, coag_rhs
from .state import Trajectory, TruncatedState

logger = logging.getLogger(__name__)

__all__ = ["OracleConfig", "integrate"]

# Dormand-Prince 5(4) tableau (FSAL: the 7th stage is the next first stage).
_C = np.array([0.0, 1/5, 3/10, 4/5, 8/9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1/5]),
    np.array([3/40, 9/40]),
    np.array([44/45, -56/15, 32/9]),
    np.array([19372/6561, -25360/2187, 64448/6561, -212/729]),
    np.array([9017/3168, -355/33, 46732/5247, 49/176, -5103/18656]),
    np.array([35/384, 0.0, 500/1113, 125/192, -2187/6784, 11/84]),
]
_B5 = np.array([35/384, 0.0, 500/1113, 125/192, -2187/6784, 11/84, 0.0])
_B4 = np.array([5179/57600, 0.0, 7571/16695, 393/640, -92097/339200, 187/2100, 1/40])
_E = _B5 - _B4


@dataclass
class OracleConfig:
    rtol: float = 1e-9
    atol: float = 1e-13
    max_step: float = np.inf
    first_step: float | None = None
    splitting: str = "off"            # off | lawson_diagonal
    max_steps: int = 5_000_000
    fast_kernel: bool = True
    safety: float = 0.9
    fac_min: float = 0.2
    fac_max: float = 5.0

    def __post_init__(self):
        if self.splitting not in ("off", "lawson_diagonal"):
            raise ConfigError(f"unknown splitting {self.splitting!r}")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ConfigError("tolerances must be positive")


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray,
                rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(model: FragmentationModel, kernel: CoagulationKernel,
              u0: TruncatedState, T: float, mode: TruncationMode | str,
              cfg: OracleConfig | None = None, output_times=None) -> Trajectory:
    """Integrate the truncated system from 0 to T.

    ``output_times`` lists the times at which states must be recorded
    (steps land on them exactly); the final time is always recorded.
    """
    cfg = cfg or OracleConfig()
    mode = TruncationMode.parse(mode)
    N = u0.N
    has_frag = bool(np.any(model.rates(N))) or np.any(model.b_matrix(N))
    lawson = cfg.splitting == "lawson_diagonal"
    a = model.rates(N)
    decay = np.concatenate([-a, [0.0]])  # leak component does not decay

    def full_rhs(t: float, y: np.ndarray) -> np.ndarray:
        u = y[:N]
        cvec, leak_rate = coag_rhs(kernel, t, u, mode, fast=cfg.fast_kernel)
        du = cvec if not has_frag else cvec + apply_fragmentation(model, u)
        return np.concatenate([du, [leak_rate]])

    def nonlinear_rhs(t: float, y: np.ndarray) -> np.ndarray:
        # Everything except the diagonal decay handled by the integrating factor.
        out = full_rhs(t, y)
        out[:N] += a * y[:N]
        return out

    rhs = nonlinear_rhs if lawson else full_rhs

    outs = sorted(set(float(t) for t in (output_times or []) if 0.0 < t <= T))
    if not outs or outs[-1] < T:
        outs.append(T)

    traj = Trajectory(N=N, meta={
        "engine": "oracle", "rtol": cfg.rtol, "atol": cfg.atol,
        "splitting": cfg.splitting, "mode": mode.value, "T": T,
    })
    y = np.concatenate([u0.u, [u0.leakage_mass]])
    t = 0.0
    traj.append(0.0, y[:N], y[N], None)

    f0 = rhs(0.0, y)
    if cfg.first_step is not None:
        h = cfg.first_step
    else:
        h = min(T / 100.0, cfg.max_step,
                0.01 / (1.0 + float(np.abs(f0).max())))
    out_i = 0
    k = np.empty((7, y.shape[0]))
    k[0] = f0
    eps = np.finfo(float).eps

    for _ in range(cfg.max_steps):
        if t >= T:
            break
        h = min(h, cfg.max_step, T - t)
        while out_i < len(outs) and outs[out_i] <= t + 64.0 * eps * max(t, 1.0):
            # Output time indistinguishable from the current time at step
            # resolution: record in place rather than forcing a null step.
            if abs(outs[out_i] - t) > 0.0 and traj.times[-1] < outs[out_i]:
                traj.append(outs[out_i], y[:N], y[N], None)
            out_i += 1
        clamped = False
        if out_i < len(outs) and t + h >= outs[out_i]:
            h = outs[out_i] - t
            clamped = True
        if h <= 16.0 * eps * max(t, 1.0):
            raise StiffnessError(
                f"step size collapsed to {h:.3g} at t = {t:.6g}; the system is "
                "too stiff for the explicit pair - try "
                "splitting='lawson_diagonal' or a larger tolerance")

        if lawson:
            # Integrating factors exp(c_i h D) relative to the step start.
            E_stage = np.exp(np.outer(_C, h * decay))
        for i in range(1, 7):
            acc = k[:i].T @ (_A[i] * h)
            if lawson:
                stage_y = E_stage[i] * (y + acc)
                k[i] = rhs(t + _C[i] * h, stage_y) / E_stage[i]
            else:
                k[i] = rhs(t + _C[i] * h, y + acc)
        if lawson:
            y_new = E_stage[5] * (y + h * (k.T @ _B5))
            err_vec = E_stage[5] * (h * (k.T @ _E))
        else:
            y_new = y + h * (k.T @ _B5)
            err_vec = h * (k.T @ _E)
        err = _error_norm(err_vec, y, y_new, cfg.rtol, cfg.atol)

        if err <= 1.0:
            t_new = outs[out_i] if clamped else t + h
            t = t_new
            y = y_new
            traj.accepted_steps += 1
            if lawson:
                k[0] = rhs(t, y)
            else:
                k[0] = k[6]  # FSAL
            if clamped or t >= T:
                traj.append(t, y[:N], y[N], None)
                if out_i < len(outs) and t >= outs[out_i] * (1.0 - 4.0 * eps):
                    out_i += 1
        else:
            traj.rejected_steps += 1
        factor = cfg.fac_max if err == 0.0 else cfg.safety * err ** -0.2
        h = h * min(cfg.fac_max, max(cfg.fac_min, factor))
        if t >= T:
            break
    else:
        raise StiffnessError(f"step budget {cfg.max_steps} exhausted at t = {t:.6g}")

    return traj
