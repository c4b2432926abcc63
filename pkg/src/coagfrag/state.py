"""State containers: truncated states and solution trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["TruncatedState", "WindowRecord", "BlowupInfo", "Trajectory"]


@dataclass
class TruncatedState:
    """A truncated cluster-size distribution.

    ``u[i]`` is the concentration of clusters of size ``i + 1``.
    ``leakage_mass`` accumulates the mass that left through over-truncation
    coagulation events in conservative-drop mode; it stays zero in closed
    mode.
    """

    N: int
    u: np.ndarray
    leakage_mass: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.N,):
            raise ConfigError(
                f"state length {self.u.shape} does not match N = {self.N}")

    @classmethod
    def zeros(cls, N: int) -> "TruncatedState":
        return cls(N, np.zeros(N))

    @classmethod
    def basis(cls, N: int, sizes, amounts=None) -> "TruncatedState":
        """State concentrated on the given sizes (1-based), default amount 1."""
        u = np.zeros(N)
        sizes = np.atleast_1d(sizes)
        amounts = np.ones(sizes.shape[0]) if amounts is None else np.atleast_1d(amounts)
        for s, a in zip(sizes, amounts):
            if not 1 <= int(s) <= N:
                raise ConfigError(f"size {s} outside 1..{N}")
            u[int(s) - 1] += float(a)
        return cls(N, u)

    def copy(self) -> "TruncatedState":
        return TruncatedState(self.N, self.u.copy(), self.leakage_mass)


@dataclass
class WindowRecord:
    """Per-window bookkeeping of the fixed-point solver."""

    index: int
    t0: float
    t1: float
    delta: float          # step bound the window was cut from
    radius: float         # invariant-ball radius r used for the window
    iterations: int
    observed_ratio: float  # max contraction ratio seen during iteration
    nodes: int            # internal grid subintervals
    gamma: float = 0.0    # positivity shift actually applied


@dataclass
class BlowupInfo:
    time: float
    reason: str
    norm: float


@dataclass
class Trajectory:
    """Time series produced by either engine.

    ``states[k]`` is the state at ``times[k]``; ``leakage[k]`` the
    accumulated over-truncation mass loss up to that time.  Window records
    are present for the fixed-point engine, accepted-step sizes for the
    reference engine.
    """

    N: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    leakage: list = field(default_factory=list)
    picard_iters: list = field(default_factory=list)
    window_log: list = field(default_factory=list)
    accepted_steps: int = 0
    rejected_steps: int = 0
    blowup: BlowupInfo | None = None
    meta: dict = field(default_factory=dict)

    def append(self, t: float, u: np.ndarray, leak: float, iters: int | None = None):
        self.times.append(float(t))
        self.states.append(np.array(u, dtype=float))
        self.leakage.append(float(leak))
        self.picard_iters.append(iters)

    @property
    def final_state(self) -> TruncatedState:
        return TruncatedState(self.N, self.states[-1].copy(), self.leakage[-1])

    @property
    def n_windows(self) -> int:
        return len(self.window_log)

    def state_at(self, t: float, tol: float = 1e-9) -> np.ndarray:
        """State recorded at time ``t`` (must be an output time)."""
        times = np.asarray(self.times)
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no recorded state at t = {t}")
        return self.states[i]
