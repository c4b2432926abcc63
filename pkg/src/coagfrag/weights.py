"""Weight sequences for the truncated weighted l1 state spaces.

A weight sequence ``w`` assigns a positive weight ``w_n`` to every cluster
size ``n >= 1``.  Admissible sequences dominate the size (``w_n >= n``) and
are non-decreasing; both properties are checked lazily when values are
materialised.  The norm ``sum_n w_n |f_n|`` controls the size-weighted
content of a state, and the certificate ``kappa_J`` quantifies how strongly
a daughter distribution contracts the weight of fragmenting clusters:

    kappa_J = max_{2 <= j <= J} (1 / w_j) * sum_{n < j} w_n * b_{n, j}

``kappa_J`` is non-decreasing in ``J`` and a lower bound for the supremum
over all j; for the closed-form family pairs the supremum itself is
available through ``analytic_kappa_sup``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, WeightError
from .summation import cdot, csum

__all__ = [
    "WeightSequence",
    "TildeWeight",
    "MomentFunctional",
    "weighted_norm",
    "first_moment",
    "number_moment",
    "kappa_estimate",
    "analytic_kappa_sup",
    "find_kappa_certificate",
    "POWER_GRID",
    "GEOMETRIC_GRID",
]


# Candidate grids scanned by find_kappa_certificate, in ascending order.
# Geometric candidates below 1.45 are omitted: r^n >= n already fails at
# n = 2 for r < sqrt(2).
POWER_GRID = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0)
GEOMETRIC_GRID = (1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0)


class WeightSequence:
    """A lazily validated weight sequence ``n -> w_n``.

    Parameters
    ----------
    kind : str
        One of ``"power"`` (w_n = n**p), ``"geometric"`` (w_n = r**n) or
        ``"tabulated"`` (explicit values).
    p, r, values
        Family parameter for the corresponding kind.

    Notes
    -----
    ``values(N)`` materialises ``w_1 .. w_N`` and raises ``WeightError`` if
    the sequence fails ``w_n >= n``, monotonicity, or overflows the double
    range.  ``ratio(ns, j)`` computes ``w_n / w_j`` without materialising
    the values, which keeps geometric weights usable far beyond the
    overflow horizon (r**n exceeds double range near n ~ 700 already for
    r = 3).
    """

    def __init__(self, kind: str, *, p: float | None = None,
                 r: float | None = None, values=None):
        self.kind = kind
        self.p = p
        self.r = r
        self._cache: np.ndarray | None = None
        if kind == "power":
            if p is None or p < 1.0:
                raise ConfigError(f"power weights need p >= 1, got {p!r}")
        elif kind == "geometric":
            if r is None or r <= 1.0:
                raise ConfigError(f"geometric weights need r > 1, got {r!r}")
        elif kind == "tabulated":
            if values is None:
                raise ConfigError("tabulated weights need explicit values")
            self._table = np.asarray(values, dtype=float)
        else:
            raise ConfigError(f"unknown weight kind {kind!r}")

    @classmethod
    def power(cls, p: float) -> "WeightSequence":
        return cls("power", p=p)

    @classmethod
    def geometric(cls, r: float) -> "WeightSequence":
        return cls("geometric", r=r)

    @classmethod
    def tabulated(cls, values) -> "WeightSequence":
        return cls("tabulated", values=values)

    def _raw_values(self, N: int) -> np.ndarray:
        n = np.arange(1, N + 1, dtype=float)
        if self.kind == "power":
            return n ** self.p
        if self.kind == "geometric":
            return self.r ** n
        if N > self._table.shape[0]:
            raise WeightError(
                f"tabulated weights end at n = {self._table.shape[0]}, need {N}")
        return self._table[:N].copy()

    def values(self, N: int) -> np.ndarray:
        """Weights ``w_1 .. w_N`` as a float array, validated."""
        if self._cache is None or self._cache.shape[0] < N:
            w = self._raw_values(N)
            if not np.all(np.isfinite(w)):
                raise WeightError(
                    f"{self.kind} weights overflow double range before n = {N}")
            n = np.arange(1, N + 1, dtype=float)
            if np.any(w < n):
                bad = int(np.argmax(w < n)) + 1
                raise WeightError(f"w_n >= n fails at n = {bad} (w = {w[bad-1]})")
            if np.any(np.diff(w) < 0.0):
                bad = int(np.argmax(np.diff(w) < 0.0)) + 1
                raise WeightError(f"monotonicity fails between n = {bad}, {bad+1}")
            self._cache = w
        return self._cache[:N]

    def log_values(self, N: int) -> np.ndarray:
        """``log w_n`` for n = 1..N, stable for any admissible parameter."""
        n = np.arange(1, N + 1, dtype=float)
        if self.kind == "power":
            return self.p * np.log(n)
        if self.kind == "geometric":
            return n * math.log(self.r)
        return np.log(self._raw_values(N))

    def ratio(self, ns: np.ndarray, j: int) -> np.ndarray:
        """``w_n / w_j`` for an integer array ``ns``, overflow-safe."""
        ns = np.asarray(ns, dtype=float)
        if self.kind == "power":
            return (ns / float(j)) ** self.p
        if self.kind == "geometric":
            # Exponent n - j <= 0 for the uses below; underflow to 0 is fine.
            return self.r ** (ns - float(j))
        w = self.values(int(j))
        return w[np.asarray(ns, dtype=int) - 1] / w[j - 1]

    def label(self) -> str:
        if self.kind == "power":
            return f"power(p={self.p:g})"
        if self.kind == "geometric":
            return f"geometric(r={self.r:g})"
        return f"tabulated(n<={self._table.shape[0]})"

    def __repr__(self) -> str:  # pragma: no cover
        return f"WeightSequence({self.label()})"


class TildeWeight:
    """Fragmentation-adjusted weight ``(1 + a_n)**alpha * w_n``.

    ``alpha = 0`` returns the base weights bitwise unchanged, so code paths
    that measure both norms agree exactly in that regime.
    """

    def __init__(self, base: WeightSequence, alpha: float, rates):
        if not 0.0 <= alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {alpha!r}")
        self.base = base
        self.alpha = alpha
        self._rates = rates  # callable N -> array a_1..a_N

    def values(self, N: int) -> np.ndarray:
        w = self.base.values(N)
        if self.alpha == 0.0:
            return w
        a = np.asarray(self._rates(N), dtype=float)
        return (1.0 + a) ** self.alpha * w


@dataclass
class MomentFunctional:
    """Linear functional ``f -> sum_n omega_n f_n`` on truncated states."""

    name: str
    omega: object  # callable N -> array of omega_1..omega_N
    _cache: dict = field(default_factory=dict, repr=False)

    def weights(self, N: int) -> np.ndarray:
        got = self._cache.get(N)
        if got is None:
            got = np.asarray(self.omega(N), dtype=float)
            self._cache[N] = got
        return got

    def apply(self, u: np.ndarray) -> float:
        return cdot(self.weights(u.shape[0]), u)

    @classmethod
    def number(cls) -> "MomentFunctional":
        return cls("M0", lambda N: np.ones(N))

    @classmethod
    def mass(cls) -> "MomentFunctional":
        return cls("M1", lambda N: np.arange(1, N + 1, dtype=float))

    @classmethod
    def from_weight(cls, w: WeightSequence) -> "MomentFunctional":
        return cls(w.label(), w.values)


def weighted_norm(w_values: np.ndarray, u: np.ndarray) -> float:
    """``sum_n w_n |u_n|`` with exactly rounded accumulation."""
    return cdot(w_values, np.abs(u))


def first_moment(u: np.ndarray) -> float:
    """Mass moment ``sum_n n u_n``."""
    return cdot(np.arange(1, u.shape[0] + 1, dtype=float), u)


def number_moment(u: np.ndarray) -> float:
    """Number moment ``sum_n u_n``."""
    return csum(u)


def kappa_estimate(model, w: WeightSequence, J: int) -> float:
    """Certificate ``kappa_J`` for a daughter distribution against ``w``.

    ``model`` must provide ``daughter_row(j) -> (sizes, values)`` with the
    sparse support of ``b_{., j}``.  Row sums use weight ratios, never raw
    weight values, so geometric weights work at any ``J``.  The per-term
    rounding bounds the absolute error by a few eps times the row sum.
    """
    if J < 2:
        raise ConfigError("kappa_J needs J >= 2")
    best = 0.0
    for j in range(2, J + 1):
        sizes, vals = model.daughter_row(j)
        if sizes.shape[0] == 0:
            continue
        s = float(np.sum(w.ratio(sizes, j) * vals))
        if s > best:
            best = s
    return best


def analytic_kappa_sup(model, w: WeightSequence) -> float | None:
    """Closed-form supremum of the kappa row sums, where known.

    Covers the binary-chipping and uniform-binary daughter families against
    power and geometric weights; returns None otherwise.  The finite
    ``kappa_J`` only ever approaches these values from below.
    """
    family = getattr(model, "daughter_family", None)
    if family == "becker_doring":
        if w.kind == "geometric":
            r = w.r
            # Row sums: j = 2 gives 2/r, j >= 3 gives r**(1-j) + 1/r <= 2/r.
            return max(2.0 / r, r ** -2 + 1.0 / r)
        if w.kind == "power":
            # Row sums (1 + (j-1)**p) / j**p increase to 1 as j grows.
            return 1.0
    elif family == "uniform_binary":
        if w.kind == "geometric":
            # Row sums decrease from the j = 2 value 2/r.
            return 2.0 / w.r
        if w.kind == "power":
            # Row sums increase towards 2/(p+1) (the limit of the Riemann
            # sums of 2 x**p on [0, 1]); for p = 1 every row equals 1.
            return 2.0 / (w.p + 1.0)
    return None


def find_kappa_certificate(model, family: str, J: int, target: float):
    """Scan the documented parameter grid for a weight with kappa_J <= target.

    Returns ``(weight, kappa_J)`` for the first (smallest) admissible grid
    parameter that qualifies, or ``None`` when the grid is exhausted.
    Inadmissible candidates (w_n >= n failing somewhere below J) are
    skipped rather than reported.  When the closed-form supremum of the
    row sums is known it gates the candidate: a finite grid can make
    ``kappa_J`` look small while rows beyond J approach a larger limit,
    and such weights are not certificates.
    """
    if family == "power":
        grid = [WeightSequence.power(p) for p in POWER_GRID]
    elif family == "geometric":
        grid = [WeightSequence.geometric(r) for r in GEOMETRIC_GRID]
    else:
        raise ConfigError(f"unknown certificate family {family!r}")
    probe = min(J, 4096)
    n = np.arange(1, probe + 1, dtype=float)
    log_n = np.log(n)
    for w in grid:
        # Admissibility sweep in the log domain (values may overflow doubles).
        log_w = w.log_values(probe)
        if np.any(log_w < log_n - 1e-12) or np.any(np.diff(log_w) < -1e-12):
            continue
        sup = analytic_kappa_sup(model, w)
        if sup is not None and sup > target:
            continue
        kappa = kappa_estimate(model, w, J)
        if kappa <= target:
            return w, kappa
    return None
