"""Model definitions: fragmentation families and coagulation kernels.

A fragmentation model consists of per-size breakup rates ``a_n >= 0`` and a
daughter distribution ``b_{n,j}`` (expected number of n-clusters produced
when a j-cluster breaks, n < j).  A coagulation kernel is a symmetric
nonnegative family ``k_{n,j}(t)``, stored as a time-independent symmetric
part times a scalar time profile.

``classify_assumptions`` checks the quantitative hypotheses the solver
relies on and reports the certificates:

* ``kappa_J``: weight contraction of the daughter distribution,
* ``c_J``: the smallest grid constant with
  ``k_{n,j}(t) <= c * wt_n * wt_j / w_{n+j}`` over ``n + j <= J``,
  where ``wt`` is the fragmentation-adjusted weight,
* the regime tag: ``CI`` (alpha = 0, kappa <= 1), ``CII``
  (0 < alpha < 1, kappa < 1), or ``unverified`` with reasons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .summation import csum
from .weights import TildeWeight, WeightSequence, analytic_kappa_sup, kappa_estimate

__all__ = [
    "FragmentationModel",
    "becker_doring_model",
    "uniform_binary_model",
    "powerlaw_model",
    "no_fragmentation",
    "tabulated_model",
    "TimeProfile",
    "CoagulationKernel",
    "constant_kernel",
    "min_kernel",
    "sum_kernel",
    "product_capped_kernel",
    "frag_power_kernel",
    "table_kernel",
    "AssumptionReport",
    "classify_assumptions",
]


def _linear_rates(scale: float, monomer_rate: float):
    def rates(N: int) -> np.ndarray:
        a = scale * np.arange(1, N + 1, dtype=float)
        a[0] = monomer_rate
        return a
    return rates


class FragmentationModel:
    """Breakup rates plus daughter distribution, with cached assemblies."""

    def __init__(self, name: str, rates, daughter_row, daughter_family: str = "custom"):
        self.name = name
        self._rates = rates            # callable N -> a_1..a_N
        self._daughter_row = daughter_row  # callable j -> (sizes, values)
        self.daughter_family = daughter_family
        self._rate_cache: np.ndarray | None = None
        self._b_cache: dict[int, np.ndarray] = {}

    def rates(self, N: int) -> np.ndarray:
        if self._rate_cache is None or self._rate_cache.shape[0] < N:
            a = np.asarray(self._rates(N), dtype=float)
            if np.any(a < 0.0):
                raise ConfigError(f"model {self.name}: negative breakup rate")
            self._rate_cache = a
        return self._rate_cache[:N]

    def daughter_row(self, j: int):
        """Sparse support of ``b_{., j}``: (sizes 1..j-1 subset, values)."""
        return self._daughter_row(j)

    def b_matrix(self, N: int) -> np.ndarray:
        """Dense ``B[n-1, j-1] = b_{n, j}`` (strictly upper triangular)."""
        got = self._b_cache.get(N)
        if got is None:
            B = np.zeros((N, N))
            for j in range(2, N + 1):
                sizes, vals = self.daughter_row(j)
                if sizes.shape[0]:
                    B[sizes - 1, j - 1] = vals
            self._b_cache[N] = B
            got = B
        return got

    def mass_defect(self, j: int) -> float:
        """``j - sum_{n<j} n b_{n,j}``; zero for mass-preserving breakup."""
        sizes, vals = self.daughter_row(j)
        if sizes.shape[0] == 0:
            return float(j)
        return float(j) - csum(sizes.astype(float) * vals)

    def mass_defects(self, N: int) -> np.ndarray:
        """Defects for j = 1..N (the j = 1 entry is 1, by convention unused
        because a 1-cluster leaves only through ``a_1``)."""
        d = np.empty(N)
        d[0] = 1.0
        for j in range(2, N + 1):
            d[j - 1] = self.mass_defect(j)
        return d

    def is_mass_dissipative(self, J: int, tol: float = 1e-12) -> bool:
        return all(self.mass_defect(j) >= -tol * j for j in range(2, J + 1))

    def is_mass_conserving(self, J: int, tol: float = 1e-12) -> bool:
        if self.rates(1)[0] != 0.0:
            return False
        return all(abs(self.mass_defect(j)) <= tol * j for j in range(2, J + 1))

    def __repr__(self) -> str:  # pragma: no cover
        return f"FragmentationModel({self.name})"


def becker_doring_model(rate_scale: float = 1.0) -> FragmentationModel:
    """Chip-off-a-monomer breakup: a_1 = 0, a_n = rate_scale * n for n >= 2.

    A j-cluster splits into a monomer and a (j-1)-cluster; a 2-cluster
    yields two monomers.
    """
    def row(j: int):
        if j < 2:
            return np.empty(0, dtype=int), np.empty(0)
        if j == 2:
            return np.array([1]), np.array([2.0])
        return np.array([1, j - 1]), np.array([1.0, 1.0])
    return FragmentationModel(
        "becker_doring", _linear_rates(rate_scale, 0.0), row, "becker_doring")


def uniform_binary_model(rate_scale: float = 1.0,
                         monomer_rate: float = 0.0) -> FragmentationModel:
    """Binary splits with a uniform daughter size: b_{n,j} = 2/(j-1)."""
    def row(j: int):
        if j < 2:
            return np.empty(0, dtype=int), np.empty(0)
        return np.arange(1, j), np.full(j - 1, 2.0 / (j - 1))
    return FragmentationModel(
        "uniform_binary", _linear_rates(rate_scale, monomer_rate), row,
        "uniform_binary")


class _PowerlawRows:
    """Daughter rows ``b_{n,j} = d_j (n/j)**nu`` normalised to conserve mass.

    ``d_j = j**(1+nu) / sum_{m<j} m**(1+nu)``.  The running denominator is
    accumulated in extended precision so that the j = 10^4 row sums still
    satisfy ``sum_n n b_{n,j} = j`` to a relative 1e-14.
    """

    def __init__(self, nu: float):
        if nu < -1.0:
            raise ConfigError(f"powerlaw daughters need nu >= -1, got {nu}")
        self.nu = nu
        self._d = np.empty(0)

    def _extend(self, J: int) -> None:
        m = np.arange(1, J, dtype=np.longdouble)
        partial = np.cumsum(m ** np.longdouble(1.0 + self.nu))
        j = np.arange(2, J + 1, dtype=np.longdouble)
        d = np.empty(J + 1)
        d[:2] = 0.0
        d[2:] = (j ** np.longdouble(1.0 + self.nu) / partial[: J - 1]).astype(float)
        self._d = d

    def d(self, j: int) -> float:
        if j >= self._d.shape[0]:
            self._extend(max(j, 2 * max(self._d.shape[0], 64)))
        return self._d[j]

    def __call__(self, j: int):
        if j < 2:
            return np.empty(0, dtype=int), np.empty(0)
        sizes = np.arange(1, j)
        return sizes, self.d(j) * (sizes / float(j)) ** self.nu


def powerlaw_model(nu: float, rate_scale: float = 1.0,
                   monomer_rate: float = 0.0) -> FragmentationModel:
    """Mass-conserving power-law daughter profile with exponent ``nu``."""
    return FragmentationModel(
        f"powerlaw(nu={nu:g})", _linear_rates(rate_scale, monomer_rate),
        _PowerlawRows(nu), "powerlaw")


def no_fragmentation() -> FragmentationModel:
    def row(j: int):
        return np.empty(0, dtype=int), np.empty(0)
    return FragmentationModel("none", lambda N: np.zeros(N), row, "none")


def tabulated_model(a_values, b_rows: dict) -> FragmentationModel:
    """Explicit rates and daughter rows.

    ``b_rows`` maps j to a sequence of (n, b_{n,j}) pairs; absent rows are
    empty.  Rates beyond the table are zero.
    """
    a = np.asarray(a_values, dtype=float)
    rows = {}
    for j, pairs in b_rows.items():
        sizes = np.array([int(n) for n, _ in pairs], dtype=int)
        vals = np.array([float(v) for _, v in pairs])
        if np.any(sizes < 1) or np.any(sizes >= int(j)):
            raise ConfigError(f"daughter sizes for j = {j} must lie in 1..j-1")
        rows[int(j)] = (sizes, vals)

    def rates(N: int) -> np.ndarray:
        out = np.zeros(N)
        out[: min(N, a.shape[0])] = a[: min(N, a.shape[0])]
        return out

    def row(j: int):
        return rows.get(j, (np.empty(0, dtype=int), np.empty(0)))

    return FragmentationModel("tabulated", rates, row, "tabulated")


@dataclass(frozen=True)
class TimeProfile:
    """Scalar modulation ``g(t) >= 0`` of a coagulation kernel."""

    name: str = "constant"
    rate: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0

    def __call__(self, t: float) -> float:
        if self.name == "constant":
            return 1.0
        if self.name == "exp_decay":
            return math.exp(-self.rate * t)
        if self.name == "cosine":
            return 1.0 + self.amplitude * math.cos(2.0 * math.pi * t / self.period)
        raise ConfigError(f"unknown time profile {self.name!r}")

    @property
    def is_constant(self) -> bool:
        return self.name == "constant" or (
            self.name == "cosine" and self.amplitude == 0.0)

    def sup(self, horizon: float) -> float:
        """Upper bound of g on [0, horizon]."""
        if self.name == "constant" or self.name == "exp_decay":
            return 1.0
        if self.name == "cosine":
            return 1.0 + abs(self.amplitude)
        raise ConfigError(f"unknown time profile {self.name!r}")


class CoagulationKernel:
    """Symmetric coagulation rates ``k_{n,j}(t) = g(t) * kpart(n, j)``.

    The time-independent part is evaluated on the upper triangle and
    mirrored, so symmetry holds structurally whatever ``pairfunc`` does.
    """

    def __init__(self, name: str, pairfunc, scale: float = 1.0,
                 profile: TimeProfile | None = None):
        if scale < 0.0:
            raise ConfigError("kernel scale must be nonnegative")
        self.name = name
        self.scale = scale
        self._pairfunc = pairfunc
        self.profile = profile if profile is not None else TimeProfile()
        self._matrix_cache: dict[int, np.ndarray] = {}

    def part_matrix(self, N: int) -> np.ndarray:
        """The symmetric time-independent part ``scale * kpart`` on n,j <= N."""
        got = self._matrix_cache.get(N)
        if got is None:
            iu = np.triu_indices(N)
            ns = (iu[0] + 1).astype(float)
            js = (iu[1] + 1).astype(float)
            K = np.zeros((N, N))
            K[iu] = self.scale * np.asarray(self._pairfunc(ns, js), dtype=float)
            K = K + K.T
            K[np.diag_indices(N)] *= 0.5
            if np.any(K < 0.0):
                raise ConfigError(f"kernel {self.name}: negative rate")
            self._matrix_cache[N] = K
            got = K
        return got

    def matrix(self, N: int, t: float) -> np.ndarray:
        g = self.profile(t)
        base = self.part_matrix(N)
        return base if g == 1.0 else g * base

    def part_row(self, n: int, js: np.ndarray) -> np.ndarray:
        """``scale * kpart(n, j)`` for one n and an array of j (symmetrised)."""
        ns = np.full(js.shape[0], float(n))
        lo = np.minimum(ns, js)
        hi = np.maximum(ns, js)
        return self.scale * np.asarray(self._pairfunc(lo, hi), dtype=float)

    @property
    def is_constant_in_sizes(self) -> bool:
        return getattr(self, "_constant_in_sizes", False)

    def __repr__(self) -> str:  # pragma: no cover
        return f"CoagulationKernel({self.name}, scale={self.scale:g})"


def constant_kernel(scale: float = 1.0,
                    profile: TimeProfile | None = None) -> CoagulationKernel:
    k = CoagulationKernel("constant", lambda n, j: np.ones(n.shape[0]), scale, profile)
    k._constant_in_sizes = True
    return k


def min_kernel(scale: float = 1.0,
               profile: TimeProfile | None = None) -> CoagulationKernel:
    return CoagulationKernel("min", lambda n, j: np.minimum(n, j), scale, profile)


def sum_kernel(scale: float = 1.0,
               profile: TimeProfile | None = None) -> CoagulationKernel:
    return CoagulationKernel("sum", lambda n, j: n + j, scale, profile)


def product_capped_kernel(scale: float = 1.0, cap: float = 64.0,
                          profile: TimeProfile | None = None) -> CoagulationKernel:
    """``scale * min(n * j, cap)``: product aggregation saturated at ``cap``."""
    return CoagulationKernel(
        f"product_capped(cap={cap:g})",
        lambda n, j: np.minimum(n * j, cap), scale, profile)


def frag_power_kernel(model: FragmentationModel, beta: float, scale: float = 1.0,
                      profile: TimeProfile | None = None) -> CoagulationKernel:
    """``scale * ((1+a_n)(1+a_j))**beta``: growth tied to the breakup rates."""
    def pair(n: np.ndarray, j: np.ndarray) -> np.ndarray:
        N = int(max(n.max(), j.max()))
        a = model.rates(N)
        an = a[n.astype(int) - 1]
        aj = a[j.astype(int) - 1]
        return ((1.0 + an) * (1.0 + aj)) ** beta
    return CoagulationKernel(f"frag_power(beta={beta:g})", pair, scale, profile)


def table_kernel(table, scale: float = 1.0,
                 profile: TimeProfile | None = None) -> CoagulationKernel:
    """Kernel from an explicit (upper-triangular or full) table.

    An upper-triangular table (zeros below the diagonal) is mirrored; a
    full table must already be symmetric.
    """
    T = np.asarray(table, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ConfigError("kernel table must be square")
    lower = np.tril(T, -1)
    if not lower.any():
        T = T + np.triu(T, 1).T
    elif not np.array_equal(T, T.T):
        raise ConfigError("kernel table must be symmetric (or upper triangular)")

    def pair(n: np.ndarray, j: np.ndarray) -> np.ndarray:
        ni = n.astype(int) - 1
        ji = j.astype(int) - 1
        if ni.size and (ni.max() >= T.shape[0] or ji.max() >= T.shape[0]):
            raise ConfigError("kernel table too small for requested sizes")
        return T[ni, ji]

    return CoagulationKernel("custom_table", pair, scale, profile)


@dataclass
class AssumptionReport:
    """Outcome of the quantitative hypothesis checks for one scenario."""

    case: str                      # "CI" | "CII" | "unverified"
    alpha: float
    kappa_J: float
    kappa_sup: float | None        # closed-form supremum when available
    kappa_tilde_J: float | None    # contraction in the adjusted weight (CII)
    c_grid: float                  # grid constant c_J
    c_analytic: float | None
    c_witness: tuple               # (n, j, t) attaining c_J
    c_growth: list                 # [(J', c_{J'})] diagnostics
    J: int
    t_grid: list
    reasons: list = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.case != "unverified"

    @property
    def coag_constant(self) -> float:
        return self.c_analytic if self.c_analytic is not None else self.c_grid

    def to_dict(self) -> dict:
        return {
            "verified": self.verified,
            "case": self.case,
            "alpha": self.alpha,
            "kappa_J": self.kappa_J,
            "kappa_sup": self.kappa_sup,
            "kappa_tilde_J": self.kappa_tilde_J,
            "c_grid": self.c_grid,
            "c_analytic": self.c_analytic,
            "c_witness": list(self.c_witness),
            "c_growth": [[int(a), float(b)] for a, b in self.c_growth],
            "J": self.J,
            "t_grid": list(self.t_grid),
            "reasons": list(self.reasons),
        }


def _analytic_coag_constant(kernel: CoagulationKernel, w: WeightSequence,
                            alpha: float, model: FragmentationModel,
                            horizon: float) -> float | None:
    """Closed-form bound constants for the known kernel/weight pairings."""
    gsup = kernel.profile.sup(horizon)
    if w.kind == "power":
        p = w.p
        if alpha == 0.0:
            # k <= chat * min(n,j)**p implies c = 2**p * chat, using
            # w_{n+j} <= 2**p * max(n,j)**p <= 2**p * w_n w_j / min(n,j)**p.
            if kernel.name == "constant":
                return 2.0 ** p * kernel.scale * gsup
            if kernel.name == "min" and p >= 1.0:
                return 2.0 ** p * kernel.scale * gsup
    if w.kind == "geometric":
        # w_{n+j} = w_n w_j exactly, so c is the sup of k / ((1+a_n)(1+a_j))**alpha.
        if kernel.name == "constant":
            return kernel.scale * gsup
        if kernel.name.startswith("frag_power"):
            # k = scale * ((1+a_n)(1+a_j))**beta with beta encoded in the name
            # is bounded by scale when beta <= alpha.
            beta = float(kernel.name.split("beta=")[1].rstrip(")"))
            if beta <= alpha:
                return kernel.scale * gsup
    return None


def _c_grid_scan(kernel: CoagulationKernel, w: WeightSequence,
                 wt: TildeWeight, J: int, t_grid) -> tuple[float, tuple]:
    """Max of k_{n,j}(t) w_{n+j} / (wt_n wt_j) over n + j <= J, t in grid."""
    log_w = w.log_values(J)
    if wt.alpha == 0.0:
        log_wt = log_w
    else:
        a = np.asarray(wt._rates(J), dtype=float)
        log_wt = log_w + wt.alpha * np.log1p(a)
    best = 0.0
    witness = (1, 1, float(t_grid[0]))
    gvals = [(float(t), kernel.profile(float(t))) for t in t_grid]
    gmax_t, gmax = max(((t, g) for t, g in gvals), key=lambda p: p[1])
    for n in range(1, J):
        js = np.arange(1, J - n + 1)
        part = kernel.part_row(n, js.astype(float))
        ratio = np.exp(log_w[n + js - 1] - log_wt[n - 1] - log_wt[js - 1])
        vals = part * ratio
        i = int(np.argmax(vals))
        if vals[i] * gmax > best:
            best = float(vals[i] * gmax)
            witness = (n, int(js[i]), gmax_t)
    return best, witness


def classify_assumptions(model: FragmentationModel, kernel: CoagulationKernel,
                         w: WeightSequence, alpha: float, J: int,
                         t_grid=None, horizon: float = 1.0) -> AssumptionReport:
    """Verify the weight and kernel hypotheses on a finite grid.

    ``kappa_J`` and ``c_J`` are exact maxima over the truncated index
    ranges; they certify the infinite-system hypotheses only together with
    a closed form or a stabilising growth diagnostic, which the report
    carries alongside the numbers.
    """
    if t_grid is None:
        t_grid = [0.0] if kernel.profile.is_constant else list(
            np.linspace(0.0, horizon, 5))
    reasons: list[str] = []

    kappa = kappa_estimate(model, w, J)
    kappa_sup = analytic_kappa_sup(model, w)
    kappa_eff = kappa_sup if kappa_sup is not None else kappa

    wt = TildeWeight(w, alpha, model.rates)
    kappa_tilde = None
    if alpha > 0.0:
        a = model.rates(J)
        adj = (1.0 + a) ** alpha
        best = 0.0
        for j in range(2, J + 1):
            if a[j - 1] == 0.0:
                continue
            sizes, vals = model.daughter_row(j)
            if sizes.shape[0] == 0:
                continue
            ratio = w.ratio(sizes, j) * adj[sizes - 1] / adj[j - 1]
            best = max(best, float(np.sum(ratio * vals)))
        kappa_tilde = best

    c_grid, witness = _c_grid_scan(kernel, w, wt, J, t_grid)
    growth = []
    for Jp in (max(4, J // 4), max(4, J // 2)):
        cJp, _ = _c_grid_scan(kernel, w, wt, Jp, t_grid)
        growth.append((Jp, cJp))
    growth.append((J, c_grid))
    growing = growth[-1][1] > growth[-2][1] * 1.05 + 1e-300
    c_analytic = _analytic_coag_constant(kernel, w, alpha, model, horizon)

    if growing and c_analytic is None:
        reasons.append(
            f"grid constant c_J still growing: {growth[-2][1]:.6g} at J={growth[-2][0]}"
            f" -> {growth[-1][1]:.6g} at J={growth[-1][0]}")
    if alpha == 0.0:
        if kappa_eff > 1.0 + 1e-12:
            reasons.append(f"weight contraction fails: kappa = {kappa_eff:.6g} > 1")
    elif 0.0 < alpha < 1.0:
        if kappa_eff >= 1.0:
            reasons.append(
                f"strict contraction needed for alpha > 0: kappa = {kappa_eff:.6g}")
        if kappa_tilde is not None and kappa_tilde > 1.0 + 1e-12:
            reasons.append(
                f"adjusted-weight contraction fails: kappa_tilde = {kappa_tilde:.6g}")
    else:
        reasons.append(f"alpha = {alpha} outside [0, 1)")

    case = "unverified"
    if not reasons:
        case = "CI" if alpha == 0.0 else "CII"
    return AssumptionReport(
        case=case, alpha=alpha, kappa_J=kappa, kappa_sup=kappa_sup,
        kappa_tilde_J=kappa_tilde, c_grid=c_grid, c_analytic=c_analytic,
        c_witness=witness, c_growth=growth, J=J, t_grid=list(map(float, t_grid)),
        reasons=reasons)
