"""Quantitative audits of trajectories and of the solver machinery.

Every audit returns an :class:`AuditReport` with the measured quantity,
the bound it is held against, and a pass/fail/inapplicable status.  The
rule identifiers are stable strings used by the command-line tools and the
test suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kinetics import AssumptionReport, CoagulationKernel, FragmentationModel
from .operators import lipschitz_constant
from .solver import SolverConfig, WindowEngine, solve, step_delta
from .state import Trajectory
from .weights import TildeWeight, WeightSequence, first_moment, weighted_norm

logger = logging.getLogger(__name__)

__all__ = [
    "AuditReport",
    "audit_mass",
    "mass_ledger_report",
    "audit_positivity",
    "positivity_report",
    "audit_global_bound",
    "growth_envelope_report",
    "growth_precheck",
    "audit_cp_inequality",
    "convexity_gap_constant",
    "audit_contraction",
    "truncation_sweep",
]


@dataclass
class AuditReport:
    """One audit outcome; ``status`` is 'pass', 'fail' or 'inapplicable'."""

    check: str
    ref: str
    measured: float
    bound: float
    status: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "ref": self.ref,
            "measured": self.measured,
            "bound": self.bound,
            "pass": self.passed,
            "status": self.status,
            "details": self.details,
        }


def mass_ledger_report(times, masses, leakages, conserving: bool,
                       tol: float = 1e-8) -> AuditReport:
    """Mass ledger over tabulated (t, M1, leakage) rows.

    For mass-preserving breakup the total ``M1(t) + leakage(t)`` must match
    the initial ledger to a relative ``tol``; for dissipative breakup it
    must never exceed it.
    """
    m0 = masses[0] + leakages[0]
    scale = abs(m0) + 1e-300
    worst = 0.0
    worst_t = times[0]
    for t, m1, leak in zip(times, masses, leakages):
        ledger = m1 + leak
        dev = abs(ledger - m0) if conserving else max(0.0, ledger - m0)
        if dev > worst:
            worst, worst_t = dev, t
    status = "pass" if worst <= tol * scale else "fail"
    return AuditReport(
        check="mass ledger", ref="mass-ledger", measured=worst / scale,
        bound=tol, status=status,
        details={"conserving": conserving, "worst_time": worst_t,
                 "initial_mass": m0})


def audit_mass(traj: Trajectory, model: FragmentationModel,
               tol: float = 1e-8) -> AuditReport:
    """Mass ledger along an in-memory trajectory."""
    conserving = model.is_mass_conserving(min(traj.N, 512))
    masses = [first_moment(u) for u in traj.states]
    return mass_ledger_report(traj.times, masses, traj.leakage, conserving, tol)


def positivity_report(min_components, max_norm: float,
                      tol_factor: float = 1e-10) -> AuditReport:
    """Componentwise floor: no entry below ``-tol_factor * max_t |u|_w``."""
    floor = min(float(v) for v in min_components)
    bound = -tol_factor * max_norm
    status = "pass" if floor >= bound else "fail"
    return AuditReport(
        check="positivity floor", ref="positivity-floor", measured=floor,
        bound=bound, status=status, details={"max_norm_w": max_norm})


def audit_positivity(traj: Trajectory, w: WeightSequence,
                     tol_factor: float = 1e-10) -> AuditReport:
    wv = w.values(traj.N)
    max_norm = max(weighted_norm(wv, u) for u in traj.states)
    return positivity_report([u.min() for u in traj.states], max_norm,
                             tol_factor)


def convexity_gap_constant(p: float) -> float:
    """The sharp constant in the superadditivity gap of x -> x**p.

    ``(x + y) ((x+y)**p - x**p - y**p) <= c_p (x**p y + x y**p)`` holds for
    x, y >= 0 with ``c_p = p`` on 1 < p <= 2 and ``c_p = 2**p - 2`` for
    p > 2.
    """
    if p <= 1.0:
        raise ConfigError("the gap constant needs p > 1")
    return p if p <= 2.0 else 2.0 ** p - 2.0


def audit_cp_inequality(n_samples: int = 100_000, p_low: float = 1.0,
                        p_high: float = 6.0, seed: int = 20260814,
                        tol: float = 1e-12) -> AuditReport:
    """Monte-Carlo check of the superadditivity gap inequality.

    Samples (x, y) log-uniform over [1e-3, 1e3] and p uniform over
    (p_low, p_high]; reports the worst relative violation.  The equality
    case x = y, p = 2 is included deterministically.
    """
    rng = np.random.default_rng(seed)
    x = 10.0 ** rng.uniform(-3.0, 3.0, n_samples)
    y = 10.0 ** rng.uniform(-3.0, 3.0, n_samples)
    p = rng.uniform(p_low, p_high, n_samples)
    p = np.where(p <= 1.0, 1.0 + 1e-9, p)
    x[0] = y[0] = 1.0
    p[0] = 2.0
    cp = np.where(p <= 2.0, p, 2.0 ** p - 2.0)
    lhs = (x + y) * ((x + y) ** p - x ** p - y ** p)
    rhs = cp * (x ** p * y + x * y ** p)
    rel = (lhs - rhs) / rhs
    worst = float(rel.max())
    status = "pass" if worst <= tol else "fail"
    return AuditReport(
        check="convexity gap inequality", ref="convexity-gap", measured=worst,
        bound=tol, status=status,
        details={"samples": n_samples, "seed": seed,
                 "worst_index": int(rel.argmax())})


def growth_precheck(model: FragmentationModel, kernel: CoagulationKernel,
                    w: WeightSequence, N: int, mu: float) -> str | None:
    """Reason the growth envelope does not apply, or None if it does.

    Applicability needs a power weight with exponent p > 1, mass-dissipative
    breakup, and the kernel dominated by ``mu * (n + j)`` on the grid.
    """
    if w.kind != "power" or w.p is None or w.p <= 1.0:
        return "needs power weight p > 1"
    if not model.is_mass_dissipative(min(N, 512)):
        return "breakup adds mass on average"
    part = kernel.part_matrix(N)
    sizes = np.arange(1, N + 1, dtype=float)
    pair_sum = sizes[:, None] + sizes[None, :]
    dominated = float((part / pair_sum).max())
    if dominated > mu * (1.0 + 1e-12):
        return f"kernel exceeds mu (n + j): max ratio {dominated}"
    return None


def audit_global_bound(traj: Trajectory, model: FragmentationModel,
                       kernel: CoagulationKernel, w: WeightSequence,
                       mu: float, tol: float = 1e-8) -> AuditReport:
    """Exponential growth envelope for power weights.

    The envelope is
    ``|u(t)|_w <= |u(0)|_w * exp(c_p * mu * gsup * M1(0) * t)`` with the
    convexity-gap constant c_p; failed preconditions make the audit
    inapplicable rather than failed.
    """
    N = traj.N
    reason = growth_precheck(model, kernel, w, N, mu)
    if reason is not None:
        return AuditReport("growth envelope", "growth-envelope", 0.0, 0.0,
                           "inapplicable", {"reason": reason})
    cp = convexity_gap_constant(w.p)
    gsup = kernel.profile.sup(max(traj.times))
    wv = w.values(N)
    norms = [weighted_norm(wv, u) for u in traj.states]
    m1 = first_moment(traj.states[0])
    return growth_envelope_report(traj.times, norms, m1, cp, mu, gsup, tol)


def growth_envelope_report(times, norms, m1_0: float, cp: float, mu: float,
                           gsup: float, tol: float = 1e-8) -> AuditReport:
    """Envelope check over tabulated (t, |u|_w) rows."""
    n0 = norms[0]
    rate = cp * mu * gsup * m1_0
    worst = 0.0
    worst_t = times[0]
    for t, nv in zip(times, norms):
        ratio = nv / (n0 * float(np.exp(rate * t)) + 1e-300)
        if ratio > worst:
            worst, worst_t = ratio, t
    status = "pass" if worst <= 1.0 + tol else "fail"
    return AuditReport(
        check="growth envelope", ref="growth-envelope", measured=worst,
        bound=1.0 + tol, status=status,
        details={"c_p": cp, "mu": mu, "initial_mass": m1_0,
                 "worst_time": worst_t})


def audit_contraction(model: FragmentationModel, kernel: CoagulationKernel,
                      w: WeightSequence, alpha: float,
                      report: AssumptionReport, C: float,
                      cfg: SolverConfig | None = None, n_pairs: int = 100,
                      seed: int = 20260814, slack: float = 1e-9) -> AuditReport:
    """Observed contraction ratio of the window map on sampled pairs.

    Builds one window at the step-rule length for norm level ``C`` and
    applies the discretised map to ``n_pairs`` random pairs inside the
    radius-r ball, reporting the worst ratio
    ``|Qv - Qw| / |v - w|`` (sup over window nodes of the weighted norm).
    The step rule leaves factor-2 slack, so the bound 0.5 + slack holds
    with room to spare.
    """
    cfg = cfg or SolverConfig(T=1.0)
    N_probe = min(report.J, 128)
    a = model.rates(N_probe)
    if alpha == 0.0:
        norm_weights = w.values(N_probe)
        h_diag = np.ones(N_probe)
    else:
        norm_weights = TildeWeight(w, alpha, model.rates).values(N_probe)
        h_diag = (1.0 + a) ** alpha
    c = report.coag_constant
    r = max(2.0 * C * cfg.safety, cfg.r_floor)
    L = lipschitz_constant(r, c) if c > 0.0 else 0.0
    delta = step_delta(C, r, cfg.T, L)
    engine = WindowEngine(model, kernel, norm_weights, cfg.mode, cfg, h_diag)
    M = cfg.nodes
    h = delta / M
    ops = engine.evaluator(0.0).window_ops(h)
    s_nodes = h * np.arange(M + 1)
    zero = np.zeros(N_probe)

    rng = np.random.default_rng(seed)

    def sample_grid(kind: int) -> np.ndarray:
        if kind == 0:
            # Random decaying profile scaled to a random radius fraction.
            rho = rng.uniform(0.5, 0.95)
            base = rng.standard_normal((M + 1, N_probe)) * rho ** np.arange(N_probe)
        else:
            # All norm concentrated on one size (extreme points of the ball).
            base = np.zeros((M + 1, N_probe))
            base[:, rng.integers(0, max(4, N_probe // 8))] = 1.0
        scale = max(engine.norm(base[m]) for m in range(M + 1))
        return base * (rng.uniform(0.2, 1.0) * r / (scale + 1e-300))

    worst = 0.0
    for pair in range(n_pairs):
        if pair == 0:
            # Deterministic extreme: all norm on the monomer, aligned
            # difference; saturates the bilinear kernel bound.
            v1 = np.zeros((M + 1, N_probe))
            v1[:, 0] = r / norm_weights[0]
            v2 = (1.0 - 1e-6) * v1
        elif pair % 4 == 3:
            # Nearby pair: probes the local Lipschitz ratio of the map.
            v1 = sample_grid(int(rng.integers(0, 2)))
            v2 = v1 * (1.0 - 1e-6) + 1e-8 * r * rng.standard_normal(v1.shape)
        else:
            v1 = sample_grid(int(rng.integers(0, 2)))
            v2 = sample_grid(int(rng.integers(0, 2)))
        q1, _ = engine.sweep(ops, s_nodes, zero, v1, 0.0)
        q2, _ = engine.sweep(ops, s_nodes, zero, v2, 0.0)
        dist = max(engine.norm(v1[m] - v2[m]) for m in range(M + 1))
        qdist = max(engine.norm(q1[m] - q2[m]) for m in range(M + 1))
        if dist > 0.0:
            worst = max(worst, qdist / dist)
    bound = 0.5 + slack
    status = "pass" if worst <= bound else "fail"
    return AuditReport(
        check="window contraction", ref="window-contraction", measured=worst,
        bound=bound, status=status,
        details={"pairs": n_pairs, "delta": delta, "radius": r,
                 "lipschitz": L, "seed": seed, "N": N_probe})


def truncation_sweep(model: FragmentationModel, kernel: CoagulationKernel,
                     w: WeightSequence, alpha: float, u0_factory,
                     N_list, cfg: SolverConfig, engine: str = "picard"):
    """Solve the same scenario at increasing truncation sizes.

    ``u0_factory(N)`` supplies the initial state at each size.  Returns
    per-size records with the final state, leakage, and the weighted
    distance between consecutive final states on the common size range.
    Distances shrinking with N indicate the truncation has converged; the
    leakage ledger quantifies what the extra sizes capture.
    """
    if sorted(N_list) != list(N_list):
        raise ConfigError("N_list must be increasing")
    records = []
    prev = None
    for N in N_list:
        u0 = u0_factory(N)
        if engine == "picard":
            traj = solve(model, kernel, w, alpha, u0, cfg)
        else:
            from .reference import OracleConfig, integrate
            traj = integrate(model, kernel, u0, cfg.T, cfg.mode, OracleConfig())
        final = traj.states[-1]
        leak = traj.leakage[-1]
        rec = {"N": N, "final": final, "leakage": leak,
               "blowup": traj.blowup is not None}
        if prev is not None:
            nP = prev["N"]
            wv = w.values(nP)
            rec["distance_to_previous"] = weighted_norm(wv, final[:nP] - prev["final"])
            rec["tail_norm"] = weighted_norm(w.values(N)[nP:], final[nP:])
        records.append(rec)
        prev = rec
    return records
