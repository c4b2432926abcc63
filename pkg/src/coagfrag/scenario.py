"""Scenario files: a single TOML document describing one run.

A scenario names the weight, the breakup model, the coagulation kernel,
the truncation, the engine settings, the initial state, the output target,
and the audit list.  Parsing is strict: unknown keys are rejected so typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .kinetics import (CoagulationKernel, FragmentationModel, TimeProfile,
                       becker_doring_model, constant_kernel, frag_power_kernel,
                       min_kernel, no_fragmentation, powerlaw_model,
                       product_capped_kernel, sum_kernel, table_kernel,
                       tabulated_model, uniform_binary_model)
from .operators import TruncationMode
from .reference import OracleConfig
from .solver import SolverConfig
from .state import TruncatedState
from .weights import WeightSequence

__all__ = ["Scenario", "load_scenario", "build_scenario"]

_ENGINES = ("picard", "oracle", "both")

_AUDIT_KINDS = ("mass-ledger", "positivity-floor", "growth-envelope",
                "convexity-gap", "window-contraction", "truncation-sweep")


class _Table:
    """One TOML table with strict key consumption."""

    def __init__(self, raw: dict, context: str):
        self.raw = dict(raw)
        self.context = context

    def take(self, key: str, default=None):
        return self.raw.pop(key, default)

    def require(self, key: str):
        if key not in self.raw:
            raise ConfigError(f"{self.context}: missing required key {key!r}")
        return self.raw.pop(key)

    def done(self) -> None:
        if self.raw:
            extra = ", ".join(sorted(self.raw))
            raise ConfigError(f"{self.context}: unknown keys: {extra}")


def _build_weight(tbl: _Table) -> WeightSequence:
    kind = tbl.take("kind", "power")
    if kind == "power":
        w = WeightSequence.power(float(tbl.take("p", 1.0)))
    elif kind == "geometric":
        w = WeightSequence.geometric(float(tbl.require("r")))
    elif kind == "tabulated":
        w = WeightSequence.tabulated(tbl.require("values"))
    else:
        raise ConfigError(f"{tbl.context}: unknown weight kind {kind!r}")
    tbl.done()
    return w


def _build_model(tbl: _Table) -> FragmentationModel:
    family = tbl.take("family", "none")
    if family == "becker_doring":
        model = becker_doring_model(float(tbl.take("scale", 1.0)))
    elif family == "uniform_binary":
        model = uniform_binary_model(float(tbl.take("scale", 1.0)),
                                     float(tbl.take("monomer_rate", 0.0)))
    elif family == "powerlaw":
        model = powerlaw_model(float(tbl.require("nu")),
                               float(tbl.take("scale", 1.0)),
                               float(tbl.take("monomer_rate", 0.0)))
    elif family == "none":
        model = no_fragmentation()
    elif family == "tabulated":
        rates = tbl.require("rates")
        rows_raw = tbl.take("rows", {})
        rows = {int(j): [(int(n), float(v)) for n, v in pairs]
                for j, pairs in rows_raw.items()}
        model = tabulated_model(rates, rows)
    else:
        raise ConfigError(f"{tbl.context}: unknown breakup family {family!r}")
    tbl.done()
    return model


def _build_profile(raw: dict | None, context: str) -> TimeProfile:
    if raw is None:
        return TimeProfile()
    tbl = _Table(raw, context)
    name = tbl.take("name", "constant")
    profile = TimeProfile(
        name=name,
        rate=float(tbl.take("rate", 0.0)),
        amplitude=float(tbl.take("amplitude", 0.0)),
        period=float(tbl.take("period", 1.0)),
    )
    tbl.done()
    if name not in ("constant", "exp_decay", "cosine"):
        raise ConfigError(f"{context}: unknown profile {name!r}")
    if name == "cosine" and abs(profile.amplitude) > 1.0:
        raise ConfigError(f"{context}: cosine amplitude must stay in [-1, 1] "
                          "so the modulation is nonnegative")
    if name == "exp_decay" and profile.rate < 0.0:
        raise ConfigError(f"{context}: exp_decay rate must be nonnegative")
    if name == "cosine" and profile.period <= 0.0:
        raise ConfigError(f"{context}: cosine period must be positive")
    return profile


def _build_kernel(tbl: _Table, model: FragmentationModel) -> CoagulationKernel:
    family = tbl.take("family", "none")
    scale = float(tbl.take("scale", 1.0))
    profile = _build_profile(tbl.take("profile"), f"{tbl.context}.profile")
    if family == "constant":
        kernel = constant_kernel(scale, profile)
    elif family == "min":
        kernel = min_kernel(scale, profile)
    elif family == "sum":
        kernel = sum_kernel(scale, profile)
    elif family == "product_capped":
        kernel = product_capped_kernel(scale, float(tbl.take("cap", 64.0)),
                                       profile)
    elif family == "frag_power":
        kernel = frag_power_kernel(model, float(tbl.require("beta")), scale,
                                   profile)
    elif family in ("table", "custom_table"):
        kernel = table_kernel(tbl.require("values"), scale, profile)
    elif family == "none":
        kernel = constant_kernel(0.0, profile)
    else:
        raise ConfigError(f"{tbl.context}: unknown kernel family {family!r}")
    tbl.done()
    return kernel


@dataclass
class Scenario:
    """Everything one run needs, already built and validated."""

    seed: int
    alpha: float
    weight: WeightSequence
    model: FragmentationModel
    kernel: CoagulationKernel
    N: int
    mode: TruncationMode
    engine: str
    solver_cfg: SolverConfig
    oracle_cfg: OracleConfig
    u0_sizes: list
    u0_amounts: list
    u0_values: list | None
    output_path: str | None
    output_format: str
    stride: int
    points: int
    times: list | None
    audits: list = field(default_factory=list)
    sweep_sizes: list = field(default_factory=list)

    @property
    def T(self) -> float:
        return self.solver_cfg.T

    def initial_state(self, N: int | None = None) -> TruncatedState:
        N = self.N if N is None else N
        if self.u0_values is not None:
            vals = np.zeros(N)
            m = min(N, len(self.u0_values))
            vals[:m] = np.asarray(self.u0_values, dtype=float)[:m]
            return TruncatedState(N, vals, 0.0)
        return TruncatedState.basis(N, self.u0_sizes, self.u0_amounts)

    def output_times(self) -> list:
        if self.times is not None:
            return [float(t) for t in self.times]
        T = self.T
        return [T * (i + 1) / self.points for i in range(self.points)]


def build_scenario(raw: dict, context: str = "scenario") -> Scenario:
    """Validate a parsed TOML document and build every component."""
    top = _Table(raw, context)
    seed = int(top.take("seed", 20260814))
    if seed < 0:
        raise ConfigError(f"{context}: seed must be a nonnegative integer")
    alpha = float(top.take("alpha", 0.0))
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"{context}: alpha must lie in [0, 1)")

    weight = _build_weight(_Table(top.take("weight", {}), f"{context}.weight"))
    model = _build_model(_Table(top.take("frag", {}), f"{context}.frag"))
    kernel = _build_kernel(_Table(top.take("coag", {}), f"{context}.coag"),
                           model)

    trunc = _Table(top.take("truncation", {}), f"{context}.truncation")
    N = int(trunc.take("N", 128))
    if N < 1:
        raise ConfigError(f"{context}.truncation: N must be >= 1")
    mode = TruncationMode.parse(trunc.take("mode", "conservative_drop"))
    trunc.done()

    sol = _Table(top.take("solver", {}), f"{context}.solver")
    engine = sol.take("engine", "picard")
    if engine not in _ENGINES:
        raise ConfigError(f"{context}.solver: engine must be one of {_ENGINES}")
    T = float(sol.take("T", 1.0))
    solver_cfg = SolverConfig(
        T=T, mode=mode,
        norm_space=sol.take("norm_space", "auto"),
        tol_picard=float(sol.take("tol_picard", 1e-12)),
        max_picard=int(sol.take("max_picard", 400)),
        nodes=int(sol.take("nodes", 8)),
        max_nodes=int(sol.take("max_nodes", 64)),
        grid_tol=float(sol.take("grid_tol", 1e-10)),
        gamma_shift=sol.take("gamma_shift", "off"),
        gamma=float(sol.take("gamma", 0.0)),
        safety=float(sol.take("safety", 1.01)),
        delta_min=float(sol.take("delta_min", 1e-10)),
        fast_kernel=bool(sol.take("fast_kernel", True)),
        quantize_windows=bool(sol.take("quantize_windows", True)),
        semigroup_method=sol.take("semigroup_method", "expm"),
        semigroup_tol=float(sol.take("semigroup_tol", 1e-10)),
        allow_unverified=bool(sol.take("allow_unverified", False)),
    )
    oracle_cfg = OracleConfig(
        rtol=float(sol.take("rtol", 1e-9)),
        atol=float(sol.take("atol", 1e-13)),
        splitting=sol.take("splitting", "off"),
        max_steps=int(sol.take("max_steps", 5_000_000)),
        fast_kernel=solver_cfg.fast_kernel,
    )
    sol.done()

    init = _Table(top.take("initial", {}), f"{context}.initial")
    u0_values = init.take("values")
    u0_sizes = [int(s) for s in init.take("sizes", [1])]
    u0_amounts = [float(v) for v in init.take("amounts", [1.0] * len(u0_sizes))]
    init.done()
    if u0_values is None and len(u0_sizes) != len(u0_amounts):
        raise ConfigError(f"{context}.initial: sizes and amounts differ in length")

    out = _Table(top.take("output", {}), f"{context}.output")
    output_path = out.take("path")
    output_format = out.take("format", "csv")
    if output_format not in ("csv", "json"):
        raise ConfigError(f"{context}.output: format must be csv or json")
    stride = int(out.take("stride", 0))
    if stride < 0:
        raise ConfigError(f"{context}.output: stride must be >= 0")
    points = int(out.take("points", 8))
    if points < 1:
        raise ConfigError(f"{context}.output: points must be >= 1")
    times = out.take("times")
    if times is not None:
        times = [float(t) for t in times]
        if any(t <= 0.0 or t > T + 1e-12 * T for t in times):
            raise ConfigError(f"{context}.output: times must lie in (0, T]")
        times = sorted(set(times))
    out.done()

    audits = []
    for i, entry in enumerate(top.take("audits", [])):
        atbl = _Table(entry, f"{context}.audits[{i}]")
        kind = atbl.require("kind")
        if kind not in _AUDIT_KINDS:
            raise ConfigError(
                f"{context}.audits[{i}]: unknown audit {kind!r}; "
                f"expected one of {_AUDIT_KINDS}")
        audits.append({"kind": kind, **atbl.raw})

    sweep = _Table(top.take("sweep", {}), f"{context}.sweep")
    sweep_sizes = [int(n) for n in sweep.take("sizes", [])]
    sweep.done()
    if sweep_sizes and sweep_sizes != sorted(sweep_sizes):
        raise ConfigError(f"{context}.sweep: sizes must be increasing")

    top.done()
    return Scenario(
        seed=seed, alpha=alpha, weight=weight, model=model, kernel=kernel,
        N=N, mode=mode, engine=engine, solver_cfg=solver_cfg,
        oracle_cfg=oracle_cfg, u0_sizes=u0_sizes, u0_amounts=u0_amounts,
        u0_values=u0_values, output_path=output_path,
        output_format=output_format, stride=stride, points=points,
        times=times, audits=audits, sweep_sizes=sweep_sizes)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    return build_scenario(raw, context=path)
