"""Experiment driver: the two coupled refinement studies and the heat
study, with CSV/table emission.

Studies
-------
* ``coupled-simultaneous``: h_k = 2^-k with tau = ratio * h_k,
* ``coupled-fixed-tau``: h_k = 2^-k at a fixed time step,
* ``heat``: the mixed heat subcase with tau = ratio * h_k.

Each level writes a per-step series CSV and an indicator-scalar CSV; the
study writes ``summary.csv`` plus an aligned-text table. Identical configs
produce byte-identical outputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import assembly, estimators, heat as heat_mod
from .assembly import Coefficients, SolverError
from .elements import build_layouts
from .estimators import EstimatorOptions, EstimatorReport, IndicatorEngine
from .manufactured import ErrorEngine, ExactSolution, benchmark_solution, write_error_series
from .mesh import uniform_unit_square
from .stepper import BiotStepper, TimeGrid

STUDIES = ("coupled-simultaneous", "coupled-fixed-tau", "heat")


@dataclass(frozen=True)
class StudyConfig:
    """Configuration of one study run."""

    study: str = "coupled-simultaneous"
    k_min: int = 1
    k_max: int = 4
    tau_ratio: Optional[float] = 0.4
    tau: Optional[float] = None
    T: float = 1.0
    out_dir: Optional[str] = None
    include_data_osc: bool = False
    wnorm_squared: bool = True
    e2_alpha: bool = True
    mu: float = 0.4
    lam: float = 0.4
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        if not (1 <= self.k_min <= self.k_max):
            raise ValueError("need k_max >= k_min >= 1")
        if self.T <= 0.0:
            raise ValueError("final time must be positive")
        if self.study == "coupled-fixed-tau":
            if self.tau is None or self.tau <= 0.0:
                raise ValueError("fixed-tau study needs --tau > 0")
        else:
            if self.tau_ratio is None or self.tau_ratio <= 0.0:
                raise ValueError("refinement studies need --tau-ratio > 0")

    def options(self) -> EstimatorOptions:
        return EstimatorOptions(wnorm_squared=self.wnorm_squared, e2_alpha=self.e2_alpha)

    def coefficients(self) -> Coefficients:
        return Coefficients(mu=self.mu, lam=self.lam, alpha=self.alpha, beta=self.beta)

    def level_tau(self, k: int) -> float:
        if self.study == "coupled-fixed-tau":
            return float(self.tau)
        # keep t_N = T exact: snap tau to an integer step count
        raw = self.tau_ratio * 2.0**-k
        return self.T / max(1, round(self.T / raw))


@dataclass
class LevelResult:
    """One refinement level: totals plus the per-step series."""

    k: int
    h: float
    tau: float
    E: float
    Est: float
    ns: np.ndarray
    ts: np.ndarray
    e_series: np.ndarray
    eps_series: np.ndarray
    reports: Sequence[EstimatorReport] = field(default_factory=list)


@dataclass
class StudyResult:
    config: StudyConfig
    levels: list[LevelResult]

    def table_rows(self) -> list[dict]:
        rows = []
        for i, lv in enumerate(self.levels):
            row = {
                "k": lv.k,
                "h": lv.h,
                "tau": lv.tau,
                "E": lv.E,
                "Est": lv.Est,
                "Est_over_E": lv.Est / lv.E if lv.E != 0.0 else float("nan"),
                "E_ratio": self.levels[i - 1].E / lv.E if i > 0 else None,
                "Est_ratio": self.levels[i - 1].Est / lv.Est if i > 0 else None,
            }
            rows.append(row)
        return rows


class StudyError(RuntimeError):
    """Solver failure inside a study; carries the failing level and step."""

    def __init__(self, k: int, n: int, cause: SolverError, partial: StudyResult):
        super().__init__(f"solver failure at level k={k}, step n={n}: {cause}")
        self.k = k
        self.n = n
        self.partial = partial


def run_coupled_level(
    k: int,
    tau: float,
    T: float,
    coeffs: Coefficients,
    options: EstimatorOptions,
    exact: Optional[ExactSolution] = None,
    include_data_osc: bool = False,
    with_data: bool = True,
) -> LevelResult:
    """Run one level of the coupled benchmark with per-step observers."""
    if exact is None:
        exact = benchmark_solution(coeffs.mu, coeffs.lam, coeffs.alpha, coeffs.beta)
    mesh = uniform_unit_square(k)
    layouts = build_layouts(mesh)
    N = round(T / tau)
    grid = TimeGrid.uniform(T, N)
    stepper = BiotStepper(mesh, layouts, coeffs)
    engine = IndicatorEngine(mesh, layouts, coeffs, options)
    err = ErrorEngine(mesh, layouts, coeffs, exact, options.wnorm_squared)

    prev = stepper.initial_state(lambda X: exact.f(0.0, X))
    fh_prev = assembly.l2_project(layouts.V, lambda X: exact.f(0.0, X), mesh, layouts)
    reports: list[EstimatorReport] = []
    e_series = np.empty(N)
    E2 = 0.0
    for n in range(1, N + 1):
        t_prev, t_n = grid.times[n - 1], grid.times[n]
        cur = stepper.step(
            prev,
            n,
            grid.tau(n),
            lambda X: exact.f(t_n, X),
            lambda X: exact.g(t_n, X),
        )
        fh_n = assembly.l2_project(layouts.V, lambda X: exact.f(t_n, X), mesh, layouts)
        gh_n = assembly.l2_project(layouts.Q, lambda X: exact.g(t_n, X), mesh, layouts)
        reports.append(
            engine.report(
                prev,
                cur,
                t_prev,
                t_n,
                fh_prev,
                fh_n,
                gh_n,
                f=exact.f if with_data else None,
                df_dt=exact.df_dt if with_data else None,
                g=exact.g if with_data else None,
            )
        )
        e_series[n - 1] = err.instant_error(prev, cur, t_n, grid.tau(n))
        E2 += err.interval_error_sq(prev, cur, t_prev, t_n)
        prev, fh_prev = cur, fh_n

    Est, eps = estimators.aggregate(reports, grid, include_data=include_data_osc)
    return LevelResult(
        k=k,
        h=2.0**-k,
        tau=grid.tau(1),
        E=float(np.sqrt(E2)),
        Est=Est,
        ns=np.arange(1, N + 1),
        ts=grid.times[1:].copy(),
        e_series=e_series,
        eps_series=eps,
        reports=reports,
    )


def run_study(config: StudyConfig) -> StudyResult:
    """Run every level of the configured study and emit tables.

    On a solver failure the partial results are still written before a
    StudyError (carrying level and step) is raised.
    """
    result = StudyResult(config=config, levels=[])
    coeffs = config.coefficients()
    options = config.options()
    for k in range(config.k_min, config.k_max + 1):
        tau = config.level_tau(k)
        try:
            if config.study == "heat":
                hl = heat_mod.run_heat_level(k, tau, config.T, options=options)
                result.levels.append(
                    LevelResult(
                        k=hl.k,
                        h=hl.h,
                        tau=hl.tau,
                        E=hl.E,
                        Est=hl.Est,
                        ns=np.arange(1, len(hl.eps) + 1),
                        ts=hl.ts,
                        e_series=hl.e_series,
                        eps_series=hl.eps,
                    )
                )
            else:
                result.levels.append(
                    run_coupled_level(
                        k,
                        tau,
                        config.T,
                        coeffs,
                        options,
                        include_data_osc=config.include_data_osc,
                    )
                )
        except SolverError as exc:
            n = _failing_step(exc)
            if config.out_dir:
                emit_tables(result, config.out_dir)
            raise StudyError(k, n, exc, result) from exc
    if config.out_dir:
        emit_tables(result, config.out_dir)
    return result


def _failing_step(exc: SolverError) -> int:
    msg = str(exc)
    if "step n=" in msg:
        try:
            return int(msg.split("step n=")[1].split(":")[0])
        except ValueError:
            pass
    return -1


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.6g}"


def emit_tables(result: StudyResult, out_dir: str) -> list[str]:
    """Write summary.csv, summary.txt and the per-level series files."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w") as out:
        out.write("k,h,tau,E,Est,Est_over_E,E_ratio,Est_ratio\n")
        for row in result.table_rows():
            out.write(
                ",".join(
                    [
                        str(row["k"]),
                        _fmt(row["h"]),
                        _fmt(row["tau"]),
                        _fmt(row["E"]),
                        _fmt(row["Est"]),
                        _fmt(row["Est_over_E"]),
                        _fmt(row["E_ratio"]),
                        _fmt(row["Est_ratio"]),
                    ]
                )
                + "\n"
            )
    written.append(path)

    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w") as out:
        header = f"{'k':>3} {'h':>10} {'tau':>10} {'E':>10} {'Est':>10} {'Est/E':>8} {'E_r':>7} {'Est_r':>7}"
        out.write(header + "\n")
        out.write("-" * len(header) + "\n")
        for row in result.table_rows():
            out.write(
                f"{row['k']:>3} {_fmt(row['h']):>10} {_fmt(row['tau']):>10} "
                f"{_fmt(row['E']):>10} {_fmt(row['Est']):>10} {_fmt(row['Est_over_E']):>8} "
                f"{_fmt(row['E_ratio']) or 'N/A':>7} {_fmt(row['Est_ratio']) or 'N/A':>7}\n"
            )
    written.append(path)

    for lv in result.levels:
        path = os.path.join(out_dir, f"series_k{lv.k}.csv")
        with open(path, "w") as out:
            write_error_series(out, lv.ns, lv.ts, lv.e_series, lv.eps_series)
        written.append(path)
        if lv.reports:
            path = os.path.join(out_dir, f"indicators_k{lv.k}.csv")
            with open(path, "w") as out:
                estimators.write_scalar_series(out, lv.reports)
            written.append(path)
    return written


def parse_config_file(path: str) -> StudyConfig:
    """Plain-text ``key = value`` config with the CLI's keys."""
    bools = {"include_data_osc", "wnorm_unsquared", "e2_no_alpha"}
    raw: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            raw[key] = val

    def as_bool(s: str) -> bool:
        return s.lower() in ("1", "true", "yes", "on")

    kwargs: dict = {}
    mapping = {
        "study": str,
        "kmin": int,
        "kmax": int,
        "tau_ratio": float,
        "tau": float,
        "T": float,
        "out": str,
        "mu": float,
        "lambda": float,
        "alpha": float,
        "beta": float,
    }
    renames = {"kmin": "k_min", "kmax": "k_max", "out": "out_dir", "lambda": "lam"}
    for key, val in raw.items():
        if key in bools:
            continue
        if key not in mapping:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[renames.get(key, key)] = mapping[key](val)
    if "include_data_osc" in raw:
        kwargs["include_data_osc"] = as_bool(raw["include_data_osc"])
    if "wnorm_unsquared" in raw:
        kwargs["wnorm_squared"] = not as_bool(raw["wnorm_unsquared"])
    if "e2_no_alpha" in raw:
        kwargs["e2_alpha"] = not as_bool(raw["e2_no_alpha"])
    return StudyConfig(**kwargs)
