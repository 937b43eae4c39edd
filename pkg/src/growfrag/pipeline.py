"""Stage orchestration: validate -> eigen -> simulate -> entropy, plus the
grid-refinement study.

Every stage writes its artifacts into the output directory and contributes
``{"status": ..., "metrics": {...}}`` to ``summary.json``, which is written
even when a stage fails.  A stage passes only if its numerical contract
holds within the tolerances of the scenario's ``output`` block.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import optimize

from . import io
from .coefficients import validate_assumptions
from .dynamics import Trajectory, conservation_check, simulate
from .eigen import EigenTriple, build_generator, eigentriple
from .entropy import EntropySpec, dissipation_budget, entropy_balance_check, monotone_tolerance, relative_entropy
from .errors import BoundaryMassError, DomainError, GrowFragError
from .grid import DiagnosticSeries, HybridMeasure, tv_phi_distance, weighted_mass
from .scenario import Scenario

logger = logging.getLogger(__name__)

STAGES = ("validate", "eigen", "simulate", "entropy", "converge")
REQUIRES = {
    "validate": (),
    "eigen": ("validate",),
    "simulate": ("eigen",),
    "entropy": ("simulate",),
    "converge": ("validate",),
}


class StageFailed(GrowFragError):
    """A stage ran but its contract did not hold."""


def resolve_stages(stages: Iterable[str]) -> list[str]:
    """Requested stages plus their prerequisites, in pipeline order."""
    wanted: set[str] = set()

    def add(s: str):
        if s not in REQUIRES:
            raise DomainError(f"unknown stage {s!r}; expected one of {STAGES}")
        if s not in wanted:
            wanted.add(s)
            for dep in REQUIRES[s]:
                add(dep)

    for s in stages:
        add(s)
    return [s for s in STAGES if s in wanted]


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


@dataclass
class ExitReport:
    exit_code: int
    failed_stage: str | None
    stages: dict[str, dict[str, Any]]
    out_dir: Path

    @property
    def ok(self) -> bool:
        return self.exit_code == 0

    def summary(self) -> dict[str, Any]:
        return _clean({"exit_code": self.exit_code, "failed_stage": self.failed_stage, "stages": self.stages})


@dataclass
class _Context:
    scenario: Scenario
    out: Path
    trajectory_path: Path | None = None
    triple: EigenTriple | None = None
    n0: HybridMeasure | None = None
    m0: float = math.nan
    traj: Trajectory | None = None
    entropies: tuple[EntropySpec, ...] = ()
    extra: dict = field(default_factory=dict)


def _stage_validate(ctx: _Context) -> dict:
    sc = ctx.scenario
    rep = validate_assumptions(sc.coefficients, sc.grid, sc.tolerances["validation"])
    (ctx.out / "validation.json").write_text(json.dumps(_clean(rep.to_dict()), indent=2), encoding="utf-8")
    metrics = {k: v.worst for k, v in rep.checks.items()}
    metrics["non_conforming"] = rep.non_conforming
    if not rep.passed and not sc.coefficients.allow_non_conforming:
        raise StageFailed(f"assumptions violated: {', '.join(rep.failures())}", metrics)
    return metrics


def _stage_eigen(ctx: _Context) -> dict:
    sc = ctx.scenario
    gen = build_generator(sc.coefficients, sc.grid)
    tr = eigentriple(gen, sc.eigen_tol, sc.eigen_max_iter)
    ctx.triple = tr
    ctx.n0 = sc.initial.build(sc.grid, tr.N)
    ctx.m0 = weighted_mass(ctx.n0, tr.weight())
    ctx.entropies = tuple(h.with_center(ctx.m0) for h in sc.entropy)
    io.write_csv(ctx.out / "eigen.csv", ["x", "N", "phi"], zip(sc.grid.centers, tr.N, tr.phi))
    metrics = tr.to_dict()
    metrics["m0"] = ctx.m0
    (ctx.out / "eigen.json").write_text(json.dumps(_clean(metrics), indent=2), encoding="utf-8")
    d_n, d_phi = tr.normalization_defects()
    tol = sc.tolerances["normalization"]
    if max(d_n, d_phi) > tol or max(tr.primal_residual, tr.dual_residual) > sc.eigen_tol:
        raise StageFailed("eigentriple normalization or residual out of tolerance", metrics)
    return metrics


def _stage_simulate(ctx: _Context) -> dict:
    sc = ctx.scenario
    try:
        traj = simulate(ctx.n0, sc.coefficients, sc.grid, sc.solver, ctx.triple)
    except BoundaryMassError as exc:
        if exc.trajectory is not None:
            io.write_series_csv(exc.trajectory.diagnostics, ctx.out / "diagnostics.csv")
        raise StageFailed(str(exc), {"t_abort": exc.t, "boundary_fraction": exc.fraction}) from exc
    ctx.traj = traj
    io.write_series_csv(traj.diagnostics, ctx.out / "diagnostics.csv")
    io.save_trajectory(traj, ctx.out / "trajectory.json")
    io.write_measure_csv(traj.states[-1], ctx.out / "final_measure.csv")
    cons = conservation_check(traj, ctx.triple)
    final = traj.states[-1]
    t_end = float(traj.times[-1])
    metrics = {
        "dt": traj.dt,
        "snapshots": len(traj),
        "t_end": t_end,
        "conservation_drift": cons.summary["max_relative_drift"],
        "m0": ctx.m0,
        "final_tv": final.total_variation(),
        "final_n_atoms": final.n_atoms,
        "final_tv_phi_to_m0N": tv_phi_distance(final.scaled(math.exp(-ctx.triple.lam * t_end)),
                                               ctx.m0 * ctx.triple.N, ctx.triple.phi),
        "max_boundary_fraction": float(traj.diagnostics["boundary_fraction"].max()),
    }
    if metrics["conservation_drift"] > sc.tolerances["conservation_drift"]:
        raise StageFailed("conservation drift above tolerance", metrics)
    return metrics


def _load_trajectory(ctx: _Context) -> None:
    if ctx.traj is None and ctx.trajectory_path is not None:
        ctx.traj = io.load_trajectory(ctx.trajectory_path)
        if ctx.traj.grid != ctx.scenario.grid:
            raise DomainError("trajectory grid does not match the scenario grid")


def _stage_entropy(ctx: _Context) -> dict:
    sc = ctx.scenario
    _load_trajectory(ctx)
    traj, tr = ctx.traj, ctx.triple
    rel = sc.tolerances["entropy_monotone_rel"]
    scale = weighted_mass(traj.states[0], tr.weight())
    r = tr.primal_residual + tr.dual_residual
    gaps = np.concatenate([[0.0], np.diff(traj.times)])
    metrics: dict[str, Any] = {}
    failures = []
    for i, hs in enumerate(ctx.entropies):
        key = f"{i}_{hs.family}"
        if hs.ac_only and any(mu.n_atoms for mu in traj.states):
            metrics[key] = {"skipped": "state has atoms and the entropy has no recession value"}
            continue
        if hs.metric_only:
            H = np.array([relative_entropy(mu, tr, t, hs) for t, mu in traj.snapshots])
            tol = monotone_tolerance(H[0], scale, rel, r, gaps)
            inc = np.concatenate([[0.0], np.diff(H)])
            series = DiagnosticSeries(traj.times, {"H": H, "D": np.full(H.size, np.nan),
                                                   "defect": np.full(H.size, np.nan), "monotone_ok": inc <= tol})
            m = {"H0": H[0], "H_final": H[-1], "max_increase": inc.max(), "monotone": bool((inc <= tol).all())}
        else:
            series = entropy_balance_check(traj, tr, sc.coefficients, hs, rel=rel)
            budget = dissipation_budget(traj, tr, sc.coefficients, hs)
            m = dict(series.summary)
            m.update(H_final=series["H"][-1], dissipation_integral=budget.integral, bound=budget.bound,
                     budget_ok=budget.integral <= budget.bound + sc.tolerances["dissipation_budget"])
            if not m["budget_ok"]:
                failures.append(f"{key}: dissipation budget exceeded")
        m["spec"] = hs.to_dict()
        if not m["monotone"]:
            failures.append(f"{key}: entropy increased")
        io.write_series_csv(series, ctx.out / f"entropy_{key}.csv")
        metrics[key] = m
    if failures:
        raise StageFailed("; ".join(failures), metrics)
    return metrics


def _stage_converge(ctx: _Context) -> dict:
    report = convergence_study(ctx.scenario, ctx.scenario.study_levels())
    io.write_csv(ctx.out / "convergence.csv", ["M", "error", "tv_phi_final", "conservation_drift", "balance_defect"],
                 [(lv.M, lv.error, lv.tv_phi_final, lv.conservation_drift, lv.balance_defect) for lv in report.levels])
    return report.to_dict()


_RUNNERS = {
    "validate": _stage_validate,
    "eigen": _stage_eigen,
    "simulate": _stage_simulate,
    "entropy": _stage_entropy,
    "converge": _stage_converge,
}


def run_pipeline(scenario: Scenario, stages: Iterable[str], out_dir: str | Path | None = None,
                 trajectory: str | Path | None = None) -> ExitReport:
    """Run the requested stages (and their prerequisites) in order.

    ``trajectory`` lets the entropy stage reuse a saved trajectory instead of
    simulating.  Stops at the first failing stage; the exit code is 0 iff
    every stage passed, and ``summary.json`` is written in every case.
    """
    order = resolve_stages(stages)
    if trajectory is not None and "entropy" in order and "simulate" in order:
        order.remove("simulate")
        if "eigen" not in order:
            order.insert(order.index("entropy"), "eigen")
    out = Path(out_dir if out_dir is not None else scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(scenario, out, Path(trajectory) if trajectory is not None else None)
    results: dict[str, dict[str, Any]] = {}
    failed = None
    for name in order:
        if failed is not None:
            results[name] = {"status": "skipped", "metrics": {}}
            continue
        try:
            metrics = _RUNNERS[name](ctx)
            results[name] = {"status": "pass", "metrics": metrics}
        except StageFailed as exc:
            metrics = exc.args[1] if len(exc.args) > 1 else {}
            results[name] = {"status": "fail", "metrics": metrics, "message": exc.args[0]}
            failed = name
        except GrowFragError as exc:
            results[name] = {"status": "error", "metrics": {}, "message": f"{type(exc).__name__}: {exc}"}
            failed = name
        if failed == name:
            logger.error("stage %s failed: %s", name, results[name]["message"])
    report = ExitReport(0 if failed is None else 1, failed, results, out)
    (out / "summary.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True), encoding="utf-8")
    return report


# --- refinement study --------------------------------------------------------

@dataclass(frozen=True)
class LevelResult:
    M: int
    error: float  # L1 distance of the final normalised density to the finest level
    tv_phi_final: float
    conservation_drift: float
    balance_defect: float


@dataclass
class StudyReport:
    levels: list[LevelResult]
    orders: list[float]

    @property
    def observed_order(self) -> float:
        return float(np.mean(self.orders)) if self.orders else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [vars(lv) for lv in self.levels],
            "orders": self.orders,
            "observed_order": self.observed_order,
        }


def _coarsen(values: np.ndarray, factor: int) -> np.ndarray:
    return values.reshape(-1, factor).mean(axis=1)


def richardson_order(e_a: float, e_b: float, h_a: float, h_b: float, h_f: float) -> float:
    """Solve ``e_a / e_b = (h_a^p - h_f^p) / (h_b^p - h_f^p)`` for ``p``.

    Errors are measured against a reference at spacing ``h_f < h_b < h_a``.
    """
    if not (e_a > 0 and e_b > 0):
        return math.nan
    target = e_a / e_b

    def f(p):
        return (h_a**p - h_f**p) / (h_b**p - h_f**p) - target

    lo, hi = 1e-3, 8.0
    if f(lo) * f(hi) > 0:
        return math.nan
    return float(optimize.brentq(f, lo, hi, xtol=1e-12))


def convergence_study(scenario: Scenario, refinements: Sequence[int]) -> StudyReport:
    """Run the scenario at each grid size and estimate the observed order.

    The last (finest) level is the reference; each coarser level reports the
    L1 distance between its final ``e^{-lam t} n`` and the reference averaged
    onto the coarse grid, and every consecutive pair of errors gives one
    Richardson order estimate.

    Raises
    ------
    DomainError
        If fewer than two levels are given, the sizes are not strictly
        increasing, or the finest size is not a multiple of every other.
    """
    levels = [int(m) for m in refinements]
    if len(levels) < 2:
        raise DomainError("a convergence study needs at least two refinement levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise DomainError(f"refinement levels must be strictly increasing, got {levels}")
    if any(levels[-1] % m for m in levels):
        raise DomainError("the finest level must be a multiple of every other level")

    runs = []
    for M in levels:
        sc = scenario.with_grid(M)
        tr = eigentriple(build_generator(sc.coefficients, sc.grid), sc.eigen_tol, sc.eigen_max_iter)
        n0 = sc.initial.build(sc.grid, tr.N)
        m0 = weighted_mass(n0, tr.weight())
        traj = simulate(n0, sc.coefficients, sc.grid, sc.solver, tr)
        t_end = float(traj.times[-1])
        final = traj.states[-1].scaled(math.exp(-tr.lam * t_end))
        drift = conservation_check(traj, tr).summary["max_relative_drift"]
        hs = next((h for h in sc.entropy if not h.metric_only and not h.ac_only), EntropySpec.pseudo_huber())
        balance = entropy_balance_check(traj, tr, sc.coefficients, hs.with_center(m0)).summary["max_defect"]
        runs.append((sc.grid, final, tv_phi_distance(final, m0 * tr.N, tr.phi), drift, balance))
        logger.info("study level M=%d done", M)

    ref_grid, ref, *_ = runs[-1]
    results = []
    for grid, final, tv, drift, balance in runs:
        factor = ref_grid.M // grid.M
        err = float(np.abs(final.densities - _coarsen(ref.densities, factor)).sum() * grid.dx)
        err += abs(final.masses.sum() - ref.masses.sum())
        results.append(LevelResult(grid.M, err, tv, drift, balance))

    h = [scenario.grid.x_max / m for m in levels]
    orders = [richardson_order(results[k].error, results[k + 1].error, h[k], h[k + 1], h[-1])
              for k in range(len(levels) - 2)]
    return StudyReport(results, orders)
