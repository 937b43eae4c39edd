"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from growfrag import (EntropySpec, Grid, HybridMeasure, SeparableTestFunction, SolverConfig, conservation_check,
                      dissipation, dissipation_budget, entropy_balance_check, load_scenario, relative_entropy,
                      run_pipeline, simulate, tv_phi_distance, weak_form_residual, weighted_mass)
from growfrag.entropy import monotone_tolerance

from conftest import bump, constant_coeffs, triple_for, variable_coeffs
from test_entropy import naive_dissipation

ROOT = Path(__file__).parent.parent
LOOSE = dict(boundary_mass_limit=1.0)
pytestmark = pytest.mark.slow
HALVING = (1 / (0.5 * 1.3), 1 / (0.5 * 0.7))  # "halves within +-30%" as a coarse/fine ratio band


def report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
    assert ok, detail


def halves(values) -> bool:
    return all(HALVING[0] <= a / b <= HALVING[1] for a, b in zip(values, values[1:]))


def test_criterion_01_constant_eigenvalue(capsys):
    triple_for.cache_clear()
    t0 = time.perf_counter()
    _, tr = triple_for(constant_coeffs(), 800)
    elapsed = time.perf_counter() - t0
    ok = abs(tr.lam - 1.0) <= 1e-3 and elapsed < 30
    report(capsys, 1, ok, f"lambda = {tr.lam:.10f} (|lambda - 1| = {abs(tr.lam - 1):.2e}), {elapsed:.1f} s")


def test_criterion_02_normalisations(capsys):
    worst = 0.0
    for coeffs, M in ((constant_coeffs(), 800), (variable_coeffs(), 400)):
        _, tr = triple_for(coeffs, M)
        worst = max(worst, *tr.normalization_defects())
    report(capsys, 2, worst <= 1e-12, f"max normalisation defect {worst:.2e}")


def test_criterion_03_conservation(capsys):
    c = constant_coeffs()
    grid, tr = triple_for(c, 400)
    cfg = SolverConfig(t_end=10.0, **LOOSE)
    ac = conservation_check(simulate(HybridMeasure.from_density(grid, bump), c, grid, cfg, tr), tr)
    dirac = conservation_check(simulate(HybridMeasure.dirac(grid, 1.0), c, grid, cfg, tr), tr)
    drift_ac = ac.summary["max_relative_drift"]
    drift_dirac = dirac.summary["max_relative_drift"]
    # refinement on the Dirac datum with size-dependent coefficients (first-order atom coupling)
    cv = variable_coeffs()
    drifts = []
    for M in (200, 400, 800):
        g, t = triple_for(cv, M)
        traj = simulate(HybridMeasure.dirac(g, 1.0), cv, g, cfg, t)
        drifts.append(conservation_check(traj, t).summary["max_relative_drift"])
    ok = drift_ac <= 1e-2 and drift_dirac <= 1e-2 and halves(drifts)
    report(capsys, 3, ok, f"drift AC {drift_ac:.2e}, Dirac {drift_dirac:.2e}; refinement "
                          f"{', '.join(f'{d:.2e}' for d in drifts)}")


def test_criterion_04_entropy_balance(capsys):
    c = constant_coeffs()
    defects, consts = [], []
    for M in (100, 200, 400):
        grid, tr = triple_for(c, M)
        n0 = HybridMeasure.from_density(grid, bump)
        traj = simulate(n0, c, grid, SolverConfig(t_end=10.0, output_every=0.05, **LOOSE), tr)
        hs = EntropySpec.pseudo_huber(weighted_mass(n0, tr.weight()))
        d = entropy_balance_check(traj, tr, c, hs).summary["max_defect"]
        defects.append(d)
        consts.append(d / (grid.dx + traj.dt))
    ok = halves(defects) and max(consts) / min(consts) < 1.5
    report(capsys, 4, ok, f"max defects {', '.join(f'{d:.3e}' for d in defects)}; "
                          f"defect/(dx+dt) = {', '.join(f'{k:.3f}' for k in consts)}")


def test_criterion_05_monotone_decay(capsys, tmp_path):
    lines, ok = [], True
    for path in sorted((ROOT / "scenarios").glob("*.json")):
        rep = run_pipeline(load_scenario(path), {"entropy"}, tmp_path / path.stem)
        metrics = rep.stages.get("entropy", {}).get("metrics", {})
        checked = {k: m["monotone"] for k, m in metrics.items() if "monotone" in m}
        ok &= rep.ok and bool(checked) and all(checked.values())
        worst = max((m["max_increase"] for m in metrics.values() if "max_increase" in m), default=math.nan)
        lines.append(f"{path.stem}: {len(checked)} entropies, max increase {worst:.1e}")
    report(capsys, 5, ok, "; ".join(lines))


def test_criterion_06_dissipation_budget(capsys):
    c = constant_coeffs()
    grid, tr = triple_for(c, 400)
    x0 = 1.0
    n0 = HybridMeasure.dirac(grid, x0)
    m0 = weighted_mass(n0, tr.weight())
    hs = EntropySpec.pseudo_huber(m0)
    traj = simulate(n0, c, grid, SolverConfig(t_end=20.0, output_every=0.05), tr)
    integral, bound = dissipation_budget(traj, tr, c, hs)
    expected = float((tr.phi * tr.N).sum() * grid.dx * hs.H(0.0)) + float(tr.weight()(x0))
    ok = integral <= bound + 1e-6 and abs(bound - expected) < 1e-12
    report(capsys, 6, ok, f"int D = {integral:.6f} <= H(0) = {bound:.6f} (recession term phi(x0) = "
                          f"{float(tr.weight()(x0)):.6f})")


def test_criterion_07_long_time(capsys):
    c = constant_coeffs()
    grid, tr = triple_for(c, 400)
    n0 = HybridMeasure.dirac(grid, 1.0)
    m0 = weighted_mass(n0, tr.weight())
    traj = simulate(n0, c, grid, SolverConfig(t_end=40.0, output_every=0.1), tr)
    tv = np.array([tv_phi_distance(mu.scaled(math.exp(-tr.lam * t)), m0 * tr.N, tr.phi) for t, mu in traj.snapshots])
    gaps = np.diff(traj.times)
    tol = monotone_tolerance(tv[0], m0, 1e-8, tr.primal_residual + tr.dual_residual, gaps)
    monotone = bool(np.all(np.diff(tv) <= tol))
    ratio = tv[-1] / tv[0]
    report(capsys, 7, monotone and ratio < 0.05, f"TV_phi monotone={monotone}, TV(40)/TV(0) = {ratio:.2e}")


def test_criterion_08_oracles(capsys):
    c = variable_coeffs()
    grid, tr = triple_for(c, 50)
    r = np.random.default_rng(2024)
    worst_d, worst_tv = 0.0, 0.0
    for _ in range(10):
        mu = HybridMeasure(grid, r.exponential(1, 50), r.uniform(0.05, 9.9, 2), r.exponential(1, 2))
        hs = EntropySpec.pseudo_huber(r.uniform(0, 2), r.uniform(0.1, 2))
        t = r.uniform(0, 2)
        ref = naive_dissipation(mu, tr, c, t, hs)
        for threads in (1, 4):
            worst_d = max(worst_d, abs(dissipation(mu, tr, c, t, hs, threads=threads) - ref))
        m0 = r.uniform(0, 2)
        H = relative_entropy(mu, tr, t, EntropySpec.abs(m0))
        tv = tv_phi_distance(mu.scaled(math.exp(-tr.lam * t)), m0 * tr.N, tr.phi)
        worst_tv = max(worst_tv, abs(H - tv) / max(1.0, tv))
    ok = worst_d <= 1e-12 and worst_tv <= 1e-14
    report(capsys, 8, ok, f"dissipation vs nested loop {worst_d:.1e}; abs entropy vs TV_phi {worst_tv:.1e}")


def test_criterion_09_number_growth(capsys):
    c = constant_coeffs()
    grid = Grid(400, 10.0)
    n0 = HybridMeasure.from_density(grid, bump)
    traj = simulate(n0, c, grid, SolverConfig(t_end=5.0, cfl=0.5, **LOOSE))
    ratio = traj.states[-1].total_variation() / n0.total_variation() / math.exp(5.0)
    report(capsys, 9, abs(ratio - 1) <= 0.02, f"mass(5)/(e^5 mass(0)) = {ratio:.8f}")


def test_criterion_10_weak_form(capsys):
    c = constant_coeffs()
    psi = SeparableTestFunction(4.0, 0.5, 6.0)
    res, consts = [], []
    for M in (100, 200, 400):
        grid = Grid(M, 10.0)
        traj = simulate(HybridMeasure.from_density(grid, bump), c, grid,
                        SolverConfig(t_end=4.0, output_every=0.01, **LOOSE))
        r = weak_form_residual(traj, c, psi)
        res.append(r)
        consts.append(r / (grid.dx + traj.dt))
    ok = halves(res) and max(consts) / min(consts) < 1.5
    report(capsys, 10, ok, f"residuals {', '.join(f'{r:.3e}' for r in res)}; "
                           f"residual/(dx+dt) = {', '.join(f'{k:.3f}' for k in consts)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
