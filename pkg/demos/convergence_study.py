"""Grid refinement study for the default scenario.

Runs the default scenario at four resolutions and measures, for each coarse
level, the L1 distance of the final rescaled density to the finest solution.
Successive error ratios give the observed order of accuracy, which should be
close to 1 for the upwind scheme.

Run: ``python3 demos/convergence_study.py``
"""
from __future__ import annotations

from pathlib import Path

from growfrag import convergence_study, load_scenario

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "default.json"


def main() -> None:
    sc = load_scenario(SCENARIO)
    levels = sc.study_levels()
    report = convergence_study(sc, levels)
    print(f"Scenario {sc.name}, levels {list(levels)}, t_end = {sc.solver.t_end}\n")
    print(f"{'M':>5} {'L1 error':>11} {'TV_phi final':>13} {'drift':>10} {'balance defect':>15}")
    for lv in report.levels:
        print(f"{lv.M:5d} {lv.error:11.3e} {lv.tv_phi_final:13.3e} {lv.conservation_drift:10.2e} "
              f"{lv.balance_defect:15.3e}")
    print(f"\nPairwise orders: {', '.join(f'{p:.2f}' for p in report.orders)}")
    print(f"Observed order: {report.observed_order:.2f}")


if __name__ == "__main__":
    main()
