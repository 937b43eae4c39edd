from __future__ import annotations

import numpy as np

from growfrag import DiagnosticSeries, Grid, HybridMeasure, SolverConfig, simulate
from growfrag import io

from conftest import bump, constant_coeffs


def test_measure_csv_round_trip(tmp_path):
    grid = Grid(30, 7.0)
    mu = HybridMeasure.from_density(grid, bump).with_atoms([1.0 / 3.0, 2.5], [0.1, np.pi])
    dens, atoms = io.write_measure_csv(mu, tmp_path / "snap.csv")
    assert atoms.name == "snap_atoms.csv"
    text = dens.read_bytes()
    assert b"\r" not in text and text.startswith(b"x_center,density\n")
    assert io.read_measure_csv(dens, grid) == mu
    inferred = io.read_measure_csv(dens)
    assert inferred.grid.M == 30 and abs(inferred.grid.x_max - 7.0) < 1e-12


def test_measure_json_mirror():
    mu = HybridMeasure.dirac(Grid(5, 1.0), 0.5, 2.0)
    assert io.measure_from_dict(io.measure_to_dict(mu)) == mu


def test_series_csv_full_precision(tmp_path):
    s = DiagnosticSeries([0.0, 0.1, 0.30000000000000004], {"x": [1 / 3, 2 / 3, 1e-300], "ok": [True, False, True]})
    path = io.write_series_csv(s, tmp_path / "s.csv")
    back = io.read_series_csv(path)
    np.testing.assert_array_equal(back.t, s.t)
    np.testing.assert_array_equal(back["x"], s["x"])
    assert back["ok"].tolist() == [True, False, True]
    assert path.read_text().splitlines()[0] == "t,x,ok"


def test_trajectory_round_trip(tmp_path):
    c = constant_coeffs()
    grid = Grid(40, 10.0)
    traj = simulate(HybridMeasure.from_density(grid, bump).with_atoms([1.0], [0.2]), c, grid,
                    SolverConfig(t_end=0.5, boundary_mass_limit=1.0))
    back = io.load_trajectory(io.save_trajectory(traj, tmp_path / "t.json"))
    np.testing.assert_array_equal(back.times, traj.times)
    assert all(a == b for a, b in zip(back.states, traj.states))
    assert back.config == traj.config and back.dt == traj.dt
    np.testing.assert_array_equal(back.diagnostics["tv"], traj.diagnostics["tv"])
    assert np.all(np.isnan(back.diagnostics["conserved_c"]))
