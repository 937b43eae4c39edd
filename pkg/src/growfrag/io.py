"""File formats: measure snapshots (CSV + atom table, or JSON), diagnostic
series (CSV) and whole trajectories (JSON).

CSV files are comma separated with a header row, LF line endings and 17
significant digits, so floats survive a round trip bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .dynamics import SolverConfig, Trajectory
from .errors import DomainError
from .grid import DiagnosticSeries, Grid, HybridMeasure


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _parse(s: str):
    if s in ("true", "false"):
        return s == "true"
    return float(s)


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[_parse(v) for v in row] for row in reader if row]


# --- measures ---------------------------------------------------------------

def atoms_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_atoms{path.suffix}")


def write_measure_csv(mu: HybridMeasure, path: str | Path) -> tuple[Path, Path]:
    """Write ``(x_center, density)`` to ``path`` and ``(position, mass)`` to ``<stem>_atoms.csv``."""
    dens = write_csv(path, ["x_center", "density"], zip(mu.grid.centers, mu.densities))
    atoms = write_csv(atoms_path(path), ["position", "mass"], zip(mu.positions, mu.masses))
    return dens, atoms


def read_measure_csv(path: str | Path, grid: Grid | None = None) -> HybridMeasure:
    """Inverse of :func:`write_measure_csv`.

    Without ``grid`` the grid is inferred from the cell centers; pass the
    original grid when exact equality of grids matters.
    """
    header, rows = read_csv(path)
    if header != ["x_center", "density"]:
        raise DomainError(f"{path}: unexpected header {header}")
    x = np.array([r[0] for r in rows])
    n = np.array([r[1] for r in rows])
    if grid is None:
        if x.size < 2:
            raise DomainError(f"{path}: need at least two cells")
        grid = Grid(x.size, float(x.size * (x[-1] - x[0]) / (x.size - 1)))
    elif grid.M != x.size:
        raise DomainError(f"{path}: {x.size} cells for a grid with M={grid.M}")
    y = w = np.zeros(0)
    ap = atoms_path(path)
    if ap.exists():
        header, rows = read_csv(ap)
        if header != ["position", "mass"]:
            raise DomainError(f"{ap}: unexpected header {header}")
        y = np.array([r[0] for r in rows])
        w = np.array([r[1] for r in rows])
    return HybridMeasure(grid, n, y, w)


def measure_to_dict(mu: HybridMeasure) -> dict[str, Any]:
    return {
        "grid": {"M": mu.grid.M, "x_max": mu.grid.x_max},
        "densities": mu.densities.tolist(),
        "atoms": [{"position": float(y), "mass": float(w)} for y, w in zip(mu.positions, mu.masses)],
    }


def measure_from_dict(d: dict[str, Any]) -> HybridMeasure:
    grid = Grid(d["grid"]["M"], d["grid"]["x_max"])
    atoms = d.get("atoms", [])
    return HybridMeasure(grid, d["densities"], [a["position"] for a in atoms], [a["mass"] for a in atoms])


# --- series -----------------------------------------------------------------

def write_series_csv(series: DiagnosticSeries, path: str | Path) -> Path:
    return write_csv(path, series.names, series.as_rows())


def read_series_csv(path: str | Path) -> DiagnosticSeries:
    header, rows = read_csv(path)
    if not header or header[0] != "t":
        raise DomainError(f"{path}: first column must be 't'")
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    return DiagnosticSeries.from_mapping({h: np.array(c) for h, c in zip(header, cols)})


def _series_to_dict(s: DiagnosticSeries) -> dict[str, Any]:
    return {"columns": {n: s[n].tolist() for n in s.names}, "summary": s.summary}


def _series_from_dict(d: dict[str, Any]) -> DiagnosticSeries:
    return DiagnosticSeries.from_mapping(d["columns"], d.get("summary"))


# --- trajectories -----------------------------------------------------------

def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def trajectory_to_dict(traj: Trajectory) -> dict[str, Any]:
    diag = _series_to_dict(traj.diagnostics)
    diag["columns"] = {k: [_jsonable(v) for v in col] for k, col in diag["columns"].items()}
    return {
        "times": traj.times.tolist(),
        "dt": traj.dt,
        "config": asdict(traj.config) if traj.config else None,
        "meta": traj.meta,
        "states": [measure_to_dict(mu) for mu in traj.states],
        "diagnostics": diag,
    }


def trajectory_from_dict(d: dict[str, Any]) -> Trajectory:
    diag = d["diagnostics"]
    diag["columns"] = {k: [math.nan if v is None else v for v in col] for k, col in diag["columns"].items()}
    return Trajectory(
        np.array(d["times"], dtype=float),
        [measure_from_dict(s) for s in d["states"]],
        _series_from_dict(diag),
        float(d["dt"]),
        SolverConfig(**d["config"]) if d.get("config") else None,
        dict(d.get("meta", {})),
    )


def save_trajectory(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(trajectory_to_dict(traj)), encoding="utf-8")
    return path


def load_trajectory(path: str | Path) -> Trajectory:
    return trajectory_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
