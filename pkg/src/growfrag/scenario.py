"""Scenario documents: strict JSON parsing with path-qualified errors.

A scenario has the blocks ``grid``, ``coefficients`` and ``initial``
(required) and ``solver``, ``entropy``, ``output`` and ``study``
(optional, defaulted).  Example::

    {
      "grid": {"M": 400, "x_max": 10.0},
      "coefficients": {
        "growth": {"kind": "constant", "value": 1.0},
        "division": {"kind": "power", "coeff": 1.0, "exponent": 0.0},
        "kernel": {"kind": "uniform"}
      },
      "initial": {"density": {"kind": "gaussian", "amplitude": 1, "center": 2, "width": 0.5},
                  "atoms": [{"position": 1.0, "mass": 0.5}]},
      "entropy": [{"family": "pseudo_huber", "center": "auto_center"}]
    }

``initial.density`` may also be ``{"kind": "primal_eigenfunction", "scale": s}``,
which starts from ``s N`` once the eigen stage has run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .coefficients import _PROFILE_KEYS, CoefficientSet, KernelSpec, Profile
from .dynamics import SolverConfig
from .entropy import AUTO_CENTER, FAMILIES, EntropySpec
from .errors import GrowFragError, ScenarioError
from .grid import Grid, HybridMeasure

DEFAULT_TOLERANCES = {
    "normalization": 1e-12,
    "conservation_drift": 1e-2,
    "entropy_monotone_rel": 1e-8,
    "dissipation_budget": 1e-6,
    "validation": 1e-10,
}

EIGEN_INITIAL = "primal_eigenfunction"


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ScenarioError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ScenarioError(f"non-standard JSON constant {name}")


def _fields(d: Any, path: str, required: tuple[str, ...] = (), optional: tuple[str, ...] = ()) -> dict:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{path}: expected an object, got {type(d).__name__}")
    for k in required:
        if k not in d:
            raise ScenarioError(f"{_join(path, k)}: required key missing")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ScenarioError(f"{_join(path, unknown[0])}: unknown key")
    return dict(d)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _number(v: Any, path: str, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"{path}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(f"{path}: must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ScenarioError(f"{path}: must be non-negative, got {v!r}")
    return float(v)


def _integer(v: Any, path: str, minimum: int) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ScenarioError(f"{path}: expected an integer >= {minimum}, got {v!r}")
    return v


def _profile(d: Any, path: str) -> Profile:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise ScenarioError(f"{path}: expected an object with a 'kind'")
    kind = d["kind"]
    if kind not in _PROFILE_KEYS:
        raise ScenarioError(f"{path}.kind: unknown profile kind {kind!r}")
    keys = _PROFILE_KEYS[kind]
    d = _fields(d, path, ("kind", *keys))
    for k in keys:
        v = d[k]
        if isinstance(v, list):
            for i, item in enumerate(v):
                _number(item, f"{path}.{k}[{i}]")
        else:
            _number(v, f"{path}.{k}")
    try:
        return Profile(kind, tuple((k, d[k]) for k in keys))
    except GrowFragError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _kernel(d: Any, path: str) -> KernelSpec:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise ScenarioError(f"{path}: expected an object with a 'kind'")
    kind = d["kind"]
    if kind == "self_similar":
        d = _fields(d, path, ("kind", "profile"))
        return KernelSpec.self_similar(_profile(d["profile"], f"{path}.profile"))
    if kind in ("uniform", "mitosis_atomic"):
        _fields(d, path, ("kind",))
        return KernelSpec(kind)
    raise ScenarioError(f"{path}.kind: unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class InitialSpec:
    """Initial datum: optional density (profile or scaled eigenfunction) plus atoms."""

    density: Profile | None = None
    eigen_scale: float | None = None
    atoms: tuple[tuple[float, float], ...] = ()

    @property
    def needs_eigen(self) -> bool:
        return self.eigen_scale is not None

    def build(self, grid: Grid, N: np.ndarray | None = None) -> HybridMeasure:
        if self.needs_eigen:
            if N is None:
                raise ScenarioError("initial.density: primal_eigenfunction needs the eigen stage")
            dens = self.eigen_scale * np.asarray(N)
        elif self.density is not None:
            dens = np.maximum(self.density(grid.centers), 0.0)
        else:
            dens = np.zeros(grid.M)
        pos = [y for y, _ in self.atoms]
        mass = [w for _, w in self.atoms]
        return HybridMeasure(grid, dens, pos, mass)


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    coefficients: CoefficientSet
    initial: InitialSpec
    solver: SolverConfig
    entropy: tuple[EntropySpec, ...] = ()
    eigen_tol: float = 1e-10
    eigen_max_iter: int = 500_000
    out_dir: str = "out"
    tolerances: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    refinements: tuple[int, ...] = ()
    name: str = "scenario"

    def with_grid(self, M: int) -> "Scenario":
        return replace(self, grid=Grid(M, self.grid.x_max))

    def study_levels(self) -> tuple[int, ...]:
        if self.refinements:
            return self.refinements
        M = self.grid.M
        return (M // 4, M // 2, M, 2 * M)


def _initial(d: Any, path: str, x_max: float) -> InitialSpec:
    d = _fields(d, path, (), ("density", "atoms"))
    density = scale = None
    if "density" in d:
        dd = d["density"]
        if isinstance(dd, Mapping) and dd.get("kind") == EIGEN_INITIAL:
            dd = _fields(dd, f"{path}.density", ("kind",), ("scale",))
            scale = _number(dd.get("scale", 1.0), f"{path}.density.scale", nonneg=True)
        else:
            density = _profile(dd, f"{path}.density")
            vals = density(Grid(64, x_max).centers)
            if np.any(vals < 0):
                raise ScenarioError(f"{path}.density: initial density must be non-negative")
    atoms = []
    raw = d.get("atoms", [])
    if not isinstance(raw, list):
        raise ScenarioError(f"{path}.atoms: expected a list")
    for i, a in enumerate(raw):
        p = f"{path}.atoms[{i}]"
        a = _fields(a, p, ("position", "mass"))
        y = _number(a["position"], f"{p}.position")
        if not 0 < y <= x_max:
            raise ScenarioError(f"{p}.position: must lie in (0, x_max], got {y}")
        w = _number(a["mass"], f"{p}.mass")
        if w < 0:
            raise ScenarioError(f"{p}.mass: must be non-negative, got {w}")
        atoms.append((y, w))
    return InitialSpec(density, scale, tuple(atoms))


def _entropy_list(d: Any, path: str) -> tuple[EntropySpec, ...]:
    if not isinstance(d, list):
        raise ScenarioError(f"{path}: expected a list")
    out = []
    for i, e in enumerate(d):
        p = f"{path}[{i}]"
        e = _fields(e, p, ("family",), ("center", "delta"))
        if e["family"] not in FAMILIES:
            raise ScenarioError(f"{p}.family: unknown entropy family {e['family']!r}")
        c = e.get("center", AUTO_CENTER)
        if not (isinstance(c, str) and c == AUTO_CENTER):
            c = _number(c, f"{p}.center")
        delta = _number(e.get("delta", 1.0), f"{p}.delta", positive=True)
        out.append(EntropySpec(e["family"], c, delta))
    return tuple(out)


def parse_scenario(text: str | bytes, name: str = "scenario") -> Scenario:
    """Parse and validate a scenario document; defaults are filled in.

    Raises
    ------
    ScenarioError
        With a dotted path (e.g. ``initial.atoms[0].mass``) naming the offending entry.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc}") from exc
    doc = _fields(doc, "", ("grid", "coefficients", "initial"),
                  ("name", "description", "solver", "entropy", "output", "study"))
    if "name" in doc:
        if not isinstance(doc["name"], str):
            raise ScenarioError("name: expected a string")
        name = doc["name"]

    g = _fields(doc["grid"], "grid", ("M", "x_max"))
    grid = Grid(_integer(g["M"], "grid.M", 2), _number(g["x_max"], "grid.x_max", positive=True))

    c = _fields(doc["coefficients"], "coefficients", ("growth", "division", "kernel"),
                ("g_floor", "allow_non_conforming"))
    g_floor = None
    if c.get("g_floor") is not None:
        g_floor = _number(c["g_floor"], "coefficients.g_floor", positive=True)
    allow = c.get("allow_non_conforming", False)
    if not isinstance(allow, bool):
        raise ScenarioError("coefficients.allow_non_conforming: expected true or false")
    coeffs = CoefficientSet(
        _profile(c["growth"], "coefficients.growth"),
        _profile(c["division"], "coefficients.division"),
        _kernel(c["kernel"], "coefficients.kernel"),
        grid.x_max,
        g_floor,
        allow,
    )

    initial = _initial(doc["initial"], "initial", grid.x_max)

    s = _fields(doc.get("solver", {}), "solver", (),
                ("cfl", "t_end", "output_every", "atom_absorb_threshold", "boundary_mass_limit",
                 "eigen_tol", "eigen_max_iter"))
    cfl = _number(s.get("cfl", 0.5), "solver.cfl", positive=True)
    if cfl > 1:
        raise ScenarioError(f"solver.cfl: must lie in (0, 1], got {cfl}")
    every = s.get("output_every")
    solver = SolverConfig(
        t_end=_number(s.get("t_end", 10.0), "solver.t_end", positive=True),
        cfl=cfl,
        output_every=None if every is None else _number(every, "solver.output_every", positive=True),
        atom_absorb_threshold=_number(s.get("atom_absorb_threshold", 1e-12), "solver.atom_absorb_threshold",
                                      nonneg=True),
        boundary_mass_limit=_number(s.get("boundary_mass_limit", 1e-6), "solver.boundary_mass_limit",
                                    nonneg=True),
    )
    eigen_tol = _number(s.get("eigen_tol", 1e-10), "solver.eigen_tol", positive=True)
    eigen_max_iter = _integer(s.get("eigen_max_iter", 500_000), "solver.eigen_max_iter", 1)

    entropy = _entropy_list(doc.get("entropy", [{"family": "pseudo_huber", "center": AUTO_CENTER}]), "entropy")

    o = _fields(doc.get("output", {}), "output", (), ("dir", "tolerances"))
    out_dir = o.get("dir", "out")
    if not isinstance(out_dir, str):
        raise ScenarioError("output.dir: expected a string")
    tol = dict(DEFAULT_TOLERANCES)
    t = _fields(o.get("tolerances", {}), "output.tolerances", (), tuple(DEFAULT_TOLERANCES))
    for k, v in t.items():
        tol[k] = _number(v, f"output.tolerances.{k}", nonneg=True)

    st = _fields(doc.get("study", {}), "study", (), ("refinements",))
    refinements = st.get("refinements", [])
    if not isinstance(refinements, list):
        raise ScenarioError("study.refinements: expected a list")
    refinements = tuple(_integer(m, f"study.refinements[{i}]", 2) for i, m in enumerate(refinements))

    return Scenario(grid, coeffs, initial, solver, entropy, eigen_tol, eigen_max_iter, out_dir, tol,
                    refinements, name)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_bytes(), name=path.stem)
