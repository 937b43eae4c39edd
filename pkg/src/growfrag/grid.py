"""Uniform size grid, hybrid (density + Dirac atoms) measures and the
weighted total-variation geometry used to measure convergence.

A :class:`HybridMeasure` stores per-cell average densities together with a
list of point masses.  All density integrals use the midpoint rule, which is
exact for affine integrands.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform partition of ``[0, x_max]`` into ``M`` cells."""

    M: int
    x_max: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise DomainError(f"grid needs at least 2 cells, got M={self.M}")
        if not np.isfinite(self.x_max) or self.x_max <= 0:
            raise DomainError(f"x_max must be positive and finite, got {self.x_max}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def dx(self) -> float:
        return self.x_max / self.M

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.M) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        """All ``M + 1`` cell faces, from 0 to ``x_max``."""
        return np.arange(self.M + 1) * self.dx

    def cell_index(self, y) -> np.ndarray:
        """Index of the cell containing each position (``x_max`` maps to the last cell)."""
        idx = np.floor(np.asarray(y, dtype=float) / self.dx).astype(int)
        return np.clip(idx, 0, self.M - 1)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.M * factor, self.x_max)


@dataclass(frozen=True, eq=False)
class HybridMeasure:
    """Non-negative measure = cell densities + Dirac atoms.

    Parameters
    ----------
    grid : Grid
        Support grid of the absolutely continuous part.
    densities : array_like, shape (M,)
        Cell-average densities (mass per unit size).
    positions, masses : array_like
        Atom locations in ``(0, x_max]`` and their (positive) masses.
    """

    grid: Grid
    densities: np.ndarray
    positions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = np.array(self.densities, dtype=float).reshape(-1)
        y = np.array(self.positions, dtype=float).reshape(-1)
        w = np.array(self.masses, dtype=float).reshape(-1)
        if n.shape != (self.grid.M,):
            raise DomainError(f"expected {self.grid.M} densities, got {n.size}")
        if y.shape != w.shape:
            raise DomainError("atom positions and masses differ in length")
        if not np.all(np.isfinite(n)) or np.any(n < 0):
            raise DomainError("densities must be finite and non-negative")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DomainError("atom masses must be finite and non-negative")
        if np.any(y <= 0) or np.any(y > self.grid.x_max):
            raise DomainError("atom positions must lie in (0, x_max]")
        for arr in (n, y, w):
            arr.flags.writeable = False
        object.__setattr__(self, "densities", n)
        object.__setattr__(self, "positions", y)
        object.__setattr__(self, "masses", w)

    @classmethod
    def zero(cls, grid: Grid) -> "HybridMeasure":
        return cls(grid, np.zeros(grid.M))

    @classmethod
    def from_density(cls, grid: Grid, density) -> "HybridMeasure":
        """Sample a callable at cell centers, or wrap an array of cell values."""
        values = density(grid.centers) if callable(density) else density
        return cls(grid, np.broadcast_to(np.asarray(values, dtype=float), (grid.M,)))

    @classmethod
    def dirac(cls, grid: Grid, position: float, mass: float = 1.0) -> "HybridMeasure":
        return cls(grid, np.zeros(grid.M), [position], [mass])

    @property
    def n_atoms(self) -> int:
        return self.positions.size

    def total_variation(self) -> float:
        return float(self.densities.sum() * self.grid.dx + self.masses.sum())

    def scaled(self, factor: float) -> "HybridMeasure":
        return HybridMeasure(self.grid, self.densities * factor, self.positions, self.masses * factor)

    def with_atoms(self, positions: Sequence[float], masses: Sequence[float]) -> "HybridMeasure":
        return HybridMeasure(
            self.grid,
            self.densities,
            np.concatenate([self.positions, np.asarray(positions, dtype=float)]),
            np.concatenate([self.masses, np.asarray(masses, dtype=float)]),
        )

    def __eq__(self, other):
        if not isinstance(other, HybridMeasure):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.densities, other.densities)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.masses, other.masses)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PhiWeight:
    """A non-negative weight known only at cell centers.

    Between centers the weight is interpolated linearly; in the two half
    cells next to the domain ends a polynomial of degree ``degree`` fitted to
    the nearest ``degree + 1`` samples is used.  Negative extrapolated values
    are clipped to zero.
    """

    grid: Grid
    samples: np.ndarray
    degree: int = 1

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1)
        if s.shape != (self.grid.M,):
            raise DomainError(f"expected {self.grid.M} weight samples, got {s.size}")
        if self.degree < 0 or self.degree + 1 > self.grid.M:
            raise DomainError(f"extrapolation degree {self.degree} not supported on M={self.grid.M}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = self.grid.centers
        out = np.interp(y, x, self.samples)
        k = self.degree + 1
        lo = y < x[0]
        if np.any(lo):
            c = np.polynomial.polynomial.polyfit(x[:k], self.samples[:k], self.degree)
            out = np.where(lo, np.polynomial.polynomial.polyval(y, c), out)
        hi = y > x[-1]
        if np.any(hi):
            c = np.polynomial.polynomial.polyfit(x[-k:], self.samples[-k:], self.degree)
            out = np.where(hi, np.polynomial.polynomial.polyval(y, c), out)
        return np.maximum(out, 0.0)


def _as_weight(grid: Grid, w) -> Callable[[np.ndarray], np.ndarray]:
    if callable(w):
        return w
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0:
        return lambda y: np.full(np.shape(y), float(arr))
    return PhiWeight(grid, arr)


def weighted_mass(mu: HybridMeasure, w=1.0) -> float:
    """Integral of a weight against a hybrid measure.

    ``w`` may be a callable, a scalar, or an array of samples at cell centers
    (evaluated at atom positions through :class:`PhiWeight`).
    """
    weight = _as_weight(mu.grid, w)
    dens = np.asarray(weight(mu.grid.centers), dtype=float) * mu.densities
    atoms = np.asarray(weight(mu.positions), dtype=float) * mu.masses if mu.n_atoms else np.zeros(0)
    return float(dens.sum() * mu.grid.dx + atoms.sum())


def tv_phi_distance(mu: HybridMeasure, ref_density, phi) -> float:
    """phi-weighted total variation distance to an absolutely continuous reference.

    Atoms are mutually singular with the reference, so they enter with their
    full weighted mass.
    """
    weight = _as_weight(mu.grid, phi)
    ref = np.broadcast_to(np.asarray(ref_density, dtype=float), (mu.grid.M,))
    ac = np.asarray(weight(mu.grid.centers), dtype=float) * np.abs(mu.densities - ref)
    sing = np.asarray(weight(mu.positions), dtype=float) * mu.masses if mu.n_atoms else np.zeros(0)
    return float(ac.sum() * mu.grid.dx + sing.sum())


def absorb_atom(mu: HybridMeasure, j: int) -> HybridMeasure:
    """Move atom ``j`` into the density of the cell that contains it."""
    if not -mu.n_atoms <= j < mu.n_atoms:
        raise IndexError(f"atom index {j} out of range for {mu.n_atoms} atoms")
    j = j % mu.n_atoms
    dens = mu.densities.copy()
    dens[mu.grid.cell_index(mu.positions[j])] += mu.masses[j] / mu.grid.dx
    keep = np.arange(mu.n_atoms) != j
    return HybridMeasure(mu.grid, dens, mu.positions[keep], mu.masses[keep])


@dataclass
class DiagnosticSeries:
    """Named scalar series sharing one strictly increasing time axis.

    ``summary`` carries scalar results derived from the series (maximum
    drift, pass flags, ...).
    """

    t: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    summary: dict[str, float | bool] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise DomainError("time stamps must be strictly increasing")
        for name, col in list(self.columns.items()):
            col = np.asarray(col)
            if col.shape != self.t.shape:
                raise DomainError(f"column {name!r} has {col.size} values for {self.t.size} times")
            self.columns[name] = col

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        return self.columns[name]

    def __len__(self) -> int:
        return self.t.size

    @property
    def names(self) -> list[str]:
        return ["t", *self.columns]

    def as_rows(self) -> list[tuple]:
        cols = [self.t, *self.columns.values()]
        return list(zip(*(c.tolist() for c in cols)))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Sequence], summary=None) -> "DiagnosticSeries":
        data = dict(data)
        t = data.pop("t")
        return cls(np.asarray(t, dtype=float), {k: np.asarray(v) for k, v in data.items()}, dict(summary or {}))
