"""Time integration of hybrid (density + atom) measures.

One step of size ``dt`` does, in order:

1. density: ``n <- exp(dt A) n`` with ``A`` the upwind/fragmentation
   generator of :mod:`growfrag.eigen` (transport, loss and gain together);
2. atoms divide: their fragmentation output ``dt K[:, y] B(y) w`` is
   deposited into the density, using the pre-step position and mass;
3. atoms move by one RK4 step of ``dy/dt = g(y)`` and decay as
   ``w <- w exp(-B(y) dt)``;
4. atoms that left ``[0, x_max]`` are dropped (outflow), atoms lighter
   than the absorption threshold are projected onto the grid.

Atoms stay atoms under transport, so the singular part of the measure is
never smeared; only fragmentation output is absolutely continuous.

Because the density propagator is the exact semigroup of ``A``, the
discrete eigentriple of ``A`` is exactly invariant under the density update.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy import linalg

from .coefficients import CoefficientSet, kernel_matrix
from .eigen import EigenTriple, GeneratorMatrix, build_generator
from .errors import BoundaryMassError, CFLError, DomainError, SchemeError
from .grid import DiagnosticSeries, Grid, HybridMeasure, weighted_mass

logger = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-14
BOUNDARY_ZONE = 0.9


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    ``output_every`` defaults to ``t_end / 200``.  ``atom_absorb_threshold``
    is relative to the initial total variation; ``boundary_mass_limit`` is the
    largest tolerated fraction of mass beyond ``0.9 x_max``.
    """

    t_end: float
    cfl: float = 0.5
    output_every: float | None = None
    atom_absorb_threshold: float = 1e-12
    boundary_mass_limit: float = 1e-6

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise DomainError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0:
            raise DomainError(f"t_end must be positive, got {self.t_end}")
        if self.output_every is not None and not self.output_every > 0:
            raise DomainError("output_every must be positive")
        if self.atom_absorb_threshold < 0 or self.boundary_mass_limit < 0:
            raise DomainError("thresholds must be non-negative")

    @property
    def output_interval(self) -> float:
        return min(self.output_every or self.t_end / 200.0, self.t_end)


def max_stable_dt(coeffs: CoefficientSet, grid: Grid, cfl: float = 1.0) -> float:
    """``cfl * min(dx / max g, 1 / (3 max B))``."""
    g_max = float(np.max(coeffs.g(grid.faces)))
    B_max = float(np.max(coeffs.B(grid.faces)))
    limit = grid.dx / g_max
    if B_max > 0:
        limit = min(limit, 1.0 / (3.0 * B_max))
    return cfl * limit


class Stepper:
    """Precomputed one-step map for fixed ``(coeffs, grid, dt)``."""

    def __init__(self, coeffs: CoefficientSet, grid: Grid, dt: float, generator: GeneratorMatrix | None = None):
        self.coeffs = coeffs
        self.grid = grid
        self.dt = float(dt)
        self.generator = generator if generator is not None else build_generator(coeffs, grid)
        self.kernel = self.generator.kernel
        S = linalg.expm(self.dt * self.generator.matrix)
        # exp of a Metzler matrix is non-negative; negative entries are roundoff
        if S.min() < -1e-12 * S.max():
            raise SchemeError(f"propagator has a negative entry {S.min():.3e}")
        self.propagator = np.maximum(S, 0.0)

    def advance(self, state: HybridMeasure, absorb_below: float = 0.0) -> tuple[HybridMeasure, float]:
        """One step; returns the new state and the atom mass that left the domain."""
        if state.grid != self.grid:
            raise DomainError("state lives on a different grid")
        dt, coeffs = self.dt, self.coeffs
        n = self.propagator @ state.densities
        y, w = state.positions, state.masses
        outflow = 0.0
        if y.size:
            By = coeffs.B(y)
            n += self.kernel.columns_at(y) @ (dt * By * w)
            g = coeffs.g
            k1 = g(y)
            k2 = g(y + 0.5 * dt * k1)
            k3 = g(y + 0.5 * dt * k2)
            k4 = g(y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            w = w * np.exp(-By * dt)
            gone = y > self.grid.x_max
            outflow = float(w[gone].sum())
            y, w = y[~gone], w[~gone]
        if n.min() < -NEGATIVE_TOL * max(1.0, float(np.abs(n).max())):
            raise SchemeError(f"negative density {n.min():.3e} after step")
        n = np.maximum(n, 0.0)
        light = w < absorb_below
        if np.any(light):
            np.add.at(n, self.grid.cell_index(y[light]), w[light] / self.grid.dx)
            y, w = y[~light], w[~light]
        return HybridMeasure(self.grid, n, y, w), outflow


@functools.lru_cache(maxsize=8)
def _cached_stepper(coeffs: CoefficientSet, grid: Grid, dt: float) -> Stepper:
    return Stepper(coeffs, grid, dt)


def check_cfl(coeffs: CoefficientSet, grid: Grid, dt: float, cfl: float = 1.0) -> None:
    limit = max_stable_dt(coeffs, grid, cfl)
    if dt <= 0 or dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt:g} violates the stability bound {limit:g} (cfl={cfl:g})")


def step(state: HybridMeasure, coeffs: CoefficientSet, grid: Grid, dt: float, cfl: float = 1.0,
         absorb_below: float = 0.0) -> HybridMeasure:
    """Advance ``state`` by one time step ``dt`` (see the module docstring).

    Raises
    ------
    CFLError
        If ``dt`` exceeds ``cfl * dx / max g`` or ``cfl / (3 max B)``.
    """
    check_cfl(coeffs, grid, dt, cfl)
    return _cached_stepper(coeffs, grid, float(dt)).advance(state, absorb_below)[0]


def boundary_fraction(mu: HybridMeasure) -> float:
    """Fraction of the total variation carried beyond ``0.9 x_max``."""
    grid = mu.grid
    cut = BOUNDARY_ZONE * grid.x_max
    far = mu.densities[grid.centers > cut].sum() * grid.dx + mu.masses[mu.positions > cut].sum()
    tv = mu.total_variation()
    return float(far / tv) if tv > 0 else 0.0


@dataclass
class Trajectory:
    """Snapshots ``(t_k, mu_k)`` plus per-snapshot diagnostics."""

    times: np.ndarray
    states: list[HybridMeasure]
    diagnostics: DiagnosticSeries
    dt: float
    config: SolverConfig | None = None
    meta: dict = field(default_factory=dict)

    @property
    def snapshots(self) -> list[tuple[float, HybridMeasure]]:
        return list(zip(self.times.tolist(), self.states))

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    def __len__(self) -> int:
        return len(self.states)


def _diagnostic_row(mu: HybridMeasure, t: float, triple: EigenTriple | None) -> dict[str, float]:
    row = {"tv": mu.total_variation(), "boundary_fraction": boundary_fraction(mu), "n_atoms": float(mu.n_atoms)}
    if triple is not None:
        wm = weighted_mass(mu, triple.weight())
        row["weighted_mass_phi"] = wm
        row["conserved_c"] = wm * np.exp(-triple.lam * t)
    else:
        row["weighted_mass_phi"] = row["conserved_c"] = float("nan")
    return row


def _build_series(times, rows) -> DiagnosticSeries:
    names = ["tv", "weighted_mass_phi", "conserved_c", "boundary_fraction", "n_atoms"]
    return DiagnosticSeries(np.asarray(times), {k: np.array([r[k] for r in rows]) for k in names})


def simulate(n0: HybridMeasure, coeffs: CoefficientSet, grid: Grid, config: SolverConfig,
             triple: EigenTriple | None = None) -> Trajectory:
    """Integrate from ``t = 0`` to ``config.t_end``.

    The step is the largest CFL-admissible step that divides the output
    interval evenly, so snapshots fall exactly on multiples of
    ``output_every`` (plus ``t_end``).  When ``triple`` is given, the
    diagnostics include the phi-weighted mass and ``c(t) = e^{-lam t} int phi dn``.

    Raises
    ------
    BoundaryMassError
        When the mass fraction beyond ``0.9 x_max`` exceeds
        ``config.boundary_mass_limit``; the partial trajectory is attached.
    """
    if n0.grid != grid:
        raise DomainError("initial measure lives on a different grid")
    dt_max = max_stable_dt(coeffs, grid, config.cfl)
    h = config.output_interval
    n_out = int(np.ceil(config.t_end / h - 1e-9))
    out_times = np.minimum(np.arange(n_out + 1) * h, config.t_end)
    absorb_below = config.atom_absorb_threshold * n0.total_variation()

    generator = build_generator(coeffs, grid)
    steppers: dict[float, Stepper] = {}

    def stepper_for(interval: float) -> tuple[Stepper, int]:
        k = int(np.ceil(interval / dt_max - 1e-9))
        dt = interval / k
        if dt not in steppers:
            steppers[dt] = Stepper(coeffs, grid, dt, generator)
        return steppers[dt], k

    state = n0
    times, states, rows = [0.0], [n0], [_diagnostic_row(n0, 0.0, triple)]
    outflow = 0.0
    dt_used = None

    def abort(t, frac):
        traj = Trajectory(np.array(times), states, _build_series(times, rows), dt_used or 0.0, config)
        raise BoundaryMassError(
            f"boundary mass fraction {frac:.3e} exceeds limit {config.boundary_mass_limit:.3e} at t={t:g}",
            t=t, fraction=frac, trajectory=traj,
        )

    frac0 = boundary_fraction(n0)
    if frac0 > config.boundary_mass_limit:
        abort(0.0, frac0)

    t = 0.0
    for k in range(1, n_out + 1):
        stp, n_steps = stepper_for(out_times[k] - out_times[k - 1])
        dt_used = stp.dt if dt_used is None else dt_used
        for s in range(n_steps):
            state, gone = stp.advance(state, absorb_below)
            outflow += gone
            t = out_times[k - 1] + (s + 1) * stp.dt
            frac = boundary_fraction(state)
            if frac > config.boundary_mass_limit:
                abort(t, frac)
        t = float(out_times[k])
        times.append(t)
        states.append(state)
        rows.append(_diagnostic_row(state, t, triple))

    logger.info("simulated to t=%g with dt=%g (%d snapshots)", t, dt_used, len(states))
    return Trajectory(np.array(times), states, _build_series(times, rows), dt_used, config,
                      {"atom_outflow": outflow})


def conservation_check(traj: Trajectory, triple: EigenTriple) -> DiagnosticSeries:
    """Series ``c(t) = e^{-lam t} int phi dn(t)`` and its maximal relative drift."""
    w = triple.weight()
    c = np.array([weighted_mass(mu, w) * np.exp(-triple.lam * t) for t, mu in traj.snapshots])
    c0 = c[0]
    drift = np.abs(c - c0) / c0 if c0 != 0 else np.abs(c - c0)
    return DiagnosticSeries(traj.times, {"conserved_c": c, "relative_drift": drift},
                            {"c0": float(c0), "max_relative_drift": float(drift.max())})


# ----------------------------------------------------------------------------
# weak formulation

class TestFunction(Protocol):
    def value(self, t: float, x: np.ndarray) -> np.ndarray: ...
    def dt(self, t: float, x: np.ndarray) -> np.ndarray: ...
    def dx(self, t: float, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SeparableTestFunction:
    """``psi(t, x) = cos^2(pi t / 2T) * sin^2(pi (x - a) / (b - a))`` on ``[0, T] x [a, b]``, zero elsewhere.

    The factors are C^1 with vanishing derivatives at the support ends.
    """

    T: float
    a: float
    b: float

    __test__ = False  # not a pytest class

    def _time(self, t):
        inside = t < self.T
        s = np.pi * t / (2 * self.T)
        return (np.cos(s) ** 2 if inside else 0.0), (-np.pi / (2 * self.T) * np.sin(2 * s) if inside else 0.0)

    def _space(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.b)
        L = self.b - self.a
        s = np.pi * (x - self.a) / L
        return np.where(inside, np.sin(s) ** 2, 0.0), np.where(inside, np.pi / L * np.sin(2 * s), 0.0)

    def value(self, t, x):
        return self._time(t)[0] * self._space(x)[0]

    def dt(self, t, x):
        return self._time(t)[1] * self._space(x)[0]

    def dx(self, t, x):
        return self._time(t)[0] * self._space(x)[1]


class ZeroTestFunction:
    __test__ = False

    def value(self, t, x):
        return np.zeros(np.shape(x))

    dt = dx = value


def _trapezoid(y: np.ndarray, t: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t))) if t.size > 1 else 0.0


def weak_form_residual(traj: Trajectory, coeffs: CoefficientSet, psi: TestFunction) -> float:
    """Absolute defect of the weak formulation for one test function.

    Evaluates ``-int int (psi_t + g psi_x) dmu_t dt + int int psi B dmu_t dt
    - int int psi(t, x) int k(x, y) B(y) dmu_t(y) dx dt - int psi(0, x) dn0(x)``
    with trapezoidal quadrature over the snapshots.  The gain integral uses
    the same discrete kernel as the stepper.

    Raises
    ------
    DomainError
        If ``psi`` does not vanish at ``t = t_end`` or at ``x = x_max``.
    """
    grid = traj.grid
    x, dx = grid.centers, grid.dx
    t_end = float(traj.times[-1])
    scale = max(float(np.max(np.abs(psi.value(t, x)))) for t in traj.times) or 1.0
    edge = np.concatenate([np.abs(psi.value(t_end, x)), [abs(float(psi.value(t, np.array([grid.x_max]))[0])) for t in traj.times]])
    if edge.max() > 1e-12 * scale:
        raise DomainError("test function must vanish at t = t_end and at x = x_max")

    K = kernel_matrix(coeffs, grid)
    gx, Bx = coeffs.g(x), coeffs.B(x)
    integrand = np.empty(len(traj))
    for k, (t, mu) in enumerate(traj.snapshots):
        psi_x = psi.value(t, x)
        lhs_dens = ((-(psi.dt(t, x) + gx * psi.dx(t, x)) + psi_x * Bx) * mu.densities).sum() * dx
        gain = psi_x @ (K.matrix @ (Bx * mu.densities * dx)) * dx
        lhs_atoms = 0.0
        if mu.n_atoms:
            y, w = mu.positions, mu.masses
            By = coeffs.B(y)
            lhs_atoms = float(((-(psi.dt(t, y) + coeffs.g(y) * psi.dx(t, y)) + psi.value(t, y) * By) * w).sum())
            gain += psi_x @ (K.columns_at(y) @ (By * w)) * dx
        integrand[k] = lhs_dens + lhs_atoms - gain
    mu0 = traj.states[0]
    initial = weighted_mass(mu0, lambda z: psi.value(0.0, z))
    return abs(_trapezoid(integrand, traj.times) - initial)
