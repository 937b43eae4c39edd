"""Discrete generator of the growth-fragmentation semigroup and its Perron
eigentriple ``(lambda, N, phi)``.

The generator uses first-order upwind fluxes with zero inflow at ``x = 0``,
a diagonal loss ``-B`` and the fragmentation gain ``K[i, j] B_j dx``.  The
dominant pair is found by marching the discrete semigroup ``I + tau A``
(exponential power iteration); ``tau`` keeps the iteration matrix
non-negative so every iterate stays positive.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .coefficients import CoefficientSet, KernelMatrix, kernel_matrix, require_conforming
from .errors import ConvergenceError, EigenInconsistencyError, SchemeError
from .grid import Grid, PhiWeight

logger = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Dense ``M x M`` generator together with the data it was built from."""

    matrix: np.ndarray
    grid: Grid
    kernel: KernelMatrix
    g_faces: np.ndarray  # growth speed at the M right faces of the cells
    B: np.ndarray  # division rate at cell centers

    @property
    def g_max(self) -> float:
        return float(self.g_faces.max())

    @property
    def B_max(self) -> float:
        return float(self.B.max())

    def power_step(self, safety: float = 0.45) -> float:
        """Largest pseudo-time step keeping ``I + tau A`` non-negative, times ``safety``."""
        limits = [self.grid.dx / self.g_max]
        if self.B_max > 0:
            limits.append(1.0 / (3.0 * self.B_max))
        return safety * min(limits)


def build_generator(coeffs: CoefficientSet, grid: Grid, kernel: KernelMatrix | None = None) -> GeneratorMatrix:
    """Assemble ``A`` so that ``A @ n`` discretises ``-(g n)_x - B n + int k B n dy``.

    Raises
    ------
    NonConformingError
        If the coefficients break the structural assumptions and
        ``coeffs.allow_non_conforming`` is not set.
    """
    require_conforming(coeffs, grid)
    K = kernel if kernel is not None else kernel_matrix(coeffs, grid)
    M, dx = grid.M, grid.dx
    g_faces = coeffs.g(grid.faces[1:]).astype(float)
    B = coeffs.B(grid.centers).astype(float)

    A = K.matrix * (B * dx)[None, :]
    idx = np.arange(M)
    A[idx, idx] -= g_faces / dx + B
    # upwind flux g_{i+1/2} n_i leaves cell i and enters cell i+1; nothing enters cell 0
    A[idx[1:], idx[:-1]] += g_faces[:-1] / dx
    return GeneratorMatrix(A, grid, K, g_faces, B)


class PrimalSolution(NamedTuple):
    lam: float
    N: np.ndarray
    residual: float
    iterations: int


class DualSolution(NamedTuple):
    lam: float
    phi: np.ndarray
    residual: float
    iterations: int


def _march(P: np.ndarray, v: np.ndarray, tau: float, weight: np.ndarray, tol: float, max_iter: int,
           residual_fn) -> tuple[float, np.ndarray, float, int]:
    """Normalised power iteration of ``P = I + tau A``; returns (lam, v, residual, iters)."""
    lam_old = np.inf
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = P @ v
        if np.min(w) < -NEGATIVE_TOL * np.max(np.abs(w)):
            raise SchemeError(f"power iterate lost positivity at iteration {it} (min {np.min(w):.3e})")
        growth = float(weight @ w) / float(weight @ v)
        lam = (growth - 1.0) / tau
        v = np.maximum(w, 0.0) / float(weight @ w)
        if abs(lam - lam_old) < tol:
            residual = residual_fn(v, lam)
            if residual < tol:
                return lam, v, residual, it
        lam_old = lam
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def solve_primal(gen: GeneratorMatrix, tol: float = 1e-10, max_iter: int = 500_000,
                 initial: np.ndarray | None = None) -> PrimalSolution:
    """Dominant eigenpair of ``A`` by exponential power iteration.

    The eigenvalue estimate is ``(growth - 1)/tau`` where ``growth`` is the
    per-iteration L1 growth factor; at the fixed point this is the exact
    eigenvalue of ``A``.  Iteration stops once successive estimates differ
    by less than ``tol`` and ``|A N - lam N|_1 / |N|_1 < tol``.

    Returns ``N >= 0`` normalised to ``sum N_i dx = 1``.
    """
    A, dx = gen.matrix, gen.grid.dx
    tau = gen.power_step()
    P = np.eye(gen.grid.M) + tau * A
    v = np.ones(gen.grid.M) if initial is None else np.asarray(initial, dtype=float).copy()
    ones = np.full(gen.grid.M, dx)

    def residual(N, lam):
        return float(np.abs(A @ N - lam * N).sum() / np.abs(N).sum())

    lam, N, res, it = _march(P, v / (ones @ v), tau, ones, tol, max_iter, residual)
    N = N / (N.sum() * dx)
    logger.debug("primal eigenpair: lambda=%.12g after %d iterations", lam, it)
    return PrimalSolution(lam, N, res, it)


def solve_dual(gen: GeneratorMatrix, N: np.ndarray, lam_primal: float | None = None, tol: float = 1e-10,
               max_iter: int = 500_000) -> DualSolution:
    """Dominant left eigenvector ``phi`` of ``A``, normalised to ``sum phi_i N_i dx = 1``.

    The iteration runs on the transpose generator with its own (unweighted)
    eigenvalue estimate; the residual ``|A^T phi - lam phi|`` is measured in
    the ``N``-weighted L1 norm.

    Raises
    ------
    EigenInconsistencyError
        If ``lam_primal`` is given and the two eigenvalues differ by more
        than ``10 tol``.
    """
    A, dx = gen.matrix, gen.grid.dx
    tau = gen.power_step()
    P = np.eye(gen.grid.M) + tau * A.T
    N = np.asarray(N, dtype=float)
    ones = np.full(gen.grid.M, dx)

    def residual(phi, lam):
        r = np.abs(A.T @ phi - lam * phi)
        return float((r * N).sum() / (phi * N).sum())

    lam, phi, res, it = _march(P, np.ones(gen.grid.M), tau, ones, tol, max_iter, residual)
    phi = phi / ((phi * N).sum() * dx)
    if lam_primal is not None and abs(lam - lam_primal) > 10 * tol:
        raise EigenInconsistencyError(f"dual eigenvalue {lam:.15g} differs from primal {lam_primal:.15g}")
    return DualSolution(lam, phi, res, it)


@dataclass(frozen=True, eq=False)
class EigenTriple:
    """Perron eigentriple with residual certificates."""

    grid: Grid
    lam: float
    N: np.ndarray
    phi: np.ndarray
    primal_residual: float
    dual_residual: float
    iterations: tuple[int, int]
    lam_dual: float = float("nan")

    def weight(self, degree: int = 1) -> PhiWeight:
        """phi as a weight function, interpolated between cell centers."""
        return PhiWeight(self.grid, self.phi, degree)

    def normalization_defects(self) -> tuple[float, float]:
        dx = self.grid.dx
        return abs(self.N.sum() * dx - 1.0), abs((self.phi * self.N).sum() * dx - 1.0)

    def to_dict(self) -> dict[str, Any]:
        d_n, d_phi = self.normalization_defects()
        return {
            "lambda": self.lam,
            "lambda_dual": self.lam_dual,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": list(self.iterations),
            "normalization_defect_N": d_n,
            "normalization_defect_phiN": d_phi,
            "M": self.grid.M,
            "x_max": self.grid.x_max,
        }


def eigentriple(gen: GeneratorMatrix, tol: float = 1e-10, max_iter: int = 500_000) -> EigenTriple:
    """Primal then dual solve, checked for consistency."""
    primal = solve_primal(gen, tol, max_iter)
    if np.any(primal.N <= 0):
        logger.warning("primal eigenvector has %d non-positive cells", int(np.sum(primal.N <= 0)))
    dual = solve_dual(gen, primal.N, primal.lam, tol, max_iter)
    return EigenTriple(gen.grid, primal.lam, primal.N, dual.phi, primal.residual, dual.residual,
                       (primal.iterations, dual.iterations), dual.lam)


@dataclass(frozen=True)
class IdentityReport:
    number_defect: float  # |lam - sum B N dx|
    mass_defect: float  # |lam sum x N dx - sum g N dx|
    mean_size: float


def eigen_identities(triple: EigenTriple, coeffs: CoefficientSet, grid: Grid) -> IdentityReport:
    """Defects of the moment identities obtained by integrating the primal problem against 1 and x."""
    dx, x = grid.dx, grid.centers
    N = triple.N
    mean = float((x * N).sum() * dx)
    return IdentityReport(
        abs(triple.lam - float((coeffs.B(x) * N).sum() * dx)),
        abs(triple.lam * mean - float((coeffs.g(x) * N).sum() * dx)),
        mean,
    )
