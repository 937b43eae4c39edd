"""Generalised relative entropy of hybrid measures and its dissipation.

For a state ``n`` at time ``t`` with reduced density ``u = n e^{-lam t} / N``
the entropy is::

    H(t) = sum_i phi_i N_i H(u_i) dx + sum_a phi(y_a) H_inf w_a e^{-lam t}

where ``H_inf`` is the recession value of the integrand.  Atoms are priced
by the recession value, which is why superlinear integrands (quadratic)
only accept atom-free states.  The dissipation is the Bregman double sum
over the discrete fragmentation operator plus the matching atom term; both
use the same moment-corrected kernel matrix as the time stepper.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ._parallel import blocked_sum
from .coefficients import CoefficientSet, kernel_matrix
from .dynamics import Trajectory
from .eigen import EigenTriple
from .errors import DomainError
from .grid import DiagnosticSeries, HybridMeasure, weighted_mass

logger = logging.getLogger(__name__)

AUTO_CENTER = "auto_center"
FAMILIES = ("quadratic", "pseudo_huber", "abs")


@dataclass(frozen=True)
class EntropySpec:
    """Convex integrand centred at ``center``.

    * ``quadratic``: ``(u - c)^2``; no finite recession value, density-only data.
    * ``pseudo_huber``: ``sqrt(delta^2 + (u - c)^2) - delta``; recession value 1.
    * ``abs``: ``|u - c|``; recession value 1, not differentiable, so it is
      usable for entropy values only.

    ``center="auto_center"`` is a placeholder resolved by :meth:`with_center`
    once the conserved mass ``m0`` is known.
    """

    family: str
    center: float | str = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown entropy family {self.family!r}; expected one of {FAMILIES}")
        if isinstance(self.center, str):
            if self.center != AUTO_CENTER:
                raise DomainError(f"entropy center must be a number or {AUTO_CENTER!r}")
        elif not math.isfinite(self.center):
            raise DomainError("entropy center must be finite")
        if self.family == "pseudo_huber" and not self.delta > 0:
            raise DomainError("pseudo_huber needs delta > 0")

    @classmethod
    def quadratic(cls, center: float | str = 0.0) -> "EntropySpec":
        return cls("quadratic", center)

    @classmethod
    def pseudo_huber(cls, center: float | str = 0.0, delta: float = 1.0) -> "EntropySpec":
        return cls("pseudo_huber", center, delta)

    @classmethod
    def abs(cls, center: float | str = 0.0) -> "EntropySpec":
        return cls("abs", center)

    @property
    def resolved(self) -> bool:
        return not isinstance(self.center, str)

    def with_center(self, m0: float) -> "EntropySpec":
        """Replace an ``auto_center`` placeholder by ``m0`` (no-op otherwise)."""
        return self if self.resolved else replace(self, center=float(m0))

    @property
    def ac_only(self) -> bool:
        return self.family == "quadratic"

    @property
    def metric_only(self) -> bool:
        return self.family == "abs"

    @property
    def recession(self) -> float:
        """``H_inf(1) = lim H(s)/s``."""
        return math.inf if self.family == "quadratic" else 1.0

    def _c(self) -> float:
        if not self.resolved:
            raise DomainError("entropy center is still 'auto_center'; call with_center(m0) first")
        return float(self.center)

    def H(self, u) -> np.ndarray:
        d = np.asarray(u, dtype=float) - self._c()
        if self.family == "quadratic":
            return d * d
        if self.family == "pseudo_huber":
            # written to avoid cancellation near the center
            return d * d / (np.sqrt(self.delta**2 + d * d) + self.delta)
        return np.abs(d)

    def dH(self, u) -> np.ndarray:
        if self.metric_only:
            raise DomainError("the abs entropy is not differentiable; it has no dissipation")
        d = np.asarray(u, dtype=float) - self._c()
        if self.family == "quadratic":
            return 2.0 * d
        return d / np.sqrt(self.delta**2 + d * d)

    def to_dict(self) -> dict:
        out = {"family": self.family, "center": self.center}
        if self.family == "pseudo_huber":
            out["delta"] = self.delta
        return out


def _check_atoms(state: HybridMeasure, hs: EntropySpec) -> None:
    if state.n_atoms and hs.ac_only:
        raise DomainError(
            f"{hs.family} entropy has no finite recession value, so it cannot price the "
            f"{state.n_atoms} atom(s) of this state; use pseudo_huber or abs"
        )


def _same_grid(state: HybridMeasure, triple: EigenTriple) -> None:
    if state.grid != triple.grid:
        raise DomainError("state and eigentriple live on different grids")


def reduced_density(state: HybridMeasure, triple: EigenTriple, t: float) -> np.ndarray:
    """``u_i = n_i e^{-lam t} / N_i``."""
    return state.densities * math.exp(-triple.lam * t) / triple.N


def relative_entropy(state: HybridMeasure, triple: EigenTriple, t: float, hs: EntropySpec) -> float:
    """Generalised relative entropy of ``state`` at time ``t`` (see module docstring).

    Raises
    ------
    DomainError
        If the state has atoms and ``hs`` has no finite recession value.
    """
    _same_grid(state, triple)
    _check_atoms(state, hs)
    u = reduced_density(state, triple, t)
    ac = float((triple.phi * triple.N * hs.H(u)).sum() * state.grid.dx)
    if not state.n_atoms:
        return ac
    scale = math.exp(-triple.lam * t)
    return ac + hs.recession * scale * float((triple.weight()(state.positions) * state.masses).sum())


def dissipation(state: HybridMeasure, triple: EigenTriple, coeffs: CoefficientSet, t: float, hs: EntropySpec,
                threads: int | None = None) -> float:
    """Entropy dissipation ``D^H`` of ``state`` at time ``t``.

    Density part::

        sum_i sum_j phi_i N_j B_j K_ij [H(u_j) - H(u_i) - H'(u_i)(u_j - u_i)] dx^2

    evaluated in fixed 64-row blocks (see :mod:`growfrag._parallel`); atom part::

        sum_a sum_i phi_i B(y_a) K_i(y_a) [H_inf - H'(u_i)] w_a e^{-lam t} dx

    with ``K(y_a)`` the discrete kernel column used by the stepper.

    Raises
    ------
    DomainError
        For the non-differentiable abs entropy, or atoms with an ``ac_only`` entropy.
    """
    _same_grid(state, triple)
    if hs.metric_only:
        raise DomainError("the abs entropy is metric-only and has no dissipation")
    _check_atoms(state, hs)
    grid = state.grid
    dx = grid.dx
    K = kernel_matrix(coeffs, grid)
    u = reduced_density(state, triple, t)
    Hu, dHu = hs.H(u), hs.dH(u)
    src = triple.N * coeffs.B(grid.centers)  # N_j B_j
    phi = triple.phi

    def rows(lo: int, hi: int) -> float:
        breg = Hu[None, :] - Hu[lo:hi, None] - dHu[lo:hi, None] * (u[None, :] - u[lo:hi, None])
        return float(phi[lo:hi] @ ((K.matrix[lo:hi] * breg) @ src))

    total = blocked_sum(rows, grid.M, threads) * dx * dx
    if state.n_atoms:
        y, w = state.positions, state.masses
        weights = coeffs.B(y) * w * math.exp(-triple.lam * t)
        total += float((phi * (hs.recession - dHu)) @ (K.columns_at(y) @ weights)) * dx
    return total


def upwind_dissipation(state: HybridMeasure, triple: EigenTriple, coeffs: CoefficientSet, t: float,
                       hs: EntropySpec) -> float:
    """Entropy dissipated by the upwind transport discretisation alone.

    Zero in the continuum; of order ``dx`` for smooth states.  The balance
    ``dH/dt = -(D^H + this)`` holds exactly for the semi-discrete scheme.
    """
    _same_grid(state, triple)
    grid = state.grid
    u = reduced_density(state, triple, t)
    Hu, dHu = hs.H(u), hs.dH(u)
    flux = coeffs.g(grid.faces[1:-1]) / grid.dx * triple.N[:-1]
    breg = Hu[:-1] - Hu[1:] - dHu[1:] * (u[:-1] - u[1:])
    return float((triple.phi[1:] * flux * breg).sum() * grid.dx)


class Budget(NamedTuple):
    integral: float
    bound: float


def _series(traj: Trajectory, triple: EigenTriple, coeffs: CoefficientSet, hs: EntropySpec,
            threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    H = np.array([relative_entropy(mu, triple, t, hs) for t, mu in traj.snapshots])
    D = np.array([dissipation(mu, triple, coeffs, t, hs, threads) for t, mu in traj.snapshots])
    return H, D


def monotone_tolerance(H0: float, scale: float, rel: float = 1e-8, eigen_residual: float = 0.0,
                       dt=0.0):
    """Allowed entropy increase per snapshot interval.

    ``rel * H(0)`` plus a floor ``scale * (1e-12 + r * dt)``, where ``scale``
    is the conserved phi-weighted mass and ``r`` the combined eigen residual.
    The entropy is a Lyapunov function for the exact eigentriple; a triple
    with residual ``r`` lets a first-order entropy such as abs creep by about
    ``r * scale`` per unit time, which the second term absorbs.
    """
    return rel * H0 + abs(scale) * (1e-12 + eigen_residual * np.asarray(dt, dtype=float))


def entropy_balance_check(traj: Trajectory, triple: EigenTriple, coeffs: CoefficientSet, hs: EntropySpec,
                          tol_mono=None, threads: int | None = None, rel: float = 1e-8) -> DiagnosticSeries:
    """Discrete check of ``dH/dt = -D^H`` and of entropy monotonicity.

    Row ``k`` of the series (``k >= 1``) describes the interval
    ``[t_{k-1}, t_k]``: ``defect = |(H_k - H_{k-1}) / dt_k + (D_{k-1} + D_k)/2|``
    and ``monotone_ok = H_k <= H_{k-1} + tol_mono``.  Row 0 carries defect 0.
    The default ``tol_mono`` is ``rel * H(0)`` plus the floor of
    :func:`monotone_tolerance`, so that an exactly steady run, where
    ``H(0) = 0``, is judged against roundoff and eigen residual rather than
    zero.  A scalar or per-row array may be passed instead.
    """
    if traj.config is not None and traj.dt > 0:
        gaps = np.diff(traj.times)
        if gaps.size and gaps.max() > 10 * traj.dt * (1 + 1e-9):
            logger.warning("snapshot spacing %.3g exceeds 10 steps; defects include quadrature error", gaps.max())
    H, D = _series(traj, triple, coeffs, hs, threads)
    dt = np.diff(traj.times)
    defect = np.concatenate([[0.0], np.abs(np.diff(H) / dt + 0.5 * (D[1:] + D[:-1]))])
    gaps = np.concatenate([[0.0], dt])
    if tol_mono is None:
        tol_mono = monotone_tolerance(H[0], weighted_mass(traj.states[0], triple.weight()), rel,
                                      triple.primal_residual + triple.dual_residual, gaps)
    tol_mono = np.broadcast_to(np.asarray(tol_mono, dtype=float), H.shape)
    increase = np.concatenate([[0.0], np.diff(H)])
    ok = increase <= tol_mono
    return DiagnosticSeries(
        traj.times,
        {"H": H, "D": D, "defect": defect, "monotone_ok": ok},
        {
            "H0": float(H[0]),
            "max_defect": float(defect.max()),
            "max_increase": float(increase.max()),
            "tol_mono": float(tol_mono.max()),
            "monotone": bool(ok.all()),
        },
    )


def dissipation_budget(traj: Trajectory, triple: EigenTriple, coeffs: CoefficientSet, hs: EntropySpec,
                       threads: int | None = None) -> Budget:
    """Trapezoidal ``int_0^T D^H dt`` and the bound ``H(0)`` (recession term included)."""
    H0 = relative_entropy(traj.states[0], triple, float(traj.times[0]), hs)
    D = np.array([dissipation(mu, triple, coeffs, t, hs, threads) for t, mu in traj.snapshots])
    integral = float(np.sum(0.5 * (D[1:] + D[:-1]) * np.diff(traj.times))) if D.size > 1 else 0.0
    return Budget(integral, H0)
