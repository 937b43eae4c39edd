"""Model coefficients: growth speed g, division rate B and fragmentation kernel k.

Coefficient functions are closed-form families evaluated pointwise
(:class:`Profile`); arbitrary functions enter as tabulated samples with
linear interpolation, or as plain vectorised callables through the Python
API.  The kernel is either uniform (``k = 2/y``), self-similar
(``k(x, y) = q(x/y)/y``) or the atomic mitosis kernel, which breaks the
continuity assumption and is only admitted behind an explicit opt-in.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import special

from .errors import DomainError, NonConformingError, UnsupportedKernelError
from .grid import Grid

_PROFILE_KEYS = {
    "constant": ("value",),
    "affine": ("intercept", "slope"),
    "power": ("coeff", "exponent"),
    "polynomial": ("coeffs",),
    "gaussian": ("amplitude", "center", "width"),
    "tabulated": ("x", "values"),
    "beta": ("a",),
}


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(float(v) for v in np.asarray(value, dtype=float).reshape(-1))
    return float(value)


@dataclass(frozen=True)
class Profile:
    """Closed-form scalar function of size, evaluated elementwise.

    Families and their parameters::

        constant    value                       -> value
        affine      intercept, slope            -> intercept + slope*x
        power       coeff, exponent             -> coeff * x**exponent
        polynomial  coeffs (increasing powers)  -> sum_k coeffs[k] x**k
        gaussian    amplitude, center, width    -> amplitude*exp(-(x-center)^2 / (2 width^2))
        tabulated   x, values                   -> linear interpolation, constant outside
        beta        a                           -> 2 z^(a-1) (1-z)^(a-1) / Beta(a, a)

    The ``beta`` family is a normalised fragment profile on ``[0, 1]`` with
    integral 2 and first moment 1, intended for self-similar kernels.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _PROFILE_KEYS:
            raise DomainError(f"unknown profile kind {self.kind!r}")
        p = dict(self.params)
        missing = [k for k in _PROFILE_KEYS[self.kind] if k not in p]
        if missing:
            raise DomainError(f"profile {self.kind!r} is missing {missing}")
        frozen = tuple((k, _freeze(p[k])) for k in _PROFILE_KEYS[self.kind])
        object.__setattr__(self, "params", frozen)
        if self.kind == "tabulated":
            x, v = np.asarray(self.p["x"]), np.asarray(self.p["values"])
            if x.size < 2 or x.size != v.size or np.any(np.diff(x) <= 0):
                raise DomainError("tabulated profile needs >= 2 strictly increasing abscissae")
        if self.kind == "gaussian" and self.p["width"] <= 0:
            raise DomainError("gaussian width must be positive")
        if self.kind == "beta" and self.p["a"] <= 0:
            raise DomainError("beta parameter must be positive")

    @property
    def p(self) -> dict[str, Any]:
        return dict(self.params)

    @classmethod
    def make(cls, kind: str, **params) -> "Profile":
        return cls(kind, tuple(params.items()))

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls.make("constant", value=value)

    @classmethod
    def affine(cls, intercept: float, slope: float) -> "Profile":
        return cls.make("affine", intercept=intercept, slope=slope)

    @classmethod
    def power(cls, coeff: float, exponent: float) -> "Profile":
        return cls.make("power", coeff=coeff, exponent=exponent)

    @classmethod
    def polynomial(cls, coeffs) -> "Profile":
        return cls.make("polynomial", coeffs=coeffs)

    @classmethod
    def gaussian(cls, amplitude: float, center: float, width: float) -> "Profile":
        return cls.make("gaussian", amplitude=amplitude, center=center, width=width)

    @classmethod
    def tabulated(cls, x, values) -> "Profile":
        return cls.make("tabulated", x=x, values=values)

    @classmethod
    def beta(cls, a: float) -> "Profile":
        return cls.make("beta", a=a)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p
        if self.kind == "constant":
            return np.full(x.shape, p["value"])
        if self.kind == "affine":
            return p["intercept"] + p["slope"] * x
        if self.kind == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                return p["coeff"] * np.power(x, p["exponent"])
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, np.asarray(p["coeffs"])) + 0.0 * x
        if self.kind == "gaussian":
            return p["amplitude"] * np.exp(-0.5 * ((x - p["center"]) / p["width"]) ** 2)
        if self.kind == "tabulated":
            return np.interp(x, np.asarray(p["x"]), np.asarray(p["values"]))
        # beta
        a = p["a"]
        z = np.clip(x, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 2.0 * z ** (a - 1) * (1 - z) ** (a - 1) / special.beta(a, a)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class KernelSpec:
    """Fragmentation kernel family.

    ``uniform``: ``k(x, y) = 2/y`` on ``x <= y``.
    ``self_similar``: ``k(x, y) = q(x/y)/y`` for a fragment profile ``q`` on
    ``[0, 1]`` with ``int q = 2`` and ``int z q(z) dz = 1``.
    ``mitosis_atomic``: ``k = 2 delta_{x = y/2}``; non-conforming.
    """

    family: str
    profile: Callable | None = None

    def __post_init__(self):
        if self.family not in ("uniform", "self_similar", "mitosis_atomic"):
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == "self_similar" and self.profile is None:
            raise DomainError("self_similar kernel needs a fragment profile q")

    @classmethod
    def uniform(cls) -> "KernelSpec":
        return cls("uniform")

    @classmethod
    def self_similar(cls, q: Callable) -> "KernelSpec":
        return cls("self_similar", q)

    @classmethod
    def mitosis(cls) -> "KernelSpec":
        return cls("mitosis_atomic")

    @property
    def non_conforming(self) -> bool:
        return self.family == "mitosis_atomic"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.family}
        if self.family == "self_similar":
            if not isinstance(self.profile, Profile):
                raise TypeError("only Profile-based fragment profiles can be serialised")
            out["profile"] = self.profile.to_dict()
        return out


@dataclass(frozen=True)
class CoefficientSet:
    """Model data ``(g, B, k)`` on the truncated domain ``[0, x_max]``.

    ``g_floor=None`` means "the smallest value of g on the check points",
    so that only positivity of g is required.  ``allow_non_conforming``
    admits data that break the structural assumptions (atomic kernel,
    vanishing division rate) for testing purposes.
    """

    growth: Callable
    division: Callable
    kernel: KernelSpec
    x_max: float
    g_floor: float | None = None
    allow_non_conforming: bool = False

    def g(self, x) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.growth(np.asarray(x, dtype=float)), dtype=float), np.shape(x))

    def B(self, x) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.division(np.asarray(x, dtype=float)), dtype=float), np.shape(x))

    @classmethod
    def default(cls, x_max: float = 10.0) -> "CoefficientSet":
        """g = 1, B = 1, uniform kernel."""
        return cls(Profile.constant(1.0), Profile.constant(1.0), KernelSpec.uniform(), x_max)


def eval_kernel(spec: KernelSpec, x, y) -> np.ndarray:
    """Pointwise kernel density ``k(x, y)``; zero for ``x > y``.

    Raises
    ------
    DomainError
        If any ``y <= 0``.
    UnsupportedKernelError
        For the atomic mitosis kernel, which has no pointwise density.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("kernel evaluation requires y > 0")
    if spec.family == "mitosis_atomic":
        raise UnsupportedKernelError("the atomic mitosis kernel has no pointwise density")
    inside = (x <= y) & (x >= 0)
    if spec.family == "uniform":
        val = 2.0 / y + 0.0 * x
    else:
        z = np.clip(x / y, 0.0, 1.0)
        val = np.asarray(spec.profile(z), dtype=float) / y
    return np.where(inside, val, 0.0)


# ----------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class AssumptionCheck:
    passed: bool
    worst: float
    detail: str = ""
    conforming: bool = True


@dataclass
class ValidationReport:
    """Per-assumption pass/fail flags with the worst observed violation."""

    checks: dict[str, AssumptionCheck] = field(default_factory=dict)
    tol: float = 1e-10
    non_conforming: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values() if c.conforming)

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "non_conforming": self.non_conforming,
            "checks": {
                k: {"passed": c.passed, "worst": c.worst, "detail": c.detail, "conforming": c.conforming}
                for k, c in self.checks.items()
            },
        }


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _kernel_moments(spec: KernelSpec, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre estimates of int_0^y k dx and int_0^y x k dx."""
    half = 0.5 * y[:, None]
    xq = half * (_GL_NODES[None, :] + 1.0)
    kq = eval_kernel(spec, xq, np.broadcast_to(y[:, None], xq.shape))
    number = (half * _GL_WEIGHTS * kq).sum(axis=1)
    mass = (half * _GL_WEIGHTS * xq * kq).sum(axis=1)
    return number, mass


def _lipschitz(f: np.ndarray, x: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(f) / np.diff(x)))) if x.size > 1 else 0.0


def validate_assumptions(coeffs: CoefficientSet, grid: Grid, tol: float = 1e-10) -> ValidationReport:
    """Check positivity/boundedness of g and B and the kernel moment conditions.

    Failures are recorded in the report, never raised.
    """
    rep = ValidationReport(tol=tol, non_conforming=coeffs.kernel.non_conforming)
    pts = np.unique(np.concatenate([grid.faces, grid.centers]))
    checks = rep.checks

    checks["grid_domain"] = AssumptionCheck(
        bool(np.isclose(grid.x_max, coeffs.x_max, rtol=1e-14, atol=0.0)),
        abs(grid.x_max - coeffs.x_max),
        "grid and coefficient truncation agree",
    )

    g = coeffs.g(pts)
    g_ok = bool(np.all(np.isfinite(g)))
    g0 = float(np.min(g)) if coeffs.g_floor is None else float(coeffs.g_floor)
    if g0 <= 0:
        checks["growth_floor"] = AssumptionCheck(False, float(-min(g0, np.min(g))), "g_floor must be positive")
    else:
        short = float(np.max(np.maximum(g0 - g, 0.0))) if g_ok else float("inf")
        checks["growth_floor"] = AssumptionCheck(
            g_ok and short <= tol, short, f"g >= g0 = {g0:g}; worst shortfall at x = {pts[np.argmax(g0 - g)]:g}"
        )
    lip_g = _lipschitz(g, pts) if g_ok else float("inf")
    checks["growth_lipschitz"] = AssumptionCheck(bool(np.isfinite(lip_g)), lip_g, "discrete Lipschitz constant of g")

    b = coeffs.B(pts)
    b_ok = bool(np.all(np.isfinite(b)))
    bmin = float(np.min(b)) if b_ok else float("nan")
    checks["division_positive"] = AssumptionCheck(
        b_ok and bmin > 0, float(max(0.0, -bmin)) if b_ok else float("inf"), f"min B = {bmin:g}"
    )
    lip_b = _lipschitz(b, pts) if b_ok else float("inf")
    checks["division_lipschitz"] = AssumptionCheck(bool(np.isfinite(lip_b)), lip_b, "discrete Lipschitz constant of B")

    spec = coeffs.kernel
    if spec.non_conforming:
        waived = coeffs.allow_non_conforming
        checks["kernel_continuity"] = AssumptionCheck(
            False, float("inf"), "atomic kernel is not continuous" + (" (waived)" if waived else ""), conforming=not waived
        )
        # the remaining kernel checks are exact for the atomic kernel by construction
        return rep

    y = grid.centers
    number, mass = _kernel_moments(spec, y)
    num_def = float(np.max(np.abs(number - 2.0)))
    mass_def = float(np.max(np.abs(mass - y) / y))
    checks["kernel_number"] = AssumptionCheck(num_def <= tol, num_def, "max |int k dx - 2|")
    checks["kernel_mass"] = AssumptionCheck(mass_def <= tol, mass_def, "max |int x k dx - y| / y")

    X, Y = np.meshgrid(grid.centers, grid.centers, indexing="ij")
    kk = eval_kernel(spec, X, Y)
    below = float(np.max(np.abs(kk[X > Y]))) if np.any(X > Y) else 0.0
    checks["kernel_support"] = AssumptionCheck(below == 0.0, below, "k(x, y) = 0 for x > y")
    inner = kk[X < Y]
    kmin = float(np.min(inner)) if inner.size else 1.0
    checks["kernel_positive"] = AssumptionCheck(
        bool(np.all(np.isfinite(inner))) and kmin > 0, float(max(0.0, -kmin)), f"min k on x < y is {kmin:g}"
    )
    return rep


# ----------------------------------------------------------------------------
# discrete kernel

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Moment-corrected discrete kernel ``K[i, j] ~ k(x_i, y_j)``.

    Columns with ``y_j >= 2 dx`` have discrete number moment 2 and mass
    moment ``y_j`` up to roundoff; ``number_only`` lists columns where the
    mass correction would have broken non-negativity.
    """

    grid: Grid
    matrix: np.ndarray
    number_only: tuple[int, ...] = ()
    uncorrected: bool = False

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        dx = self.grid.dx
        return self.matrix.sum(axis=0) * dx, (self.grid.centers @ self.matrix) * dx

    def moment_defects(self) -> dict[str, float]:
        number, mass = self.moments()
        y = self.grid.centers
        eligible = (y >= 2 * self.grid.dx) & ~np.isin(np.arange(self.grid.M), self.number_only)
        return {
            "number": float(np.max(np.abs(number - 2.0))),
            "mass": float(np.max(np.abs(mass - y)[eligible])) if np.any(eligible) else 0.0,
        }

    def columns_at(self, y) -> np.ndarray:
        """Fragment profiles for parents at arbitrary positions, shape ``(M, len(y))``.

        Neighbouring columns are blended linearly so that, where both are
        moment-corrected, the first moment equals the parent size exactly.
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x = self.grid.centers
        j = np.clip(np.floor(y / self.grid.dx - 0.5).astype(int), 0, self.grid.M - 2)
        theta = np.clip((y - x[j]) / self.grid.dx, 0.0, 1.0)
        return self.matrix[:, j] * (1.0 - theta) + self.matrix[:, j + 1] * theta


def _correct_column(c: np.ndarray, xs: np.ndarray, y: float, dx: float) -> tuple[np.ndarray, bool]:
    """Rescale to number moment 2, then tilt to mass moment y; False if the tilt is infeasible."""
    total = c.sum() * dx
    if total <= 0:
        c = np.zeros_like(c)
        c[-1] = 1.0
        total = dx
    c = c * (2.0 / total)
    m = (xs * c).sum() * dx
    xbar = (xs * c).sum() / c.sum()
    v = (xs - xbar) * c
    curvature = (xs * v).sum() * dx
    if curvature <= 0:
        return c, abs(m - y) <= 1e-14 * max(y, 1.0)
    alpha = (y - m) / curvature
    factor = 1.0 + alpha * (xs - xbar)
    if np.any(factor[c > 0] < 0):
        return c, False
    c = c * factor
    return c * (2.0 / (c.sum() * dx)), True


def discretize_kernel(coeffs: CoefficientSet, grid: Grid) -> KernelMatrix:
    """Build the moment-corrected kernel matrix on ``grid``.

    Conforming kernels are sampled at cell centers (the diagonal cell, half of
    which lies in the support, is sampled at the midpoint of that half and
    gets half weight), rescaled column-wise to the
    number condition and then tilted by a rank-one non-negative adjustment to
    the mass condition.  The mitosis kernel places ``2/dx`` in the cell that
    contains ``y_j/2`` and is left uncorrected.
    """
    M, dx, x = grid.M, grid.dx, grid.centers
    K = np.zeros((M, M))
    if coeffs.kernel.non_conforming:
        K[grid.cell_index(0.5 * x), np.arange(M)] = 2.0 / dx
        return KernelMatrix(grid, K, tuple(range(M)), uncorrected=True)

    number_only = []
    for j in range(M):
        xs = x[: j + 1]
        # the diagonal cell is half inside the support; sample that half at its midpoint
        c = eval_kernel(coeffs.kernel, np.append(xs[:-1], x[j] - 0.25 * dx), np.full(j + 1, x[j]))
        c[-1] *= 0.5
        col, ok = _correct_column(c, xs, x[j], dx)
        if not ok:
            number_only.append(j)
        K[: j + 1, j] = col
    return KernelMatrix(grid, K, tuple(number_only))


@functools.lru_cache(maxsize=16)
def kernel_matrix(coeffs: CoefficientSet, grid: Grid) -> KernelMatrix:
    """Cached :func:`discretize_kernel` (coefficient sets are hashable)."""
    return discretize_kernel(coeffs, grid)


def require_conforming(coeffs: CoefficientSet, grid: Grid, tol: float = 1e-6) -> ValidationReport:
    """Validate and raise :class:`NonConformingError` unless the data conform or are opted in."""
    rep = validate_assumptions(coeffs, grid, tol)
    if not rep.passed and not coeffs.allow_non_conforming:
        raise NonConformingError(f"coefficients violate assumptions: {', '.join(rep.failures())}")
    return rep


def coefficient_from_mapping(d: Mapping[str, Any]) -> Profile:
    kind = d["kind"]
    return Profile(kind, tuple((k, v) for k, v in d.items() if k != "kind"))
