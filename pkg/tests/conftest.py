from __future__ import annotations

import functools

import numpy as np
import pytest

from growfrag import CoefficientSet, Grid, KernelSpec, Profile, build_generator, eigentriple


def constant_coeffs(x_max: float = 10.0, g: float = 1.0, B: float = 1.0) -> CoefficientSet:
    return CoefficientSet(Profile.constant(g), Profile.constant(B), KernelSpec.uniform(), x_max)


def variable_coeffs(x_max: float = 10.0) -> CoefficientSet:
    return CoefficientSet(Profile.affine(1.0, 0.3), Profile.affine(0.5, 0.5), KernelSpec.uniform(), x_max)


@functools.lru_cache(maxsize=None)
def triple_for(coeffs: CoefficientSet, M: int, tol: float = 1e-10):
    grid = Grid(M, coeffs.x_max)
    return grid, eigentriple(build_generator(coeffs, grid), tol)


def bump(x):
    return np.exp(-((x - 2.0) ** 2) / 0.5)


@pytest.fixture
def default_coeffs():
    return constant_coeffs()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
