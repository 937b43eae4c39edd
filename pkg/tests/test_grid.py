from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growfrag import DiagnosticSeries, Grid, HybridMeasure, PhiWeight, absorb_atom, tv_phi_distance, weighted_mass
from growfrag.errors import DomainError

from conftest import constant_coeffs, triple_for


def test_grid_geometry():
    g = Grid(10, 5.0)
    assert g.dx == 0.5
    assert g.centers[0] == 0.25 and g.centers[-1] == 4.75
    assert np.all(np.diff(g.centers) > 0)
    assert g.faces.size == 11
    assert g.cell_index([0.0, 0.49, 0.5, 5.0]).tolist() == [0, 0, 1, 9]
    assert g.refined(2) == Grid(20, 5.0)


@pytest.mark.parametrize("M, x_max", [(1, 1.0), (10, 0.0), (10, -1.0), (10, float("inf"))])
def test_grid_rejects_bad_shape(M, x_max):
    with pytest.raises(DomainError):
        Grid(M, x_max)


class TestHybridMeasure:
    def test_invariants(self):
        g = Grid(4, 1.0)
        with pytest.raises(DomainError):
            HybridMeasure(g, [1, -1, 0, 0])
        with pytest.raises(DomainError):
            HybridMeasure(g, np.zeros(4), [0.0], [1.0])
        with pytest.raises(DomainError):
            HybridMeasure(g, np.zeros(4), [1.5], [1.0])
        with pytest.raises(DomainError):
            HybridMeasure(g, np.zeros(4), [0.5], [-1.0])
        with pytest.raises(DomainError):
            HybridMeasure(g, np.zeros(3))

    def test_immutable(self):
        mu = HybridMeasure.dirac(Grid(4, 1.0), 0.5)
        with pytest.raises(ValueError):
            mu.densities[0] = 1.0

    def test_total_variation(self):
        mu = HybridMeasure.from_density(Grid(10, 1.0), 1.0).with_atoms([0.3, 0.7], [0.5, 0.25])
        assert mu.total_variation() == pytest.approx(1.75, abs=1e-15)
        assert mu.scaled(2.0).total_variation() == pytest.approx(3.5, abs=1e-15)


class TestWeightedMass:
    def test_zero_measure(self):
        assert weighted_mass(HybridMeasure.zero(Grid(10, 1.0)), lambda x: x**2 + 1) == 0.0

    def test_single_atom(self):
        assert weighted_mass(HybridMeasure.dirac(Grid(10, 5.0), 1.0, 2.0), 1.0) == 2.0

    def test_midpoint_exact_for_linear(self):
        mu = HybridMeasure.from_density(Grid(10, 1.0), 1.0)
        assert weighted_mass(mu, lambda x: x) == pytest.approx(0.5, abs=1e-15)

    def test_sample_array_weight(self):
        g = Grid(10, 1.0)
        mu = HybridMeasure.from_density(g, 1.0).with_atoms([0.5], [1.0])
        assert weighted_mass(mu, g.centers) == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=30)
    @given(st.lists(st.floats(0, 5), min_size=8, max_size=8), st.floats(0, 3), st.floats(0.01, 0.99))
    def test_linear_and_monotone(self, dens, a, y):
        g = Grid(8, 1.0)
        mu = HybridMeasure(g, dens, [y], [1.0])
        nu = HybridMeasure(g, np.ones(8))
        w = lambda x: 1 + x
        lhs = weighted_mass(HybridMeasure(g, np.asarray(dens) + a * 1.0, [y], [1.0]), w)
        assert lhs == pytest.approx(weighted_mass(mu, w) + a * weighted_mass(nu, w), rel=1e-12, abs=1e-12)
        assert weighted_mass(mu, lambda x: 2 + x) >= weighted_mass(mu, w)


class TestTVPhi:
    def test_identical(self):
        g = Grid(10, 1.0)
        n = np.linspace(0, 1, 10)
        assert tv_phi_distance(HybridMeasure(g, n), n, np.ones(10)) == 0.0

    def test_pure_atom(self):
        g = Grid(10, 2.0)
        assert tv_phi_distance(HybridMeasure.dirac(g, 1.0), np.zeros(10), np.ones(10)) == 1.0

    def test_atom_against_steady_profile(self):
        grid, tr = triple_for(constant_coeffs(), 50)
        mu = HybridMeasure.dirac(grid, 1.0)
        phi = tr.weight()
        m0 = float(phi(1.0))
        expected = m0 + m0 * float((tr.phi * tr.N).sum() * grid.dx)
        assert tv_phi_distance(mu, m0 * tr.N, tr.phi) == pytest.approx(expected, rel=1e-14)

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_metric_on_ac_measures(self, seed):
        r = np.random.default_rng(seed)
        g = Grid(12, 3.0)
        phi = r.uniform(0.5, 2.0, 12)
        a, b, c = (r.uniform(0, 1, 12) for _ in range(3))
        d = lambda p, q: tv_phi_distance(HybridMeasure(g, p), q, phi)
        assert d(a, a) == 0.0 and d(a, b) > 0
        assert d(a, b) == pytest.approx(d(b, a), rel=1e-14)
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-14


class TestAbsorb:
    def test_moves_mass_into_cell(self):
        g = Grid(10, 10.0)
        mu = HybridMeasure.dirac(g, g.centers[5], 1.0)
        out = absorb_atom(mu, 0)
        assert out.n_atoms == 0
        assert out.densities[5] == pytest.approx(1.0 / g.dx)
        assert abs(out.total_variation() - mu.total_variation()) < 1e-14

    def test_weighted_change_bounded_by_lipschitz(self):
        grid, tr = triple_for(constant_coeffs(), 100)
        phi = tr.weight()
        y = 3.3
        mu = HybridMeasure.dirac(grid, y, 0.7)
        out = absorb_atom(mu, 0)
        lip = np.max(np.abs(np.diff(tr.phi))) / grid.dx
        assert abs(weighted_mass(out, phi) - weighted_mass(mu, phi)) <= lip * grid.dx * 0.7 + 1e-14

    def test_index_error(self):
        with pytest.raises(IndexError):
            absorb_atom(HybridMeasure.zero(Grid(4, 1.0)), 0)


def test_phi_weight_extrapolation():
    g = Grid(10, 1.0)
    w = PhiWeight(g, 2.0 * g.centers + 1.0)
    np.testing.assert_allclose(w([0.0, 0.5, 1.0]), [1.0, 2.0, 3.0], atol=1e-13)
    w0 = PhiWeight(g, np.linspace(1, 0, 10) ** 2 * 0 + 1.0, degree=0)
    assert w0(0.0) == 1.0
    assert PhiWeight(g, np.linspace(0.1, -0.9, 10))(1.0) == 0.0


def test_diagnostic_series():
    s = DiagnosticSeries([0.0, 1.0, 2.0], {"a": [1, 2, 3]})
    assert s.names == ["t", "a"] and s["a"].tolist() == [1, 2, 3]
    assert s.as_rows()[1] == (1.0, 2)
    with pytest.raises(DomainError):
        DiagnosticSeries([0.0, 0.0], {})
    with pytest.raises(DomainError):
        DiagnosticSeries([0.0, 1.0], {"a": [1]})
