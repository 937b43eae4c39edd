from __future__ import annotations

import json
from pathlib import Path

import pytest

from growfrag import load_scenario, parse_scenario
from growfrag.errors import ScenarioError

MINIMAL = {
    "grid": {"M": 100, "x_max": 10.0},
    "coefficients": {
        "growth": {"kind": "constant", "value": 1.0},
        "division": {"kind": "power", "coeff": 1.0, "exponent": 0.0},
        "kernel": {"kind": "uniform"},
    },
    "initial": {"density": {"kind": "gaussian", "amplitude": 1.0, "center": 2.0, "width": 0.5}},
}
SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("*.json"))


def doc(**changes):
    d = json.loads(json.dumps(MINIMAL))
    for path, value in changes.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return json.dumps(d)


def test_minimal_document_gets_defaults():
    sc = parse_scenario(doc())
    assert sc.solver.cfl == 0.5
    assert sc.solver.atom_absorb_threshold == 1e-12
    assert sc.solver.boundary_mass_limit == 1e-6
    assert sc.solver.t_end == 10.0
    assert [e.family for e in sc.entropy] == ["pseudo_huber"] and not sc.entropy[0].resolved
    assert sc.tolerances["conservation_drift"] == 1e-2
    assert sc.coefficients.B(3.0) == 1.0
    assert sc.study_levels() == (25, 50, 100, 200)


def test_negative_atom_mass_is_located():
    with pytest.raises(ScenarioError, match=r"initial\.atoms\[0\]\.mass"):
        parse_scenario(doc(initial__atoms=[{"position": 1.0, "mass": -1}]))


def test_duplicate_key():
    text = '{"grid": {"M": 10, "M": 20, "x_max": 1}, "coefficients": {}, "initial": {}}'
    with pytest.raises(ScenarioError, match="duplicate"):
        parse_scenario(text)


@pytest.mark.parametrize("changes, where", [
    ({"solver__cfl": 1.5}, "solver.cfl"),
    ({"solver__speed": 1}, "solver.speed"),
    ({"grid__M": 1}, "grid.M"),
    ({"grid__M": 10.5}, "grid.M"),
    ({"coefficients__growth": {"kind": "constant", "value": 1, "extra": 2}}, "coefficients.growth.extra"),
    ({"coefficients__kernel": {"kind": "binary"}}, "coefficients.kernel.kind"),
    ({"initial__atoms": [{"position": 11.0, "mass": 1}]}, r"initial.atoms\[0\].position"),
    ({"initial__density": {"kind": "affine", "intercept": -1, "slope": 0}}, "initial.density"),
    ({"entropy": [{"family": "kl"}]}, r"entropy\[0\].family"),
    ({"output__tolerances": {"speed": 1}}, "output.tolerances.speed"),
    ({"study__refinements": [100, "x"]}, r"study.refinements\[1\]"),
])
def test_path_qualified_errors(changes, where):
    with pytest.raises(ScenarioError, match=where):
        parse_scenario(doc(**changes))


@pytest.mark.parametrize("text", ["{", "[]", '{"grid": {"M": 10, "x_max": NaN}, "coefficients": {}, "initial": {}}'])
def test_malformed(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_missing_block():
    d = json.loads(doc())
    del d["initial"]
    with pytest.raises(ScenarioError, match="initial"):
        parse_scenario(json.dumps(d))


def test_eigen_initial_and_self_similar_kernel():
    sc = parse_scenario(doc(initial__density={"kind": "primal_eigenfunction", "scale": 2.0},
                            coefficients__kernel={"kind": "self_similar", "profile": {"kind": "beta", "a": 2}}))
    assert sc.initial.needs_eigen and sc.initial.eigen_scale == 2.0
    with pytest.raises(ScenarioError):
        sc.initial.build(sc.grid)


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    sc = load_scenario(path)
    assert sc.name == path.stem
