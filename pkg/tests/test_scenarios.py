import glob
import json
import os
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condwco.errors import ConfigurationError, IntegrityError, InvalidInput
from condwco.measure_space import is_measurable
from condwco.scenarios import (
    LineExampleParams,
    ScenarioSpec,
    build_line_example,
    compare_line_table,
    dumps_canonical,
    exact_line_value,
    line_weight,
    run_scenario,
)
from condwco.transform import rn_derivative_n

DATA = os.path.join(os.path.dirname(__file__), "data")
CORPUS = sorted(glob.glob(os.path.join(DATA, "*.json")))


def tiny(**over):
    d = {
        "space": {"atoms": ["a", "b", "c"], "weights": [1, 0.5, 2]},
        "partition": {"A": [["a", "b"], ["c"]]},
        "subspace": "A",
        "phi": {"a": "b", "b": "c", "c": "a"},
        "u": {"a": 1, "b": 2, "c": -1},
        "p": 2,
        "schedules": [{"name": "s", "F": ["a", "b"], "n": [1, 2, 3]}],
        "analyses": [],
    }
    d.update(over)
    return d


@pytest.mark.parametrize("path", CORPUS, ids=os.path.basename)
def test_corpus_round_trip(path):
    with open(path) as fh:
        text = fh.read()
    spec = ScenarioSpec.loads(text).validate()
    assert spec.dumps() == text


@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=6),
    st.data(),
)
def test_round_trip_property(weights, data):
    n = len(weights)
    if not any(weights):
        weights[0] = 1.0
    ids = [f"x{i}" for i in range(n)]
    phi = data.draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    u = data.draw(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=n, max_size=n))
    spec = ScenarioSpec(
        atoms=ids, weights=weights, partitions={"A": [[i] for i in ids]}, subspace="A",
        phi={ids[i]: ids[j] for i, j in enumerate(phi)}, u=dict(zip(ids, u)), p=data.draw(st.floats(1, 5)),
    )
    text = spec.dumps()
    again = ScenarioSpec.loads(text)
    assert again.dumps() == text
    assert again.u == spec.u and again.weights == [float(w) for w in weights]


def test_canonical_emitter():
    assert dumps_canonical({"b": [1, 2.5], "a": {"z": None, "y": True}}) == (
        '{\n  "a": {\n    "y": true,\n    "z": null\n  },\n  "b": [1, 2.5]\n}'
    )
    assert dumps_canonical(0.1) == "0.10000000000000001"
    with pytest.raises(InvalidInput):
        dumps_canonical(float("nan"))


def test_integrity_errors_name_the_atom():
    bad = tiny(phi={"a": "b", "b": "zz", "c": "a"})
    with pytest.raises(IntegrityError, match="'zz'"):
        ScenarioSpec.from_dict(bad).validate()
    with pytest.raises(IntegrityError, match="'c'"):
        ScenarioSpec.from_dict(tiny(partition={"A": [["a", "b"]]})).validate()
    with pytest.raises(IntegrityError, match="'b'"):
        ScenarioSpec.from_dict(tiny(phi={"a": "b", "c": "a"})).validate()
    with pytest.raises(IntegrityError, match="unknown analysis"):
        ScenarioSpec.from_dict(tiny(analyses=["nope"])).validate()
    with pytest.raises(IntegrityError, match="unknown schedule"):
        ScenarioSpec.from_dict(tiny(analyses=[{"kind": "kitai_check", "schedule": "q"}])).validate()
    with pytest.raises(IntegrityError):
        ScenarioSpec.from_dict(tiny(space={"atoms": ["a", "b", "c"], "weights": [1, -1, 1]})).validate()
    with pytest.raises(InvalidInput, match="missing"):
        ScenarioSpec.from_dict({"space": {}})
    with pytest.raises(InvalidInput):
        ScenarioSpec.loads("{not json")


def test_empty_analysis_list(tmp_path):
    res = run_scenario(ScenarioSpec.from_dict(tiny()), tmp_path)
    assert sorted(res.files) == ["summary.json", "summary.txt"]
    assert json.loads((tmp_path / "summary.json").read_text())["analyses"] == {}


def test_horizon_caps_schedules(tmp_path):
    spec = ScenarioSpec.from_dict(tiny(analyses=[{"kind": "sufficient_quantities", "schedule": "s"}]))
    run_scenario(spec, tmp_path, horizon=2)
    lines = (tmp_path / "decay_sufficient_quantities.csv").read_text().splitlines()
    assert len(lines) == 3
    with pytest.raises(ConfigurationError):
        spec.schedule("s", horizon=0)


# -------------------------------------------------------------- line example


def small_line(**kw):
    params = LineExampleParams(**{"N": 192, "k_max": 8, **kw})
    return params, build_line_example(params)


def test_line_weight_oracle():
    for x in (Fraction(-3, 2), Fraction(-1), Fraction(-1, 2), Fraction(0), Fraction(1, 2), Fraction(1), Fraction(7, 4)):
        assert line_weight(float(x), 2.0) == float(exact_line_value(x, Fraction(2)))
    assert exact_line_value(Fraction(1, 2), Fraction(2)) == Fraction(3, 2)
    assert exact_line_value(Fraction(-1, 2), Fraction(2)) == 2


def test_line_even_part_at_half():
    # δ = 1/3 puts atoms at ±1/2
    params = LineExampleParams(N=36, delta=1 / 3, t=1.0, k_max=3)
    T = build_line_example(params).operator()
    x = params.grid()
    i = int(np.argmin(np.abs(x - 0.5)))
    j = int(np.argmin(np.abs(x + 0.5)))
    e = T.conditional_weight()
    assert x[i] == pytest.approx(0.5) and e[i] == pytest.approx(1.75, rel=1e-14) and e[j] == e[i]


def test_line_structure():
    params, spec = small_line()
    T = spec.operator()
    x = params.grid()
    e = T.conditional_weight()
    np.testing.assert_array_equal(e, e[::-1])
    np.testing.assert_allclose(e, (line_weight(x, 2) + line_weight(-x, 2)) / 2, rtol=1e-15)
    f = np.random.default_rng(0).normal(size=T.n)
    out = T(f)
    np.testing.assert_array_equal(out, out[::-1])
    assert is_measurable(out, T.A, tol=0.0)
    h = rn_derivative_n(T.phi, T.space, 1)
    s = params.step
    np.testing.assert_array_equal(h[s:-1], 1.0)
    assert h[:s].tolist() == [0.0] * s and h[-1] == s + 1


def test_line_config_errors():
    with pytest.raises(ConfigurationError, match="need L >= 21"):
        build_line_example(LineExampleParams(N=64, k_max=20))
    with pytest.raises(ConfigurationError, match="multiple"):
        build_line_example(LineExampleParams(N=512, t=0.3))
    with pytest.raises(ConfigurationError):
        build_line_example(LineExampleParams(N=512, r=1.0))


def test_line_schedule_shape():
    params, spec = small_line()
    sch = spec.schedule("line")
    assert sch.n == tuple(range(1, 9))
    assert spec.space().measure(sch.F) == pytest.approx(2 * params.a)
    assert sch.V[0] == frozenset()
    masses = [spec.space().measure(v) for v in sch.V]
    assert masses == sorted(masses)


def test_line_table_report():
    params, spec = small_line()
    cmp_ = compare_line_table(params, spec.operator())
    mid = cmp_.pieces["-1<x<1"]
    # computed middle piece is 2 - x^2, reference one 2 - x^2/2
    assert mid["max_abs_deviation"] == pytest.approx(mid["at_x"] ** 2 / 2)
    assert cmp_.even
    assert cmp_.q_with_table["rate1"] == pytest.approx(0.5, abs=0.01)
    assert cmp_.q_with_table["rate2"] == pytest.approx(0.5, abs=0.01)


def test_line_run_outputs(tmp_path):
    params = LineExampleParams(N=192, k_max=8)
    spec = build_line_example(params, analyses=["sufficient_quantities", "kitai_check"])
    res = run_scenario(spec, tmp_path)
    assert sorted(res.files) == ["decay_sufficient_quantities.csv", "kitai.csv", "summary.json", "summary.txt"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["analyses"]["sufficient_quantities"]["verdict"] in {"decays", "stalls", "undefined-at"}


def test_line_window_independence():
    from condwco.dynamics import sufficient_quantities

    a = build_line_example(LineExampleParams(N=192, k_max=8))
    b = build_line_example(LineExampleParams(N=384, k_max=8))
    ra = sufficient_quantities(a.operator(), a.schedule("line"))
    # atom indices shift by N between the two windows
    sb = b.schedule("line")
    rb = sufficient_quantities(b.operator(), sb)
    np.testing.assert_allclose(ra.q1, rb.q1, rtol=1e-12)
    np.testing.assert_allclose(ra.q2, rb.q2, rtol=1e-12)
    assert ra.mass_gap == rb.mass_gap


def test_line_witness_absent_when_computed_honestly():
    from condwco.dynamics import direct_sum, pair, transitivity_witness

    params, spec = small_line()
    T = spec.operator()
    chi = np.zeros(T.n)
    chi[list(spec.schedule("line").F)] = 1.0
    assert transitivity_witness(T, chi, 2 * chi, 0.5, 8) is None
    D = direct_sum(T)
    assert transitivity_witness(D, pair(chi, chi), pair(2 * chi, chi), 0.5, 8) is None


def test_line_subalgebra_not_invariant():
    _, spec = small_line()
    T = spec.operator()
    assert not T.valid
