from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _helpers import cond_exp_exact, random_partition, random_space
from condwco.conditional import CE_PROPERTIES, cond_exp, verify_ce_axioms
from condwco.measure_space import FiniteMeasureSpace, Partition, is_measurable


def test_cond_exp_example():
    sp = FiniteMeasureSpace.from_weights([1, 1, 1, 1])
    out = cond_exp([1, 3, 5, 7], Partition([[0, 1], [2, 3]]), sp)
    assert out.tolist() == [2, 2, 6, 6]


def test_null_block_is_zero_and_unit():
    sp = FiniteMeasureSpace.from_weights([0, 0, 2, 1])
    A = Partition([[0, 1], [2, 3]])
    assert cond_exp(np.ones(4), A, sp).tolist() == [0, 0, 1, 1]


def test_batch_matches_columns():
    rng = np.random.default_rng(1)
    sp = random_space(rng, 20)
    A = random_partition(rng, sp.n)
    F = rng.normal(size=(sp.n, 5))
    out = cond_exp(F, A, sp)
    for j in range(5):
        np.testing.assert_array_equal(out[:, j], cond_exp(F[:, j], A, sp))


@given(
    st.lists(st.integers(0, 4), min_size=1, max_size=10),
    st.data(),
)
def test_cond_exp_matches_rational_oracle(weights, data):
    n = len(weights)
    if not any(weights):
        weights[0] = 1
    labels = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    f = data.draw(st.lists(st.integers(-9, 9), min_size=n, max_size=n))
    sp = FiniteMeasureSpace.from_weights(weights)
    A = Partition.from_labels(labels)
    exact = cond_exp_exact(f, A.labels, weights)
    got = cond_exp(np.array(f, float), A, sp)
    for g, e in zip(got, exact):
        assert abs(Fraction(g) - e) <= Fraction(1, 10**12) * (1 + abs(e))


def test_discrete_partition_is_identity():
    rng = np.random.default_rng(2)
    sp = random_space(rng, 30)
    rep = verify_ce_axioms(sp, Partition.discrete(sp.n), 50, rng)
    assert rep.passed
    assert all(r.worst == 0.0 for r in rep.results.values())


def test_trivial_partition_is_mean():
    sp = FiniteMeasureSpace.from_weights([1, 2, 3])
    out = cond_exp([3, 0, 1], Partition.trivial(3), sp)
    np.testing.assert_allclose(out, [1.0, 1.0, 1.0])
    assert verify_ce_axioms(sp, Partition.trivial(3), 30, 0).passed


def test_report_shape():
    rng = np.random.default_rng(3)
    sp = random_space(rng, 16)
    rep = verify_ce_axioms(sp, random_partition(rng, sp.n), 200, rng)
    assert set(rep.results) == set(CE_PROPERTIES)
    assert rep.passed, rep.lines()
    assert len(rep.lines()) == len(CE_PROPERTIES)


def test_detects_broken_projection(monkeypatch):
    # a fake "conditional expectation" that drops mass must be caught
    import condwco.conditional as ce

    real = ce.cond_exp
    monkeypatch.setattr(ce, "cond_exp", lambda f, A, s: 0.9 * real(f, A, s))
    sp = FiniteMeasureSpace.from_weights([1, 1, 1, 1])
    rep = verify_ce_axioms(sp, Partition([[0, 1], [2, 3]]), 20, 0)
    assert not rep.results["unit"].passed
    assert not rep.results["averaging"].passed


@given(st.integers(0, 2**32 - 1))
def test_range_is_measurable(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, 24)
    A = random_partition(rng, sp.n)
    assert is_measurable(cond_exp(rng.normal(size=sp.n), A, sp), A, tol=0.0)
