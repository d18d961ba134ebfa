"""Acceptance criteria. The terminal summary prints one PASS/FAIL line per
criterion (see conftest.py)."""
import glob
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from _helpers import (
    invariant_refinement,
    nonsingular_map,
    random_partition,
    random_space,
    valid_operator,
    weighted_composition_matrix,
    weighted_spectral_norm,
)
from condwco.conditional import CEReport, verify_ce_axioms
from condwco.dynamics import (
    CriterionSchedule,
    kitai_check,
    periodic_orbit_bound,
    sufficient_quantities,
    transitivity_witness,
)
from condwco.measure_space import FiniteMeasureSpace, Partition, lp_norm, simple_net
from condwco.operators import (
    ConditionalWCO,
    T_power_closed,
    bound_J,
    cocycle,
    iterate,
    right_inverse_batch,
    wco_norm_exact,
)
from condwco.scenarios import LineExampleParams, ScenarioSpec, build_line_example, line_schedule_atoms, run_scenario
from condwco.transform import Transformation, change_of_variables_sides

DATA = os.path.join(os.path.dirname(__file__), "data")


# 1 ------------------------------------------------------------------------


def test_criterion_1_conditional_expectation_axioms():
    rng = np.random.default_rng(101)
    report = CEReport()
    start = time.perf_counter()
    for _ in range(1000):
        space = random_space(rng, 64)
        A = random_partition(rng, space.n)
        verify_ce_axioms(space, A, 5, rng, report=report)
    elapsed = time.perf_counter() - start
    print("\n".join(report.lines()), f"\nruntime {elapsed:.2f}s")
    assert report.passed, report.lines()
    for name in ("support_growth", "measurability"):
        assert report.results[name].worst == 0.0
    assert elapsed <= 10.0


# 2 ------------------------------------------------------------------------


def _exhaustive_single_atom_sup(u, image, weights, p):
    """max over atoms b of ||uC_φ χ_b||^p / ||χ_b||^p, in exact arithmetic."""
    best = Fraction(0)
    for b, wb in enumerate(weights):
        if wb == 0:
            continue
        num = sum(Fraction(int(weights[a])) * abs(Fraction(int(u[a]))) ** p for a in range(len(u)) if image[a] == b)
        best = max(best, num / Fraction(int(wb)))
    return best


def test_criterion_2_norm_identity():
    rng = np.random.default_rng(202)
    worst_rel = 0.0
    for i in range(200):
        p = (1, 2, 3)[i % 3]
        space = random_space(rng, 12, zeros=True, integer=True)
        phi = nonsingular_map(rng, space)
        u = rng.integers(-4, 5, space.n).astype(float)
        T = ConditionalWCO(u, phi, Partition.discrete(space.n), p, space)
        J, bound = bound_J(T)
        exact = _exhaustive_single_atom_sup(u, phi.image, space.weights, p)
        assert float(J.max(initial=0.0)) == float(exact)
        assert wco_norm_exact(u, phi, p, space) ** p == pytest.approx(float(exact), rel=1e-14)
        if p == 2:
            M = weighted_composition_matrix(u, phi.image, space.n)
            spec = weighted_spectral_norm(M, space.weights)
            rel = abs(spec - bound) / max(bound, 1e-300)
            worst_rel = max(worst_rel, rel if bound else spec)
    print(f"worst relative gap to the spectral norm: {worst_rel:.2e}")
    assert worst_rel <= 1e-8


# 3 ------------------------------------------------------------------------


def _cov_exact(image, weights, f, S, n):
    img = list(range(len(image)))
    for _ in range(n):
        img = [image[a] for a in img]
    w = [Fraction(int(x)) for x in weights]
    f = [Fraction(int(x)) for x in f]
    S = set(S)
    lhs = sum(w[a] * f[img[a]] for a in range(len(w)) if img[a] in S)
    mass = [Fraction(0)] * len(w)
    for a, b in enumerate(img):
        mass[b] += w[a]
    rhs = sum((mass[b] / w[b]) * w[b] * f[b] for b in S if w[b] > 0)
    return lhs, rhs


def test_criterion_3_change_of_variables():
    rng = np.random.default_rng(303)
    worst = 0.0
    for i in range(500):
        space = random_space(rng, 20, zeros=True, integer=True)
        phi = nonsingular_map(rng, space)
        n = int(rng.integers(0, 11))
        S = np.flatnonzero(rng.random(space.n) < 0.5)
        rational = i < 50
        f = rng.integers(-9, 10, space.n).astype(float) if rational else rng.normal(size=space.n)
        lhs, rhs = change_of_variables_sides(phi, space, f, S, n)
        scale = 1.0 + np.abs(f).max() * space.total_mass
        worst = max(worst, abs(lhs - rhs) / scale)
        if rational:
            el, er = _cov_exact(phi.image, space.weights, f, S, n)
            assert el == er
            assert abs(Fraction(lhs) - el) <= Fraction(1e-12) * Fraction(scale)
            assert abs(Fraction(rhs) - er) <= Fraction(1e-12) * Fraction(scale)
    print(f"worst scaled discrepancy {worst:.2e}")
    assert worst <= 1e-12


# 4 ------------------------------------------------------------------------


def test_criterion_4_cocycle_and_closed_forms():
    rng = np.random.default_rng(404)
    worst = 0.0
    for i in range(100):
        space = random_space(rng, 16)
        phi = nonsingular_map(rng, space)
        if i % 2:
            A = invariant_refinement(phi, random_partition(rng, space.n, 3))
        else:
            A = Partition.from_labels(phi.power(int(rng.integers(0, 4))).image)
        T = ConditionalWCO(rng.uniform(-2, 2, space.n), phi, A, 2.0, space)
        assert T.valid
        for _ in range(3):
            m, n = (int(x) for x in rng.integers(0, 26, 2))
            lhs = cocycle(T, m + n).w
            rhs = cocycle(T, n).w * phi.compose_fn(cocycle(T, m).w, n)
            worst = max(worst, np.abs(lhs - rhs).max() / max(np.abs(lhs).max(), 1e-300))
        f = rng.normal(size=space.n)
        g = rng.normal(size=A.n_blocks)[A.labels]
        for n in (0, 1, 2, 7, 20, 50):
            for form, h in (("general", f), ("measurable", g)):
                it = iterate(T, n, h)
                cf = T_power_closed(T, n, h, form)
                scale = max(np.abs(it).max(), np.abs(cf).max(), 1e-300)
                worst = max(worst, np.abs(it - cf).max() / scale)
    print(f"worst relative deviation {worst:.2e}")
    assert worst <= 1e-9


# 5 ------------------------------------------------------------------------


def test_criterion_5_periodic_bound():
    rng = np.random.default_rng(505)
    worst_slack = np.inf
    done = 0
    while done < 100:
        space = random_space(rng, 12, zeros=False)
        phi = Transformation(rng.permutation(space.n))
        A = invariant_refinement(phi, random_partition(rng, space.n, int(rng.integers(1, 4))))
        T = ConditionalWCO(rng.uniform(-2, 2, space.n), phi, A, float(rng.choice([1, 2, 3])), space)
        m = int(np.lcm.reduce(phi.cycle_lengths()))
        wm = np.abs(cocycle(T, m).w).max()
        if wm == 0 or m > 1000:
            continue
        T = T.with_weight(T.u / wm ** (1.0 / m))
        f = rng.normal(size=A.n_blocks)[A.labels]
        res = periodic_orbit_bound(T, f, 200)
        norms = [lp_norm(v, T.p, space) for v in (iterate(T, k, f) for k in range(201))]
        slack = min(res.bound - x for x in norms) / max(res.bound, 1e-300)
        worst_slack = min(worst_slack, slack)
        assert res.verified
        done += 1
    assert worst_slack >= -1e-9

    # isometries: |u| = 1 on a measure-preserving permutation, discrete A
    cases = 0
    for n in (2, 3, 4, 5, 6, 7, 8, 9, 10, 12):
        space = FiniteMeasureSpace.from_weights(np.ones(n))
        phi = Transformation(np.roll(np.arange(n), -(n // 3 or 1)))
        u = np.where(np.arange(n) % 2, -1.0, 1.0)
        T = ConditionalWCO(u, phi, Partition.discrete(n), 2, space)
        U = np.eye(n)[0]
        V = 3.0 * np.eye(n)[n - 1]
        eps = 0.1 * lp_norm(U - V, 2, space)
        assert transitivity_witness(T, U, V, eps, 500) is None
        cases += 1
    print(f"worst relative slack {worst_slack:.2e}; {cases} isometric cases absent")
    assert cases == 10


# 6 ------------------------------------------------------------------------


def test_criterion_6_right_inverse():
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(50):
        T = valid_operator(rng, 12, positive_u=True, permutation=True)
        net = np.stack(list(simple_net(T.A, (-1.0, 0.0, 1.0), 2)), axis=1)
        for n in range(31):
            X = right_inverse_batch(T, net, n)
            back = iterate(T, n, X)
            worst = max(worst, np.abs(back - net).max())
    print(f"worst deviation {worst:.2e}")
    assert worst <= 1e-9


# 7 ------------------------------------------------------------------------

LINE = LineExampleParams(N=4096, delta=2.0**-4, t=1.0, r=2.0, p=2.0, a=1.0, k_max=20)


@pytest.fixture(scope="module")
def line_run():
    start = time.perf_counter()
    spec = build_line_example(LINE)
    T = spec.operator()
    sch = spec.schedule("line")
    suff = sufficient_quantities(T, sch)
    kit = kitai_check(T, sch)
    return {"spec": spec, "T": T, "schedule": sch, "suff": suff, "kitai": kit,
            "elapsed": time.perf_counter() - start}


def test_criterion_7_rates(line_run):
    rep = line_run["suff"]
    print(f"rate1={rep.rate1} rate2={rep.rate2} verdict={rep.verdict}")
    assert rep.rate1 is not None and rep.rate1 <= 0.55
    assert rep.rate2 is not None and rep.rate2 <= 0.55
    assert rep.verdict == "decays"


def test_criterion_7_mass_gap(line_run):
    rep = line_run["suff"]
    space = line_run["T"].space
    x = LINE.grid()
    for k, n, gap in zip(rep.k, rep.n_k, rep.mass_gap):
        F, _ = line_schedule_atoms(LINE, k, n)
        safe = (x + n * LINE.t <= LINE.L) & (x - n * LINE.t >= -LINE.L)
        correction = space.measure([a for a in F if not safe[a]])
        assert gap <= 4.0 / k + correction + 1e-12, (k, gap)


def test_criterion_7_kitai(line_run):
    kit = line_run["kitai"]
    print(f"kitai verdict={kit.verdict} bullets={kit.bullets}")
    assert kit.verdict == "criterion-consistent"


def test_criterion_7_window_doubling(line_run):
    big = build_line_example(LineExampleParams(**{**LINE.__dict__, "N": 2 * LINE.N}))
    rep = sufficient_quantities(big.operator(), big.schedule("line"))
    small = line_run["suff"]
    for a, b in ((small.q1, rep.q1), (small.q2, rep.q2)):
        a, b = np.array(a), np.array(b)
        assert np.all(np.abs(a - b) <= 1e-12 * np.maximum(1.0, np.abs(a)))


def test_criterion_7_runtime(line_run):
    print(f"line example runtime {line_run['elapsed']:.2f}s")
    assert line_run["elapsed"] <= 60.0


# 8 ------------------------------------------------------------------------


def _random_rings(rng, count):
    for _ in range(count):
        n = int(rng.integers(8, 40))
        space = FiniteMeasureSpace.from_weights(np.ones(n))
        cut = int(rng.integers(1, n))
        u = np.where(np.arange(n) < cut, rng.uniform(0.2, 1.2), rng.uniform(0.8, 3.0))
        u = u * rng.uniform(0.9, 1.1, n) if rng.random() < 0.5 else u
        step = int(rng.integers(1, 3))
        block = 2 if step == 2 and n % 2 == 0 and rng.random() < 0.5 else 1
        A = Partition.from_labels(np.arange(n) // block)
        T = ConditionalWCO(u, Transformation((np.arange(n) + step) % n), A, float(rng.choice([1, 2, 3])), space)
        F = {cut - cut % block}
        F |= {a + 1 for a in F} if block == 2 else set()
        yield T, CriterionSchedule(frozenset(F), tuple(range(1, min(n // (2 * step), 15) + 1)))


def test_criterion_8_consistency(tmp_path):
    checked = nonvacuous = 0
    for path in sorted(glob.glob(os.path.join(DATA, "*.json"))):
        spec = ScenarioSpec.load(path)
        res = run_scenario(spec, tmp_path / os.path.basename(path))
        for sched in spec.schedules:
            sch = spec.schedule(sched["name"])
            T = spec.operator()
            suff = sufficient_quantities(T, sch)
            kit = kitai_check(T, sch)
            checked += 1
            if suff.verdict == "decays" and suff.hypotheses_pass:
                nonvacuous += 1
                assert kit.consistent, (path, kit.witness)
        assert res.summary["analyses"] is not None
    rng = np.random.default_rng(808)
    for T, sch in _random_rings(rng, 150):
        suff = sufficient_quantities(T, sch)
        checked += 1
        if suff.verdict == "decays" and suff.hypotheses_pass:
            nonvacuous += 1
            kit = kitai_check(T, sch)
            assert kit.consistent, kit.witness
    print(f"{checked} instances checked, {nonvacuous} with the premise satisfied")
    assert nonvacuous >= 1


# 9 ------------------------------------------------------------------------


def test_criterion_9_documented_scope():
    readme = open(os.path.join(os.path.dirname(__file__), "..", "README.md")).read().lower()
    assert "finite-dimensional" in readme and "hypercyclic" in readme
