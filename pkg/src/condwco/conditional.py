"""Conditional expectation onto a partition and randomized checks of its
standard properties."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInput
from .measure_space import (
    FiniteMeasureSpace,
    Partition,
    check_fn,
    integrate,
    is_measurable,
    lp_norm,
    support,
)

CE_TOL = 1e-10
CE_P_VALUES = (1.0, 1.5, 2.0, 3.0)


def cond_exp(f, A: Partition, space: FiniteMeasureSpace) -> np.ndarray:
    """Weighted block average of ``f`` over the blocks of ``A``.

    Null blocks get the value 0. A 2-d ``f`` is treated as a batch of
    column functions.
    """
    f = check_fn(f, space)
    if A.n != space.n:
        raise InvalidInput("partition and space have different atom counts")
    g = f if f.ndim == 2 else f[:, None]
    out = kernels.block_average(
        np.ascontiguousarray(g), space.weights, A.labels, A.n_blocks
    )
    return out if f.ndim == 2 else out[:, 0]


@dataclass
class PropertyResult:
    passed: bool = True
    worst: float = 0.0
    checks: int = 0

    def record(self, violation: float, tol: float):
        self.checks += 1
        self.worst = max(self.worst, float(violation))
        if not violation <= tol:
            self.passed = False


@dataclass
class CEReport:
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if r.passed else 'FAIL'} {name}: worst={r.worst:.3e} over {r.checks} checks"
            for name, r in self.results.items()
        ]

    def as_dict(self) -> dict:
        return {
            k: {"passed": r.passed, "worst": r.worst, "checks": r.checks}
            for k, r in self.results.items()
        }


CE_PROPERTIES = (
    "unit",
    "module",
    "jensen",
    "support_growth",
    "monotonicity",
    "positivity",
    "contractivity",
    "idempotence",
    "tower",
    "averaging",
    "measurability",
)


def random_function(rng, n: int, zero_fraction: float = 0.2) -> np.ndarray:
    f = rng.uniform(-2.0, 2.0, n)
    f[rng.random(n) < zero_fraction] = 0.0
    return f


def random_coarsening(rng, A: Partition) -> Partition:
    k = int(rng.integers(1, A.n_blocks + 1))
    return Partition.from_labels(rng.integers(0, k, A.n_blocks)[A.labels])


def verify_ce_axioms(
    space: FiniteMeasureSpace,
    A: Partition,
    sample_count: int,
    rng: np.random.Generator | int | None = None,
    p_values=CE_P_VALUES,
    tol: float = CE_TOL,
    report: CEReport | None = None,
) -> CEReport:
    """Randomized check of the conditional-expectation property list.

    Violations are measured relative to the scale of the sampled inputs.
    Support growth and range measurability are checked exactly. Passing an
    existing ``report`` accumulates into it.
    """
    if sample_count < 1:
        raise InvalidInput("sample_count must be >= 1")
    rng = np.random.default_rng(rng)
    report = report or CEReport()
    res = {name: report.results.setdefault(name, PropertyResult()) for name in CE_PROPERTIES}
    n = space.n
    live = A.block_masses(space)[A.labels] > 0

    E = lambda g: cond_exp(g, A, space)  # noqa: E731

    one = E(np.ones(n))
    res["unit"].record(np.abs(one[live] - 1.0).max(initial=0.0), tol)

    for _ in range(sample_count):
        f = random_function(rng, n)
        Ef = E(f)
        scale = 1.0 + np.abs(f).max()

        # module property needs an A-measurable multiplier
        g = rng.uniform(-2.0, 2.0, A.n_blocks)[A.labels]
        res["module"].record(np.abs(E(f * g) - Ef * g).max() / scale**2 / 3.0, tol)

        p = float(p_values[int(rng.integers(len(p_values)))])
        lhs = np.abs(Ef) ** p
        rhs = E(np.abs(f) ** p)
        res["jensen"].record(np.max(lhs - rhs, initial=0.0) / scale**p, tol)

        fp = np.abs(f)
        Efp = E(fp)
        grown = support(fp, tol=0.0) - support(Efp, tol=0.0)
        missed = [a for a in grown if live[a] and space.weights[a] > 0]
        res["support_growth"].record(float(len(missed)), 0.0)
        res["positivity"].record(np.max(-Efp, initial=0.0) / scale, tol)

        h = f + np.abs(random_function(rng, n))
        res["monotonicity"].record(np.max(Ef - E(h), initial=0.0) / scale, tol)

        res["contractivity"].record(
            max(lp_norm(Ef, p, space) - lp_norm(f, p, space), 0.0) / scale, tol
        )
        res["idempotence"].record(np.abs(E(Ef) - Ef).max() / scale, tol)

        B = random_coarsening(rng, A)
        res["tower"].record(
            np.abs(cond_exp(Ef, B, space) - cond_exp(f, B, space)).max() / scale, tol
        )

        worst = 0.0
        for block in A.blocks:
            worst = max(worst, abs(integrate(Ef, block, space) - integrate(f, block, space)))
        res["averaging"].record(worst / (scale * space.total_mass), tol)

        res["measurability"].record(0.0 if is_measurable(Ef, A, tol=0.0) else 1.0, 0.0)
    return report
