"""Weighted composition operators ``uC_φ`` and their conditional versions
``T_u f = E^A(u · f∘φ)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .conditional import cond_exp
from .errors import (
    DivisionDomainError,
    DomainError,
    InvalidInput,
    UnsupportedOperation,
)
from .measure_space import (
    FiniteMeasureSpace,
    Partition,
    check_fn,
    is_coarser,
    is_measurable,
    lp_norm,
)
from .transform import BackwardMap, Transformation, is_nonsingular, pullback_partition

POWER_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConditionalWCO:
    """The bundle ``(u, φ, A, p)`` on a finite measure space.

    ``valid`` records whether ``φ^{-1}A ⊆ A``; closed-form powers and the
    periodic orbit bound depend on it.
    """

    u: np.ndarray
    phi: Transformation
    A: Partition
    p: float
    space: FiniteMeasureSpace
    valid: bool = field(init=False)

    def __post_init__(self):
        u = check_fn(self.u, self.space).copy()
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if self.phi.n != self.space.n or self.A.n != self.space.n:
            raise InvalidInput("u, φ, A and the space must share one atom set")
        if not (np.isfinite(self.p) and self.p >= 1):
            raise InvalidInput("p must be finite and >= 1")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(
            self, "valid", is_coarser(pullback_partition(self.phi, self.A), self.A)
        )

    @property
    def n(self) -> int:
        return self.space.n

    def __call__(self, f):
        return apply_T(self, f)

    def with_weight(self, u) -> "ConditionalWCO":
        return ConditionalWCO(np.asarray(u, dtype=float), self.phi, self.A, self.p, self.space)

    def conditional_weight(self) -> np.ndarray:
        """``E^A(u)``."""
        return cond_exp(self.u, self.A, self.space)

    def norm(self, f) -> float:
        return lp_norm(f, self.p, self.space)


@dataclass(frozen=True)
class Cocycle:
    n: int
    w: np.ndarray


def apply_wco(u, phi: Transformation, f) -> np.ndarray:
    """``u · f∘φ`` pointwise (columns of a 2-d ``f`` are separate functions)."""
    f = np.asarray(f, dtype=float)
    u = np.asarray(u, dtype=float)
    return (u if f.ndim == 1 else u[:, None]) * f[phi.image]


def _batch(f, n):
    f = np.asarray(f, dtype=float)
    if f.shape[:1] != (n,):
        raise InvalidInput(f"function has {f.shape[:1]} values, expected {n}")
    return np.ascontiguousarray(f if f.ndim == 2 else f[:, None]), f.ndim == 1


def apply_T(T: ConditionalWCO, f) -> np.ndarray:
    return iterate(T, 1, f)


def iterate(T: ConditionalWCO, n: int, f) -> np.ndarray:
    """``T^n f`` by n-fold application; no structural precondition."""
    if n < 0:
        raise InvalidInput("n must be >= 0")
    g, flat = _batch(f, T.n)
    out = kernels.iterate_T(T.u, T.phi.image, T.space.weights, T.A.labels, T.A.n_blocks, g, n)
    return out[:, 0] if flat else out


def cocycle(T: ConditionalWCO, n: int) -> Cocycle:
    """``w_n = ∏_{i<n} E^A(u)∘φ^i``."""
    if n < 0:
        raise InvalidInput("n must be >= 0")
    w = kernels.cocycle(T.conditional_weight(), T.phi.image, n)
    w.setflags(write=False)
    return Cocycle(n, w)


def T_power_closed(T: ConditionalWCO, n: int, f, form: str = "general") -> np.ndarray:
    """Closed forms of ``T^n f`` valid when ``φ^{-1}A ⊆ A``.

    ``general``: ``w_{n-1} · (E^A(u f∘φ))∘φ^{n-1}``;
    ``measurable`` (A-measurable f only): ``w_n · f∘φ^n``.
    """
    if not T.valid:
        raise UnsupportedOperation("closed forms need φ^-1 A ⊆ A")
    f = check_fn(f, T.space)
    if n == 0:
        return f.copy()
    if form == "measurable":
        if not is_measurable(f, T.A):
            raise InvalidInput("the measurable closed form needs an A-measurable f")
        return cocycle(T, n).w * T.phi.compose_fn(f, n)
    if form == "general":
        first = cond_exp(apply_wco(T.u, T.phi, f), T.A, T.space)
        return cocycle(T, n - 1).w * T.phi.compose_fn(first, n - 1)
    raise InvalidInput(f"unknown closed form {form!r}")


def T_power(T: ConditionalWCO, n: int, f, check: bool = True) -> np.ndarray:
    """``T^n f`` iteratively, cross-checked against the closed form."""
    if not T.valid:
        raise UnsupportedOperation("T_power needs φ^-1 A ⊆ A")
    out = iterate(T, n, f)
    if check and np.ndim(f) == 1:
        ref = T_power_closed(T, n, f, "general")
        scale = max(np.abs(out).max(initial=0.0), np.abs(ref).max(initial=0.0))
        if np.abs(out - ref).max(initial=0.0) > POWER_RTOL * scale:
            raise RuntimeError(f"iterative and closed-form T^{n} disagree")
    return out


def _atomic_J(u, phi, p, space):
    ok, _ = is_nonsingular(phi, space)
    if not ok:
        raise DomainError("φ is singular: μ∘φ^-1 charges a null atom")
    mass = kernels.preimage_mass(phi.image, space.weights * np.abs(u) ** p)
    J = np.zeros(space.n)
    pos = space.positive
    J[pos] = mass[pos] / space.weights[pos]
    return J


def bound_J(T: ConditionalWCO):
    """``J(b) = Σ_{φ(a)=b} μ(a)|u(a)|^p / μ(b)`` and ``‖J‖_∞^{1/p}``."""
    J = _atomic_J(T.u, T.phi, T.p, T.space)
    return J, float(J.max(initial=0.0) ** (1.0 / T.p))


def wco_norm_exact(u, phi: Transformation, p: float, space: FiniteMeasureSpace) -> float:
    """Exact ``‖uC_φ‖`` on ``L^p``: disjointly supported pieces make the
    single-atom functions extremal."""
    u = check_fn(u, space)
    return float(_atomic_J(u, phi, p, space).max(initial=0.0) ** (1.0 / p))


def literal_J(T: ConditionalWCO, sigma: str = "pullback") -> np.ndarray:
    """``h · E(|u|^p)∘φ^{-1}`` evaluated pointwise.

    ``sigma="pullback"`` conditions on ``φ^{-1}Σ``; ``sigma="A"`` uses the
    operator's own partition. Needs φ invertible on positive atoms.
    """
    back = BackwardMap(T.phi, T.space)
    if not back.invertible:
        raise UnsupportedOperation("the literal J needs φ invertible on positive atoms")
    _, h = is_nonsingular(T.phi, T.space)
    if sigma == "pullback":
        part = pullback_partition(T.phi, Partition.discrete(T.n))
    elif sigma == "A":
        part = T.A
    else:
        raise InvalidInput("sigma must be 'pullback' or 'A'")
    inner = cond_exp(np.abs(T.u) ** T.p, part, T.space)
    return h * back.pull(inner, 1)


def compare_J_forms(T: ConditionalWCO) -> dict:
    """Atomic J versus the literal form conditioned on A."""
    J, bound = bound_J(T)
    out = {"atomic_sup": float(J.max(initial=0.0)), "bound": bound}
    try:
        JA = literal_J(T, "A")
    except UnsupportedOperation as exc:
        out.update(literal_A_sup=None, max_abs_diff=None, note=str(exc))
        return out
    out.update(
        literal_A_sup=float(JA.max(initial=0.0)),
        max_abs_diff=float(np.abs(JA - J).max(initial=0.0)),
    )
    return out


def matrix_of(T: ConditionalWCO) -> np.ndarray:
    """Dense matrix ``M`` with ``T f = M f``."""
    return iterate(T, 1, np.eye(T.n))


def matrix_text(T: ConditionalWCO) -> str:
    """Row-major text dump: a header line ``n n`` then one row per line."""
    M = matrix_of(T)
    rows = [" ".join("%.17g" % v for v in row) for row in M]
    return "\n".join([f"{T.n} {T.n}"] + rows) + "\n"


def spectral_norm_p2(T: ConditionalWCO) -> float:
    """Exact ``‖T‖`` on ``L^2(μ)`` (restricted to positive atoms)."""
    pos = T.space.positive
    M = matrix_of(T)[np.ix_(pos, pos)]
    s = np.sqrt(T.space.weights[pos])
    return float(np.linalg.norm(s[:, None] * M / s[None, :], 2))


def _ratio(T, F):
    num = np.array([lp_norm(c, T.p, T.space) for c in iterate(T, 1, F).T])
    den = np.array([lp_norm(c, T.p, T.space) for c in F.T])
    ok = den > 0
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def _dual(v, p, weights):
    # gradient direction of ||v||_{p,mu}^p up to scale
    return weights * np.sign(v) * np.abs(v) ** (p - 1)


def t_norm_lower_bound(
    T: ConditionalWCO,
    trials: int,
    rng=None,
    ascent_steps: int = 2000,
) -> float:
    """Best ``‖Tf‖_p / ‖f‖_p`` over random functions, block and single-atom
    indicators, refined by a p-norm power ascent (Boyd's iteration).

    Every value returned is attained by an explicit f, so it never
    exceeds the true norm.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    rng = np.random.default_rng(rng)
    n, p, w = T.n, T.p, T.space.weights
    pos = T.space.positive
    cands = [np.eye(n)[:, pos]]
    cands.append((T.A.labels[:, None] == np.arange(T.A.n_blocks)[None, :]).astype(float))
    cands.append(rng.normal(size=(n, trials)))
    F = np.concatenate(cands, axis=1)
    F[~pos] = 0.0
    ratios = _ratio(T, F)
    best = float(ratios.max(initial=0.0))
    if best == 0.0 or p == 1.0:
        return best

    M = matrix_of(T)
    q = p / (p - 1.0)
    starts = np.argsort(ratios)[::-1][:4]
    for j in starts:
        x = F[:, j].copy()
        prev = -1.0
        for _ in range(ascent_steps):
            y = M @ x
            if not np.any(y):
                break
            # ascent on ||Mx||/||x||: x <- dual_q(M^T dual_p(Mx)) in mu-weighted form
            g = M.T @ _dual(y, p, w)
            z = np.zeros(n)
            z[pos] = g[pos] / w[pos]
            x = np.sign(z) * np.abs(z) ** (q - 1.0)
            x[~pos] = 0.0
            nx = lp_norm(x, p, T.space)
            if nx == 0:
                break
            x /= nx
            r = lp_norm(M @ x, p, T.space)
            best = max(best, r)
            if abs(r - prev) <= 1e-15 * max(r, 1.0):
                break
            prev = r
    return float(best)


def right_inverse_D(T: ConditionalWCO, f, n: int) -> np.ndarray:
    """``f_n = (f∘φ^{-n}) / (w_n∘φ^{-n})`` so that ``T^n f_n = f``.

    Only the backward orbit of ``support(f)`` is used, so φ need only be
    invertible along it. Raises ``UnsupportedOperation`` where φ^n is not
    injective on the support and ``DivisionDomainError`` at a zero of
    ``E^A(u)`` on a forward orbit of the support.
    """
    f = check_fn(f, T.space)
    if n < 0:
        raise InvalidInput("n must be >= 0")
    if n == 0:
        return f.copy()
    supp = np.flatnonzero((f != 0) & T.space.positive)
    out = np.zeros(T.n)
    if supp.size == 0:
        return out
    phin = T.phi.power(n).image
    targets = phin[supp]
    back = BackwardMap(T.phi, T.space)
    pts = back.points(n, where=targets)
    bad = pts[targets] != supp
    if bad.any():
        x = int(supp[np.flatnonzero(bad)[0]])
        raise UnsupportedOperation(f"φ^{n} is not invertible at the image of atom {x}")
    w = cocycle(T, n).w
    zero = w[supp] == 0
    if zero.any():
        x = int(supp[np.flatnonzero(zero)[0]])
        e = T.conditional_weight()
        a = x
        for _ in range(n):
            if e[a] == 0:
                break
            a = int(T.phi.image[a])
        raise DivisionDomainError(f"E^A(u) vanishes at atom {a} on the orbit of atom {x}", atom=a)
    out[targets] = f[supp] / w[supp]
    return out


def right_inverse_batch(T: ConditionalWCO, F, n: int) -> np.ndarray:
    """Column-wise ``right_inverse_D`` for a 2-d batch.

    Columns share one index computation when the union of their supports
    is admissible; otherwise each column is handled on its own.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise InvalidInput("right_inverse_batch needs a 2-d batch")
    union = np.any(F != 0, axis=1).astype(float)
    try:
        right_inverse_D(T, union, n)
    except (UnsupportedOperation, DomainError):
        return np.stack([right_inverse_D(T, F[:, j], n) for j in range(F.shape[1])], axis=1)
    if n == 0:
        return F.copy()
    supp = np.flatnonzero((union != 0) & T.space.positive)
    out = np.zeros_like(F)
    w = cocycle(T, n).w
    out[T.phi.power(n).image[supp]] = F[supp] / w[supp, None]
    return out
