"""Measurable self-maps of a finite atom set and their Radon-Nikodym
machinery."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import kernels
from .errors import DomainError, InvalidInput, UnsupportedOperation
from .measure_space import (
    FiniteMeasureSpace,
    Partition,
    as_mask,
    check_fn,
)

CHAIN_TOL = 1e-10


class Transformation:
    """A total map on atom indices ``0..n-1``; immutable."""

    __slots__ = ("image",)

    def __init__(self, image):
        img = np.array(image, dtype=np.intp, copy=True)
        if img.ndim != 1 or img.size == 0:
            raise InvalidInput("image must be a nonempty 1-d sequence")
        if img.min() < 0 or img.max() >= img.size:
            raise InvalidInput("image points outside the atom set")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    def __setattr__(self, name, value):
        raise AttributeError("Transformation is immutable")

    @classmethod
    def identity(cls, n: int) -> "Transformation":
        return cls(np.arange(n))

    @classmethod
    def cycle(cls, n: int, shift: int = 1) -> "Transformation":
        return cls((np.arange(n) + shift) % n)

    @property
    def n(self) -> int:
        return self.image.size

    def __eq__(self, other):
        if not isinstance(other, Transformation):
            return NotImplemented
        return np.array_equal(self.image, other.image)

    def __hash__(self):
        return hash(self.image.tobytes())

    def __repr__(self):
        return f"Transformation({self.image.tolist() if self.n <= 16 else '...'})"

    def then(self, other: "Transformation") -> "Transformation":
        """``other ∘ self``: apply ``self`` first."""
        return Transformation(other.image[self.image])

    def power(self, k: int) -> "Transformation":
        if k < 0:
            raise InvalidInput("negative powers need inverse(); use backward maps")
        result = np.arange(self.n)
        base = self.image
        while k:
            if k & 1:
                result = base[result]
            base = base[base]
            k >>= 1
        return Transformation(result)

    def compose_fn(self, f, k: int = 1) -> np.ndarray:
        """``f ∘ φ^k``."""
        f = np.asarray(f, dtype=float)
        return f[self.power(k).image] if k != 1 else f[self.image]

    def preimage(self, S) -> np.ndarray:
        return as_mask(S, self.n)[self.image]

    def image_of(self, S) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.image[as_mask(S, self.n)]] = True
        return out

    def is_injective(self) -> bool:
        return np.unique(self.image).size == self.n

    is_permutation = is_injective

    def inverse(self) -> "Transformation":
        if not self.is_permutation():
            raise UnsupportedOperation("map is not invertible")
        inv = np.empty(self.n, dtype=np.intp)
        inv[self.image] = np.arange(self.n)
        return Transformation(inv)

    def cycle_lengths(self) -> list[int]:
        if not self.is_permutation():
            raise UnsupportedOperation("cycle decomposition needs a permutation")
        seen = np.zeros(self.n, dtype=bool)
        lengths = []
        for start in range(self.n):
            if seen[start]:
                continue
            k, a = 0, start
            while not seen[a]:
                seen[a] = True
                a = self.image[a]
                k += 1
            lengths.append(k)
        return lengths


class BackwardMap:
    """Pointwise ``φ^{-1}`` on the atoms where it makes sense.

    Only preimages of positive mass count. ``inv[z]`` is the unique such
    preimage, ``-1`` when there is none and ``-2`` when there are several.
    """

    NONE = -1
    MANY = -2

    def __init__(self, phi: Transformation, space: FiniteMeasureSpace):
        pos = space.positive
        counts = np.bincount(phi.image[pos], minlength=phi.n)
        inv = np.full(phi.n, self.NONE, dtype=np.intp)
        src = np.flatnonzero(pos)
        inv[phi.image[src]] = src
        inv[counts > 1] = self.MANY
        inv.setflags(write=False)
        self.phi = phi
        self.inv = inv
        self.space = space

    @property
    def invertible(self) -> bool:
        """φ is a bijection of the positive-mass atoms."""
        pos = self.space.positive
        return bool(np.all(self.inv[pos] >= 0) and np.all(self.space.positive[self.inv[pos]]))

    def trace(self, z: int, n: int) -> int:
        """``φ^{-n}(z)`` or a negative code; raises when ambiguous."""
        for _ in range(n):
            if z < 0:
                return z
            nxt = self.inv[z]
            if nxt == self.MANY:
                raise UnsupportedOperation(f"atom {z} has several preimages; φ^-1 undefined there")
            z = nxt
        return z

    def points(self, n: int, where=None, strict: bool = True) -> np.ndarray:
        """Vector of ``φ^{-n}(z)`` for atoms in ``where`` (default: all).

        With ``strict=False`` ambiguous chains yield ``MANY`` instead of
        raising.
        """
        idx = np.arange(self.phi.n) if where is None else np.flatnonzero(as_mask(where, self.phi.n))
        cur = idx.copy()
        for _ in range(n):
            alive = cur >= 0
            nxt = cur.copy()
            nxt[alive] = self.inv[cur[alive]]
            bad = alive & (nxt == self.MANY)
            if strict and bad.any():
                z = int(cur[np.flatnonzero(bad)[0]])
                raise UnsupportedOperation(f"atom {z} has several preimages; φ^-1 undefined there")
            cur = nxt
        out = np.full(self.phi.n, self.NONE, dtype=np.intp)
        out[idx] = cur
        return out

    def pull(self, g, n: int, where=None) -> np.ndarray:
        """``g ∘ φ^{-n}``; zero where no preimage exists."""
        g = np.asarray(g, dtype=float)
        pts = self.points(n, where)
        out = np.zeros(self.phi.n)
        ok = pts >= 0
        out[ok] = g[pts[ok]]
        return out


def pullback_partition(phi: Transformation, A: Partition) -> Partition:
    """``φ^{-1}A``: atoms share a block iff their images share an A-block."""
    if phi.n != A.n:
        raise InvalidInput("map and partition live on different atom sets")
    return Partition.from_labels(A.labels[phi.image])


def _preimage_mass(phi: Transformation, space: FiniteMeasureSpace) -> np.ndarray:
    return kernels.preimage_mass(phi.image, space.weights)


def _density(mass, space):
    out = np.zeros(space.n)
    pos = space.positive
    out[pos] = mass[pos] / space.weights[pos]
    return out


def is_nonsingular(phi: Transformation, space: FiniteMeasureSpace):
    """Return ``(nonsingular, h)``; ``h`` is ``None`` when singular."""
    mass = _preimage_mass(phi, space)
    if np.any(mass[~space.positive] > 0):
        return False, None
    return True, _density(mass, space)


def rn_derivative_n(phi: Transformation, space: FiniteMeasureSpace, n: int) -> np.ndarray:
    """``h_n = dμ∘φ^{-n}/dμ`` from the preimage masses of ``φ^n``."""
    if n < 0:
        raise InvalidInput("n must be >= 0")
    ok, _ = is_nonsingular(phi, space)
    if not ok:
        raise DomainError("φ is singular: μ∘φ^-1 charges a null atom")
    if n == 0:
        return np.where(space.positive, 1.0, 0.0)
    return _density(_preimage_mass(phi.power(n), space), space)


def rn_derivative_n_exact(phi: Transformation, weights, n: int) -> list:
    """Rational-arithmetic oracle for ``h_n`` (weights as ints or Fractions)."""
    w = [Fraction(x) for x in weights]
    img = phi.power(n).image
    mass = [Fraction(0)] * len(w)
    for a, b in enumerate(img):
        mass[b] += w[a]
    return [mass[b] / w[b] if w[b] > 0 else Fraction(0) for b in range(len(w))]


@dataclass
class ChainReport:
    n: int
    product_deviation: float
    recursion_deviation: float

    @property
    def passed(self) -> bool:
        return max(self.product_deviation, self.recursion_deviation) <= CHAIN_TOL


def rn_chain_check(phi: Transformation, space: FiniteMeasureSpace, n: int) -> ChainReport:
    """Compare ``h_k`` (k ≤ n) against the product of ``h∘φ^{-i}`` and the
    recursion ``h_{k+1} = h · E^{φ^{-1}Σ}(h_k)∘φ^{-1}``."""
    from .conditional import cond_exp

    back = BackwardMap(phi, space)
    if not back.invertible:
        raise UnsupportedOperation("chain identities need φ invertible on positive atoms")
    ok, h = is_nonsingular(phi, space)
    if not ok:
        raise DomainError("φ is singular")
    pos = space.positive
    pull_sigma = pullback_partition(phi, Partition.discrete(space.n))
    prod_dev = rec_dev = 0.0
    prod = np.where(pos, 1.0, 0.0)
    h_prev = np.where(pos, 1.0, 0.0)
    for k in range(1, n + 1):
        hk = rn_derivative_n(phi, space, k)
        prod = prod * back.pull(h, k - 1)
        rec = h * back.pull(cond_exp(h_prev, pull_sigma, space), 1)
        scale = 1.0 + np.abs(hk[pos]).max(initial=0.0)
        prod_dev = max(prod_dev, np.abs(prod - hk)[pos].max(initial=0.0) / scale)
        rec_dev = max(rec_dev, np.abs(rec - hk)[pos].max(initial=0.0) / scale)
        h_prev = hk
    return ChainReport(n, float(prod_dev), float(rec_dev))


@dataclass
class NormalProfile:
    normal: bool
    phi: Transformation
    space: FiniteMeasureSpace
    inverse_identity_deviation: float | None

    def h_sharp(self, n: int = 1) -> np.ndarray:
        """``h_n^♯ = dμ∘φ^n/dμ`` with ``μ∘φ^n(S) := μ(φ^n(S))``, per atom."""
        if not self.normal:
            raise DomainError("μ is not normal with respect to φ")
        img = self.phi.power(n).image
        out = np.zeros(self.space.n)
        pos = self.space.positive
        out[pos] = self.space.weights[img[pos]] / self.space.weights[pos]
        return out

    def h_sharp_restricted(self, A: Partition, n: int = 1) -> np.ndarray:
        """``h_n^{A♯}``: the same derivative for the measures restricted to A."""
        from .conditional import cond_exp

        return cond_exp(self.h_sharp(n), A, self.space)


def normal_profile(phi: Transformation, space: FiniteMeasureSpace) -> NormalProfile:
    """Decide ``μ∘φ ≪ μ`` and cross-check ``h^♯ = 1/(h∘φ)``.

    The cross-check runs on positive atoms that are the sole positive-mass
    preimage of their image; elsewhere ``μ∘φ`` is not additive.
    """
    pos = space.positive
    normal = bool(np.all(~space.positive[phi.image[~pos]]))
    dev = None
    if normal:
        prof = NormalProfile(True, phi, space, None)
        ok, h = is_nonsingular(phi, space)
        if ok:
            hs = prof.h_sharp(1)
            counts = np.bincount(phi.image[pos], minlength=phi.n)
            sole = pos & (counts[phi.image] == 1)
            hphi = h[phi.image]
            dev = float(np.abs(hs[sole] - 1.0 / hphi[sole]).max(initial=0.0)) if sole.any() else 0.0
    return NormalProfile(normal, phi, space, dev)


def detect_period(phi: Transformation, m_max: int) -> int | None:
    """Least ``m ≤ m_max`` with ``φ^m = I``; ``None`` if there is none."""
    if m_max < 1:
        raise InvalidInput("m_max must be >= 1")
    if not phi.is_permutation():
        return None
    m = math.lcm(*phi.cycle_lengths())
    return m if m <= m_max else None


def detect_period_by_iteration(phi: Transformation, m_max: int) -> int | None:
    ident = np.arange(phi.n)
    cur = phi.image.copy()
    for m in range(1, m_max + 1):
        if np.array_equal(cur, ident):
            return m
        cur = phi.image[cur]
    return None


def finitely_nonmixing_witness(
    phi: Transformation, F, n_max: int, direction: str = "forward"
) -> int | None:
    """Least ``N ≤ n_max`` with ``F ∩ φ^n(F) = ∅`` for ``N < n ≤ n_max``.

    ``direction="backward"`` uses ``φ^{-n}(F)`` (preimages) instead.
    """
    F = as_mask(F, phi.n)
    if not F.any():
        raise InvalidInput("F must be nonempty")
    if n_max < 1:
        raise InvalidInput("n_max must be >= 1")
    seen = {F.tobytes(): 0}
    hits = []
    cur = F
    for n in range(1, n_max + 1):
        if direction == "forward":
            nxt = np.zeros(phi.n, dtype=bool)
            nxt[phi.image[cur]] = True
        elif direction == "backward":
            nxt = cur[phi.image]
        else:
            raise InvalidInput("direction must be 'forward' or 'backward'")
        cur = nxt
        if (cur & F).any():
            hits.append(n)
        key = cur.tobytes()
        if key in seen:
            # the set sequence is periodic from seen[key] on: hits there recur
            start = seen[key]
            if any(h > start for h in hits):
                return None
            return hits[-1] if hits else 0
        seen[key] = n
    if not hits:
        return 0
    return hits[-1] if hits[-1] < n_max else None


def nonmixing_horizons(phi: Transformation, F, n_max: int) -> dict:
    return {
        "forward": finitely_nonmixing_witness(phi, F, n_max, "forward"),
        "backward": finitely_nonmixing_witness(phi, F, n_max, "backward"),
    }


def sigma_infinity(phi: Transformation, space: FiniteMeasureSpace | None = None) -> Partition:
    """Stabilised limit of the decreasing chain ``φ^{-n}Σ``."""
    return pullback_chain(phi)[-1]


def pullback_chain(phi: Transformation) -> list[Partition]:
    """``[φ^{-1}Σ, φ^{-2}Σ, ...]`` up to and including the first repeat."""
    chain = [pullback_partition(phi, Partition.discrete(phi.n))]
    while True:
        nxt = pullback_partition(phi, chain[-1])
        if nxt == chain[-1]:
            return chain
        chain.append(nxt)


@dataclass
class TransformProfile:
    period: int | None
    nonsingular: bool
    normal: bool
    h: np.ndarray | None
    h_sharp: np.ndarray | None
    sigma_infinity: Partition


def transform_profile(phi: Transformation, space: FiniteMeasureSpace, m_max: int = 10_000) -> TransformProfile:
    ok, h = is_nonsingular(phi, space)
    prof = normal_profile(phi, space)
    return TransformProfile(
        period=detect_period(phi, m_max),
        nonsingular=ok,
        normal=prof.normal,
        h=h,
        h_sharp=prof.h_sharp(1) if prof.normal else None,
        sigma_infinity=sigma_infinity(phi),
    )


def change_of_variables_sides(phi: Transformation, space: FiniteMeasureSpace, f, S, n: int):
    """``(∫_{φ^{-n}S} f∘φ^n dμ, ∫_S h_n f dμ)``."""
    from .measure_space import integrate

    f = check_fn(f, space)
    lhs = integrate(phi.compose_fn(f, n), phi.power(n).preimage(S), space)
    rhs = integrate(rn_derivative_n(phi, space, n) * f, S, space)
    return lhs, rhs


def random_transformation(rng, space: FiniteMeasureSpace, kind: str = "any") -> Transformation:
    """Random nonsingular map: ``kind`` is ``any``, ``permutation`` or
    ``measure_preserving`` (a permutation inside equal-weight classes)."""
    n = space.n
    pos = np.flatnonzero(space.positive)
    if kind == "permutation":
        return Transformation(rng.permutation(n))
    if kind == "measure_preserving":
        img = np.arange(n)
        for w in np.unique(space.weights):
            idx = np.flatnonzero(space.weights == w)
            img[idx] = rng.permutation(idx)
        return Transformation(img)
    img = rng.integers(0, n, n)
    # positive atoms must land on positive atoms
    img[pos] = rng.choice(pos, pos.size)
    return Transformation(img)


def atoms(S: Iterable[int]) -> frozenset:
    return frozenset(int(a) for a in S)
