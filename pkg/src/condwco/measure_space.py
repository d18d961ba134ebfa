"""Finite atomic measure spaces, partitions and measurable functions.

A measurable function is a plain 1-d ``numpy`` array with one value per
atom. Atom sets are accepted as boolean masks or as iterables of atom
indices and are returned as ``frozenset`` of indices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapExceeded, InvalidInput

SUPPORT_RTOL = 1e-14
EQUALITY_RTOL = 1e-12
NET_CAP = 100_000


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMeasureSpace:
    """Atoms with nonnegative masses; every atom set is measurable."""

    atom_ids: tuple
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = tuple(self.atom_ids)
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(ids) != w.size:
            raise InvalidInput("need exactly one weight per atom")
        if w.size == 0:
            raise InvalidInput("a measure space needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInput("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise InvalidInput("at least one atom must carry positive mass")
        if len(set(ids)) != len(ids):
            raise InvalidInput("atom ids must be unique")
        object.__setattr__(self, "atom_ids", ids)
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(ids)})

    @classmethod
    def from_weights(cls, weights):
        weights = np.asarray(weights, dtype=float)
        return cls(tuple(range(weights.size)), weights)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def positive(self) -> np.ndarray:
        return self.weights > 0

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def index_of(self, atom_id) -> int:
        try:
            return self._index[atom_id]
        except KeyError:
            raise InvalidInput(f"unknown atom {atom_id!r}") from None

    def measure(self, S) -> float:
        return float(self.weights[as_mask(S, self.n)].sum())

    def __eq__(self, other):
        if not isinstance(other, FiniteMeasureSpace):
            return NotImplemented
        return self.atom_ids == other.atom_ids and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.atom_ids, self.weights.tobytes()))


class Partition:
    """A sigma-subalgebra of the atomic power set, stored as disjoint blocks.

    Blocks are tuples of atom indices, ordered by their least atom, so two
    partitions of the same atom set are equal iff their blocks coincide.
    """

    __slots__ = ("labels", "blocks")

    def __init__(self, blocks: Iterable[Iterable[int]], n: int | None = None):
        blocks = [tuple(sorted(int(a) for a in b)) for b in blocks]
        if any(len(b) == 0 for b in blocks):
            raise InvalidInput("partition blocks must be nonempty")
        if n is None:
            n = sum(len(b) for b in blocks)
        labels = np.full(n, -1, dtype=np.intp)
        for k, b in enumerate(blocks):
            for a in b:
                if not 0 <= a < n:
                    raise InvalidInput(f"atom {a} outside 0..{n - 1}")
                if labels[a] != -1:
                    raise InvalidInput(f"atom {a} lies in two blocks")
                labels[a] = k
        if np.any(labels < 0):
            missing = int(np.flatnonzero(labels < 0)[0])
            raise InvalidInput(f"atom {missing} is not covered by any block")
        self._set_from_labels(labels)

    def _set_from_labels(self, labels):
        # relabel so block k is the k-th block by least atom
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        canon = rank[inverse.ravel()].astype(np.intp)
        canon.setflags(write=False)
        sort = np.argsort(canon, kind="stable")
        cuts = np.flatnonzero(np.diff(canon[sort])) + 1
        blocks = tuple(tuple(int(a) for a in chunk) for chunk in np.split(sort, cuts))
        object.__setattr__(self, "labels", canon)
        object.__setattr__(self, "blocks", blocks)

    def __setattr__(self, name, value):
        raise AttributeError("Partition is immutable")

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        obj = cls.__new__(cls)
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidInput("labels must be a nonempty 1-d array")
        obj._set_from_labels(labels)
        return obj

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls.from_labels(np.arange(n))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls.from_labels(np.zeros(n, dtype=np.intp))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self, atom: int) -> tuple:
        return self.blocks[self.labels[atom]]

    def block_masses(self, space: FiniteMeasureSpace) -> np.ndarray:
        return np.bincount(self.labels, weights=space.weights, minlength=self.n_blocks)

    def null_blocks(self, space: FiniteMeasureSpace) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.block_masses(space) == 0)]

    def __len__(self):
        return len(self.blocks)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.blocks)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __repr__(self):
        shown = [list(b) for b in self.blocks[:8]]
        more = "" if len(self.blocks) <= 8 else f", ... ({len(self.blocks)} blocks)"
        return f"Partition({shown}{more})"


def as_mask(S, n: int) -> np.ndarray:
    """Boolean mask for an atom set given as a mask or an index iterable."""
    if isinstance(S, np.ndarray) and S.dtype == bool:
        if S.shape != (n,):
            raise InvalidInput("mask length does not match the atom count")
        return S
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(a) for a in S), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InvalidInput("atom set is not a subset of the atoms")
    mask[idx] = True
    return mask


def indicator(S, n: int) -> np.ndarray:
    return as_mask(S, n).astype(float)


def check_fn(f, space_or_n) -> np.ndarray:
    n = space_or_n if isinstance(space_or_n, int) else space_or_n.n
    f = np.asarray(f, dtype=float)
    if f.shape[:1] != (n,):
        raise InvalidInput(f"function has {f.shape[:1]} values, expected {n}")
    if not np.all(np.isfinite(f)):
        raise InvalidInput("function values must be finite")
    return f


def lp_norm(f, p: float, space: FiniteMeasureSpace) -> float:
    if not (np.isfinite(p) and p >= 1):
        raise InvalidInput("p must be finite and >= 1")
    f = check_fn(f, space)
    pos = space.positive
    a = np.abs(f[pos])
    scale = a.max(initial=0.0)
    if scale == 0:
        return 0.0
    # rescale first so large orbits do not overflow |f|**p
    return float(scale * (space.weights[pos] @ (a / scale) ** p) ** (1.0 / p))


def sup_norm_on(f, S, space: FiniteMeasureSpace) -> float:
    """Essential supremum of ``|f|`` over ``S``; null atoms are ignored."""
    f = check_fn(f, space)
    mask = as_mask(S, space.n)
    if not mask.any():
        raise InvalidInput("sup_norm_on needs a nonempty set")
    mask = mask & space.positive
    return float(np.abs(f[mask]).max(initial=0.0))


def support(f, tol: float | None = None) -> frozenset:
    """Atoms where ``|f|`` exceeds ``tol`` (default ``1e-14 (1 + ||f||_inf)``)."""
    f = np.asarray(f, dtype=float)
    a = np.abs(f)
    if tol is None:
        tol = SUPPORT_RTOL * (1.0 + a.max(initial=0.0))
    return frozenset(int(i) for i in np.flatnonzero(a > tol))


def is_measurable(f, A: Partition, tol: float | None = None) -> bool:
    f = np.asarray(f, dtype=float)
    if tol is None:
        tol = EQUALITY_RTOL * (1.0 + np.abs(f).max(initial=0.0))
    hi = np.full(A.n_blocks, -np.inf)
    lo = np.full(A.n_blocks, np.inf)
    np.maximum.at(hi, A.labels, f)
    np.minimum.at(lo, A.labels, f)
    return bool(np.all(hi - lo <= tol))


def is_coarser(B: Partition, A: Partition) -> bool:
    """True iff every block of ``A`` sits inside a block of ``B``."""
    if A.n != B.n:
        raise InvalidInput("partitions live on different atom sets")
    # B-label must be constant on each A-block
    first = np.full(A.n_blocks, -1, dtype=np.intp)
    first[A.labels[::-1]] = B.labels[::-1]
    return bool(np.array_equal(first[A.labels], B.labels))


def meet(A: Partition, B: Partition) -> Partition:
    """Finest common coarsening: components of the block-overlap graph."""
    if A.n != B.n:
        raise InvalidInput("partitions live on different atom sets")
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    na = A.n_blocks
    graph = coo_matrix(
        (np.ones(A.n), (A.labels, B.labels + na)), shape=(na + B.n_blocks,) * 2
    )
    _, comp = connected_components(graph, directed=False)
    return Partition.from_labels(comp[A.labels])


def join(A: Partition, B: Partition) -> Partition:
    """Coarsest common refinement (blockwise intersections)."""
    if A.n != B.n:
        raise InvalidInput("partitions live on different atom sets")
    pairs = A.labels.astype(np.int64) * B.n_blocks + B.labels
    return Partition.from_labels(pairs)


def integrate(f, S, space: FiniteMeasureSpace) -> float:
    f = check_fn(f, space)
    mask = as_mask(S, space.n)
    return float(space.weights[mask] @ f[mask])


def simple_net(
    A: Partition,
    value_grid: Sequence[float],
    support_bound: int,
    cap: int = NET_CAP,
    blocks: Iterable[int] | None = None,
) -> Iterator[np.ndarray]:
    """All A-measurable functions with values in ``value_grid`` and at most
    ``support_bound`` nonzero blocks, in a deterministic order.

    ``blocks`` restricts the candidate blocks (default: all of them).
    """
    grid = sorted(set(float(v) for v in value_grid))
    if not grid:
        raise InvalidInput("value_grid must be nonempty")
    nonzero = [v for v in grid if v != 0.0]
    cand = list(range(A.n_blocks)) if blocks is None else sorted(set(blocks))
    bound = max(0, min(support_bound, len(cand))) if nonzero else 0

    from math import comb

    count = sum(comb(len(cand), j) * len(nonzero) ** j for j in range(bound + 1))
    if count > cap:
        raise CapExceeded(f"net would hold {count} functions (cap {cap})")
    return _net(A, nonzero, cand, bound)


def _net(A, nonzero, cand, bound):
    yield np.zeros(A.n)
    for j in range(1, bound + 1):
        for chosen in itertools.combinations(cand, j):
            for vals in itertools.product(nonzero, repeat=j):
                per_block = np.zeros(A.n_blocks)
                per_block[list(chosen)] = vals
                yield per_block[A.labels]
