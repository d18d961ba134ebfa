"""Orbits and the criterion quantities governing subspace-hypercyclicity of
``T_u`` with respect to ``L^p(A)``.

No operator on a finite-dimensional space is hypercyclic, so every verdict
here is a statement about a finite horizon: do the quantities the
criteria are built from decay along the schedule that was asked for.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .conditional import cond_exp
from .errors import (
    DomainError,
    HypothesisNotMet,
    InvalidInput,
    UnsupportedOperation,
)
from .measure_space import (
    FiniteMeasureSpace,
    Partition,
    as_mask,
    is_coarser,
    is_measurable,
    lp_norm,
    simple_net,
    support,
)
from .operators import (
    ConditionalWCO,
    bound_J,
    cocycle,
    iterate,
    right_inverse_D,
)
from .transform import (
    BackwardMap,
    Transformation,
    detect_period,
    finitely_nonmixing_witness,
    is_nonsingular,
    normal_profile,
    pullback_partition,
    rn_derivative_n,
    sigma_infinity,
)

DECAY_FACTOR = 1e-2
RATE_MARGIN = 1e-3
ORBIT_SLACK = 1e-9
RESIDUAL_RTOL = 1e-9
PERIOD_SEARCH = 1_000_000


# ----------------------------------------------------------------- schedules


@dataclass(frozen=True)
class CriterionSchedule:
    """A set ``F``, exponents ``n_k`` and optional subsets ``V_k ⊆ F``.

    With ``V=None`` the subsets are generated from the operator (see
    :func:`auto_V`).
    """

    F: frozenset
    n: tuple
    V: tuple | None = None
    name: str = "schedule"

    def __post_init__(self):
        F = frozenset(int(a) for a in self.F)
        n = tuple(int(x) for x in self.n)
        if not F:
            raise InvalidInput("F must be nonempty")
        if not n or n[0] < 1 or any(b <= a for a, b in zip(n, n[1:])):
            raise InvalidInput("n_k must be positive and strictly increasing")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "n", n)
        if self.V is not None:
            V = tuple(frozenset(int(a) for a in v) for v in self.V)
            if len(V) != len(n):
                raise InvalidInput("need one V_k per n_k")
            for k, v in enumerate(V):
                if not v <= F:
                    raise InvalidInput(f"V_{k + 1} is not a subset of F")
            object.__setattr__(self, "V", V)

    @property
    def k_max(self) -> int:
        return len(self.n)

    @classmethod
    def consecutive(cls, F, n_max: int, start: int = 1, name: str = "full") -> "CriterionSchedule":
        return cls(frozenset(F), tuple(range(start, start + n_max)), None, name)


def auto_V(T: ConditionalWCO, F, n: int, back: BackwardMap | None = None) -> frozenset:
    """Union of the A-blocks inside ``F`` on which the criterion quantities
    are defined at exponent ``n``.

    An atom qualifies when ``w_n`` does not vanish on it and ``φ^{-n}`` is
    unambiguous at it.
    """
    Fm = as_mask(F, T.n)
    back = back or BackwardMap(T.phi, T.space)
    w = cocycle(T, n).w
    pts = back.points(n, where=Fm, strict=False)
    good = Fm & (w != 0) & (pts != BackwardMap.MANY)
    good |= ~T.space.positive & Fm
    keep = np.zeros(T.n, dtype=bool)
    for block in T.A.blocks:
        b = list(block)
        if Fm[b].all() and good[b].all():
            keep[b] = True
    return frozenset(int(a) for a in np.flatnonzero(keep))


# ------------------------------------------------------------ decay reports


def fit_rate(n_k: Sequence[float], q: Sequence[float]) -> float | None:
    """Geometric rate ``exp(slope)`` of ``log q`` against ``n_k``.

    Uses the last half of the positive finite samples (at least three);
    ``None`` when fewer than three exist.
    """
    pts = [(float(a), float(b)) for a, b in zip(n_k, q) if np.isfinite(b) and b > 0]
    if len(pts) < 3:
        return None
    tail = pts[-max(3, len(pts) - len(pts) // 2):]
    x = np.array([a for a, _ in tail])
    y = np.log([b for _, b in tail])
    if np.ptp(x) == 0:
        return None
    slope = np.polyfit(x, y, 1)[0]
    return float(math.exp(slope))


def quantity_decays(q: Sequence[float], rate: float | None) -> bool:
    """Finite-horizon decision rule for ``q_k → 0``."""
    q = [float(v) for v in q if np.isfinite(v)]
    if len(q) < 2:
        return False
    initial, final = q[0], q[-1]
    if final == 0.0:
        return True
    return (
        initial > 0
        and final < initial * DECAY_FACTOR
        and rate is not None
        and rate < 1.0 - RATE_MARGIN
    )


@dataclass
class DecayReport:
    analysis: str
    k: list = field(default_factory=list)
    n_k: list = field(default_factory=list)
    q1: list = field(default_factory=list)
    q2: list = field(default_factory=list)
    mass_gap: list = field(default_factory=list)
    v_size: list = field(default_factory=list)
    rate1: float | None = None
    rate2: float | None = None
    verdict: str = "stalls"
    undefined_at: int | None = None
    hypotheses: dict = field(default_factory=dict)

    def finalize(self) -> "DecayReport":
        live = [i for i, s in enumerate(self.v_size) if s > 0]
        n = [self.n_k[i] for i in live]
        q1 = [self.q1[i] for i in live]
        q2 = [self.q2[i] for i in live]
        self.rate1 = fit_rate(n, q1)
        self.rate2 = fit_rate(n, q2)
        bad = [self.k[i] for i in live if not (np.isfinite(self.q1[i]) and np.isfinite(self.q2[i]))]
        if bad:
            self.undefined_at = bad[0]
            self.verdict = "undefined-at"
        elif quantity_decays(q1, self.rate1) and quantity_decays(q2, self.rate2):
            self.verdict = "decays"
        else:
            self.verdict = "stalls"
        return self

    @property
    def hypotheses_pass(self) -> bool:
        return bool(self.hypotheses) and all(h["passed"] for h in self.hypotheses.values())

    def rows(self):
        for row in zip(self.k, self.n_k, self.mass_gap, self.q1, self.q2):
            yield row

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "n_k", "mass_gap", "q1", "q2"])
        for k, n, gap, a, b in self.rows():
            wr.writerow([k, n, "%.17g" % gap, "%.17g" % a, "%.17g" % b])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "analysis": self.analysis,
            "verdict": self.verdict,
            "undefined_at": self.undefined_at,
            "rate1": self.rate1,
            "rate2": self.rate2,
            "hypothesis_flags": {k: bool(v["passed"]) for k, v in self.hypotheses.items()},
            "hypothesis_values": {k: v.get("value") for k, v in self.hypotheses.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(type(x))


def _flag(passed, value=None):
    return {"passed": bool(passed), "value": value}


# -------------------------------------------------------------------- orbits


@dataclass
class Orbit:
    n: np.ndarray
    norms: np.ndarray
    vectors: np.ndarray | None = None

    def pairs(self):
        return list(zip(self.n.tolist(), self.norms.tolist()))

    def to_csv(self, path=None) -> str:
        lines = ["n,norm"] + ["%d,%.17g" % (a, b) for a, b in self.pairs()]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def orbit(T: ConditionalWCO, f, n_max: int, store: bool = True) -> Orbit:
    """Norms ``‖T^n f‖_p`` for ``n = 0..n_max`` (and the vectors if asked)."""
    if n_max < 0:
        raise InvalidInput("n_max must be >= 0")
    f = np.asarray(f, dtype=float)
    if store:
        vecs = np.empty((n_max + 1, T.n))
        vecs[0] = f
        for i in range(1, n_max + 1):
            vecs[i] = iterate(T, 1, vecs[i - 1])
        norms = np.array([lp_norm(v, T.p, T.space) for v in vecs])
        return Orbit(np.arange(n_max + 1), norms, vecs)
    norms, _ = kernels.orbit_norms(
        T.u, T.phi.image, T.space.weights, T.A.labels, T.A.n_blocks,
        np.ascontiguousarray(f[:, None]), n_max, T.p,
    )
    return Orbit(np.arange(n_max + 1), norms[:, 0])


@dataclass
class OrbitBound:
    bound: float
    verified: bool
    period: int
    max_norm: float
    horizon: int

    def __iter__(self):
        return iter((self.bound, self.verified))


def periodic_orbit_bound(T: ConditionalWCO, f, horizon: int = 200) -> OrbitBound:
    """Orbit bound for periodic φ with ``‖w_m‖_∞ ≤ 1``:
    ``‖f‖_p · max(1, ‖J‖_∞^{1/p}, ..., ‖J‖_∞^{(m-1)/p})``, checked on
    ``n ≤ horizon``.
    """
    m = detect_period(T.phi, PERIOD_SEARCH)
    if m is None:
        raise UnsupportedOperation("φ is aperiodic")
    if not T.valid:
        raise UnsupportedOperation("the orbit bound needs φ^-1 A ⊆ A")
    wm = cocycle(T, m).w
    sup_wm = float(np.abs(wm[T.space.positive]).max(initial=0.0))
    if sup_wm > 1.0 + 1e-12:
        raise HypothesisNotMet(f"‖w_m‖_∞ = {sup_wm} exceeds 1", value=sup_wm)
    J, _ = bound_J(T)
    jsup = float(J.max(initial=0.0))
    factor = max([1.0] + [jsup ** (j / T.p) for j in range(1, m)])
    bound = lp_norm(f, T.p, T.space) * factor
    norms = orbit(T, f, horizon, store=False).norms
    verified = bool(np.all(norms <= bound * (1.0 + ORBIT_SLACK)))
    return OrbitBound(bound, verified, m, float(norms.max()), horizon)


# ------------------------------------------------------- criterion quantities


def _V_for(T, schedule, k, n, back):
    if schedule.V is not None:
        return schedule.V[k]
    return auto_V(T, schedule.F, n, back)


def _sup(values, mask):
    if not mask.any():
        return 0.0
    v = values[mask]
    if not np.all(np.isfinite(v)):
        return math.nan
    return float(v.max())


def _inverse_cocycle(w, Vm):
    out = np.full(w.size, math.nan)
    nz = w != 0
    out[nz] = 1.0 / np.abs(w[nz])
    return _sup(out, Vm)


def _quantities(T: ConditionalWCO, schedule: CriterionSchedule, kind: str, analysis: str) -> DecayReport:
    ok, _ = is_nonsingular(T.phi, T.space)
    if not ok:
        raise DomainError("φ is singular")
    back = BackwardMap(T.phi, T.space)
    pos = T.space.positive
    muF = T.space.measure(schedule.F)
    rep = DecayReport(analysis)
    for k, n in enumerate(schedule.n):
        V = _V_for(T, schedule, k, n, back)
        Vm = as_mask(V, T.n) & pos
        w = cocycle(T, n).w
        q1 = _inverse_cocycle(w, Vm)
        if kind == "necessary":
            hA = cond_exp(rn_derivative_n(T.phi, T.space, n), T.A, T.space)
            part = pullback_partition(T.phi.power(n), T.A)
            inner = back.pull(cond_exp(w, part, T.space), n, where=Vm)
            q2 = _sup(hA ** (1.0 / T.p) * np.abs(inner), Vm)
        else:
            hn = rn_derivative_n(T.phi, T.space, n)
            q2 = _sup(hn ** (1.0 / T.p) * np.abs(back.pull(w, n, where=Vm)), Vm)
        rep.k.append(k + 1)
        rep.n_k.append(n)
        rep.q1.append(q1)
        rep.q2.append(q2)
        rep.mass_gap.append(muF - T.space.measure(V))
        rep.v_size.append(int(Vm.sum()))
    return rep


def necessary_hypotheses(T: ConditionalWCO, schedule: CriterionSchedule) -> dict:
    ok, _ = is_nonsingular(T.phi, T.space)
    horizon = max(schedule.n)
    N = finitely_nonmixing_witness(T.phi, schedule.F, max(horizon, 1))
    return {
        "nonsingular": _flag(ok),
        "finitely_nonmixing": _flag(N is not None, N),
        "invariant_subalgebra": _flag(T.valid),
    }


def sufficient_hypotheses(T: ConditionalWCO, schedule: CriterionSchedule) -> dict:
    """Machine-checked preconditions of the sufficient condition."""
    flags = necessary_hypotheses(T, schedule)
    pos = T.space.positive
    supp = support(T.u)
    flags["full_support_u"] = _flag(all(a in supp for a in np.flatnonzero(pos)), len(supp))
    prof = normal_profile(T.phi, T.space)
    flags["normal"] = _flag(prof.normal)
    flags["below_sigma_infinity"] = _flag(is_coarser(T.A, sigma_infinity(T.phi)))
    if prof.normal:
        sup_hs = max(
            float(prof.h_sharp_restricted(T.A, n).max(initial=0.0))
            for n in range(1, max(schedule.n) + 1)
        )
        flags["h_sharp_A_bounded"] = _flag(np.isfinite(sup_hs), sup_hs)
    else:
        flags["h_sharp_A_bounded"] = _flag(False, None)
    return flags


def necessary_quantities(T: ConditionalWCO, schedule: CriterionSchedule) -> DecayReport:
    """``q1(k) = sup_{V_k} |w_{n_k}|^{-1}`` and
    ``q2(k) = sup_{V_k} (h^A_{n_k})^{1/p} |E^{φ^{-n_k}A}(w_{n_k})∘φ^{-n_k}|``.

    ``h^A_n = E^A(h_n)`` is the density of ``μ∘φ^{-n}`` restricted to A.
    """
    rep = _quantities(T, schedule, "necessary", "necessary_quantities")
    rep.hypotheses = necessary_hypotheses(T, schedule)
    return rep.finalize()


def sufficient_quantities(T: ConditionalWCO, schedule: CriterionSchedule) -> DecayReport:
    """``q1`` as above and ``q2'(k) = sup_{V_k} h_{n_k}^{1/p} |w_{n_k}∘φ^{-n_k}|``,
    plus a pass/fail record of every hypothesis."""
    rep = _quantities(T, schedule, "sufficient", "sufficient_quantities")
    rep.hypotheses = sufficient_hypotheses(T, schedule)
    return rep.finalize()


def topmix_quantities(T: ConditionalWCO, F, n_max: int) -> DecayReport:
    """The sufficient quantities along the full sequence ``n = 1..n_max``."""
    schedule = CriterionSchedule.consecutive(F, n_max)
    rep = _quantities(T, schedule, "sufficient", "topmix_quantities")
    rep.hypotheses = sufficient_hypotheses(T, schedule)
    return rep.finalize()


# ------------------------------------------------------------ Kitai criterion


@dataclass
class KitaiReport:
    k: list = field(default_factory=list)
    n_k: list = field(default_factory=list)
    tail_norm: list = field(default_factory=list)
    preimage_norm: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    bullets: dict = field(default_factory=dict)
    verdict: str = "violated"
    witness: dict | None = None
    net_size: int = 0

    @property
    def consistent(self) -> bool:
        return self.verdict == "criterion-consistent"

    def to_csv(self, path=None) -> str:
        lines = ["k,n_k,tail_norm,preimage_norm,residual"]
        for row in zip(self.k, self.n_k, self.tail_norm, self.preimage_norm, self.residual):
            lines.append("%d,%d,%.17g,%.17g,%.17g" % row)
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "analysis": "kitai_check",
            "verdict": self.verdict,
            "bullets": {k: v["holds"] for k, v in self.bullets.items()},
            "witness": self.witness,
            "net_size": self.net_size,
        }


def _blocks_inside(A: Partition, F) -> list[int]:
    Fm = as_mask(F, A.n)
    return [i for i, b in enumerate(A.blocks) if Fm[list(b)].all()]


def kitai_check(
    T: ConditionalWCO,
    schedule: CriterionSchedule,
    value_grid=(0.0, 1.0, -1.0),
    support_bound: int = 1,
    cap: int = 10_000,
) -> KitaiReport:
    """Check the three bullets of the Kitai-type criterion for ``M = L^p(A)``
    on a finite net of A-measurable simple functions supported in ``F``."""
    blocks = _blocks_inside(T.A, schedule.F)
    net = np.stack(list(simple_net(T.A, value_grid, support_bound, cap, blocks)), axis=1)
    rep = KitaiReport(net_size=net.shape[1])
    m = net.shape[1]
    nonzero = [j for j in range(m) if np.any(net[:, j] != 0)]
    tails = np.zeros((schedule.k_max, m))
    pre = np.zeros((schedule.k_max, m))
    resid = np.zeros((schedule.k_max, m))
    failed_g: dict[int, str] = {}
    invariant = True

    cur, at = net.copy(), 0
    for k, n in enumerate(schedule.n):
        cur = iterate(T, n - at, cur)
        at = n
        tails[k] = [lp_norm(cur[:, j], T.p, T.space) for j in range(m)]
        if not all(is_measurable(cur[:, j], T.A, tol=0.0) for j in range(m)):
            invariant = False
        X = np.zeros_like(net)
        for j in nonzero:
            if j in failed_g:
                continue
            try:
                X[:, j] = right_inverse_D(T, net[:, j], n)
            except (UnsupportedOperation, DomainError) as exc:
                failed_g[j] = str(exc)
        back = iterate(T, n, X)
        for j in nonzero:
            if j in failed_g:
                resid[k, j] = math.nan
                pre[k, j] = math.nan
                continue
            pre[k, j] = lp_norm(X[:, j], T.p, T.space)
            resid[k, j] = lp_norm(back[:, j] - net[:, j], T.p, T.space)
        rep.k.append(k + 1)
        rep.n_k.append(n)
        rep.tail_norm.append(float(tails[k].max(initial=0.0)))
        rep.preimage_norm.append(float(np.nanmax(pre[k], initial=0.0)) if m else 0.0)
        rep.residual.append(float(np.nanmax(resid[k], initial=0.0)) if failed_g.keys() != set(nonzero) else math.nan)

    witness = None
    b1 = True
    for j in range(m):
        rate = fit_rate(schedule.n, tails[:, j])
        if np.any(net[:, j] != 0) and not quantity_decays(tails[:, j], rate):
            b1 = False
            witness = witness or {"bullet": "decay", "function": net[:, j].tolist()}
    b2 = True
    for j in nonzero:
        g = net[:, j]
        if j in failed_g:
            b2 = False
            witness = witness or {"bullet": "right_inverse", "function": g.tolist(), "error": failed_g[j]}
            continue
        tol = RESIDUAL_RTOL * max(1.0, lp_norm(g, T.p, T.space))
        rate = fit_rate(schedule.n, pre[:, j])
        if np.any(resid[:, j] > tol) or not quantity_decays(pre[:, j], rate):
            b2 = False
            witness = witness or {
                "bullet": "right_inverse",
                "function": g.tolist(),
                "max_residual": float(resid[:, j].max()),
                "final_preimage_norm": float(pre[-1, j]),
            }
    if not invariant:
        witness = witness or {"bullet": "invariance"}
    rep.bullets = {
        "decay": {"holds": b1},
        "right_inverse": {"holds": b2, "failures": len(failed_g)},
        "invariance": {"holds": invariant},
    }
    rep.verdict = "criterion-consistent" if (b1 and b2 and invariant) else "violated"
    rep.witness = None if rep.verdict == "criterion-consistent" else witness
    return rep


# ----------------------------------------------------------------- witnesses


def _eligible(T: ConditionalWCO, n: int, Fm, back: BackwardMap):
    """Atoms of ``F`` where the n-step right inverse is defined."""
    pos = T.space.positive
    if n == 0:
        return Fm.copy()
    phin = T.phi.power(n).image
    w = cocycle(T, n).w
    ok = Fm & pos & (w != 0)
    idx = np.flatnonzero(ok)
    pts = back.points(n, where=phin[idx], strict=False)
    good = pts[phin[idx]] == idx
    # distinct atoms of F must not collide under φ^n
    _, counts = np.unique(phin[idx], return_counts=True)
    collide = np.isin(phin[idx], np.unique(phin[idx])[counts > 1])
    el = np.zeros(T.n, dtype=bool)
    el[idx[good & ~collide]] = True
    return el | (Fm & ~pos)


def transitivity_witness(
    T: ConditionalWCO,
    center_U,
    center_V,
    eps: float,
    n_max: int,
):
    """Search ``n ≤ n_max`` for an A-measurable f with ``‖f - V‖ < eps`` and
    ``‖T^n f - U‖ < eps``, built as ``V·χ_W + D^n(U·χ_W)`` where ``W`` is
    the union of A-blocks on which ``D^n`` is defined.

    Returns ``(n, f)`` for the smallest successful n, else ``None``.
    """
    if eps <= 0:
        raise InvalidInput("eps must be positive")
    U = np.asarray(center_U, dtype=float)
    Vc = np.asarray(center_V, dtype=float)
    if not (is_measurable(U, T.A) and is_measurable(Vc, T.A)):
        raise InvalidInput("centers must be A-measurable")
    Fm = np.zeros(T.n, dtype=bool)
    Fm[list(support(U) | support(Vc))] = True
    back = BackwardMap(T.phi, T.space)
    for n in range(n_max + 1):
        el = _eligible(T, n, Fm, back)
        W = np.zeros(T.n, dtype=bool)
        for block in T.A.blocks:
            b = list(block)
            if el[b].all() and Fm[b].any():
                W[b] = True
        chi = W.astype(float)
        try:
            f = Vc * chi + right_inverse_D(T, U * chi, n)
        except (UnsupportedOperation, DomainError):
            continue
        if not is_measurable(f, T.A):
            continue
        if lp_norm(f - Vc, T.p, T.space) >= eps:
            continue
        if lp_norm(iterate(T, n, f) - U, T.p, T.space) < eps:
            return n, f
    return None


# -------------------------------------------------------------- direct sums


def direct_sum(T: ConditionalWCO) -> ConditionalWCO:
    """``T ⊕ T`` on two tagged copies of the atoms."""
    n = T.n
    ids = tuple((0, a) for a in T.space.atom_ids) + tuple((1, a) for a in T.space.atom_ids)
    space = FiniteMeasureSpace(ids, np.concatenate([T.space.weights, T.space.weights]))
    phi = Transformation(np.concatenate([T.phi.image, T.phi.image + n]))
    A = Partition.from_labels(np.concatenate([T.A.labels, T.A.labels + T.A.n_blocks]))
    return ConditionalWCO(np.concatenate([T.u, T.u]), phi, A, T.p, space)


def pair(f, g) -> np.ndarray:
    return np.concatenate([np.asarray(f, dtype=float), np.asarray(g, dtype=float)])


def split(h) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=float)
    half = h.size // 2
    return h[:half], h[half:]


def doubled_schedule(schedule: CriterionSchedule, n: int) -> CriterionSchedule:
    F = frozenset(schedule.F) | frozenset(a + n for a in schedule.F)
    V = None
    if schedule.V is not None:
        V = tuple(frozenset(v) | frozenset(a + n for a in v) for v in schedule.V)
    return CriterionSchedule(F, schedule.n, V, schedule.name + "_doubled")
