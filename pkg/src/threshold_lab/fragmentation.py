"""Mechanical execution of the fragmentation induction behind the covering theorem.

Granting a random set ``W`` of size ``w`` turns ``H`` into ``H_W = {S \\ W}``;
its minimal sets split into large pieces ``G_W`` (size above ``delta * l``)
and small pieces ``H~_W``.  A ``W`` is *good* when the expectation of the
large pieces is below a level-dependent threshold.  This module computes every
quantity in that argument on explicit families and checks each inequality
numerically, recording everything in a re-checkable trace.

Three constant regimes are supported:

``main3``
    ``L >= 1000``, cut ``0.9 l``, ``w = floor(0.1 L p N)``, thresholds ``2^-(l+2)``.
``main4``
    optimised ``(L, delta)`` with ``c = log2(1/delta)`` and
    ``eps = (L c)^delta / 2 - 1``, thresholds ``(1 + eps/3)^-l``.
``bell``
    as ``main4`` with target fraction ``1 - eps1`` and an external base level.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import optimize

from .cover import CoverBudgetExceeded, cover_cost, covers
from .measures import check_probability, mu_upset_exact
from .setfam import (
    Family,
    GroundTooLarge,
    indices_from_mask,
    is_l_bounded,
    level_stats,
    mask_from_indices,
    minimal_sets,
    popcount,
    restrict,
)

MODES = ("main3", "main4", "bell")
MAIN3_L = 1000.0
MAIN3_DELTA = 0.9
MAIN3_C = 0.1
MAIN4_BASE_COEFF = 1000.0
BELL_BASE_COEFF = 96.0
EXHAUSTIVE_CAP = 10**6
DEFAULT_SAMPLES = 10**4
FLOOR_GUARD = 1e-9
TRACE_SCHEMA = "threshold-lab/fragmentation-trace"
TRACE_VERSION = 1


class ProfileError(ValueError):
    pass


def _floor(x: float) -> int:
    # absorbs rounding in products such as L*p*N that are integral in exact arithmetic
    return math.floor(x + FLOOR_GUARD)


def _close_le(a: float, b: float, rel: float = 1e-12) -> bool:
    return a <= b + rel * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------- constants


def constant_objective(delta: float) -> float:
    """``2^(1/delta) / log2(1/delta)``, the smallest admissible ``L`` for a given ``delta``."""
    return 2.0 ** (1.0 / delta) / math.log2(1.0 / delta)


def optimize_constants(grid: int = 1000, refine_tol: float = 1e-12) -> tuple[float, float]:
    """Minimise :func:`constant_objective` over ``(0, 1)``: grid scan, then golden section."""
    if grid < 100:
        raise ValueError("grid must be at least 100")
    deltas = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    values = 2.0 ** (1.0 / deltas) / np.log2(1.0 / deltas)
    i = int(np.argmin(values))
    lo, hi = deltas[max(i - 1, 0)], deltas[min(i + 1, grid - 1)]
    res = optimize.minimize_scalar(constant_objective, bracket=(lo, deltas[i], hi),
                                   method="golden", tol=refine_tol)
    return float(res.fun), float(res.x)


def minimal_l0(epsilon: float, delta: float) -> int:
    """Least ``l0 >= 1`` with ``2 <= (1 + eps/3)^(l0 - floor(delta*l0))``."""
    if epsilon <= 0:
        raise ProfileError("epsilon must be positive")
    d = Fraction(repr(float(delta)))
    base = 1.0 + epsilon / 3.0
    l0 = 1
    while base ** (l0 - math.floor(d * l0)) < 2.0:
        l0 += 1
    return l0


@dataclass(frozen=True)
class ConstantsProfile:
    mode: str
    L: float
    delta: float
    c: float
    epsilon: float = 0.0
    l0: int = 0
    epsilon1: Optional[float] = None
    nominal: bool = True

    @property
    def delta_exact(self) -> Fraction:
        return Fraction(repr(float(self.delta)))

    @property
    def growth(self) -> float:
        return 1.0 + self.epsilon / 3.0

    def is_large(self, size: int, l: int) -> bool:
        return size > self.delta_exact * l

    def next_level(self, l: int) -> int:
        return math.floor(self.delta_exact * l)

    def w_size(self, p: float, N: int) -> int:
        return _floor(self.c * self.L * p * N)

    def good_threshold(self, l: int) -> float:
        if self.mode == "main3":
            return 2.0 ** -(l + 2)
        return self.growth ** -l

    def bad_budget(self, l: int) -> float:
        if self.mode == "main3":
            return 1.0 / (2.0 * 8.0**l)
        return self.growth ** -l

    def dcl_factor(self, l: int) -> float:
        if self.mode == "main3":
            return 1.0 / (8.0 * 16.0**l)
        return self.growth ** (-2 * l)

    def hypothesis_level(self, l: int) -> float:
        """Lower bound on ``f(H)`` required at level ``l`` inside the induction."""
        if self.mode == "main3":
            return 0.5 - 2.0 ** -(l + 2)
        return 0.5 - self.growth ** -l

    def target_fraction(self, l: int) -> float:
        if self.mode == "main3":
            return 2.0 / 3.0 + 2.0 ** -(l + 2)
        if self.mode == "main4":
            return 2.0 / 3.0 + self.growth ** -l
        return 1.0 - self.epsilon1

    @property
    def base_level(self) -> int:
        if self.mode == "main3":
            return 0
        if self.mode == "main4":
            return self.l0
        return math.floor(1.0 / self.epsilon1) - 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantsProfile":
        return cls(**d)


def build_profile(mode: str, L: Optional[float] = None, delta: Optional[float] = None,
                  epsilon1: Optional[float] = None, strict: bool = True) -> ConstantsProfile:
    """Validate constants for a mode and derive ``c``, ``eps`` and ``l0``.

    With ``strict=False`` a ``main3`` profile may use ``L < 1000`` so that
    traces have non-trivial depth at desk scale; such profiles are marked
    ``nominal=False``.
    """
    if mode not in MODES:
        raise ProfileError(f"unknown mode {mode!r}; choose from {MODES}")
    if mode == "main3":
        L = MAIN3_L if L is None else float(L)
        if delta is not None and float(delta) != MAIN3_DELTA:
            raise ProfileError("main3 uses the fixed cut 0.9; use main4 for other delta")
        nominal = L >= MAIN3_L
        if strict and not nominal:
            raise ProfileError(f"main3 requires L >= {MAIN3_L:g}, got {L:g}")
        return ConstantsProfile("main3", L, MAIN3_DELTA, MAIN3_C, nominal=nominal)

    if L is None or delta is None:
        raise ProfileError(f"{mode} needs both L and delta")
    L, delta = float(L), float(delta)
    if not 0.0 < delta < 1.0:
        raise ProfileError(f"delta must lie in (0, 1), got {delta}")
    c = math.log2(1.0 / delta)
    epsilon = (L * c) ** delta / 2.0 - 1.0
    if epsilon <= 0.0:
        raise ProfileError(
            f"epsilon = {epsilon:.3g} <= 0: L must exceed 2^(1/delta)/log2(1/delta) = "
            f"{constant_objective(delta):.6f} for delta={delta}; leave some slack above it")
    if epsilon >= 3.0:
        raise ProfileError(f"epsilon = {epsilon:.6g} >= 3 violates the upper bound; lower L")
    l0 = minimal_l0(epsilon, delta)
    if mode == "main4":
        if epsilon1 is not None:
            raise ProfileError("epsilon1 only applies to bell mode")
        return ConstantsProfile("main4", L, delta, c, epsilon, l0)
    if epsilon1 is None or not 0.0 < epsilon1 < 1.0:
        raise ProfileError(f"bell mode needs epsilon1 in (0, 1), got {epsilon1}")
    # theorem also asks for eps1 < 1/l0; recorded via `nominal`, not enforced
    return ConstantsProfile("bell", L, delta, c, epsilon, l0, float(epsilon1),
                            nominal=epsilon1 < 1.0 / l0)


def m_level(profile: ConstantsProfile, p: float, N: int, l: int) -> int:
    """The level ``m_l`` at which the conclusion is measured; may exceed ``N``."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    x = profile.L * p * N * math.log2(l + 1)
    if profile.mode == "main4":
        x += MAIN4_BASE_COEFF * p * N * math.log2(profile.l0 + 1)
    elif profile.mode == "bell":
        x += BELL_BASE_COEFF * p * N * math.log2(1.0 / profile.epsilon1)
    return _floor(x)


def recombination_holds(profile: ConstantsProfile, p: float, N: int, l: int) -> bool:
    """``m_{l1}`` on the shrunken ground set plus ``w`` stays at or below ``m_l``."""
    w = profile.w_size(p, N)
    l1 = profile.next_level(l)
    return m_level(profile, p, N - w, l1) + w <= m_level(profile, p, N, l)


def sum2_chain(profile: ConstantsProfile, l: int) -> list[tuple[str, float, float, bool]]:
    """The per-``C(N,w)`` arithmetic of the double-counting bound, leg by leg.

    Returns ``(name, left, right, holds)`` for: the exact tail sum against the
    closed form, and the closed form against the target factor.
    """
    cL = profile.c * profile.L
    tail = math.fsum((cL) ** -k * math.comb(l, k) for k in range(l + 1) if profile.is_large(k, l))
    exponent = float(profile.delta_exact * l)
    legs = []
    if profile.mode == "main3":
        closed = cL**-exponent * 2.0 ** (l + 1)
        legs.append(("tail <= closed", tail, closed, _close_le(tail, closed)))
        legs.append(("closed <= target", closed, profile.dcl_factor(l),
                     _close_le(closed, profile.dcl_factor(l))))
    else:
        closed = cL**-exponent * 2.0**l
        eps_form = (1.0 + profile.epsilon) ** -l
        legs.append(("tail <= closed", tail, closed, _close_le(tail, closed)))
        legs.append(("closed <= (1+eps)^-l", closed, eps_form, _close_le(closed, eps_form)))
        legs.append(("(1+eps)^-l <= target", eps_form, profile.dcl_factor(l),
                     _close_le(eps_form, profile.dcl_factor(l))))
    return legs


# ---------------------------------------------------------------- one W


@dataclass(frozen=True)
class WRecord:
    W: int
    H_prime: Family
    G_W: Family
    H_tilde: Family
    sigma: float
    mu: Optional[float]
    threshold: float
    good: bool
    draws: int = 1

    def to_dict(self, lift=None) -> dict:
        lift = lift or (lambda m: m)
        return {
            "W": indices_from_mask(lift(self.W)),
            "G_W": self.G_W.original_sets(),
            "H_tilde": self.H_tilde.original_sets(),
            "sigma": self.sigma,
            "mu": self.mu,
            "threshold": self.threshold,
            "good": self.good,
            "draws": self.draws,
        }


def sigma_of(G: Family, p: float) -> float:
    return math.fsum(p ** popcount(T) for T in G.members)


def fragment_once(H: Family, W: int, l: int, profile: ConstantsProfile, p: float,
                  exact_cap: Optional[int] = None) -> WRecord:
    p = check_probability(p)
    if not is_l_bounded(H, l):
        raise ValueError(f"family is {H.bound_l}-bounded, not {l}-bounded")
    H_prime = minimal_sets(restrict(H, W))
    large = tuple(T for T in H_prime.members if profile.is_large(popcount(T), l))
    small = tuple(T for T in H_prime.members if not profile.is_large(popcount(T), l))
    G_W = Family(H_prime.ground_size, large, H_prime.index_map)
    H_tilde = Family(H_prime.ground_size, small, H_prime.index_map)
    sigma = sigma_of(G_W, p)
    try:
        mu = mu_upset_exact(G_W, p, exact_cap)
    except GroundTooLarge:
        mu = None
    thr = profile.good_threshold(l)
    return WRecord(W, H_prime, G_W, H_tilde, sigma, mu, thr, sigma <= thr)


@dataclass(frozen=True)
class Sampling:
    count: int = DEFAULT_SAMPLES
    seed: int = 0

    def to_dict(self) -> dict:
        return {"count": self.count, "seed": self.seed}


def _level_masks(N: int, w: int):
    for combo in itertools.combinations(range(N), w):
        yield mask_from_indices(combo)


def scan_W(H: Family, l: int, profile: ConstantsProfile, p: float,
           sampling: Optional[Sampling] = None, exact_cap: Optional[int] = None):
    """Evaluate every ``W`` of size ``w`` (or a seeded sample of them).

    Returns ``(w, records, draws)``: records sorted by mask, one per distinct
    ``W``, and the total number of draws (``C(N, w)`` when exhaustive).
    """
    N = H.ground_size
    w = profile.w_size(p, N)
    if w > N:
        raise ValueError(f"w = {w} exceeds the ground set size {N}")
    if sampling is None:
        if math.comb(N, w) > EXHAUSTIVE_CAP:
            raise ValueError(f"C({N}, {w}) sets exceed the exhaustive cap; pass a Sampling")
        recs = [fragment_once(H, W, l, profile, p, exact_cap) for W in _level_masks(N, w)]
        return w, recs, len(recs)
    rng = np.random.default_rng(sampling.seed)
    counts: dict[int, int] = {}
    for _ in range(sampling.count):
        W = mask_from_indices(rng.choice(N, size=w, replace=False)) if w else 0
        counts[W] = counts.get(W, 0) + 1
    recs = []
    for W in sorted(counts):
        r = fragment_once(H, W, l, profile, p, exact_cap)
        recs.append(WRecord(r.W, r.H_prime, r.G_W, r.H_tilde, r.sigma, r.mu,
                            r.threshold, r.good, counts[W]))
    return w, recs, sampling.count


@dataclass(frozen=True)
class DCLResult:
    w: int
    lhs: float
    rhs: float
    holds: bool
    degenerate: bool
    exhaustive: bool
    sigma_total: float
    sigma_dominates_mu: bool
    chain: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["chain"] = [list(leg) for leg in self.chain]
        return d


def _dcl_from_records(H, l, profile, p, w, recs, draws, exhaustive) -> DCLResult:
    N = H.ground_size
    n_W = math.comb(N, w)
    if any(r.mu is None for r in recs):
        raise GroundTooLarge("mu_p(<G_W>) not exactly computable for some W")
    if exhaustive:
        lhs = math.fsum(r.mu for r in recs)
        sigma_total = math.fsum(r.sigma for r in recs)
    else:
        lhs = n_W * math.fsum(r.mu * r.draws for r in recs) / draws
        sigma_total = n_W * math.fsum(r.sigma * r.draws for r in recs) / draws
    rhs = n_W * profile.dcl_factor(l)
    large_k = [k for k in range(l + 1) if profile.is_large(k, l)]
    count_bound = math.fsum(math.comb(N, w + k) * math.comb(l, k) * p**k for k in large_k)
    cL = profile.c * profile.L
    scaled = n_W * math.fsum(cL**-k * math.comb(l, k) for k in large_k)
    chain = [("mu-sum <= sigma-sum", lhs, sigma_total, _close_le(lhs, sigma_total)),
             ("sigma-sum <= count bound", sigma_total, count_bound, _close_le(sigma_total, count_bound)),
             ("count bound <= scaled tail", count_bound, scaled, _close_le(count_bound, scaled))]
    for name, left, right, _ in sum2_chain(profile, l):
        chain.append((name + " (x C(N,w))", n_W * left, n_W * right,
                      _close_le(n_W * left, n_W * right)))
    dominated = all(r.mu <= r.sigma + 1e-15 for r in recs)
    return DCLResult(w, lhs, rhs, _close_le(lhs, rhs), w == 0, exhaustive,
                     sigma_total, dominated, tuple(chain))


def dcl_verify(H: Family, l: int, profile: ConstantsProfile, p: float,
               sampling: Optional[Sampling] = None, exact_cap: Optional[int] = None) -> DCLResult:
    """Compare ``sum_W mu_p(<G_W>)`` over ``|W| = w`` with the double-counting bound."""
    w, recs, draws = scan_W(H, l, profile, p, sampling, exact_cap)
    return _dcl_from_records(H, l, profile, p, w, recs, draws, sampling is None)


@dataclass(frozen=True)
class GoodFraction:
    fraction_bad: float
    budget: float
    within_budget: bool
    n_bad: int
    n_drawn: int
    exhaustive: bool
    stderr: float
    markov_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def _good_fraction_from_records(H, l, profile, w, recs, draws, exhaustive) -> GoodFraction:
    n_bad = sum(r.draws for r in recs if not r.good)
    frac = n_bad / draws
    thr = profile.good_threshold(l)
    mean_sigma = math.fsum(r.sigma * r.draws for r in recs) / draws
    markov = mean_sigma / thr
    budget = profile.bad_budget(l)
    stderr = 0.0 if exhaustive else math.sqrt(frac * (1.0 - frac) / draws)
    return GoodFraction(frac, budget, frac <= budget, n_bad, draws, exhaustive, stderr, markov)


def good_fraction(H: Family, l: int, profile: ConstantsProfile, p: float,
                  sampling: Optional[Sampling] = None, exact_cap: Optional[int] = None) -> GoodFraction:
    """Fraction of bad ``W`` (``sigma_W`` above threshold) against the averaging budget."""
    w, recs, draws = scan_W(H, l, profile, p, sampling, exact_cap)
    return _good_fraction_from_records(H, l, profile, w, recs, draws, sampling is None)


# ---------------------------------------------------------------- induction step


@dataclass(frozen=True)
class StepCheck:
    l: int
    l1: int
    f_H: float
    f_H_prime: float
    f_G: float
    f_H_tilde: float
    lift_ok: bool
    legs: tuple
    holds: bool

    def __bool__(self) -> bool:
        return self.holds

    def to_dict(self) -> dict:
        d = asdict(self)
        d["legs"] = [list(leg) for leg in self.legs]
        return d


def _exact_cost(H: Family, p: float) -> float:
    sol = cover_cost(H, p)
    if not sol.optimal:
        raise CoverBudgetExceeded("cover search did not finish; step cannot be certified")
    return sol


def induction_step_check(H: Family, W: int, l: int, profile: ConstantsProfile, p: float,
                         tol: float = 1e-9, record: Optional[WRecord] = None) -> StepCheck:
    """Check every inequality of the induction step for one good ``W``."""
    rec = record or fragment_once(H, W, l, profile, p)
    if not rec.good:
        raise ValueError("induction step requires a good W")
    l1 = profile.next_level(l)
    f_H = _exact_cost(H, p).cost
    sol_prime = _exact_cost(rec.H_prime, p)
    f_prime = sol_prime.cost
    f_G = _exact_cost(rec.G_W, p).cost
    f_tilde = _exact_cost(rec.H_tilde, p).cost
    # a cover of H'_W, read in H's indices, must already cover H
    lifted = Family(H.ground_size,
                    tuple(_to_parent(rec.H_prime, H, T) for T in sol_prime.cover.members))
    lift_ok = covers(lifted, H)
    thr = profile.good_threshold(l)
    legs = (
        ("f(H~) >= f(H') - f(G)", f_tilde, f_prime - f_G, f_tilde >= f_prime - f_G - tol),
        ("f(H') >= f(H)", f_prime, f_H, lift_ok and f_prime >= f_H - tol),
        ("f(G) <= sigma <= threshold", f_G, thr, f_G <= rec.sigma + tol and rec.sigma <= thr + tol),
        ("f(H) - threshold >= 1/2 - 2*threshold", f_H - thr, 0.5 - 2 * thr,
         f_H - thr >= 0.5 - 2 * thr - tol),
        ("1/2 - 2*threshold >= next hypothesis", 0.5 - 2 * thr, profile.hypothesis_level(l1),
         0.5 - 2 * thr >= profile.hypothesis_level(l1) - tol),
        ("f(H~) >= next hypothesis", f_tilde, profile.hypothesis_level(l1),
         f_tilde >= profile.hypothesis_level(l1) - tol),
    )
    return StepCheck(l, l1, f_H, f_prime, f_G, f_tilde, lift_ok, legs, all(x[3] for x in legs))


def _to_parent(child: Family, parent: Family, mask: int) -> int:
    """Map a mask on a restricted ground set to the parent's ground set."""
    parent_pos = {orig: i for i, orig in enumerate(parent.index_map or range(parent.ground_size))}
    return mask_from_indices(parent_pos[child.index_map[i]] for i in indices_from_mask(mask))


# ---------------------------------------------------------------- theorem verdict


@dataclass(frozen=True)
class TheoremVerdict:
    mode: str
    l: int
    hypothesis_holds: bool
    f_value: float
    m_l: int
    degenerate: bool
    target_fraction: float
    achieved_fraction: Optional[float]
    exact: bool
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def verify_covering_theorem(H: Family, p: float, profile: ConstantsProfile, l: int,
                            exact_cap: Optional[int] = None, seed: int = 0) -> TheoremVerdict:
    """Evaluate hypothesis and conclusion of the covering theorem for one family.

    ``passed`` requires the hypothesis to hold and the achieved fraction of
    level ``m_l`` to reach the target.  When ``m_l >= N`` the only relevant
    level is ``{X}``, which a nonempty family always reaches.
    """
    p = check_probability(p)
    if not is_l_bounded(H, l):
        raise ValueError(f"family is {H.bound_l}-bounded, not {l}-bounded")
    N = H.ground_size
    f = _exact_cost(H, p).cost
    if profile.mode == "bell":
        hyp = f > 0.5
    else:
        hyp = f >= profile.hypothesis_level(l) - 1e-12
    m = m_level(profile, p, N, l)
    target = profile.target_fraction(l)
    note = "external base (Bell)" if profile.mode == "bell" and l == profile.base_level else ""
    if m >= N:
        ok = bool(H.members)
        return TheoremVerdict(profile.mode, l, hyp, f, m, True, target, 1.0 if ok else 0.0,
                              True, hyp and ok, note)
    stats = level_stats(H, m, exact_cap=exact_cap, seed=seed)
    achieved = stats.value
    return TheoremVerdict(profile.mode, l, hyp, f, m, False, target, achieved, stats.exact,
                          hyp and achieved >= target, note)


# ---------------------------------------------------------------- induction trace


@dataclass
class TraceNode:
    depth: int
    ground: list
    family: list
    l: int
    w: Optional[int]
    status: str
    verdict: dict
    dcl: Optional[dict] = None
    good_fraction: Optional[dict] = None
    records: list = field(default_factory=list)
    chosen_W: Optional[list] = None
    step: Optional[dict] = None
    child: Optional["TraceNode"] = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("depth", "ground", "family", "l", "w", "status", "verdict", "dcl",
              "good_fraction", "records", "chosen_W", "step")}
        d["child"] = self.child.to_dict() if self.child is not None else None
        return d

    def nodes(self):
        node = self
        while node is not None:
            yield node
            node = node.child


@dataclass
class FragmentationTrace:
    inputs: dict
    root: TraceNode

    @property
    def depth(self) -> int:
        return sum(1 for _ in self.root.nodes())

    @property
    def certifying(self) -> bool:
        return self.inputs["sampling"] is None

    def to_dict(self) -> dict:
        return {"schema": TRACE_SCHEMA, "version": TRACE_VERSION,
                "inputs": self.inputs, "root": self.root.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _reached_base(profile: ConstantsProfile, l: int) -> bool:
    return l <= profile.base_level


def _run_node(H: Family, p, profile, l, depth, depth_cap, sampling, exact_cap) -> TraceNode:
    ground = list(H.index_map) if H.index_map is not None else list(range(H.ground_size))
    verdict = verify_covering_theorem(H, p, profile, l, exact_cap).to_dict()
    node = TraceNode(depth, ground, H.original_sets(), l, None, "", verdict)
    if _reached_base(profile, l):
        node.status = "base (external Bell)" if profile.mode == "bell" else "base"
        return node
    w = profile.w_size(p, H.ground_size)
    node.w = w
    if w > H.ground_size:
        node.status = "w_exceeds_N"
        return node
    try:
        w, recs, draws = scan_W(H, l, profile, p, sampling, exact_cap)
    except ValueError as exc:
        node.status = f"scan_failed: {exc}"
        return node
    exhaustive = sampling is None
    node.records = [r.to_dict(H.lift) for r in recs]
    node.dcl = _dcl_from_records(H, l, profile, p, w, recs, draws, exhaustive).to_dict()
    node.good_fraction = _good_fraction_from_records(H, l, profile, w, recs, draws, exhaustive).to_dict()
    good = [r for r in recs if r.good]
    if not good:
        node.status = "stuck"
        return node
    chosen = good[0]
    node.chosen_W = indices_from_mask(H.lift(chosen.W))
    step = induction_step_check(H, chosen.W, l, profile, p, record=chosen)
    node.step = step.to_dict()
    if not step.holds:
        node.status = "step_failed"
        return node
    if depth >= depth_cap:
        node.status = "depth_cap"
        return node
    node.status = "recursed"
    node.child = _run_node(chosen.H_tilde, p, profile, profile.next_level(l), depth + 1,
                           depth_cap, sampling, exact_cap)
    return node


def run_induction(H: Family, p: float, profile: ConstantsProfile, l: int, depth_cap: int = 8,
                  sampling: Optional[Sampling] = None, exact_cap: Optional[int] = None) -> FragmentationTrace:
    """Run the induction on ``H`` from level ``l`` and record every step.

    At each node all ``W`` of size ``w`` are classified, the double-counting
    bound and averaging budget are evaluated, the lowest good ``W`` is chosen
    and the step inequalities are checked before recursing into ``H~_W`` on
    ``X \\ W`` at level ``floor(delta*l)``.  A node without any good ``W``
    ends the trace with status ``"stuck"``.
    """
    p = check_probability(p)
    if depth_cap < 1:
        raise ValueError("depth_cap must be at least 1")
    if not is_l_bounded(H, l):
        raise ValueError(f"family is {H.bound_l}-bounded, not {l}-bounded")
    base = Family(H.ground_size, H.members)
    inputs = {
        "family": base.to_dict(),
        "p": p,
        "profile": profile.to_dict(),
        "l": l,
        "depth_cap": depth_cap,
        "sampling": sampling.to_dict() if sampling is not None else None,
        "exact_cap": exact_cap,
    }
    root = _run_node(base, p, profile, l, 1, depth_cap, sampling, exact_cap)
    return FragmentationTrace(inputs, root)


@dataclass(frozen=True)
class RecheckResult:
    identical: bool
    sigma_mismatches: int
    good_mismatches: int

    @property
    def ok(self) -> bool:
        return self.identical and not self.sigma_mismatches and not self.good_mismatches


def recheck_trace(data: dict) -> RecheckResult:
    """Re-run a serialised trace from its inputs and compare it field by field.

    Also recomputes each ``sigma_W`` from the stored ``G_W`` sets and each
    good flag from the stored threshold, independently of the run.
    """
    if data.get("schema") != TRACE_SCHEMA or data.get("version") != TRACE_VERSION:
        raise ValueError("not a fragmentation trace of a supported version")
    inp = data["inputs"]
    sampling = Sampling(**inp["sampling"]) if inp["sampling"] is not None else None
    rerun = run_induction(Family.from_dict(inp["family"]), inp["p"],
                          ConstantsProfile.from_dict(inp["profile"]), inp["l"],
                          inp["depth_cap"], sampling, inp.get("exact_cap"))
    identical = json.dumps(rerun.to_dict(), sort_keys=True) == json.dumps(data, sort_keys=True)
    p = inp["p"]
    sigma_bad = good_bad = 0
    node = data["root"]
    while node is not None:
        for rec in node["records"]:
            sigma = math.fsum(p ** len(s) for s in rec["G_W"])
            if abs(sigma - rec["sigma"]) > 1e-15:
                sigma_bad += 1
            if (rec["sigma"] <= rec["threshold"]) != rec["good"]:
                good_bad += 1
        node = node["child"]
    return RecheckResult(identical, sigma_bad, good_bad)


def load_trace(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
