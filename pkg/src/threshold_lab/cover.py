"""Minimum-expectation covers: the cost function f(H) and the threshold q(F).

A family ``G`` covers ``H`` when every member of ``H`` contains a member of
``G``.  The cost of ``G`` at probability ``p`` is ``sum_{T in G} p^|T|``.  Only
subsets of members of ``H`` are useful cover elements, so both solvers search
that pool.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import (
    DEFAULT_TOL,
    DEGENERATE_ZERO,
    UNDEFINED,
    ThresholdReport,
    ThresholdValue,
    bisect_half,
    check_probability,
    p_critical,
    p_expectation,
)
from .setfam import Family, canonical_key, minimal_sets, popcount

NODE_BUDGET = 10**7
COST_EPS = 1e-13


class CoverBudgetExceeded(RuntimeError):
    """The branch-and-bound search ran out of nodes before proving optimality."""


def submasks(S: int, include_empty: bool = False):
    """Yield the submasks of ``S`` in decreasing cardinality, then decreasing value."""
    subs = []
    T = S
    while T:
        subs.append(T)
        T = (T - 1) & S
    subs.sort(key=lambda t: (-popcount(t), -t))
    yield from subs
    if include_empty:
        yield 0


def family_cost(masks, p: float) -> float:
    return math.fsum(p ** popcount(T) for T in masks)


def covers(G: Family, H: Family) -> bool:
    return all(any(T & S == T for T in G.members) for S in H.members)


def _family_key(masks) -> tuple:
    return tuple(sorted(canonical_key(m) for m in masks))


@dataclass(frozen=True)
class CoverSolution:
    cover: Family
    cost: float
    optimal: bool = True
    nodes_explored: int = 0

    def to_dict(self) -> dict:
        return {
            "ground_size": self.cover.ground_size,
            "cover": self.cover.original_sets(),
            "cost": self.cost,
            "optimal": self.optimal,
            "nodes_explored": self.nodes_explored,
        }


def _solution(H: Family, masks, p: float, optimal=True, nodes=0) -> CoverSolution:
    G = Family(H.ground_size, tuple(masks), H.index_map)
    return CoverSolution(G, family_cost(G.members, p), optimal, nodes)


def _better(cost_a, key_a, cost_b, key_b) -> bool:
    if cost_a < cost_b - COST_EPS:
        return True
    return abs(cost_a - cost_b) <= COST_EPS and key_a < key_b


def cover_cost(H: Family, p: float, node_budget: int = NODE_BUDGET) -> CoverSolution:
    """Exact minimum-cost cover of ``H`` by best-first branch and bound.

    Among covers of equal cost the one with the lexicographically smallest
    canonical member list is returned.  When ``node_budget`` is exhausted the
    incumbent is returned with ``optimal=False``.
    """
    p = check_probability(p)
    if not H.members:
        return _solution(H, (), p)
    if 0 in H.members or p >= 1.0:
        return _solution(H, (0,), p)
    members = minimal_sets(H).members
    k = len(members)
    full = (1 << k) - 1
    if p == 0.0:
        # every nonempty set is free; one singleton per uncovered member suffices
        chosen, covered = [], 0
        for i, S in enumerate(members):
            if not covered >> i & 1:
                T = S & -S
                chosen.append(T)
                covered |= sum(1 << j for j, R in enumerate(members) if T & R == T)
        return _solution(H, chosen, p)

    weight = [p**s for s in range(max(popcount(S) for S in members) + 1)]
    options = _closed_options(members)

    def packing_bound(covered: int) -> float:
        used, total = 0, 0.0
        for j, S in enumerate(members):
            if not covered >> j & 1 and not S & used:
                used |= S
                total += weight[popcount(S)]
        return total

    def share_bound(covered: int) -> float:
        # each uncovered member pays its cheapest per-member share of a covering set
        uncovered = full & ~covered
        total = 0.0
        for j in range(k):
            if uncovered >> j & 1:
                total += min(weight[size] / (cov & uncovered).bit_count()
                             for _, size, cov in options[j])
        return total

    def lower_bound(covered: int) -> float:
        return max(packing_bound(covered), share_bound(covered))

    best_masks: tuple = (0,)
    best_cost, best_key = 1.0, _family_key(best_masks)
    own_cost = family_cost(members, p)
    if _better(own_cost, _family_key(members), best_cost, best_key):
        best_masks, best_cost, best_key = tuple(members), own_cost, _family_key(members)

    seen: dict[int, float] = {0: 0.0}
    tick = itertools.count()
    heap = [(lower_bound(0), next(tick), 0.0, 0, ())]
    nodes = 0
    while heap:
        bound, _, cost, covered, chosen = heapq.heappop(heap)
        if bound > best_cost + COST_EPS:
            break
        if cost > seen.get(covered, math.inf) + COST_EPS:
            continue
        nodes += 1
        if nodes > node_budget:
            return _solution(H, best_masks, p, optimal=False, nodes=nodes)
        i = ((full & ~covered) & -(full & ~covered)).bit_length() - 1
        for T, size, cov in options[i]:
            new_cov = covered | cov
            new_cost = cost + weight[size]
            if new_cost > seen.get(new_cov, math.inf) + COST_EPS:
                continue
            new_chosen = chosen + (T,)
            if new_cov == full:
                key = _family_key(new_chosen)
                if _better(new_cost, key, best_cost, best_key):
                    best_masks, best_cost, best_key = new_chosen, new_cost, key
                continue
            new_bound = new_cost + lower_bound(new_cov)
            if new_bound > best_cost + COST_EPS:
                continue
            if new_cost < seen.get(new_cov, math.inf):
                seen[new_cov] = new_cost
            heapq.heappush(heap, (new_bound, next(tick), new_cost, new_cov, new_chosen))
    return _solution(H, best_masks, p, optimal=True, nodes=nodes)


@lru_cache(maxsize=32)
def _closed_options(members: tuple) -> list:
    """Per member, the distinct closed subsets as ``(T, |T|, coverage mask)``.

    The closure of ``T`` is the intersection of all members containing it; it
    covers the same members at no greater cost, so only closed sets are ever
    needed.  Lists are ordered by decreasing size, then decreasing mask.
    """
    out = []
    cache: dict[int, tuple[int, int]] = {}
    for S in members:
        seen: dict[int, tuple] = {}
        for T in submasks(S):
            hit = cache.get(T)
            if hit is None:
                cov, inter = 0, -1
                for j, R in enumerate(members):
                    if T & R == T:
                        cov |= 1 << j
                        inter &= R
                hit = cache[T] = (cov, inter)
            cov, inter = hit
            if cov not in seen:
                seen[cov] = (inter, inter.bit_count(), cov)
        out.append(sorted(seen.values(), key=lambda o: (-o[1], -o[0])))
    return out


def cover_bruteforce(H: Family, p: float, max_candidates: int = 1 << 20,
                     max_members: int = 16) -> CoverSolution:
    """Exact optimum by dynamic programming over the mask of covered members.

    Independent of :func:`cover_cost`: works on ``H`` as given (no reduction
    to minimal sets) and keeps the empty set in the candidate pool.
    """
    p = check_probability(p)
    members = H.members
    k = len(members)
    if k > max_members:
        raise ValueError(f"instance too large: {k} members > {max_members}")
    if k == 0:
        return _solution(H, (), p)
    pool: set[int] = set()
    for S in members:
        T = S
        while True:
            pool.add(T)
            if len(pool) > max_candidates:
                raise ValueError("instance too large: candidate pool exceeds cap")
            if T == 0:
                break
            T = (T - 1) & S
    # per coverage pattern only the largest candidate (cheapest) matters
    best_for_cov: dict[int, int] = {}
    for T in pool:
        c = 0
        for j, S in enumerate(members):
            if T & S == T:
                c |= 1 << j
        cur = best_for_cov.get(c)
        if cur is None or popcount(T) > popcount(cur):
            best_for_cov[c] = T
    classes = [(c, T, p ** popcount(T)) for c, T in best_for_cov.items()]
    size = 1 << k
    dp = np.full(size, np.inf)
    choice = np.full(size, -1, dtype=np.int64)
    parent = np.full(size, -1, dtype=np.int64)
    dp[0] = 0.0
    for state in range(size):
        base = dp[state]
        if base == np.inf:
            continue
        for idx, (c, _, w) in enumerate(classes):
            nxt = state | c
            if nxt != state and base + w < dp[nxt]:
                dp[nxt] = base + w
                choice[nxt] = idx
                parent[nxt] = state
    chosen = []
    state = size - 1
    while state:
        chosen.append(classes[choice[state]][1])
        state = int(parent[state])
    sol = _solution(H, chosen, p)
    return CoverSolution(sol.cover, float(dp[size - 1]), True, len(classes))


@dataclass(frozen=True)
class QValue:
    q: ThresholdValue
    witness: Optional[CoverSolution] = None

    def to_dict(self) -> dict:
        out = {"q": self.q.to_dict()}
        out["witness"] = self.witness.to_dict() if self.witness is not None else None
        return out


def q_value(F: Family, tol: float = DEFAULT_TOL, node_budget: int = NODE_BUDGET) -> QValue:
    """``q(F)``: the root of ``f(F, p) = 1/2``, with the optimal cover there as witness."""
    if not F.members:
        return QValue(ThresholdValue(None, UNDEFINED))
    if 0 in F.members:
        return QValue(ThresholdValue(0.0, DEGENERATE_ZERO), _solution(F, (0,), 0.0))

    def f(p):
        sol = cover_cost(F, p, node_budget)
        if not sol.optimal:
            raise CoverBudgetExceeded(f"cover search exceeded {node_budget} nodes at p={p}")
        return sol.cost

    root = bisect_half(f, tol)
    return QValue(root, cover_cost(F, root.value, node_budget))


def subadditivity_check(H: Family, split_seed: int, p: float) -> bool:
    """Check ``f(H) <= f(H1) + f(H2)`` for a seeded random bipartition of ``H``."""
    rng = np.random.default_rng(split_seed)
    side = rng.random(len(H.members)) < 0.5
    H1 = Family(H.ground_size, tuple(m for m, s in zip(H.members, side) if s))
    H2 = Family(H.ground_size, tuple(m for m, s in zip(H.members, side) if not s))
    whole = cover_cost(H, p).cost
    return whole <= cover_cost(H1, p).cost + cover_cost(H2, p).cost + 1e-12


def irredundant_covers(F: Family, max_assignments: int = 1 << 22):
    """Yield every irredundant cover of ``F`` as a tuple of masks.

    Each member picks one of its subsets; every irredundant cover arises this
    way, since each of its elements is the only cover of some member.
    """
    members = F.members
    total = math.prod(1 << popcount(S) for S in members)
    if total > max_assignments:
        raise ValueError(f"{total} assignments exceed cap {max_assignments}")
    seen = set()
    for pick in itertools.product(*(list(submasks(S, include_empty=True)) for S in members)):
        G = frozenset(pick)
        if G in seen:
            continue
        seen.add(G)
        if _irredundant(G, members):
            yield tuple(sorted(G, key=canonical_key))


def _irredundant(G: frozenset, members) -> bool:
    for U in G:
        rest = G - {U}
        if all(any(T & S == T for T in rest) for S in members):
            return False
    return True


def q_by_enumeration(F: Family, tol: float = DEFAULT_TOL) -> float:
    """``max p_E(G)`` over all irredundant covers, by exhaustive enumeration."""
    # p_E depends only on the size histogram of G
    reps = {}
    for G in irredundant_covers(F):
        reps.setdefault(tuple(sorted(Counter(popcount(T) for T in G).items())), G)
    return max(p_expectation(Family(F.ground_size, G), tol).value for G in reps.values())


def threshold_report(F: Family, tol: float = DEFAULT_TOL, node_budget: int = NODE_BUDGET) -> ThresholdReport:
    return ThresholdReport(p_expectation(F, tol), q_value(F, tol, node_budget).q,
                           p_critical(F, tol), tol)
