"""The p-biased product measure, expectation counts and the thresholds p_c, p_E."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from . import setfam
from .setfam import (
    Family,
    GroundTooLarge,
    check_mask,
    contains_member,
    level_counts,
    mask_popcounts,
    popcount,
    restrict,
    upset_indicator,
)

DEFAULT_TOL = 1e-12
MAX_BISECTION_ITER = 200

OK = "ok"
DEGENERATE_ZERO = "degenerate_zero"
UNDEFINED = "undefined"


def check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return p


def mu_of_set(S: int, p: float, ground_size: int) -> float:
    check_mask(S, ground_size)
    p = check_probability(p)
    k = popcount(S)
    return p**k * (1.0 - p) ** (ground_size - k)


def expectation(F: Family, p: float) -> float:
    """Expected number of members of ``F`` contained in a p-biased random set."""
    p = check_probability(p)
    return math.fsum(count * p**k for k, count in sorted(Counter(F.sizes()).items()))


def _support(F: Family) -> int:
    s = 0
    for m in F.members:
        s |= m
    return s


def _on_support(F: Family) -> Family:
    """The same family re-indexed over the union of its members."""
    full = (1 << F.ground_size) - 1
    return restrict(Family(F.ground_size, F.members), full & ~_support(F))


def _level_weights(n: int, p: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    return np.power(p, k) * np.power(1.0 - p, n - k)


def mu_upset_exact(F: Family, p: float, exact_cap: Optional[int] = None) -> float:
    """``mu_p(<F>)`` by summing the weight of every mask in the up-closure.

    Elements outside the union of the members do not affect the measure, so
    the enumeration runs over the support only.
    """
    p = check_probability(p)
    if not F.members:
        return 0.0
    if 0 in F.members:
        return 1.0
    G = _on_support(F)
    cap = setfam.EXACT_CAP if exact_cap is None else exact_cap
    if G.ground_size > cap:
        raise GroundTooLarge(f"support of size {G.ground_size} exceeds exact cap {cap}")
    ind = upset_indicator(G, cap)
    w = _level_weights(G.ground_size, p)[mask_popcounts(G.ground_size)]
    return float(np.sum(w[ind]))


def mu_by_levels(F: Family, p: float, exact_cap: Optional[int] = None) -> float:
    """``mu_p(<F>)`` assembled level by level as ``sum_m C(N,m) p^m (1-p)^(N-m) c_m``."""
    p = check_probability(p)
    n = F.ground_size
    if not F.members:
        return 0.0
    hits = level_counts(F, exact_cap)
    terms = []
    for m, h in enumerate(hits):
        total = math.comb(n, m)
        c_m = h / total
        terms.append(total * p**m * (1.0 - p) ** (n - m) * c_m)
    return math.fsum(terms)


def mu_upset_mc(F: Family, p: float, samples: int, seed: int,
                batch: int = 1 << 16) -> tuple[float, float]:
    """Monte-Carlo estimate of ``mu_p(<F>)`` with a 95% normal-approximation half-width."""
    p = check_probability(p)
    if samples < 1:
        raise ValueError("samples must be positive")
    if not F.members:
        return 0.0, 0.0
    n = F.ground_size
    rng = np.random.default_rng(seed)
    weights = np.left_shift(np.uint64(1), np.arange(n, dtype=np.uint64))
    hits = 0
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        bits = rng.random((b, n)) < p
        masks = np.bitwise_or.reduce(np.where(bits, weights, np.uint64(0)), axis=1) if n else np.zeros(b, np.uint64)
        hits += int(contains_member(F, masks).sum())
        done += b
    est = hits / samples
    return est, 1.96 * math.sqrt(est * (1.0 - est) / samples)


@dataclass(frozen=True)
class ThresholdValue:
    value: Optional[float]
    status: str = OK
    iterations: int = 0

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdValue":
        return cls(d["value"], d["status"], d.get("iterations", 0))


def bisect_half(fn: Callable[[float], float], tol: float) -> ThresholdValue:
    """Root of the nondecreasing map ``fn(p) = 1/2`` on ``[0, 1]``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = fn(0.0) - 0.5, fn(1.0) - 0.5
    if lo >= 0:
        return ThresholdValue(0.0, OK, 0)
    if hi < 0:
        return ThresholdValue(None, UNDEFINED, 0)
    root, res = optimize.bisect(lambda x: fn(x) - 0.5, 0.0, 1.0, xtol=tol,
                                maxiter=MAX_BISECTION_ITER, full_output=True, disp=False)
    return ThresholdValue(float(root), OK, int(res.iterations))


@lru_cache(maxsize=64)
def _upset_level_hits(F: Family, exact_cap: int) -> tuple[int, tuple[int, ...]]:
    G = _on_support(F)
    if G.ground_size > exact_cap:
        raise GroundTooLarge(f"support of size {G.ground_size} exceeds exact cap {exact_cap}")
    return G.ground_size, tuple(level_counts(G, exact_cap))


def p_critical(F: Family, tol: float = DEFAULT_TOL, exact_cap: Optional[int] = None) -> ThresholdValue:
    """The p at which ``mu_p(<F>) = 1/2``."""
    if not F.members:
        return ThresholdValue(None, UNDEFINED)
    if 0 in F.members:
        return ThresholdValue(0.0, DEGENERATE_ZERO)
    n, hits = _upset_level_hits(F, setfam.EXACT_CAP if exact_cap is None else exact_cap)

    # same sum as mu_upset_exact, grouped by level so each step costs O(N)
    def mu(p):
        return math.fsum(h * p**k * (1.0 - p) ** (n - k) for k, h in enumerate(hits) if h)

    return bisect_half(mu, tol)


def p_expectation(G: Family, tol: float = DEFAULT_TOL) -> ThresholdValue:
    """The p at which ``E_p(|G|) = 1/2``."""
    if not G.members:
        return ThresholdValue(None, UNDEFINED)
    if 0 in G.members:
        return ThresholdValue(0.0, DEGENERATE_ZERO)
    return bisect_half(lambda p: expectation(G, p), tol)


@dataclass(frozen=True)
class ThresholdReport:
    p_E: ThresholdValue
    q: ThresholdValue
    p_c: ThresholdValue
    tolerance: float

    def sandwich_holds(self, slack: Optional[float] = None) -> bool:
        s = 10 * self.tolerance if slack is None else slack
        vals = [self.p_E, self.q, self.p_c]
        if not all(v.defined for v in vals):
            return True
        return self.p_E.value <= self.q.value + s and self.q.value <= self.p_c.value + s

    def to_dict(self) -> dict:
        return {
            "p_E": self.p_E.to_dict(),
            "q": self.q.to_dict(),
            "p_c": self.p_c.to_dict(),
            "tolerance": self.tolerance,
            "sandwich": self.sandwich_holds(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdReport":
        return cls(ThresholdValue.from_dict(d["p_E"]), ThresholdValue.from_dict(d["q"]),
                   ThresholdValue.from_dict(d["p_c"]), d["tolerance"])
