"""Ground sets, families of subsets, and the lattice operations on them.

Subsets of an ``N``-element ground set are stored as integer bitmasks: bit
``i`` is set when element ``i`` belongs to the subset.  A :class:`Family` is an
immutable, canonically sorted collection of such masks.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_GROUND = 63
EXACT_CAP = 26
ENUMERATION_CAP = 10**7
LEVEL_SAMPLES = 10**6


class GroundSetMismatch(ValueError):
    pass


class GroundTooLarge(ValueError):
    pass


def popcount(mask: int) -> int:
    return mask.bit_count()


def mask_from_indices(indices: Iterable[int]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


def indices_from_mask(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def canonical_key(mask: int) -> tuple[int, int]:
    return (popcount(mask), mask)


def check_ground_size(n: int) -> None:
    if not 0 <= n <= MAX_GROUND:
        raise ValueError(f"ground size must lie in [0, {MAX_GROUND}], got {n}")


def check_mask(mask: int, n: int) -> None:
    if mask < 0 or mask >> n:
        raise ValueError(f"set {indices_from_mask(mask)} has elements outside a ground set of size {n}")


@dataclass(frozen=True)
class Family:
    """A deduplicated family of subsets of ``range(ground_size)``.

    ``index_map`` records, for families produced by :func:`restrict`, the
    original element index of each compacted position.  It is ``None`` for a
    family living on its own ground set.
    """

    ground_size: int
    members: tuple[int, ...] = ()
    index_map: Optional[tuple[int, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        check_ground_size(self.ground_size)
        for m in self.members:
            check_mask(m, self.ground_size)
        canon = tuple(sorted(set(self.members), key=canonical_key))
        object.__setattr__(self, "members", canon)
        if self.index_map is not None and len(self.index_map) != self.ground_size:
            raise ValueError("index_map length must equal ground_size")

    @classmethod
    def from_sets(cls, ground_size: int, sets: Iterable[Iterable[int]]) -> "Family":
        return cls(ground_size, tuple(mask_from_indices(s) for s in sets))

    @property
    def bound_l(self) -> int:
        return max((popcount(m) for m in self.members), default=0)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, mask) -> bool:
        return mask in self.members

    def sets(self) -> list[list[int]]:
        return [indices_from_mask(m) for m in self.members]

    def original_sets(self) -> list[list[int]]:
        """Members as index lists in the ground set this family was restricted from."""
        if self.index_map is None:
            return self.sets()
        return [[self.index_map[i] for i in s] for s in self.sets()]

    def lift(self, mask: int) -> int:
        """Translate a mask on this ground set back to original indices."""
        if self.index_map is None:
            return mask
        return mask_from_indices(self.index_map[i] for i in indices_from_mask(mask))

    def sizes(self) -> list[int]:
        return [popcount(m) for m in self.members]

    def to_dict(self) -> dict:
        out = {"ground_size": self.ground_size, "sets": self.sets()}
        if self.index_map is not None:
            out["index_map"] = list(self.index_map)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Family":
        n = int(data["ground_size"])
        sets = data["sets"]
        for s in sets:
            if any(b <= a for a, b in zip(s, s[1:])):
                raise ValueError(f"indices must be strictly increasing within a set, got {s}")
            if any(i < 0 or i >= n for i in s):
                raise ValueError(f"set {s} has indices outside a ground set of size {n}")
        index_map = data.get("index_map")
        return cls(n, tuple(mask_from_indices(s) for s in sets),
                   tuple(index_map) if index_map is not None else None)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Family":
        return cls.from_dict(json.loads(text))


def load_family(path) -> Family:
    with open(path) as fh:
        return Family.from_dict(json.load(fh))


def save_family(family: Family, path) -> None:
    with open(path, "w") as fh:
        json.dump(family.to_dict(), fh)
        fh.write("\n")


def up_closure_membership(F: Family, T: int, ground_size: Optional[int] = None) -> bool:
    """Return True iff ``T`` contains some member of ``F``."""
    if ground_size is not None and ground_size != F.ground_size:
        raise GroundSetMismatch(f"set lives on ground size {ground_size}, family on {F.ground_size}")
    check_mask(T, F.ground_size)
    return any(S & T == S for S in F.members)


def minimal_sets(F: Family) -> Family:
    kept: list[int] = []
    # canonical order is by size, so any subset of a member appears before it
    for S in F.members:
        if not any(K & S == K for K in kept):
            kept.append(S)
    return Family(F.ground_size, tuple(kept), F.index_map)


def is_antichain(F: Family) -> bool:
    ms = F.members
    return not any(a != b and a & b == a for a in ms for b in ms)


def restrict(H: Family, W: int) -> Family:
    """The family ``{S \\ W : S in H}`` re-indexed over the ground set ``X \\ W``."""
    check_mask(W, H.ground_size)
    keep = [i for i in range(H.ground_size) if not (W >> i) & 1]
    pos = {old: new for new, old in enumerate(keep)}
    members = []
    for S in H.members:
        members.append(mask_from_indices(pos[i] for i in indices_from_mask(S & ~W)))
    if H.index_map is None:
        index_map = tuple(keep)
    else:
        index_map = tuple(H.index_map[i] for i in keep)
    return Family(len(keep), tuple(members), index_map)


def is_l_bounded(F: Family, l: int) -> bool:
    if l < 0:
        raise ValueError("l must be nonnegative")
    return F.bound_l <= l


def _member_array(F: Family) -> np.ndarray:
    return np.array(F.members, dtype=np.uint64)


def contains_member(F: Family, masks: np.ndarray) -> np.ndarray:
    """Vectorised up-closure test for an array of masks."""
    masks = np.asarray(masks, dtype=np.uint64)
    hit = np.zeros(masks.shape, dtype=bool)
    for S in _member_array(F):
        hit |= (masks & S) == S
    return hit


def all_masks(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.uint64)


def upset_indicator(F: Family, exact_cap: Optional[int] = None) -> np.ndarray:
    """Boolean vector over all ``2**N`` masks marking membership in the up-closure."""
    cap = EXACT_CAP if exact_cap is None else exact_cap
    if F.ground_size > cap:
        raise GroundTooLarge(f"ground size {F.ground_size} exceeds exact cap {cap}")
    return _upset_indicator(F)


@lru_cache(maxsize=16)
def _upset_indicator(F: Family) -> np.ndarray:
    ind = contains_member(F, all_masks(F.ground_size))
    ind.flags.writeable = False
    return ind


def upset_indicator_zeta(F: Family) -> np.ndarray:
    """Up-closure via the superset (OR) zeta transform; an independent route."""
    n = F.ground_size
    a = np.zeros(1 << n, dtype=bool)
    a[list(F.members)] = True
    for i in range(n):
        view = a.reshape(-1, 2, 1 << i)
        view[:, 1, :] |= view[:, 0, :]
    return a


def mask_popcounts(n: int) -> np.ndarray:
    return np.bitwise_count(all_masks(n)).astype(np.int64)


@dataclass(frozen=True)
class LevelStats:
    level: int
    hits: int
    total: int
    fraction: Fraction
    exact: bool = True
    samples: Optional[int] = None
    ci_halfwidth: float = 0.0

    @property
    def value(self) -> float:
        return float(self.fraction)


def level_counts(F: Family, exact_cap: Optional[int] = None) -> list[int]:
    """``|<F> ∩ L_m|`` for every level ``m = 0..N``, by full enumeration."""
    ind = upset_indicator(F, exact_cap)
    pc = mask_popcounts(F.ground_size)
    return [int(c) for c in np.bincount(pc[ind], minlength=F.ground_size + 1)]


def _random_level_masks(n: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    keys = rng.random((count, n))
    idx = np.argpartition(keys, m - 1, axis=1)[:, :m] if 0 < m < n else None
    if m == 0:
        return np.zeros(count, dtype=np.uint64)
    if m == n:
        return np.full(count, (1 << n) - 1, dtype=np.uint64)
    bits = np.left_shift(np.uint64(1), idx.astype(np.uint64))
    return np.bitwise_or.reduce(bits, axis=1)


def level_stats(F: Family, m: int, *, exact_cap: Optional[int] = None,
                enumeration_cap: int = ENUMERATION_CAP, samples: int = LEVEL_SAMPLES,
                seed: int = 0) -> LevelStats:
    n = F.ground_size
    if not 0 <= m <= n:
        raise ValueError(f"level {m} out of range [0, {n}]")
    total = math.comb(n, m)
    cap = EXACT_CAP if exact_cap is None else exact_cap
    if n <= cap:
        hits = level_counts(F, cap)[m]
        return LevelStats(m, hits, total, Fraction(hits, total))
    if total <= enumeration_cap:
        hits = 0
        members = F.members
        for combo in itertools.combinations(range(n), m):
            T = mask_from_indices(combo)
            if any(S & T == S for S in members):
                hits += 1
        return LevelStats(m, hits, total, Fraction(hits, total))
    rng = np.random.default_rng(seed)
    sample_hits = 0
    done = 0
    while done < samples:
        batch = min(samples - done, 1 << 16)
        sample_hits += int(contains_member(F, _random_level_masks(n, m, batch, rng)).sum())
        done += batch
    frac = Fraction(sample_hits, samples)
    phat = float(frac)
    ci = 1.96 * math.sqrt(phat * (1 - phat) / samples)
    return LevelStats(m, round(phat * total), total, frac, exact=False,
                      samples=samples, ci_halfwidth=ci)
