"""Concrete families: graph properties on the edges of K_n, and random families."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .setfam import Family, mask_from_indices


def edge_count(n: int) -> int:
    return n * (n - 1) // 2


def edge_index(i: int, j: int, n: int) -> int:
    """Index of edge ``{i, j}`` of K_n in lexicographic order of pairs ``i < j``."""
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"bad edge ({i}, {j}) for n={n}")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def edge_list(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def _edges_mask(edges, n: int) -> int:
    return mask_from_indices(edge_index(i, j, n) for i, j in edges)


def hamiltonian_cycles(n: int) -> Family:
    """All Hamiltonian cycles of K_n as undirected edge sets; ``(n-1)!/2`` members."""
    if n < 3:
        raise ValueError("Hamiltonian cycles need n >= 3")
    members = []
    for perm in itertools.permutations(range(1, n)):
        if perm[0] > perm[-1]:
            continue
        tour = (0,) + perm
        members.append(_edges_mask(zip(tour, tour[1:] + (0,)), n))
    return Family(edge_count(n), tuple(members))


def cliques(n: int, k: int) -> Family:
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    members = [_edges_mask(itertools.combinations(c, 2), n)
               for c in itertools.combinations(range(n), k)]
    return Family(edge_count(n), tuple(members))


def triangles(n: int) -> Family:
    return cliques(n, 3)


def perfect_matchings(n: int) -> Family:
    if n < 2 or n % 2:
        raise ValueError("perfect matchings need an even n >= 2")

    def matchings(vertices):
        if not vertices:
            yield []
            return
        a = vertices[0]
        for b in vertices[1:]:
            rest = [v for v in vertices if v not in (a, b)]
            for m in matchings(rest):
                yield [(a, b)] + m

    return Family(edge_count(n), tuple(_edges_mask(m, n) for m in matchings(list(range(n)))))


def fixed_set(N: int, k: int) -> Family:
    """A single member ``{0, ..., k-1}`` on a ground set of size ``N``."""
    if not 0 <= k <= N:
        raise ValueError(f"need 0 <= k <= N, got k={k}, N={N}")
    return Family(N, (mask_from_indices(range(k)),))


def singletons(N: int) -> Family:
    return Family(N, tuple(1 << i for i in range(N)))


def random_family(N: int, l: int, count: int, seed: int) -> Family:
    """``count`` distinct nonempty sets with sizes drawn uniformly from ``1..l``."""
    if count < 1:
        raise ValueError("count must be positive")
    if not 1 <= l <= N:
        raise ValueError(f"need 1 <= l <= N, got l={l}, N={N}")
    available = sum(math.comb(N, s) for s in range(1, l + 1))
    if count > available:
        raise ValueError(f"only {available} distinct sets of size 1..{l} exist on {N} elements")
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    order: list[int] = []
    while len(order) < count:
        size = int(rng.integers(1, l + 1))
        m = mask_from_indices(rng.choice(N, size=size, replace=False))
        if m not in chosen:
            chosen.add(m)
            order.append(m)
    return Family(N, tuple(order))


KINDS = ("hamiltonian", "clique", "triangle", "perfect_matching", "fixed_set", "singletons", "random")


def make_family(kind: str, n: int, k: int = 3, l: int = 3, count: int = 5, seed: int = 0) -> Family:
    """Build a family by name.

    Graph kinds use ``n`` vertices (ground set = edges of K_n); ``fixed_set``,
    ``singletons`` and ``random`` treat ``n`` as the ground-set size.
    """
    if kind == "hamiltonian":
        return hamiltonian_cycles(n)
    if kind == "clique":
        return cliques(n, k)
    if kind == "triangle":
        return triangles(n)
    if kind == "perfect_matching":
        return perfect_matchings(n)
    if kind == "fixed_set":
        return fixed_set(n, k)
    if kind == "singletons":
        return singletons(n)
    if kind == "random":
        return random_family(n, l, count, seed)
    raise ValueError(f"unknown family kind {kind!r}; choose from {', '.join(KINDS)}")
