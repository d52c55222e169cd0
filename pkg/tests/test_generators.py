import itertools
import math

import pytest

from threshold_lab.generators import (
    cliques,
    edge_count,
    edge_index,
    edge_list,
    fixed_set,
    hamiltonian_cycles,
    make_family,
    perfect_matchings,
    random_family,
    singletons,
    triangles,
)
from threshold_lab.setfam import popcount


def cycle_edge_sets(n):
    """Every cyclic vertex order, reduced to its frozenset of undirected edges."""
    seen = set()
    for perm in itertools.permutations(range(n)):
        seen.add(frozenset(frozenset((perm[i], perm[(i + 1) % n])) for i in range(n)))
    return seen


def as_edge_sets(F, n):
    edges = edge_list(n)
    return {frozenset(frozenset(edges[e]) for e in s) for s in F.sets()}


def test_edge_index_is_a_bijection():
    for n in range(2, 9):
        got = [edge_index(i, j, n) for i, j in edge_list(n)]
        assert got == list(range(edge_count(n)))
        assert edge_index(1, 0, n) == edge_index(0, 1, n)


def test_edge_index_rejects_loops():
    with pytest.raises(ValueError):
        edge_index(2, 2, 4)


@pytest.mark.parametrize("n", range(3, 8))
def test_hamiltonian_against_oracle(n):
    F = hamiltonian_cycles(n)
    assert len(F) == math.factorial(n - 1) // 2
    assert as_edge_sets(F, n) == cycle_edge_sets(n)
    assert set(F.sizes()) == {n}


@pytest.mark.parametrize("n,k", [(4, 2), (5, 3), (6, 3), (6, 4)])
def test_cliques(n, k):
    F = cliques(n, k)
    assert len(F) == math.comb(n, k)
    assert set(F.sizes()) == {math.comb(k, 2)}


def test_triangles_alias():
    assert triangles(5) == cliques(5, 3)


@pytest.mark.parametrize("n,count", [(2, 1), (4, 3), (6, 15), (8, 105)])
def test_perfect_matchings(n, count):
    F = perfect_matchings(n)
    assert len(F) == count
    for S in F.sets():
        verts = [v for e in S for v in edge_list(n)[e]]
        assert sorted(verts) == list(range(n))


def test_perfect_matchings_odd():
    with pytest.raises(ValueError):
        perfect_matchings(5)


def test_simple_families():
    assert fixed_set(6, 3).sets() == [[0, 1, 2]]
    assert singletons(4).sets() == [[0], [1], [2], [3]]


def test_random_family_is_deterministic_and_bounded():
    a, b = random_family(12, 4, 9, seed=3), random_family(12, 4, 9, seed=3)
    assert a == b and len(a) == 9
    assert all(1 <= popcount(m) <= 4 for m in a.members)
    assert random_family(12, 4, 9, seed=4) != a


def test_random_family_too_many():
    with pytest.raises(ValueError):
        random_family(3, 1, 4, 0)


def test_make_family():
    assert make_family("clique", 5, k=2) == cliques(5, 2)
    assert make_family("random", 8, l=2, count=3, seed=1) == random_family(8, 2, 3, 1)
    with pytest.raises(ValueError):
        make_family("tree", 4)
