"""Independent reference computations and instance generators for the tests.

Nothing here calls the closed forms in ``sharedcache.analytics`` or the
eliminations in ``sharedcache.gf2``; each oracle recomputes its answer from
definitions.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations, product

import networkx as nx
import numpy as np

from sharedcache.association import Association
from sharedcache.placement import SystemParams


def span_size(rows: list[list[int]]) -> int:
    """Number of distinct GF(2) combinations of the rows."""
    if not rows:
        return 1
    seen = set()
    for coeffs in product((0, 1), repeat=len(rows)):
        acc = tuple(sum(c * r[i] for c, r in zip(coeffs, rows)) % 2 for i in range(len(rows[0])))
        seen.add(acc)
    return len(seen)


def rank_by_span(rows: list[list[int]]) -> int:
    return span_size(rows).bit_length() - 1


def algorithm_time(L, params: SystemParams) -> Fraction:
    """Delivery time by walking the rounds and subsets with expected subfile sizes.

    Every active component of an s-subset transmission has expected size
    q^{s-1}(1-q)^{Λ-s+1}, so each transmission costs that much.
    """
    lam = params.num_caches
    L = sorted(L, reverse=True) + [0] * (lam - len(L))
    q = params.q
    total = Fraction(0)
    for j in range(1, max(L) + 1 if L else 1):
        for s in range(1, lam + 1):
            for S in combinations(range(1, lam + 1), s):
                if any(L[x - 1] >= j for x in S):
                    total += q ** (s - 1) * (1 - q) ** (lam - s + 1)
    return total


def dedicated_time(K: int, N, M) -> Fraction:
    """(N/M - 1)(1 - (1 - M/N)^K), the single-user-per-cache decentralized time."""
    r = Fraction(M) / N
    return (1 / r - 1) * (1 - (1 - r) ** K)


def mais_exhaustive(num: int, edges: list[tuple[int, int]]) -> int:
    """Largest vertex set inducing an acyclic subgraph, by enumeration with networkx."""
    g = nx.DiGraph()
    g.add_nodes_from(range(num))
    g.add_edges_from(edges)
    for size in range(num, -1, -1):
        for keep in combinations(range(num), size):
            if nx.is_directed_acyclic_graph(g.subgraph(keep)):
                return size
    return 0


def minrank_exhaustive(wanted: list[int], side: list[set[int]], num: int) -> int:
    """Min-rank over fitting matrices, ranks computed by span enumeration."""
    free = [sorted(s) for s in side]
    best = len(wanted)
    for fill in product(*[list(product((0, 1), repeat=len(f))) for f in free]):
        rows = []
        for w, cols, bits in zip(wanted, free, fill):
            row = [0] * num
            row[w] = 1
            for c, b in zip(cols, bits):
                row[c] = b
            rows.append(row)
        best = min(best, rank_by_span(rows))
    return best


def random_groups(rng: np.random.Generator, K: int, lam: int) -> tuple[tuple[int, ...], ...]:
    """Random association: shuffled users, random cut points, caches may be empty."""
    users = [int(u) for u in rng.permutation(K) + 1]
    cache = rng.integers(0, lam, size=K)
    groups = [[] for _ in range(lam)]
    for u, c in zip(users, cache):
        groups[int(c)].append(u)
    return tuple(tuple(g) for g in groups)


def random_offline(rng: np.random.Generator, distinct: bool, max_F: int = 4096):
    """(params, association, demand) with exact-mode sizes realizable."""
    while True:
        lam = int(rng.integers(1, 5))
        K = int(rng.integers(lam, 9))
        N = int(rng.integers(K if distinct else 1, 9))
        if N ** lam > max_F:
            continue
        M = int(rng.integers(1, N + 1))
        c = int(rng.integers(1, 3)) if 2 * N ** lam <= max_F else 1
        params = SystemParams(N, K, lam, Fraction(M), N ** lam * c)
        assoc = Association(random_groups(rng, K, lam))
        if distinct:
            demand = tuple(int(x) for x in rng.permutation(N)[:K] + 1)
        else:
            demand = tuple(int(x) for x in rng.integers(1, N + 1, size=K))
        return params, assoc, demand


def random_online(rng: np.random.Generator, max_F: int = 4096):
    """Online instance: params with beta, association, initial files and a 2-slot trace."""
    while True:
        lam = int(rng.integers(1, 4))
        K = int(rng.integers(lam, 6))
        N = int(rng.integers(K, 7))
        extra = int(rng.integers(1, 3))
        catalog = N + extra
        if catalog > 8 or catalog ** lam > max_F:
            continue
        M = int(rng.integers(1, catalog))
        params = SystemParams(N, K, lam, Fraction(M), catalog ** lam, beta=Fraction(catalog, N))
        assoc = Association(random_groups(rng, K, lam))
        files = list(range(1, catalog + 1))
        popular = [int(x) for x in rng.permutation(catalog)[:N] + 1]
        trace = []
        next_file = catalog + 1
        current = list(popular)
        for _ in range(2):
            arrivals = []
            for _ in range(int(rng.integers(0, 3))):
                leaving = current[int(rng.integers(len(current)))]
                arrivals.append((next_file, leaving))
                current[current.index(leaving)] = next_file
                next_file += 1
            demand = tuple(int(x) for x in rng.permutation(current)[:K])
            trace.append((arrivals, demand))
        return params, assoc, files, popular, trace
