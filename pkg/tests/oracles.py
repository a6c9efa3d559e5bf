"""Deliberately naive reference implementations used only by the tests.

Nothing here touches the packed representation; everything works on Python
lists and ints so that an error in the library cannot leak into its oracle.
"""

from __future__ import annotations

import itertools
import math


def dense_rank(rows: list[list[int]]) -> int:
    """Textbook Gaussian elimination over GF(2) on a list-of-lists copy."""
    a = [list(r) for r in rows]
    if not a:
        return 0
    nr, nc = len(a), len(a[0])
    r = 0
    for c in range(nc):
        piv = next((i for i in range(r, nr) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        for i in range(nr):
            if i != r and a[i][c]:
                a[i] = [x ^ y for x, y in zip(a[i], a[r])]
        r += 1
        if r == nr:
            break
    return r


def dense_matmul(a: list[list[int]], b: list[list[int]], ncols: int) -> list[list[int]]:
    return [[sum(a[i][t] & b[t][j] for t in range(len(b))) % 2 for j in range(ncols)] for i in range(len(a))]


def int_rank(cols) -> int:
    """Rank of columns given as ints (bit i = row i), via ``dense_rank``."""
    cols = list(cols)
    if not cols:
        return 0
    width = max(c.bit_length() for c in cols)
    return dense_rank([[(c >> i) & 1 for i in range(width)] for c in cols]) if width else 0


def naive_core(n: int, edges: list[tuple[int, ...]], d: int) -> tuple[set, set]:
    """Repeat full degree recounts until no vertex is below d."""
    alive_v = set(range(n))
    alive_e = set(range(len(edges)))
    while True:
        deg = {v: 0 for v in alive_v}
        for e in alive_e:
            for v in edges[e]:
                deg[v] += 1
        low = {v for v in alive_v if deg[v] < d}
        if not low:
            return alive_v, alive_e
        alive_v -= low
        alive_e = {e for e in alive_e if not low & set(edges[e])}


def naive_subset_sums(rows: list[int], alpha: int) -> list[int]:
    n = len(rows)
    counts = [0] * (n + 1)
    for s in range(n + 1):
        for sub in itertools.combinations(range(n), s):
            acc = 0
            for i in sub:
                acc ^= rows[i]
            counts[s] += acc == alpha
    return counts


def matroid_rank_table(cols: list[int]) -> dict[int, int]:
    """Rank of every subset (bitmask over element positions)."""
    n = len(cols)
    return {mask: int_rank(cols[i] for i in range(n) if mask >> i & 1) for mask in range(1 << n)}


def brute_candidate_probability(sigma: list[int], large: list[bool], dcols: dict[int, int], k: int, target: int) -> float:
    """Enumerate every k-subset of positions directly."""
    n = len(sigma)
    hit = 0
    for sub in itertools.combinations(range(n), k):
        if not all(large[sigma[j]] for j in sub):
            continue
        acc = 0
        for j in sub:
            acc ^= dcols[sigma[j]]
        hit += acc == target
    return hit / math.comb(n, k)


def best_intersection(sets: list[int], r: int) -> int:
    """Largest |intersection| over all r-subsets of bitmask sets."""
    best = 0
    for sub in itertools.combinations(sets, r):
        acc = -1
        for s in sub:
            acc &= s
        best = max(best, bin(acc & ((1 << 4096) - 1)).count("1"))
    return best


def independence_table(cols: list[int]) -> list[bool]:
    """indep[mask] for every subset: a set is dependent iff some nonempty subset XORs to zero."""
    n = len(cols)
    xor = [0] * (1 << n)
    dep = [False] * (1 << n)
    for mask in range(1, 1 << n):
        low = (mask & -mask).bit_length() - 1
        xor[mask] = xor[mask & (mask - 1)] ^ cols[low]
        dep[mask] = xor[mask] == 0 or any(dep[mask & ~(1 << i)] for i in range(n) if mask >> i & 1)
    return [not d for d in dep]
