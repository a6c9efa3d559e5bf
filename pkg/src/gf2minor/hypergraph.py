"""k-uniform hypergraphs built from column supports, d-core peeling, and the
fixed-point prediction of core sizes in the random model."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gf2 import GF2Matrix


class NonUniformColumn(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Edge ``j`` is the sorted vertex tuple of the ``j``-th source column."""

    n_vertices: int
    edges: np.ndarray  # (n_edges, k) int64, rows sorted

    def __post_init__(self) -> None:
        e = self.edges
        if e.ndim != 2:
            raise ValueError("edges must be a 2-D array")
        if e.size:
            if e.min() < 0 or e.max() >= self.n_vertices:
                raise ValueError("vertex out of range")
            if e.shape[1] > 1 and np.any(np.diff(e, axis=1) <= 0):
                raise ValueError("edges must be strictly increasing vertex tuples")

    @property
    def k(self) -> int:
        return self.edges.shape[1]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @classmethod
    def from_supports(cls, n_vertices: int, supports: Sequence[Sequence[int]] | np.ndarray, k: int | None = None) -> Hypergraph:
        if isinstance(supports, np.ndarray) and supports.ndim == 2:
            edges = np.sort(supports.astype(np.int64), axis=1)
            if k is not None and edges.shape[1] != k and len(edges):
                raise NonUniformColumn(f"columns have {edges.shape[1]} ones, expected {k}")
            return cls(n_vertices, edges)
        supports = [np.asarray(s, dtype=np.int64) for s in supports]
        if k is None:
            k = len(supports[0]) if supports else 0
        for j, s in enumerate(supports):
            if len(s) != k:
                raise NonUniformColumn(f"column {j} has {len(s)} ones, expected {k}")
        edges = np.sort(np.array(supports, dtype=np.int64).reshape(len(supports), k), axis=1)
        return cls(n_vertices, edges)

    @classmethod
    def from_columns(cls, m: GF2Matrix, column_range: range | Sequence[int] | None = None, k: int | None = None) -> Hypergraph:
        cols = range(m.ncols) if column_range is None else column_range
        sub = m.select_columns(list(cols))
        return cls.from_supports(m.nrows, sub.column_supports(), k)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)


@dataclass(frozen=True)
class CoreResult:
    vertices: np.ndarray
    edge_indices: np.ndarray
    peel_order: list[tuple[int, int]]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_indices)

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "edge_indices": self.edge_indices.tolist(),
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
        }


def d_core(h: Hypergraph, d: int) -> CoreResult:
    """Peel vertices of degree < d (and their edges) until none remain.

    ``peel_order`` records ``(vertex, step)`` where step 0 holds the vertices
    deficient at the start and step t+1 those that became deficient while
    processing step t.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    n, m = h.n_vertices, h.n_edges
    flat = h.edges.ravel()
    deg = np.bincount(flat, minlength=n)
    order = np.argsort(flat, kind="stable")
    inc = (order // max(h.k, 1)).tolist()
    starts = np.concatenate([[0], np.cumsum(deg)]).tolist()
    edges = h.edges.tolist()
    deg_l = deg.tolist()

    alive_v = [True] * n
    alive_e = [True] * m
    queued = [False] * n
    queue: deque[tuple[int, int]] = deque()
    for v in np.flatnonzero(deg < d).tolist():
        queued[v] = True
        queue.append((v, 0))

    peel: list[tuple[int, int]] = []
    while queue:
        v, step = queue.popleft()
        alive_v[v] = False
        peel.append((v, step))
        for e in inc[starts[v] : starts[v + 1]]:
            if not alive_e[e]:
                continue
            alive_e[e] = False
            for u in edges[e]:
                if u == v or not alive_v[u]:
                    continue
                deg_l[u] -= 1
                if deg_l[u] < d and not queued[u]:
                    queued[u] = True
                    queue.append((u, step + 1))

    vertices = np.flatnonzero(np.array(alive_v, dtype=bool))
    edge_idx = np.flatnonzero(np.array(alive_e, dtype=bool)) if m else np.zeros(0, dtype=np.int64)
    return CoreResult(vertices, edge_idx, peel)


# fixed-point prediction ----------------------------------------------------


def poisson_split(x: np.ndarray | float, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Pr[Po(x) <= j], Pr[Po(x) > j])`` for an array of means.

    Terms x^i/i! are generated by forward recurrence and rescaled whenever a
    term passes 1e250; the two partial sums share the scale, so their ratio
    needs no e^{-x} factor.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if j < 0:
        return np.zeros_like(x), np.ones_like(x)
    xmax = float(x.max()) if x.size else 0.0
    top = int(max(j, xmax) + 12 * math.sqrt(xmax + 1) + 60)
    term = np.ones_like(x)
    head = np.ones_like(x)
    tail = np.zeros_like(x)
    for i in range(1, top + 1):
        term = term * x / i
        if i <= j:
            head += term
        else:
            tail += term
        big = term > 1e250
        if big.any():
            term[big] /= 1e250
            head[big] /= 1e250
            tail[big] /= 1e250
    total = head + tail
    return head / total, tail / total


@dataclass(frozen=True)
class CorePrediction:
    x: float
    vertex_fraction: float
    edge_fraction: float
    subcritical: bool = False

    def residual(self, c: float, k: int, d: int) -> float:
        """Relative error of c recomputed from x."""
        if self.subcritical:
            return math.nan
        _, p = poisson_split(self.x, d - 2)
        return abs(self.x / p[0] ** (k - 1) - c) / c


def _log_excess(x: np.ndarray, c: float, k: int, d: int) -> np.ndarray:
    # sign of  x / Pr[Po(x) >= d-1]^(k-1) - c
    _, p = poisson_split(x, d - 2)
    with np.errstate(divide="ignore"):
        return np.log(x) - (k - 1) * np.log(p) - math.log(c)


def core_prediction(c: float, k: int, d: int, grid: int = 10_000) -> CorePrediction:
    """Greatest root x of ``c = x / (1 - e^{-x} sum_{i<=d-2} x^i/i!)^{k-1}``.

    ``c`` is the average vertex degree k*m/n.  Returns the predicted vertex
    fraction ``Pr[Po(x) >= d]`` and edge fraction ``(x/c)^{k/(k-1)}`` of the
    d-core; a ``subcritical`` prediction (all zeros) when no root exists.
    """
    if c <= 0 or k < 2 or d < 1:
        raise ValueError("need c > 0, k >= 2, d >= 1")
    step = c / grid
    xs = c - step * np.arange(grid)
    vals = _log_excess(xs, c, k, d)
    if vals[0] <= 0.0:
        hi = lo = c
    else:
        neg = np.flatnonzero(vals < 0)
        if neg.size == 0:
            return CorePrediction(0.0, 0.0, 0.0, subcritical=True)
        t = int(neg[0])
        lo, hi = xs[t], xs[t - 1]
        while hi - lo >= 1e-12 * c:
            mid = 0.5 * (lo + hi)
            if _log_excess(np.array([mid]), c, k, d)[0] < 0:
                lo = mid
            else:
                hi = mid
    x = 0.5 * (lo + hi)
    _, vf = poisson_split(x, d - 1)
    ef = min(1.0, (x / c) ** (k / (k - 1)))
    return CorePrediction(float(x), float(vf[0]), float(ef))
