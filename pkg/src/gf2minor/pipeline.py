"""Constructive search for a fixed binary matroid as a minor of A(n, m, k).

Stages, in column-consumption order:

1. ``build_b1``      core of the hypergraph of the first m1 columns -> B1 on rows I1
2. ``collect_support_columns``  next columns supported inside I1
3. ``l_core``        high-degree core of those columns -> L1 on rows I2
4. ``even_k_adjust`` (k even only) drop one row so a square basis exists
5. ``build_basis``   extend B1 by L1 columns to a nonsingular B, invert
6. ``select_rows``   rows R of B^-1 whose complements share many positions
7. ``build_partition``  atoms of the supports S_i, i in R, and the 0/1 matrix D
8. ``solve_target``  admissible atom patterns for every target column
9. ``scan_candidates``  fresh columns c with phi_R(B^-1 c) equal to a target column

Columns are consumed strictly left to right; everything after the high-water
mark is unseen randomness.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gf2 import BitVec, GF2Error, GF2Matrix, echelon, invert, left_null_space, rank
from .hypergraph import CorePrediction, Hypergraph, core_prediction, d_core
from .matroid import BinaryMatroid, MinorCertificate, verify_certificate
from .sampler import ModelParams, sample_supports


class PipelineError(Exception):
    """A stage could not complete; ``diagnostics`` says why."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class EmptyCore(PipelineError):
    pass


class InsufficientColumns(PipelineError):
    pass


class RankDeficient(PipelineError):
    pass


class BoundUnmet(PipelineError):
    pass


class RankDeficientD(PipelineError):
    pass


class NoAdmissibleSolution(PipelineError):
    pass


class BudgetExhausted(PipelineError):
    pass


class NoRemovableRow(PipelineError):
    pass


@dataclass
class PipelineConfig:
    k: int | None = None
    L: float = 3.0
    zeta: float = 0.5
    m1_fraction: float = 0.25
    core_threshold_fraction: float = 0.1
    eps0: float | None = None  # default max(e^-k / 2, 1 / n2)
    eps1: float | None = None  # default 2^(-2K) * eps0
    delta: float = 0.25
    omega: int = 2000
    even_k_mode: bool | None = None  # None: follow the parity of k
    max_K: int = 16
    debug: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0 < self.m1_fraction < 1:
            raise ValueError("m1_fraction must lie in (0, 1)")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Columns:
    """Column supports of an n-row matrix with k ones in every column."""

    n: int
    supports: np.ndarray  # (m, k)

    @property
    def m(self) -> int:
        return self.supports.shape[0]

    @property
    def k(self) -> int:
        return self.supports.shape[1]

    @classmethod
    def of(cls, a: GF2Matrix | Columns) -> Columns:
        if isinstance(a, Columns):
            return a
        sup = a.column_supports()
        ks = {len(s) for s in sup}
        if len(ks) != 1:
            raise ValueError(f"columns must all have the same weight, saw {sorted(ks)}")
        return cls(a.nrows, np.array(sup, dtype=np.int64).reshape(a.ncols, ks.pop()))

    def matrix(self, cols: Sequence[int] | np.ndarray, rows: np.ndarray | None = None) -> GF2Matrix:
        """Submatrix on the given columns, optionally re-indexed to ``rows`` (sorted)."""
        sup = self.supports[np.asarray(cols, dtype=np.int64)]
        if rows is None:
            return GF2Matrix.from_column_supports(self.n, sup)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[rows] = np.arange(len(rows))
        mapped = pos[sup]
        if mapped.size and mapped.min() < 0:
            raise ValueError("column has a one outside the selected rows")
        return GF2Matrix.from_column_supports(len(rows), mapped)


@dataclass
class AtomPartition:
    sigma_of_index: np.ndarray  # sigma(j), bit i set iff j in S_{R[i]}
    atom_sizes: np.ndarray  # indexed by sigma
    large_threshold: float

    @property
    def K(self) -> int:
        return int(round(math.log2(len(self.atom_sizes))))

    @property
    def large(self) -> np.ndarray:
        return self.atom_sizes >= self.large_threshold


@dataclass
class SignMatrix:
    """K x 2^K matrix; column ``c`` belongs to atom ``sigma = 2^K - 1 - c``."""

    matrix: GF2Matrix

    @property
    def K(self) -> int:
        return self.matrix.nrows

    @staticmethod
    def column_of(sigma: int, K: int) -> int:
        return (1 << K) - 1 - sigma

    @staticmethod
    def sigma_of(col: int, K: int) -> int:
        return (1 << K) - 1 - col

    def column_values(self) -> list[int]:
        """Column ``c`` as an int with bit i = D[i, c]."""
        dense = self.matrix.to_dense()
        weights = 1 << np.arange(self.K, dtype=np.int64)
        return (dense.astype(np.int64) * weights[:, None]).sum(axis=0).tolist()


@dataclass
class PipelineTrace:
    n: int = 0
    k: int = 0
    I1: np.ndarray | None = None
    B1_cols: np.ndarray | None = None
    B1: GF2Matrix | None = None
    b1_prediction: CorePrediction | None = None
    L_cols: np.ndarray | None = None
    I2: np.ndarray | None = None
    L1_cols: np.ndarray | None = None
    removed_row: int | None = None
    B_cols: list | None = None  # A-column per basis position; None marks the unit column
    B: GF2Matrix | None = None
    B_inv: GF2Matrix | None = None
    row_weights: np.ndarray | None = None
    gate: dict = field(default_factory=dict)
    R: list | None = None
    intersection: int | None = None
    intersection_bound: float | None = None
    atoms: AtomPartition | None = None
    D: SignMatrix | None = None
    patterns: list | None = None
    matches: dict = field(default_factory=dict)
    scanned: int = 0
    high_water: int = 0
    stage_timings: dict = field(default_factory=dict)

    @property
    def n2(self) -> int:
        return 0 if self.I1 is None else len(self.I1)

    def summary(self) -> dict:
        def ln(x):
            return None if x is None else int(len(x))

        out = {
            "n": self.n,
            "k": self.k,
            "n2": ln(self.I1),
            "m2": ln(self.B1_cols),
            "collected": ln(self.L_cols),
            "n3": ln(self.I2),
            "m3": ln(self.L1_cols),
            "removed_row": self.removed_row,
            "basis_size": ln(self.B_cols),
            "gate": self.gate,
            "R": self.R,
            "intersection": self.intersection,
            "intersection_bound": self.intersection_bound,
            "matches": {str(k): int(v) for k, v in self.matches.items()},
            "scanned": self.scanned,
            "high_water": self.high_water,
            "stage_timings": self.stage_timings,
        }
        if self.b1_prediction is not None:
            out["b1_prediction"] = self.b1_prediction.__dict__
        if self.atoms is not None:
            out["atom_sizes"] = self.atoms.atom_sizes.tolist()
            out["large_threshold"] = self.atoms.large_threshold
        if self.D is not None:
            out["D"] = self.D.matrix.to_dense().tolist()
        if self.patterns is not None:
            out["patterns"] = [p.indices().tolist() for p in self.patterns]
        if self.row_weights is not None and len(self.row_weights):
            w = self.row_weights
            out["row_weight_min"] = int(w.min())
            out["row_weight_max"] = int(w.max())
        return out


# stages --------------------------------------------------------------------


def core_threshold(cfg: PipelineConfig, k: int) -> int:
    return max(1, math.ceil(cfg.core_threshold_fraction * k - 1e-9))


def build_b1(a: GF2Matrix | Columns, cfg: PipelineConfig) -> tuple[GF2Matrix, np.ndarray, np.ndarray, CorePrediction]:
    """Peel the first m1 columns to their core; returns (B1, I1, B1 column ids, prediction)."""
    cols = Columns.of(a)
    n, k = cols.n, cols.k
    m1 = int(n * cfg.m1_fraction)
    if m1 < 1 or m1 > cols.m:
        raise InsufficientColumns(f"need {m1} columns for X, matrix has {cols.m}", found=cols.m)
    d = core_threshold(cfg, k)
    pred = core_prediction(k * m1 / n, k, d) if k >= 2 else CorePrediction(0.0, 0.0, 0.0, True)
    core = d_core(Hypergraph(n, cols.supports[:m1]), d)
    if core.n_edges == 0 or core.n_vertices == 0:
        raise EmptyCore(f"{d}-core of the first {m1} columns is empty", threshold=d, prediction=pred.__dict__)
    I1 = core.vertices
    b1_cols = core.edge_indices
    return cols.matrix(b1_cols, I1), I1, b1_cols, pred


def collect_support_columns(
    a: GF2Matrix | Columns, I1: np.ndarray, count: int, start: int
) -> tuple[np.ndarray, int]:
    """First ``count`` columns at or after ``start`` supported inside I1.

    Returns the column ids and the new high-water mark (one past the last
    column examined).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cols = Columns.of(a)
    inside = np.zeros(cols.n, dtype=bool)
    inside[I1] = True
    ok = inside[cols.supports[start:]].all(axis=1)
    hits = np.flatnonzero(ok)
    if len(hits) < count:
        raise InsufficientColumns(
            f"only {len(hits)} of {count} columns supported in I1", found=int(len(hits)), wanted=count
        )
    chosen = start + hits[:count]
    return chosen, int(chosen[-1]) + 1


def l_core(a: GF2Matrix | Columns, l_cols: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """d-core of the collected columns: (rows I2, surviving column ids)."""
    cols = Columns.of(a)
    core = d_core(Hypergraph(cols.n, cols.supports[l_cols]), d)
    return core.vertices, l_cols[core.edge_indices]


def build_basis(
    a: GF2Matrix | Columns,
    b1_cols: np.ndarray,
    l1_cols: np.ndarray,
    rows: np.ndarray,
    drop_row: int | None = None,
) -> tuple[GF2Matrix, GF2Matrix, list[int]]:
    """Greedy square basis on ``rows``: all independent B1 columns first, then L1 columns.

    The pivot columns of an echelon form are exactly the greedy left-to-right
    independent set, so one elimination over [B1 : L1] picks the basis.
    ``drop_row`` (a member of ``rows``) is deleted from every column first.
    """
    cols = Columns.of(a)
    order = np.concatenate([b1_cols, l1_cols]).astype(np.int64)
    L2 = cols.matrix(order, rows)
    if drop_row is not None:
        L2 = L2.select_rows(np.flatnonzero(np.asarray(rows) != drop_row))
    res = echelon(L2, reduced=False, with_transform=False)
    if res.rank < L2.nrows:
        raise RankDeficient(f"[B1 : L1] has rank {res.rank} < {L2.nrows}", rank=res.rank, rows=L2.nrows)
    basis_cols = [int(order[p]) for p in res.pivot_cols]
    B = L2.select_columns(res.pivot_cols)
    return B, invert(B), basis_cols


def even_k_adjust(a: GF2Matrix | Columns, trace: PipelineTrace, cfg: PipelineConfig) -> PipelineTrace:
    """For even k, remove one row of L1 to restore full row rank and build the
    bordered basis with a unit row/column in its place.  No-op for odd k."""
    cols = Columns.of(a)
    even = cfg.even_k_mode if cfg.even_k_mode is not None else cols.k % 2 == 0
    if not even:
        return trace
    assert trace.I1 is not None and trace.I2 is not None and trace.L1_cols is not None and trace.B1_cols is not None
    if cols.k % 2 == 0:
        used = np.concatenate([trace.B1_cols, trace.L1_cols])
        if np.bitwise_xor.reduce(cols.matrix(used).data, axis=0).any():
            raise NoRemovableRow("rows do not sum to zero although k is even")
    L1 = cols.matrix(trace.L1_cols, trace.I2)
    null = left_null_space(L1)
    if null.nrows != 1:
        raise NoRemovableRow(f"L1 has {null.nrows} independent row dependencies", nullity=null.nrows)
    dep = np.flatnonzero(null.to_dense()[0])
    row = int(trace.I2[dep[0]])
    # row `row` of every column supported in I1 is the sum of the others, so
    # dropping it leaves the matroid on those columns unchanged
    B_star, _, basis_cols = build_basis(cols, trace.B1_cols, trace.L1_cols, trace.I1, drop_row=row)
    n2 = len(trace.I1)
    at = int(np.searchsorted(trace.I1, row))
    dense = np.zeros((n2, n2), dtype=np.uint8)
    keep = np.arange(n2) != at
    dense[np.ix_(keep, np.arange(n2 - 1))] = B_star.to_dense()
    dense[at, n2 - 1] = 1
    B_hat = GF2Matrix.from_dense(dense)
    trace.removed_row = row
    trace.B = B_hat
    trace.B_inv = invert(B_hat)
    trace.B_cols = basis_cols + [None]
    return trace


@dataclass(frozen=True)
class RowSelection:
    rows: list[int]
    intersection: int
    bound: float
    levels: int


def _pair_up(stream, threshold: float):
    """Yield intersections of disjoint pairs from ``stream`` of at least ``threshold``.

    Each new item is compared with the held items in arrival order; the first
    partner reaching the threshold is consumed with it, otherwise the item is
    held for later arrivals.
    """
    held: list[tuple[tuple[int, ...], np.ndarray]] = []
    for members, bits in stream:
        for h, (hm, hb) in enumerate(held):
            inter = hb & bits
            if int(np.bitwise_count(inter).sum()) >= threshold:
                held.pop(h)
                yield hm + members, inter
                break
        else:
            held.append((members, bits))


def select_rows(
    row_supports: GF2Matrix, r: int, delta: float, candidates: Sequence[int] | None = None
) -> RowSelection:
    """Pick r rows whose complements X_i = [n] - S_i have a large common part.

    Level 0 items are single complements; level t+1 items are intersections
    of two disjoint level-t items of size >= delta_{t+1} n with
    delta_{t+1} = delta_t^2 / 4.  The first level-s item (s = ceil(log2 r))
    supplies R.  Guarantees |intersection| >= delta_s n / (2r).
    """
    n = row_supports.ncols
    idx = list(range(row_supports.nrows)) if candidates is None else list(candidates)
    if r < 1:
        raise ValueError("r must be >= 1")
    comp = ~row_supports.data[idx]
    if n % 64:
        comp[:, -1] &= np.uint64((1 << (n % 64)) - 1)
    sizes = np.bitwise_count(comp).sum(axis=1) if len(idx) else np.zeros(0, dtype=np.int64)
    short = np.flatnonzero(sizes < delta * n)
    if short.size:
        raise ValueError(f"{short.size} complements are smaller than delta*n = {delta * n:g}")
    s = math.ceil(math.log2(r)) if r > 1 else 0
    deltas = [delta]
    for _ in range(s):
        deltas.append(deltas[-1] ** 2 / 4)
    bound = deltas[s] * n / (2 * r)
    if len(idx) < r:
        raise BoundUnmet(f"only {len(idx)} admissible rows for r = {r}", admissible=len(idx))
    if r == 1:
        best = int(np.argmax(sizes))
        if sizes[best] < bound:
            raise BoundUnmet("no admissible row", bound=bound)
        return RowSelection([idx[best]], int(sizes[best]), bound, 0)

    stream = (((i,), comp[i]) for i in range(len(idx)))
    for t in range(s):
        stream = _pair_up(stream, deltas[t + 1] * n)
    first = next(stream, None)
    if first is None:
        raise BoundUnmet(f"could not build an intersection of {2 ** s} complements", bound=bound, levels=s)
    members = list(first[0][:r])
    inter = comp[members[0]].copy()
    for i in members[1:]:
        inter &= comp[i]
    size = int(np.bitwise_count(inter).sum())
    if size < bound:
        raise BoundUnmet(f"intersection {size} below bound {bound:g}", bound=bound, size=size)
    return RowSelection(sorted(idx[i] for i in members), size, bound, s)


def build_partition(
    row_supports: GF2Matrix, R: Sequence[int], eps1: float, n: int, max_K: int = 16
) -> tuple[AtomPartition, SignMatrix]:
    """Atoms of the Boolean algebra generated by S_i (i in R) and the matrix D.

    D[i, sigma] = 1 iff sigma has bit i and the atom has >= eps1 * n elements.
    """
    K = len(R)
    if K > max_K:
        raise ValueError(f"K = {K} exceeds max_K = {max_K}")
    dense = row_supports.select_rows(list(R)).to_dense().astype(np.int64)
    weights = 1 << np.arange(K, dtype=np.int64)
    sigma = (dense * weights[:, None]).sum(axis=0)
    sizes = np.bincount(sigma, minlength=1 << K)
    atoms = AtomPartition(sigma, sizes, eps1 * n)
    sig = np.arange(1 << K)
    bits = ((sig[None, :] >> np.arange(K)[:, None]) & 1) * atoms.large[None, :]
    D = GF2Matrix.from_dense(bits[:, ::-1])  # column c <-> sigma = 2^K - 1 - c
    Dm = SignMatrix(D)
    r = rank(D)
    if r < K:
        raise RankDeficientD(f"D has rank {r} < {K}", rank=r, atom_sizes=sizes.tolist())
    return atoms, Dm


def solve_target(D: SignMatrix, atoms: AtomPartition, m_j: BitVec | Sequence[int], nu: int) -> BitVec:
    """Minimum-weight v on large-atom columns with D v = m_j (lexicographic ties), weight <= nu."""
    K = D.K
    target = m_j if isinstance(m_j, BitVec) else BitVec.from_bits(m_j)
    if target.length != K:
        raise ValueError(f"target column has length {target.length}, expected {K}")
    want = int(sum(int(b) << i for i, b in enumerate(target.to_bits())))
    values = D.column_values()
    large = atoms.large
    allowed = [c for c in range(1 << K) if large[SignMatrix.sigma_of(c, K)]]
    for w in range(nu + 1):
        for combo in itertools.combinations(allowed, w):
            acc = 0
            for c in combo:
                acc ^= values[c]
            if acc == want:
                return BitVec.from_indices(1 << K, combo)
    raise NoAdmissibleSolution(f"no solution of weight <= {nu} on large atoms", target=want)


@dataclass
class ScanResult:
    matches: dict
    scanned: int
    candidates: int
    high_water: int


def column_patterns(
    supports: np.ndarray, posmap: np.ndarray, B_inv_rows: np.ndarray, atoms: AtomPartition, D: SignMatrix, debug: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """phi_R(B^-1 c) for a batch of columns supported inside the basis rows.

    Returns (pattern ints, candidate mask).  Candidates (no ones in small
    atoms) go through D and the atom parities c_R; the rest use the rows of
    B^-1 directly.
    """
    K = D.K
    pos = posmap[supports]
    sig = atoms.sigma_of_index[pos]
    candidate = atoms.large[sig].all(axis=1)
    weights = 1 << np.arange(K, dtype=np.int64)
    direct = (B_inv_rows[:, pos].sum(axis=2) & 1).T  # (batch, K)
    direct_int = (direct * weights).sum(axis=1)
    dvals = np.array(D.column_values(), dtype=np.int64)
    # c_R[sigma] = parity of ones in atom sigma; D c_R = xor of D columns over all ones
    via_d = np.bitwise_xor.reduce(dvals[SignMatrix.column_of(sig, K)], axis=1)
    if debug and not np.array_equal(via_d[candidate], direct_int[candidate]):
        raise AssertionError("D-based and direct phi_R disagree on a candidate column")
    return np.where(candidate, via_d, direct_int), candidate


def scan_candidates(
    a: GF2Matrix | Columns, trace: PipelineTrace, targets: Sequence[int], cfg: PipelineConfig
) -> ScanResult:
    """Match fresh columns to target patterns, first fit, within the omega budget."""
    cols = Columns.of(a)
    assert trace.I1 is not None and trace.B_inv is not None and trace.R is not None
    assert trace.atoms is not None and trace.D is not None
    posmap = np.zeros(cols.n, dtype=np.int64)
    posmap[trace.I1] = np.arange(len(trace.I1))
    inside = np.zeros(cols.n, dtype=bool)
    inside[trace.I1] = True
    if trace.removed_row is not None:
        inside[trace.removed_row] = False
    rows = trace.B_inv.select_rows(trace.R).to_dense().astype(np.int64)

    waiting: dict[int, list[int]] = {}
    for j, t in enumerate(targets):
        waiting.setdefault(int(t), []).append(j)
    matches: dict[int, int] = {}
    scanned = candidates = 0
    pos = trace.high_water
    chunk = 4096
    while pos < cols.m and scanned < cfg.omega and len(matches) < len(targets):
        block = cols.supports[pos : pos + chunk]
        ids = pos + np.flatnonzero(inside[block].all(axis=1))
        pats, cand = column_patterns(cols.supports[ids], posmap, rows, trace.atoms, trace.D, cfg.debug)
        stop = pos + len(block)
        for c, p, ok in zip(ids.tolist(), pats.tolist(), cand.tolist()):
            scanned += 1
            candidates += ok
            js = waiting.get(p)
            if js:
                matches[js.pop(0)] = c
            if scanned >= cfg.omega or len(matches) == len(targets):
                stop = c + 1
                break
        pos = stop
    trace.matches = matches
    trace.scanned = scanned
    trace.high_water = pos
    if len(matches) < len(targets):
        raise BudgetExhausted(
            f"matched {len(matches)} of {len(targets)} target columns",
            matched=len(matches),
            scanned=scanned,
            candidates=candidates,
        )
    return ScanResult(matches, scanned, candidates, pos)


# driver --------------------------------------------------------------------


@dataclass
class StageFailure:
    stage: str
    error: str
    message: str
    diagnostics: dict

    def to_json(self) -> dict:
        return {"stage": self.stage, "error": self.error, "message": self.message, "diagnostics": _jsonable(self.diagnostics)}


@dataclass
class PipelineRun:
    """Outcome of one trial: a verified certificate or the failing stage, plus the trace."""

    certificate: MinorCertificate | None
    failure: StageFailure | None
    trace: PipelineTrace

    @property
    def ok(self) -> bool:
        return self.certificate is not None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "failure": None if self.failure is None else self.failure.to_json(),
            "trace": _jsonable(self.trace.summary()),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def default_eps0(k: int, n2: int) -> float:
    return max(0.5 * math.exp(-k), 1.0 / max(n2, 1))


def _target_columns(target: BinaryMatroid) -> list[int]:
    return [sum(1 << int(r) for r in s) for s in target.rep.column_supports()]


class _Stop(Exception):
    pass


STAGES = (
    "build_b1",
    "collect_support_columns",
    "l_core",
    "even_k_adjust",
    "build_basis",
    "row_gate",
    "select_rows",
    "build_partition",
    "solve_target",
    "scan_candidates",
    "verify",
)


def run_pipeline(
    a: GF2Matrix | Columns | ModelParams,
    target: BinaryMatroid,
    cfg: PipelineConfig | None = None,
    stop_after: str | None = None,
) -> PipelineRun:
    """Run all stages; with ``stop_after`` return early (no certificate, no failure)."""
    if stop_after is not None and stop_after not in STAGES:
        raise ValueError(f"unknown stage {stop_after!r}")
    cfg = cfg or PipelineConfig()
    cols = Columns(a.n, sample_supports(a)) if isinstance(a, ModelParams) else Columns.of(a)
    k = cols.k
    if cfg.k is not None and cfg.k != k:
        raise ValueError(f"config k={cfg.k} but columns have {k} ones")
    nu = target.rep.nrows
    if rank(target.rep) != nu:
        raise ValueError("target representation must have full row rank")
    if k < nu:
        raise ValueError(f"need k >= nu, got k={k}, nu={nu}")

    trace = PipelineTrace(n=cols.n, k=k)
    stage = "start"
    t0 = time.perf_counter()

    def done(name: str) -> None:
        nonlocal t0
        now = time.perf_counter()
        trace.stage_timings[name] = now - t0
        t0 = now
        if name == stop_after:
            raise _Stop

    try:
        stage = "build_b1"
        trace.B1, trace.I1, trace.B1_cols, trace.b1_prediction = build_b1(cols, cfg)
        m1 = int(cols.n * cfg.m1_fraction)
        trace.high_water = m1
        done(stage)

        stage = "collect_support_columns"
        count = max(1, math.ceil(cfg.L * cols.n))
        trace.L_cols, trace.high_water = collect_support_columns(cols, trace.I1, count, trace.high_water)
        done(stage)

        stage = "l_core"
        d2 = max(1, math.ceil(cfg.zeta * cfg.L * k - 1e-9))
        trace.I2, trace.L1_cols = l_core(cols, trace.L_cols, d2)
        if len(trace.L1_cols) == 0:
            raise EmptyCore(f"{d2}-core of the collected columns is empty", threshold=d2)
        done(stage)

        stage = "even_k_adjust"
        even_k_adjust(cols, trace, cfg)
        done(stage)

        stage = "build_basis"
        if trace.B is None:
            trace.B, trace.B_inv, trace.B_cols = build_basis(cols, trace.B1_cols, trace.L1_cols, trace.I1)
        done(stage)

        stage = "row_gate"
        n2 = trace.n2
        eps0 = cfg.eps0 if cfg.eps0 is not None else default_eps0(k, n2)
        w = trace.B_inv.row_weights()
        trace.row_weights = w
        admitted = (w >= eps0 * n2) & (w <= n2 - eps0 * n2)
        wide = (n2 - w) >= cfg.delta * n2
        unit = [i for i, c in enumerate(trace.B_cols) if c is None]
        admitted[unit] = False
        rows_ok = np.flatnonzero(admitted & wide)
        trace.gate = {
            "eps0": eps0,
            "rows": int(n2),
            "weight_violations": int((~admitted).sum()) - len(unit),
            "complement_violations": int((admitted & ~wide).sum()),
            "admitted": int(len(rows_ok)),
        }
        done(stage)

        stage = "select_rows"
        sel = select_rows(trace.B_inv, nu, cfg.delta, rows_ok)
        trace.R = [int(i) for i in sel.rows]
        trace.intersection = sel.intersection
        trace.intersection_bound = sel.bound
        done(stage)

        stage = "build_partition"
        eps1 = cfg.eps1 if cfg.eps1 is not None else 2.0 ** (-2 * nu) * eps0
        trace.atoms, trace.D = build_partition(trace.B_inv, trace.R, eps1, n2, cfg.max_K)
        done(stage)

        stage = "solve_target"
        tcols = _target_columns(target)
        trace.patterns = [
            solve_target(trace.D, trace.atoms, [(t >> i) & 1 for i in range(nu)], nu) for t in tcols
        ]
        done(stage)

        stage = "scan_candidates"
        scan_candidates(cols, trace, tcols, cfg)
        done(stage)

        stage = "verify"
        R = set(trace.R)
        contract_set = tuple(c for j, c in enumerate(trace.B_cols) if j not in R and c is not None)
        kept = tuple(trace.matches[j] for j in range(target.size))
        used = set(contract_set) | set(kept)
        cert = MinorCertificate(contract_set, tuple(c for c in range(cols.m) if c not in used), kept)
        # the deletion set plays no part in the check, so verify on the used columns only
        host = BinaryMatroid(cols.matrix(sorted(used)), tuple(sorted(used)))
        if not verify_certificate(host, MinorCertificate(contract_set, (), kept), target):
            raise PipelineError("assembled certificate failed verification")
        done(stage)
    except _Stop:
        return PipelineRun(None, None, trace)
    except (PipelineError, GF2Error, ValueError) as exc:
        diag = getattr(exc, "diagnostics", {})
        return PipelineRun(None, StageFailure(stage, type(exc).__name__, str(exc), diag), trace)
    return PipelineRun(cert, None, trace)

