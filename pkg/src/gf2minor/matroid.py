"""Binary matroids given by GF(2) representations: deletion, contraction,
equality, isomorphism, brute-force minor search and certificate checking."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from .gf2 import GF2Matrix, echelon, parse_matrix_text, rank, row_space_basis

Label = Hashable


class UnknownLabel(KeyError):
    pass


class DependentContractionSet(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BinaryMatroid:
    """Column matroid of ``rep``; ``labels[j]`` names column ``j``."""

    rep: GF2Matrix
    labels: tuple = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        labels = tuple(range(self.rep.ncols)) if self.labels is None else tuple(self.labels)
        if len(labels) != self.rep.ncols:
            raise ValueError("one label per column required")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {l: i for i, l in enumerate(labels)})

    @classmethod
    def from_dense(cls, rows: Sequence[Sequence[int]], labels: Iterable[Label] | None = None) -> BinaryMatroid:
        return cls(GF2Matrix.from_dense(rows), None if labels is None else tuple(labels))

    @property
    def size(self) -> int:
        return self.rep.ncols

    def __len__(self) -> int:
        return self.rep.ncols

    def index_of(self, labels: Iterable[Label]) -> list[int]:
        out = []
        for l in labels:
            try:
                out.append(self._index[l])  # type: ignore[attr-defined]
            except KeyError:
                raise UnknownLabel(l) from None
        return out

    def rank(self, labels: Iterable[Label] | None = None) -> int:
        if labels is None:
            return rank(self.rep)
        idx = self.index_of(labels)
        return rank(self.rep.select_columns(idx)) if idx else 0

    def is_independent(self, labels: Iterable[Label]) -> bool:
        labels = list(labels)
        return self.rank(labels) == len(labels)

    def restrict(self, labels: Sequence[Label]) -> BinaryMatroid:
        return BinaryMatroid(self.rep.select_columns(self.index_of(labels)), tuple(labels))

    def column_ints(self) -> list[int]:
        """Columns as Python ints (bit i = row i); handy for small exhaustive work."""
        return [sum(1 << int(r) for r in s) for s in self.rep.column_supports()]

    def to_text(self) -> str:
        return self.rep.to_text() + "labels " + " ".join(map(str, self.labels)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> BinaryMatroid:
        rep, rest = parse_matrix_text(text)
        labels = None
        for line in rest:
            if line.startswith("labels"):
                toks = line.split()[1:]
                labels = tuple(int(t) if t.lstrip("-").isdigit() else t for t in toks)
        return cls(rep, labels)

    @classmethod
    def load(cls, path: str | Path) -> BinaryMatroid:
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    def __repr__(self) -> str:
        return f"BinaryMatroid(rank={self.rank()}, elements={list(self.labels)!r})"


def delete(m: BinaryMatroid, s: Iterable[Label]) -> BinaryMatroid:
    drop = set(m.index_of(s))
    keep = [i for i in range(m.size) if i not in drop]
    return BinaryMatroid(m.rep.select_columns(keep), tuple(m.labels[i] for i in keep))


def contract(m: BinaryMatroid, s: Iterable[Label]) -> BinaryMatroid:
    """Row-reduce so the columns of ``s`` become unit vectors, then drop those rows and columns."""
    sidx = m.index_of(s)
    if not sidx:
        return m
    sset = set(sidx)
    rest = [i for i in range(m.size) if i not in sset]
    res = echelon(m.rep.select_columns(sidx + rest), reduced=True, with_transform=False)
    if res.pivot_cols[: len(sidx)] != list(range(len(sidx))):
        raise DependentContractionSet(f"{[m.labels[i] for i in sidx]} is dependent")
    reduced = res.reduced.select_rows(range(len(sidx), m.rep.nrows))
    cols = reduced.select_columns(range(len(sidx), m.size))
    return BinaryMatroid(cols, tuple(m.labels[i] for i in rest))


def _int_rank(cols: Iterable[int]) -> int:
    basis: dict[int, int] = {}
    r = 0
    for v in cols:
        while v:
            top = v.bit_length() - 1
            if top not in basis:
                basis[top] = v
                r += 1
                break
            v ^= basis[top]
    return r


def matroid_equal(a: BinaryMatroid, b: BinaryMatroid, exhaustive: bool = False, bound: int = 20) -> bool:
    """Labeled equality under the positional correspondence of elements.

    By default this compares canonical row spaces, which decides equality of
    binary matroids exactly.  ``exhaustive=True`` compares the rank of every
    subset instead and refuses ground sets larger than ``bound``.
    """
    if a.size != b.size:
        return False
    if exhaustive:
        if a.size > bound:
            raise TooLarge(f"{a.size} elements exceeds exhaustive bound {bound}")
        ca, cb = a.column_ints(), b.column_ints()
        for mask in range(1 << a.size):
            sel = [i for i in range(a.size) if mask >> i & 1]
            if _int_rank(ca[i] for i in sel) != _int_rank(cb[i] for i in sel):
                return False
        return True
    return row_space_basis(a.rep) == row_space_basis(b.rep)


# isomorphism ---------------------------------------------------------------


def _coordinates(basis: Sequence[int], cols: Sequence[int]) -> list[int] | None:
    """Express every column in the given basis; None if the basis is dependent.

    Bit j of each result is the coefficient of ``basis[j]``.
    """
    piv: dict[int, tuple[int, int]] = {}
    for j, v in enumerate(basis):
        comb = 1 << j
        while v:
            top = v.bit_length() - 1
            if top not in piv:
                piv[top] = (v, comb)
                break
            pv, pc = piv[top]
            v ^= pv
            comb ^= pc
        else:
            return None
    out = []
    for v in cols:
        comb = 0
        while v:
            pv, pc = piv[v.bit_length() - 1]
            v ^= pv
            comb ^= pc
        out.append(comb)
    return out


def _multiset_signature(cols: Sequence[int]) -> tuple:
    counts: dict[int, int] = {}
    for c in cols:
        counts[c] = counts.get(c, 0) + 1
    return (counts.get(0, 0), tuple(sorted(v for c, v in counts.items() if c)))


def _full_rank_ints(m: BinaryMatroid) -> tuple[int, list[int]]:
    basis = row_space_basis(m.rep)
    return basis.nrows, BinaryMatroid(basis).column_ints() if basis.nrows else [0] * m.size


def find_isomorphism(a: BinaryMatroid, b: BinaryMatroid) -> list[int] | None:
    """Bijection ``pi`` (a-index -> b-index) with a isomorphic to b under pi, or None.

    Both sides are brought to full-row-rank form; b is written in the
    coordinates of its first basis, and every ordered basis of a is tried as
    the image of that basis.  Binary representations are unique up to row
    operations, so a match of the coordinate multisets is an isomorphism.
    """
    if a.size != b.size:
        return None
    ra, ca = _full_rank_ints(a)
    rb, cb = _full_rank_ints(b)
    if ra != rb or _multiset_signature(ca) != _multiset_signature(cb):
        return None
    if ra == 0:
        return list(range(a.size))
    b_basis: list[int] = []
    for j, c in enumerate(cb):
        if _int_rank([cb[i] for i in b_basis] + [c]) > len(b_basis):
            b_basis.append(j)
        if len(b_basis) == rb:
            break
    b_coords = _coordinates([cb[i] for i in b_basis], cb)
    assert b_coords is not None
    where: dict[int, list[int]] = {}
    for j, v in enumerate(b_coords):
        where.setdefault(v, []).append(j)
    target = sorted(b_coords)
    nonloops = [i for i, c in enumerate(ca) if c]
    for tup in itertools.permutations(nonloops, ra):
        coords = _coordinates([ca[i] for i in tup], ca)
        if coords is None or sorted(coords) != target:
            continue
        pools = {v: list(js) for v, js in where.items()}
        return [pools[v].pop(0) for v in coords]
    return None


def is_isomorphic(a: BinaryMatroid, b: BinaryMatroid) -> bool:
    return find_isomorphism(a, b) is not None


# minors --------------------------------------------------------------------


@dataclass(frozen=True)
class MinorCertificate:
    """Witness that ``m / contract_set \\ delete_set`` restricted to ``kept`` equals a target.

    ``kept[i]`` plays the role of target column ``i``.
    """

    contract_set: tuple
    delete_set: tuple
    kept: tuple

    @property
    def column_map(self) -> dict:
        return {l: i for i, l in enumerate(self.kept)}

    def to_json(self) -> dict:
        return {
            "contract": list(self.contract_set),
            "delete": list(self.delete_set),
            "kept": list(self.kept),
            "column_map": [[l, i] for i, l in enumerate(self.kept)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> MinorCertificate:
        kept = [None] * len(obj["kept"])
        for l, i in obj.get("column_map", [[l, i] for i, l in enumerate(obj["kept"])]):
            kept[i] = l
        if kept != list(obj["kept"]):
            raise ValueError("column_map disagrees with kept order")
        return cls(tuple(obj["contract"]), tuple(obj["delete"]), tuple(kept))


def has_minor_bruteforce(m: BinaryMatroid, target: BinaryMatroid, bound: int = 14) -> MinorCertificate | None:
    """First certificate (deterministic search order) that ``target`` is a minor of ``m``.

    Any minor N of M is M/C restricted to some T with C independent and
    |C| = r(M) - r(N), so only contract sets of that size are searched, in
    lexicographic order, followed by lexicographic kept sets T with
    isomorphism tested over all bijections.  Returns None when not found.
    """
    if m.size > bound:
        raise TooLarge(f"{m.size} elements exceeds brute-force bound {bound}")
    r_m, r_t, mu = m.rank(), target.rank(), target.size
    if r_t > r_m or mu > m.size:
        return None
    _, tcols = _full_rank_ints(target)
    tsig = _multiset_signature(tcols)
    for c_idx in itertools.combinations(range(m.size), r_m - r_t):
        c_labels = [m.labels[i] for i in c_idx]
        if not m.is_independent(c_labels):
            continue
        minor = contract(m, c_labels)
        cols = minor.column_ints()
        for t_idx in itertools.combinations(range(minor.size), mu):
            sub = [cols[i] for i in t_idx]
            if _int_rank(sub) != r_t or _multiset_signature(sub) != tsig:
                continue
            piece = BinaryMatroid(minor.rep.select_columns(t_idx))
            pi = find_isomorphism(piece, target)
            if pi is None:
                continue
            kept = [None] * mu
            for i, j in enumerate(pi):
                kept[j] = minor.labels[t_idx[i]]
            used = set(c_labels) | set(kept)
            rest = tuple(l for l in m.labels if l not in used)
            return MinorCertificate(tuple(c_labels), rest, tuple(kept))
    return None


def verify_certificate(m: BinaryMatroid, cert: MinorCertificate, target: BinaryMatroid) -> bool:
    """Recompute the minor described by ``cert`` and compare it with ``target``."""
    parts = [list(cert.contract_set), list(cert.delete_set), list(cert.kept)]
    for p in parts:
        m.index_of(p)
    flat = [l for p in parts for l in p]
    if len(set(flat)) != len(flat) or len(cert.kept) != target.size:
        return False
    # deleting everything outside contract+kept first is equivalent and cheaper
    work = m.restrict(list(cert.contract_set) + list(cert.kept))
    minor = contract(work, cert.contract_set)
    return matroid_equal(minor.restrict(list(cert.kept)), target)


def fano() -> BinaryMatroid:
    """The Fano plane: all nonzero vectors of GF(2)^3."""
    cols = [[(v >> i) & 1 for i in range(3)] for v in range(1, 8)]
    return BinaryMatroid(GF2Matrix.from_dense([[c[i] for c in cols] for i in range(3)]))


def free_matroid(n: int) -> BinaryMatroid:
    return BinaryMatroid(GF2Matrix.identity(n))
