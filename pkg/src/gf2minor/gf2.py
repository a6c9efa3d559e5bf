"""Bit-packed linear algebra over GF(2).

Rows are packed into little-endian ``uint64`` words: bit ``j`` of a row lives
in word ``j >> 6`` at position ``j & 63``.  Bits past the logical width are
always zero, which lets popcounts and comparisons work on whole words.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WORD = 64


class GF2Error(Exception):
    """Base class for linear-algebra errors."""


class SingularMatrix(GF2Error):
    pass


class DimensionMismatch(GF2Error):
    pass


def nwords(nbits: int) -> int:
    return (nbits + WORD - 1) // WORD


def _pack_dense(dense: np.ndarray) -> np.ndarray:
    """Pack a 2-D 0/1 array row-wise into uint64 words."""
    dense = np.asarray(dense, dtype=np.uint8) & 1
    rows, cols = dense.shape
    w = nwords(cols)
    padded = np.zeros((rows, w * WORD), dtype=np.uint8)
    padded[:, :cols] = dense
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False).reshape(rows, w)


def _unpack_words(words: np.ndarray, ncols: int) -> np.ndarray:
    rows = words.shape[0]
    if rows == 0 or ncols == 0:
        return np.zeros((rows, ncols), dtype=np.uint8)
    raw = np.ascontiguousarray(words.astype("<u8", copy=False)).view(np.uint8).reshape(rows, -1)
    return np.unpackbits(raw, axis=1, bitorder="little", count=ncols)


def _popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words)


def _tail_mask(ncols: int) -> np.uint64:
    rem = ncols % WORD
    return np.uint64((1 << rem) - 1) if rem else np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True, eq=False)
class BitVec:
    """Fixed-length vector over GF(2)."""

    length: int
    words: np.ndarray

    def __post_init__(self) -> None:
        if self.words.shape != (nwords(self.length),):
            raise ValueError("word count does not match length")

    @classmethod
    def zeros(cls, length: int) -> BitVec:
        return cls(length, np.zeros(nwords(length), dtype=np.uint64))

    @classmethod
    def from_indices(cls, length: int, indices: Iterable[int]) -> BitVec:
        words = np.zeros(nwords(length), dtype=np.uint64)
        for i in indices:
            if not 0 <= i < length:
                raise IndexError(i)
            words[i >> 6] |= np.uint64(1 << (i & 63))
        return cls(length, words)

    @classmethod
    def from_bits(cls, bits: Sequence[int] | np.ndarray) -> BitVec:
        arr = np.asarray(bits, dtype=np.uint8).reshape(1, -1)
        return cls(arr.shape[1], _pack_dense(arr)[0])

    def to_bits(self) -> np.ndarray:
        return _unpack_words(self.words.reshape(1, -1), self.length)[0]

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.to_bits())

    def popcount(self) -> int:
        return int(_popcount(self.words).sum())

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return int((self.words[i >> 6] >> np.uint64(i & 63)) & np.uint64(1))

    def __xor__(self, other: BitVec) -> BitVec:
        self._check(other)
        return BitVec(self.length, self.words ^ other.words)

    def __and__(self, other: BitVec) -> BitVec:
        self._check(other)
        return BitVec(self.length, self.words & other.words)

    def dot(self, other: BitVec) -> int:
        self._check(other)
        return int(_popcount(self.words & other.words).sum() & 1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitVec):
            return NotImplemented
        return self.length == other.length and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.length, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"BitVec({''.join(map(str, self.to_bits()))})"

    def _check(self, other: BitVec) -> None:
        if self.length != other.length:
            raise DimensionMismatch(f"{self.length} != {other.length}")


@dataclass(frozen=True, eq=False)
class GF2Matrix:
    """Row-major bit-packed matrix.  Treat instances as immutable."""

    nrows: int
    ncols: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.data.shape != (self.nrows, nwords(self.ncols)) or self.data.dtype != np.uint64:
            raise ValueError(f"bad storage shape {self.data.shape} for {self.nrows}x{self.ncols}")

    # construction -----------------------------------------------------

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> GF2Matrix:
        return cls(nrows, ncols, np.zeros((nrows, nwords(ncols)), dtype=np.uint64))

    @classmethod
    def identity(cls, n: int) -> GF2Matrix:
        data = np.zeros((n, nwords(n)), dtype=np.uint64)
        idx = np.arange(n)
        data[idx, idx >> 6] = np.left_shift(np.uint64(1), (idx & 63).astype(np.uint64))
        return cls(n, n, data)

    @classmethod
    def from_dense(cls, dense: Sequence[Sequence[int]] | np.ndarray) -> GF2Matrix:
        arr = np.asarray(dense, dtype=np.uint8)
        if arr.ndim != 2:
            arr = arr.reshape(arr.shape[0] if arr.ndim else 0, -1)
        return cls(arr.shape[0], arr.shape[1], _pack_dense(arr))

    @classmethod
    def from_rows(cls, rows: Sequence[BitVec], ncols: int | None = None) -> GF2Matrix:
        if ncols is None:
            ncols = rows[0].length if rows else 0
        data = np.zeros((len(rows), nwords(ncols)), dtype=np.uint64)
        for i, r in enumerate(rows):
            if r.length != ncols:
                raise DimensionMismatch("ragged rows")
            data[i] = r.words
        return cls(len(rows), ncols, data)

    @classmethod
    def from_column_supports(cls, nrows: int, supports: Sequence[Sequence[int]] | np.ndarray) -> GF2Matrix:
        """Matrix whose column ``j`` has ones exactly in ``supports[j]``."""
        ncols = len(supports)
        data = np.zeros((nrows, nwords(ncols)), dtype=np.uint64)
        if isinstance(supports, np.ndarray) and supports.ndim == 2:
            rows = supports.ravel().astype(np.int64)
            cols = np.repeat(np.arange(ncols), supports.shape[1])
        else:
            lens = [len(s) for s in supports]
            rows = np.fromiter((r for s in supports for r in s), dtype=np.int64, count=sum(lens))
            cols = np.repeat(np.arange(ncols), lens)
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise IndexError("row index out of range")
        bits = np.left_shift(np.uint64(1), (cols & 63).astype(np.uint64))
        np.bitwise_xor.at(data, (rows, cols >> 6), bits)
        return cls(nrows, ncols, data)

    @classmethod
    def random(cls, nrows: int, ncols: int, rng: np.random.Generator) -> GF2Matrix:
        data = rng.integers(0, 2**64, size=(nrows, nwords(ncols)), dtype=np.uint64, endpoint=False)
        if ncols % WORD and nrows:
            data[:, -1] &= _tail_mask(ncols)
        return cls(nrows, ncols, data)

    # access -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def to_dense(self) -> np.ndarray:
        return _unpack_words(self.data, self.ncols)

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        if not (0 <= i < self.nrows and 0 <= j < self.ncols):
            raise IndexError(ij)
        return int((self.data[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1))

    def row(self, i: int) -> BitVec:
        return BitVec(self.ncols, self.data[i].copy())

    def column(self, j: int) -> BitVec:
        bits = (self.data[:, j >> 6] >> np.uint64(j & 63)) & np.uint64(1)
        return BitVec.from_bits(bits.astype(np.uint8))

    def row_weights(self) -> np.ndarray:
        return _popcount(self.data).sum(axis=1).astype(np.int64)

    def column_weights(self) -> np.ndarray:
        return self.to_dense().sum(axis=0, dtype=np.int64)

    def column_supports(self) -> list[np.ndarray]:
        if self.ncols == 0:
            return []
        cols, rows = np.nonzero(self.to_dense().T)
        cuts = np.searchsorted(cols, np.arange(1, self.ncols))
        return np.split(rows, cuts)

    def transpose(self) -> GF2Matrix:
        return GF2Matrix.from_dense(self.to_dense().T)

    @property
    def T(self) -> GF2Matrix:
        return self.transpose()

    def select_rows(self, rows: Sequence[int] | np.ndarray) -> GF2Matrix:
        rows = np.asarray(rows, dtype=np.int64)
        return GF2Matrix(len(rows), self.ncols, self.data[rows].copy())

    def select_columns(self, cols: Sequence[int] | np.ndarray) -> GF2Matrix:
        cols = np.asarray(cols, dtype=np.int64)
        return GF2Matrix.from_dense(self.to_dense()[:, cols])

    def hstack(self, other: GF2Matrix) -> GF2Matrix:
        if self.nrows != other.nrows:
            raise DimensionMismatch("row counts differ")
        return GF2Matrix.from_dense(np.hstack([self.to_dense(), other.to_dense()]))

    def vstack(self, other: GF2Matrix) -> GF2Matrix:
        if self.ncols != other.ncols:
            raise DimensionMismatch("column counts differ")
        return GF2Matrix(self.nrows + other.nrows, self.ncols, np.vstack([self.data, other.data]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GF2Matrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.shape, self.data.tobytes()))

    def __matmul__(self, other: GF2Matrix) -> GF2Matrix:
        return multiply(self, other)

    def apply(self, v: BitVec) -> BitVec:
        """Matrix-vector product ``self @ v``."""
        if v.length != self.ncols:
            raise DimensionMismatch(f"{self.ncols} != {v.length}")
        parity = _popcount(self.data & v.words).sum(axis=1) & 1
        return BitVec.from_bits(parity.astype(np.uint8))

    def __repr__(self) -> str:
        body = "\n".join("".join(map(str, r)) for r in self.to_dense()[:16])
        return f"GF2Matrix({self.nrows}x{self.ncols})\n{body}"

    # text format ------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.nrows} {self.ncols}"]
        lines += [" ".join(map(str, s)) for s in self.column_supports()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> GF2Matrix:
        m, _ = parse_matrix_text(text)
        return m

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> GF2Matrix:
        return cls.from_text(Path(path).read_text())


def parse_matrix_text(text: str) -> tuple[GF2Matrix, list[str]]:
    """Parse the column-support format; returns the matrix and any trailing lines."""
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty matrix text")
    try:
        nrows, ncols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header {lines[0]!r}") from exc
    if len(lines) < 1 + ncols:
        raise ValueError(f"expected {ncols} column lines, got {len(lines) - 1}")
    supports = []
    for j, line in enumerate(lines[1 : 1 + ncols]):
        idx = [int(t) for t in line.split()]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"column {j}: row indices must be strictly increasing")
        supports.append(idx)
    return GF2Matrix.from_column_supports(nrows, supports), lines[1 + ncols :]


# elimination ---------------------------------------------------------------


@dataclass(frozen=True)
class EchelonResult:
    rank: int
    pivot_cols: list[int]
    reduced: GF2Matrix
    transform: GF2Matrix | None


def _eliminate(work: np.ndarray, ncols: int, extra: np.ndarray | None, reduced: bool) -> list[int]:
    """In-place Gaussian elimination on packed rows.

    Pivot for each column is the lowest-indexed row at or below the current
    pivot row.  ``extra`` receives the same row operations.
    """
    nrows = work.shape[0]
    pivots: list[int] = []
    r = 0
    one = np.uint64(1)
    for c in range(ncols):
        if r == nrows:
            break
        w = c >> 6
        b = np.uint64(c & 63)
        nz = np.flatnonzero((work[r:, w] >> b) & one)
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            work[[r, p]] = work[[p, r]]
            if extra is not None:
                extra[[r, p]] = extra[[p, r]]
        if reduced:
            targets = np.flatnonzero((work[:, w] >> b) & one)
            targets = targets[targets != r]
        else:
            targets = r + nz[1:] if p == r else r + 1 + np.flatnonzero((work[r + 1 :, w] >> b) & one)
        if targets.size:
            # pivot row is zero left of column c
            work[targets, w:] ^= work[r, w:]
            if extra is not None:
                extra[targets] ^= extra[r]
        pivots.append(c)
        r += 1
    return pivots


def echelon(m: GF2Matrix, reduced: bool = True, with_transform: bool = True) -> EchelonResult:
    """Row-reduce ``m``; ``transform @ m == reduced`` when a transform is kept."""
    work = m.data.copy()
    extra = GF2Matrix.identity(m.nrows).data if with_transform else None
    pivots = _eliminate(work, m.ncols, extra, reduced)
    transform = GF2Matrix(m.nrows, m.nrows, extra) if extra is not None else None
    return EchelonResult(len(pivots), pivots, GF2Matrix(m.nrows, m.ncols, work), transform)


def rank(m: GF2Matrix) -> int:
    if m.nrows > m.ncols:
        m = m.transpose()
    return len(_eliminate(m.data.copy(), m.ncols, None, reduced=False))


def invert(m: GF2Matrix) -> GF2Matrix:
    if m.nrows != m.ncols:
        raise DimensionMismatch(f"not square: {m.shape}")
    res = echelon(m, reduced=True, with_transform=True)
    if res.rank < m.nrows:
        raise SingularMatrix(f"rank {res.rank} < {m.nrows}")
    assert res.transform is not None
    return res.transform


@dataclass(frozen=True)
class SolutionSet:
    """Affine solution space ``particular + span(null_basis)``; empty when ``particular`` is None."""

    particular: BitVec | None
    null_basis: list[BitVec]

    @property
    def empty(self) -> bool:
        return self.particular is None

    def __iter__(self):
        """Enumerate every solution (exponential in the nullity)."""
        if self.particular is None:
            return
        k = len(self.null_basis)
        for mask in range(1 << k):
            x = self.particular
            for i in range(k):
                if mask >> i & 1:
                    x = x ^ self.null_basis[i]
            yield x


def solve(a: GF2Matrix, b: BitVec) -> SolutionSet:
    if b.length != a.nrows:
        raise DimensionMismatch(f"rhs length {b.length} != {a.nrows}")
    res = echelon(a, reduced=True, with_transform=True)
    assert res.transform is not None
    tb = res.transform.apply(b).to_bits()
    if tb[res.rank :].any():
        return SolutionSet(None, [])
    x = np.zeros(a.ncols, dtype=np.uint8)
    for i, c in enumerate(res.pivot_cols):
        x[c] = tb[i]
    red = res.reduced.to_dense()
    pivot_set = set(res.pivot_cols)
    basis = []
    for f in range(a.ncols):
        if f in pivot_set:
            continue
        v = np.zeros(a.ncols, dtype=np.uint8)
        v[f] = 1
        for i, c in enumerate(res.pivot_cols):
            v[c] = red[i, f]
        basis.append(BitVec.from_bits(v))
    return SolutionSet(BitVec.from_bits(x), basis)


def multiply(a: GF2Matrix, b: GF2Matrix) -> GF2Matrix:
    """Product over GF(2) using 8-bit lookup tables (four-Russians style)."""
    if a.ncols != b.nrows:
        raise DimensionMismatch(f"{a.shape} @ {b.shape}")
    out = np.zeros((a.nrows, nwords(b.ncols)), dtype=np.uint64)
    if a.nrows == 0 or b.ncols == 0 or a.ncols == 0:
        return GF2Matrix(a.nrows, b.ncols, out)
    abytes = np.ascontiguousarray(a.data.astype("<u8", copy=False)).view(np.uint8).reshape(a.nrows, -1)
    table = np.zeros((256, out.shape[1]), dtype=np.uint64)
    for t in range(nwords(a.ncols) * 8):
        base = 8 * t
        if base >= a.ncols:
            break
        table[:] = 0
        for j in range(min(8, a.ncols - base)):
            step = 1 << j
            table[step : 2 * step] = table[:step] ^ b.data[base + j]
        out ^= table[abytes[:, t]]
    return GF2Matrix(a.nrows, b.ncols, out)


def row_space_basis(m: GF2Matrix) -> GF2Matrix:
    """Nonzero rows of the reduced row-echelon form (a canonical basis)."""
    res = echelon(m, reduced=True, with_transform=False)
    return res.reduced.select_rows(range(res.rank))


def left_null_space(m: GF2Matrix) -> GF2Matrix:
    """Rows ``y`` with ``y @ m == 0``, one per dependency."""
    res = echelon(m, reduced=False, with_transform=True)
    assert res.transform is not None
    return res.transform.select_rows(range(res.rank, m.nrows))
