"""Dense bit-packed linear algebra over GF(2).

Rows are stored as little-endian 64-bit words: column ``j`` lives in word
``j // 64`` at bit ``j % 64``.  Padding bits past ``cols`` are always zero.
Elimination runs in a numba kernel that XORs whole words.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from numba import njit

__all__ = [
    "BitMatrix",
    "BitVector",
    "row_reduce",
    "rank",
    "kernel_basis",
    "left_kernel_basis",
    "restrict_columns",
    "projected_rank",
    "subgroup_vanishing_on",
    "column_set",
]


def _nwords(cols: int) -> int:
    return (cols + 63) // 64


def _pack(dense: np.ndarray) -> np.ndarray:
    dense = np.asarray(dense, dtype=np.uint8) & 1
    rows, cols = dense.shape
    nw = _nwords(cols)
    if rows == 0 or cols == 0:
        return np.zeros((rows, nw), dtype=np.uint64)
    packed = np.packbits(dense, axis=1, bitorder="little")
    out = np.zeros((rows, nw * 8), dtype=np.uint8)
    out[:, : packed.shape[1]] = packed
    return out.view("<u8").astype(np.uint64, copy=False).reshape(rows, nw)


def _unpack(words: np.ndarray, cols: int) -> np.ndarray:
    rows = words.shape[0]
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols), dtype=np.uint8)
    as_bytes = np.ascontiguousarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(as_bytes, axis=1, bitorder="little", count=cols)


@njit(cache=True)
def _eliminate(words, ncols, full):
    """In-place Gaussian elimination; returns pivot columns.

    With ``full`` the result is reduced row-echelon form, otherwise plain
    row-echelon form (cheaper, enough for ranks).
    """
    nrows, nw = words.shape
    pivots = np.empty(min(nrows, ncols), dtype=np.int64)
    r = 0
    one = np.uint64(1)
    for c in range(ncols):
        if r == nrows:
            break
        w = c >> 6
        bit = one << np.uint64(c & 63)
        p = -1
        for i in range(r, nrows):
            if words[i, w] & bit:
                p = i
                break
        if p < 0:
            continue
        if p != r:
            for k in range(w, nw):
                tmp = words[r, k]
                words[r, k] = words[p, k]
                words[p, k] = tmp
        start = 0 if full else r + 1
        for i in range(start, nrows):
            if i != r and (words[i, w] & bit):
                for k in range(w, nw):
                    words[i, k] ^= words[r, k]
        pivots[r] = c
        r += 1
    return pivots[:r]


class BitVector:
    """Packed bit vector of fixed length."""

    __slots__ = ("len", "words")

    def __init__(self, words: np.ndarray, length: int):
        self.len = int(length)
        self.words = np.asarray(words, dtype=np.uint64).reshape(-1)
        if self.words.size != _nwords(self.len):
            raise ValueError("word count does not match length")
        self.words.flags.writeable = False

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVector":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        return cls(_pack(arr.reshape(1, -1))[0], arr.size)

    @classmethod
    def from_string(cls, s: str) -> "BitVector":
        return cls.from_bits([int(ch) for ch in s.strip()])

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(np.zeros(_nwords(length), dtype=np.uint64), length)

    def to_array(self) -> np.ndarray:
        return _unpack(self.words.reshape(1, -1), self.len)[0]

    def weight(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def dot(self, other: "BitVector") -> int:
        if other.len != self.len:
            raise ValueError("length mismatch")
        return int(np.bitwise_count(self.words & other.words).sum()) & 1

    def __getitem__(self, j: int) -> int:
        if not 0 <= j < self.len:
            raise IndexError(j)
        return int((self.words[j >> 6] >> np.uint64(j & 63)) & np.uint64(1))

    def __xor__(self, other: "BitVector") -> "BitVector":
        if other.len != self.len:
            raise ValueError("length mismatch")
        return BitVector(self.words ^ other.words, self.len)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitVector) and other.len == self.len and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.len, self.words.tobytes()))

    def __len__(self) -> int:
        return self.len

    def __str__(self) -> str:
        return "".join(map(str, self.to_array()))

    def __repr__(self) -> str:
        return f"BitVector('{self}')"


class BitMatrix:
    """Immutable dense matrix over GF(2), bit-packed row-major."""

    __slots__ = ("rows", "cols", "words")

    def __init__(self, words: np.ndarray, cols: int):
        words = np.asarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _nwords(cols):
            raise ValueError("word array has the wrong shape for this column count")
        self.rows = words.shape[0]
        self.cols = int(cols)
        self.words = words
        self.words.flags.writeable = False

    # construction -------------------------------------------------------

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(_pack(dense), dense.shape[1])

    @classmethod
    def from_rows(cls, rows: Sequence[str], cols: int | None = None) -> "BitMatrix":
        """Build from strings such as ``["110", "011"]``."""
        if not rows:
            return cls.zeros(0, cols or 0)
        dense = np.array([[int(ch) for ch in r] for r in rows], dtype=np.uint8)
        if cols is not None and dense.shape[1] != cols:
            raise ValueError("row length does not match cols")
        return cls.from_dense(dense)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(np.zeros((rows, _nwords(cols)), dtype=np.uint64), cols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @classmethod
    def from_vectors(cls, vectors: Sequence[BitVector], cols: int) -> "BitMatrix":
        if not vectors:
            return cls.zeros(0, cols)
        return cls(np.stack([v.words for v in vectors]), cols)

    # text format: "rows cols" then one 0/1 line per row -------------------

    def to_text(self) -> str:
        lines = [f"{self.rows} {self.cols}"]
        lines += ["".join(map(str, row)) for row in self.to_dense()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BitMatrix":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty matrix text")
        try:
            rows, cols = (int(tok) for tok in lines[0].split())
        except ValueError as exc:
            raise ValueError(f"bad header line {lines[0]!r}") from exc
        body = lines[1:]
        if len(body) != rows:
            raise ValueError(f"expected {rows} rows, found {len(body)}")
        for ln in body:
            if len(ln) != cols or set(ln) - {"0", "1"}:
                raise ValueError(f"bad matrix row {ln!r}")
        if rows == 0:
            return cls.zeros(0, cols)
        return cls.from_rows(body, cols)

    # access ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def to_dense(self) -> np.ndarray:
        return _unpack(self.words, self.cols)

    def row(self, i: int) -> BitVector:
        return BitVector(self.words[i].copy(), self.cols)

    def __getitem__(self, idx: tuple[int, int]) -> int:
        i, j = idx
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(idx)
        return int((self.words[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1))

    def row_weights(self) -> np.ndarray:
        return np.bitwise_count(self.words).sum(axis=1).astype(np.int64)

    def rank(self) -> int:
        return rank(self)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitMatrix)
            and other.shape == self.shape
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self) -> int:
        return hash((self.shape, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"

    # algebra --------------------------------------------------------------

    @property
    def T(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    def __matmul__(self, other):
        if isinstance(other, BitVector):
            if other.len != self.cols:
                raise ValueError("dimension mismatch")
            par = np.bitwise_count(self.words & other.words[None, :]).sum(axis=1) & 1
            return BitVector.from_bits(par.astype(np.uint8))
        if isinstance(other, BitMatrix):
            if other.rows != self.cols:
                raise ValueError("dimension mismatch")
            if self.rows == 0 or other.cols == 0 or self.cols == 0:
                return BitMatrix.zeros(self.rows, other.cols)
            prod = self.to_dense().astype(np.int64) @ other.to_dense().astype(np.int64)
            return BitMatrix.from_dense(prod & 1)
        return NotImplemented

    def __xor__(self, other: "BitMatrix") -> "BitMatrix":
        if other.shape != self.shape:
            raise ValueError("shape mismatch")
        return BitMatrix(self.words ^ other.words, self.cols)

    def vstack(self, other: "BitMatrix") -> "BitMatrix":
        if other.cols != self.cols:
            raise ValueError("column mismatch")
        return BitMatrix(np.vstack([self.words, other.words]), self.cols)

    def hstack(self, other: "BitMatrix") -> "BitMatrix":
        if other.rows != self.rows:
            raise ValueError("row mismatch")
        return BitMatrix.from_dense(np.hstack([self.to_dense(), other.to_dense()]))

    def take_rows(self, idx) -> "BitMatrix":
        return BitMatrix(self.words[np.asarray(idx, dtype=np.int64)], self.cols)

    def nonzero_rows(self) -> "BitMatrix":
        return self.take_rows(np.flatnonzero(self.words.any(axis=1)))


def column_set(indices: Iterable[int], width: int) -> tuple[int, ...]:
    """Validate a column selection: in range, no duplicates, order kept."""
    cols = tuple(int(i) for i in indices)
    if len(set(cols)) != len(cols):
        raise ValueError("duplicate column index")
    for c in cols:
        if not 0 <= c < width:
            raise IndexError(f"column {c} outside [0, {width})")
    return cols


def row_reduce(m: BitMatrix) -> tuple[BitMatrix, int, list[int]]:
    """Reduced row-echelon form, rank and pivot columns (left-to-right)."""
    work = np.array(m.words, dtype=np.uint64, copy=True)
    piv = _eliminate(work, m.cols, True)
    return BitMatrix(work, m.cols), len(piv), [int(c) for c in piv]


def rank(m: BitMatrix) -> int:
    if m.rows == 0 or m.cols == 0:
        return 0
    work = np.array(m.words, dtype=np.uint64, copy=True)
    return len(_eliminate(work, m.cols, False))


def kernel_basis(m: BitMatrix) -> BitMatrix:
    """Basis of {v : m v = 0}, one basis vector per non-pivot column."""
    n = m.cols
    if m.rows == 0:
        return BitMatrix.identity(n)
    reduced, r, piv = row_reduce(m)
    free = np.setdiff1d(np.arange(n), np.asarray(piv, dtype=np.int64))
    if free.size == 0:
        return BitMatrix.zeros(0, n)
    k = np.zeros((free.size, n), dtype=np.uint8)
    k[np.arange(free.size), free] = 1
    if r:
        dense = _unpack(reduced.words[:r], n)
        k[:, piv] = dense[:, free].T
    return BitMatrix.from_dense(k)


def left_kernel_basis(m: BitMatrix) -> BitMatrix:
    """Basis of {r : r m = 0}."""
    return kernel_basis(m.T)


def restrict_columns(m: BitMatrix, keep: Sequence[int]) -> BitMatrix:
    keep = column_set(keep, m.cols)
    if not keep:
        return BitMatrix.zeros(m.rows, 0)
    return BitMatrix.from_dense(m.to_dense()[:, list(keep)])


def projected_rank(basis: BitMatrix, region: Sequence[int]) -> int:
    """Rank of the basis restricted to ``region``; the log-size of G / G_phi(region)."""
    return rank(restrict_columns(basis, region))


def subgroup_vanishing_on(basis: BitMatrix, region: Sequence[int]) -> BitMatrix:
    """Basis of the elements of span(basis) that are zero on every column of ``region``."""
    region = column_set(region, basis.cols)
    if not region:
        return basis
    combos = left_kernel_basis(restrict_columns(basis, region))
    if combos.rows == 0:
        return BitMatrix.zeros(0, basis.cols)
    return combos @ basis
