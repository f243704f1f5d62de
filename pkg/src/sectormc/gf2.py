"""Dense linear algebra over GF(2).

Vectors are packed into Python integers (bit ``j`` is coordinate ``j``), which
gives word-parallel XOR and ``int.bit_count`` popcounts for free.  Matrices are
tuples of packed rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def popcount(x: int) -> int:
    return x.bit_count()


def bits_of(x: int) -> list[int]:
    """Indices of set bits, ascending."""
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def mask_of(indices: Iterable[int]) -> int:
    x = 0
    for i in indices:
        x |= 1 << i
    return x


@dataclass(frozen=True)
class BitVector:
    length: int
    bits: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.length:
            raise ValueError("bits set beyond vector length")

    @classmethod
    def from_indices(cls, length: int, indices: Iterable[int]) -> "BitVector":
        return cls(length, mask_of(indices))

    @classmethod
    def from_array(cls, arr) -> "BitVector":
        arr = np.asarray(arr).astype(bool)
        return cls(len(arr), mask_of(np.flatnonzero(arr).tolist()))

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.uint8)
        out[bits_of(self.bits)] = 1
        return out

    def support(self) -> list[int]:
        return bits_of(self.bits)

    def weight(self) -> int:
        return self.bits.bit_count()

    def _check(self, other: "BitVector"):
        if other.length != self.length:
            raise ValueError(f"length mismatch: {self.length} vs {other.length}")

    def __xor__(self, other: "BitVector") -> "BitVector":
        self._check(other)
        return BitVector(self.length, self.bits ^ other.bits)

    def __and__(self, other: "BitVector") -> "BitVector":
        self._check(other)
        return BitVector(self.length, self.bits & other.bits)

    def __or__(self, other: "BitVector") -> "BitVector":
        self._check(other)
        return BitVector(self.length, self.bits | other.bits)

    def __getitem__(self, i: int) -> int:
        return (self.bits >> i) & 1

    def __len__(self) -> int:
        return self.length

    def to_hex(self) -> str:
        return format(self.bits, "x")

    @classmethod
    def from_hex(cls, length: int, text: str) -> "BitVector":
        return cls(length, int(text, 16))


class Gf2Matrix:
    """Row-major packed matrix.  Immutable by convention."""

    __slots__ = ("nrows", "ncols", "rows")

    def __init__(self, ncols: int, rows: Sequence[int]):
        self.ncols = ncols
        self.rows = tuple(rows)
        self.nrows = len(self.rows)
        lim = 1 << ncols
        for r in self.rows:
            if r < 0 or r >= lim:
                raise ValueError("row has bits beyond ncols")

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> "Gf2Matrix":
        return cls(ncols, [0] * nrows)

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls(n, [1 << i for i in range(n)])

    @classmethod
    def from_array(cls, arr) -> "Gf2Matrix":
        arr = np.asarray(arr).astype(bool)
        nrows, ncols = arr.shape
        return cls(ncols, [mask_of(np.flatnonzero(row).tolist()) for row in arr])

    @classmethod
    def from_supports(cls, ncols: int, supports: Iterable[Iterable[int]]) -> "Gf2Matrix":
        return cls(ncols, [mask_of(s) for s in supports])

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols), dtype=np.uint8)
        for i, r in enumerate(self.rows):
            out[i, bits_of(r)] = 1
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def row_supports(self) -> list[list[int]]:
        return [bits_of(r) for r in self.rows]

    def col_supports(self) -> list[list[int]]:
        cols: list[list[int]] = [[] for _ in range(self.ncols)]
        for i, r in enumerate(self.rows):
            for j in bits_of(r):
                cols[j].append(i)
        return cols

    def transpose(self) -> "Gf2Matrix":
        return Gf2Matrix(self.nrows, [mask_of(c) for c in self.col_supports()])

    @property
    def T(self) -> "Gf2Matrix":
        return self.transpose()

    def matvec(self, x: int | BitVector) -> int:
        """Packed product ``A x``; accepts a packed int or a BitVector."""
        if isinstance(x, BitVector):
            if x.length != self.ncols:
                raise ValueError("dimension mismatch")
            x = x.bits
        out = 0
        for i, r in enumerate(self.rows):
            if (r & x).bit_count() & 1:
                out |= 1 << i
        return out

    def __matmul__(self, other: "Gf2Matrix") -> "Gf2Matrix":
        if self.ncols != other.nrows:
            raise ValueError("dimension mismatch")
        out = []
        for r in self.rows:
            acc = 0
            for j in bits_of(r):
                acc ^= other.rows[j]
            out.append(acc)
        return Gf2Matrix(other.ncols, out)

    def select_columns(self, cols: Sequence[int]) -> "Gf2Matrix":
        """Submatrix on ``cols``; new column ``k`` is old column ``cols[k]``."""
        out = []
        for r in self.rows:
            acc = 0
            for k, c in enumerate(cols):
                if (r >> c) & 1:
                    acc |= 1 << k
            out.append(acc)
        return Gf2Matrix(len(cols), out)

    def select_rows(self, rows: Sequence[int]) -> "Gf2Matrix":
        return Gf2Matrix(self.ncols, [self.rows[i] for i in rows])

    def is_zero(self) -> bool:
        return not any(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, Gf2Matrix) and self.ncols == other.ncols and self.rows == other.rows

    def __hash__(self) -> int:
        return hash((self.ncols, self.rows))

    def __repr__(self) -> str:
        return f"Gf2Matrix({self.nrows}x{self.ncols})"

    def to_json(self) -> dict:
        return {"rows": self.nrows, "cols": self.ncols, "hex": [format(r, "x") for r in self.rows]}

    @classmethod
    def from_json(cls, obj: dict) -> "Gf2Matrix":
        m = cls(obj["cols"], [int(h, 16) for h in obj["hex"]])
        if m.nrows != obj["rows"]:
            raise ValueError("row count does not match hex payload")
        return m


class Echelon:
    """Fully reduced row echelon form; each pivot is the lowest set column of its row.

    Rows are inserted one at a time against the current basis, then
    back-substituted, so the cost is O(rows * rank) word operations.  Each
    reduced row remembers which original rows were combined to make it.
    """

    def __init__(self, A: Gf2Matrix):
        self.ncols = A.ncols
        self.nrows = A.nrows
        basis: list[tuple[int, int, int]] = []  # (pivot, row, combo)
        null: list[int] = []
        for i, r in enumerate(A.rows):
            c = 1 << i
            for piv, row, combo in basis:
                if (r >> piv) & 1:
                    r ^= row
                    c ^= combo
            if r:
                basis.append(((r & -r).bit_length() - 1, r, c))
            else:
                null.append(c)
        basis.sort()
        rows = [b[1] for b in basis]
        combos = [b[2] for b in basis]
        pivots = [b[0] for b in basis]
        for k in range(len(rows) - 1, -1, -1):
            pk = pivots[k]
            for j in range(k):
                if (rows[j] >> pk) & 1:
                    rows[j] ^= rows[k]
                    combos[j] ^= combos[k]
        self.rank = len(rows)
        self.rows = rows
        self.combos = combos
        self.pivots = pivots
        self._pivot_mask = mask_of(pivots)
        self._null_combos = null

    def reduce(self, v: int) -> tuple[int, int]:
        """Return (remainder, combination of original rows that was subtracted)."""
        used = 0
        for row, col, c in zip(self.rows, self.pivots, self.combos):
            if (v >> col) & 1:
                v ^= row
                used ^= c
        return v, used

    def contains(self, v: int) -> bool:
        return self.reduce(v)[0] == 0

    def left_kernel(self) -> list[int]:
        """Row combinations that vanish: basis of Ker(Aᵀ) in packed form."""
        return list(self._null_combos)

    def free_columns(self) -> list[int]:
        return [c for c in range(self.ncols) if not (self._pivot_mask >> c) & 1]


class ColumnSolver:
    """Solver for ``A x = b`` by elimination on the augmented system.

    Built once per matrix; ``solve`` is then a reduction of ``b`` against a
    stored basis, which is what the per-block local solvers rely on.
    """

    def __init__(self, A: Gf2Matrix):
        self.A = A
        # Eliminate on columns of A: treat Aᵀ rows (one per unknown) and track
        # which unknowns were combined.  A pivot for each independent column
        # gives the linear map b -> x restricted to Im(A).
        At = A.transpose()
        self._ech = Echelon(At)
        self.rank = self._ech.rank

    def solve(self, b: int) -> int | None:
        rem, used = self._ech.reduce(b)
        if rem:
            return None
        return used


def rank(A: Gf2Matrix) -> int:
    return Echelon(A).rank


def solve(A: Gf2Matrix, b: BitVector) -> BitVector | None:
    """Particular solution of ``A x = b`` with free variables zero, or None."""
    if b.length != A.nrows:
        raise ValueError(f"rhs length {b.length} != rows {A.nrows}")
    n = A.ncols
    aug = Gf2Matrix(n + 1, [r | (((b.bits >> i) & 1) << n) for i, r in enumerate(A.rows)])
    ech = Echelon(aug)
    x = 0
    for row, col in zip(ech.rows, ech.pivots):
        if col == n:
            return None
        if (row >> n) & 1:
            x |= 1 << col
    return BitVector(n, x)


def kernel_basis(A: Gf2Matrix) -> list[BitVector]:
    ech = Echelon(A)
    out = []
    for f in ech.free_columns():
        v = 1 << f
        for row, col in zip(ech.rows, ech.pivots):
            if (row >> f) & 1:
                v |= 1 << col
        out.append(BitVector(A.ncols, v))
    return out


def in_rowspan(A: Gf2Matrix, v: BitVector) -> bool:
    if v.length != A.ncols:
        raise ValueError(f"vector length {v.length} != cols {A.ncols}")
    return Echelon(A).contains(v.bits)


def span_enumerate(basis: Sequence[int]) -> list[int]:
    """All 2^k combinations of ``basis`` in binary-reflected Gray-code order."""
    out = [0]
    cur = 0
    for i in range(1, 1 << len(basis)):
        j = (i & -i).bit_length() - 1
        cur ^= basis[j]
        out.append(cur)
    return out
