import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sectormc.gf2 import (BitVector, ColumnSolver, Echelon, Gf2Matrix, bits_of, in_rowspan, kernel_basis,
                          mask_of, rank, solve, span_enumerate)


@st.composite
def matrices(draw, max_rows=9, max_cols=9):
    r = draw(st.integers(1, max_rows))
    c = draw(st.integers(1, max_cols))
    rows = draw(st.lists(st.integers(0, (1 << c) - 1), min_size=r, max_size=r))
    return Gf2Matrix(c, rows)


def dense_rank(A: Gf2Matrix) -> int:
    M = A.to_array().copy()
    r = 0
    for c in range(M.shape[1]):
        piv = next((i for i in range(r, M.shape[0]) if M[i, c]), None)
        if piv is None:
            continue
        M[[r, piv]] = M[[piv, r]]
        for i in range(M.shape[0]):
            if i != r and M[i, c]:
                M[i] ^= M[r]
        r += 1
    return r


@given(matrices())
def test_rank_matches_dense_elimination(A):
    assert rank(A) == dense_rank(A)


@given(matrices())
def test_rank_of_transpose(A):
    assert rank(A) == rank(A.T)


@given(matrices())
def test_kernel_basis_is_kernel(A):
    ker = kernel_basis(A)
    assert len(ker) == A.ncols - rank(A)
    for v in ker:
        assert A.matvec(v) == 0
    assert rank(Gf2Matrix(A.ncols, [v.bits for v in ker])) == len(ker) if ker else True


@given(matrices(), st.data())
def test_solve_round_trip(A, data):
    x = data.draw(st.integers(0, (1 << A.ncols) - 1))
    b = BitVector(A.nrows, A.matvec(x))
    sol = solve(A, b)
    assert sol is not None
    assert A.matvec(sol) == b.bits


@given(matrices())
def test_solve_reports_inconsistency(A):
    image = {A.matvec(x) for x in range(1 << A.ncols)}
    for b in range(1 << A.nrows):
        sol = solve(A, BitVector(A.nrows, b))
        assert (sol is not None) == (b in image)


@given(matrices())
def test_left_kernel_annihilates(A):
    for combo in Echelon(A).left_kernel():
        acc = 0
        for i in bits_of(combo):
            acc ^= A.rows[i]
        assert acc == 0


@given(matrices())
def test_column_solver_agrees_with_solve(A):
    cs = ColumnSolver(A)
    for b in range(min(1 << A.nrows, 64)):
        x = cs.solve(b)
        ref = solve(A, BitVector(A.nrows, b))
        assert (x is None) == (ref is None)
        if x is not None:
            assert A.matvec(x) == b


@given(st.lists(st.integers(1, 255), min_size=0, max_size=6))
def test_span_enumerate_gray_order(basis):
    out = span_enumerate(basis)
    assert len(out) == 1 << len(basis)
    assert out[0] == 0
    for a, b in zip(out, out[1:]):
        assert (a ^ b) in basis
    if rank(Gf2Matrix(8, basis)) == len(basis):
        assert len(set(out)) == len(out)


@given(matrices(), matrices())
def test_product_associates_with_matvec(A, B):
    if A.ncols != B.nrows:
        return
    for x in range(min(1 << B.ncols, 32)):
        assert (A @ B).matvec(x) == A.matvec(B.matvec(x))


@given(matrices())
def test_json_round_trip(A):
    assert Gf2Matrix.from_json(A.to_json()) == A


@given(st.integers(1, 40), st.data())
def test_bitvector_algebra(n, data):
    a = BitVector(n, data.draw(st.integers(0, (1 << n) - 1)))
    b = BitVector(n, data.draw(st.integers(0, (1 << n) - 1)))
    assert (a ^ b) ^ b == a
    assert (a ^ a).weight() == 0
    assert BitVector.from_array(a.to_array()) == a
    assert BitVector.from_hex(n, a.to_hex()) == a
    assert a.support() == bits_of(a.bits)


def test_dimension_mismatches_raise():
    A = Gf2Matrix.identity(3)
    with pytest.raises(ValueError):
        solve(A, BitVector(4, 1))
    with pytest.raises(ValueError):
        A.matvec(BitVector(2, 1))
    with pytest.raises(ValueError):
        BitVector(3, 1) ^ BitVector(4, 1)
    with pytest.raises(ValueError):
        in_rowspan(A, BitVector(5, 0))
    with pytest.raises(ValueError):
        Gf2Matrix(2, [7])


def test_small_worked_example():
    # rows 110, 011, 101 over GF(2): third is the sum of the first two
    A = Gf2Matrix.from_array(np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]]))
    assert rank(A) == 2
    assert [v.bits for v in kernel_basis(A)] == [mask_of([0, 1, 2])]
    assert in_rowspan(A, BitVector(3, mask_of([0, 2])))
    assert not in_rowspan(A, BitVector(3, 1))
