"""Tests for exact linear algebra over Z/m and Z."""

import math
import random
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bidualkit.zlin import (
    HowellForm,
    ZmMatrix,
    howell,
    inverse,
    kernel,
    snf,
    snf_solve,
    solve,
    solve_matrix,
    span_contains,
    span_equal,
    vec_mat,
)


def int_det(rows):
    """Integer determinant by cofactor expansion (tests only, tiny sizes)."""
    n = len(rows)
    if n == 0:
        return 1
    if n == 1:
        return rows[0][0]
    total = 0
    for j in range(n):
        if rows[0][j]:
            minor = [r[:j] + r[j + 1:] for r in rows[1:]]
            total += (-1) ** j * rows[0][j] * int_det(minor)
    return total


def enumerate_span(M):
    """All elements of the row span, by brute force (tests only)."""
    seen = set()
    for coeffs in product(range(M.m), repeat=M.nrows):
        seen.add(vec_mat(coeffs, M))
    return seen


# ---------------------------------------------------------------------------
# pinned examples


def test_howell_already_canonical():
    hf = howell(ZmMatrix(9, [[3]]))
    assert hf.matrix.rows == ((3,),)
    assert hf.pivots == (0,)


def test_howell_zero_matrix():
    hf = howell(ZmMatrix(4, [[0]]))
    assert hf.matrix.rows == ()
    assert hf.pivots == ()


def test_howell_span_z4():
    M = ZmMatrix(4, [[2, 1], [0, 2]])
    hf = howell(M)
    span = enumerate_span(M)
    assert span == enumerate_span(hf.matrix)
    assert len(span) == 4
    assert (2, 1) in span and (0, 2) in span


def test_solve_no_solution():
    assert solve(ZmMatrix(4, [[2]]), [1]) is None


def test_solve_scalar():
    assert solve(ZmMatrix(4, [[2]]), [2]) == (1,)


def test_solve_two_by_two():
    M = ZmMatrix(4, [[1, 1], [0, 2]])
    x = solve(M, [1, 3])
    assert x == (1, 1)
    assert vec_mat(x, M) == (1, 3)


def test_kernel_scalar():
    K = kernel(ZmMatrix(4, [[2]]))
    assert K.rows == ((2,),)


def test_kernel_identity():
    assert kernel(ZmMatrix.identity(9, 3)).nrows == 0


def test_kernel_multiplication_by_g_minus_one():
    # multiplication by (g-1) on (Z/3)[C3] in the basis {1, g, g^2}
    M = ZmMatrix(3, [[2, 1, 0], [0, 2, 1], [1, 0, 2]])
    K = kernel(M)
    brute = {x for x in product(range(3), repeat=3) if not any(vec_mat(x, M))}
    assert brute == enumerate_span(K)
    assert len(brute) == 3
    assert (1, 1, 1) in brute  # the norm element 1 + g + g^2


def test_snf_diag_2_3():
    S = snf([[2, 0], [0, 3]])
    assert S.diagonal == (1, 6)


def test_snf_identity():
    S = snf([[1, 0], [0, 1]])
    assert S.diagonal == (1, 1)


def test_snf_zero():
    S = snf([[0]])
    assert S.D == ((0,),)


# ---------------------------------------------------------------------------
# structural checks on small fixed cases


def test_howell_transform_reproduces_rows():
    M = ZmMatrix(8, [[2, 4, 6], [4, 4, 0], [1, 2, 3]])
    hf = howell(M)
    assert hf.transform * M == hf.matrix


def test_howell_pivots_divide_modulus():
    M = ZmMatrix(27, [[6, 3], [9, 18], [12, 0]])
    hf = howell(M)
    for row, j in zip(hf.matrix.rows, hf.pivots):
        assert 27 % row[j] == 0
        # entries above the pivot are reduced mod the pivot
    for i, j in enumerate(hf.pivots):
        for k in range(i):
            assert hf.matrix.rows[k][j] < hf.matrix.rows[i][j]


def test_solve_matrix_and_inverse():
    M = ZmMatrix(9, [[1, 2], [3, 4]])  # det = -2, a unit mod 9
    Minv = inverse(M)
    assert Minv is not None
    assert Minv * M == ZmMatrix.identity(9, 2)
    assert M * Minv == ZmMatrix.identity(9, 2)
    assert inverse(ZmMatrix(9, [[3, 0], [0, 1]])) is None


def test_span_equal_detects_difference():
    A = ZmMatrix(8, [[2, 0], [0, 2]])
    B = ZmMatrix(8, [[2, 0], [0, 4]])
    assert not span_equal(A, B)
    assert span_equal(A, ZmMatrix(8, [[2, 2], [2, 0], [0, 2]]))


def test_snf_solve_membership():
    S = snf([[2, 0], [0, 3]])
    assert snf_solve(S, (2, 3)) == (1, 1)
    assert snf_solve(S, (1, 0)) is None
    x = snf_solve(S, (4, 9))
    assert x == (2, 3)


# ---------------------------------------------------------------------------
# property tests


@st.composite
def zm_matrices(draw, moduli=(8, 9, 27), max_dim=4):
    m = draw(st.sampled_from(moduli))
    nr = draw(st.integers(0, max_dim))
    nc = draw(st.integers(1, max_dim))
    rows = [[draw(st.integers(0, m - 1)) for _ in range(nc)] for _ in range(nr)]
    return ZmMatrix(m, rows, ncols=nc)


@given(zm_matrices())
def test_howell_idempotent(M):
    hf = howell(M)
    again = howell(hf.matrix)
    assert again.matrix == hf.matrix
    assert again.pivots == hf.pivots


@given(zm_matrices(), st.randoms(use_true_random=False))
def test_howell_canonical_under_row_operations(M, rng):
    if M.nrows == 0:
        return
    rows = [list(r) for r in M.rows]
    m = M.m
    units = [u for u in range(1, m) if math.gcd(u, m) == 1]
    for _ in range(6):
        op = rng.randrange(3)
        i = rng.randrange(len(rows))
        if op == 0:
            j = rng.randrange(len(rows))
            if i != j:
                c = rng.randrange(m)
                rows[i] = [(x + c * y) % m for x, y in zip(rows[i], rows[j])]
        elif op == 1:
            u = rng.choice(units)
            rows[i] = [(u * x) % m for x in rows[i]]
        else:
            j = rng.randrange(len(rows))
            rows[i], rows[j] = rows[j], rows[i]
    M2 = ZmMatrix(m, rows, ncols=M.ncols)
    assert howell(M2).matrix == howell(M).matrix


@given(zm_matrices(), st.data())
def test_solve_roundtrip(M, data):
    x = tuple(data.draw(st.integers(0, M.m - 1)) for _ in range(M.nrows))
    b = vec_mat(x, M)
    got = solve(M, b)
    assert got is not None
    assert vec_mat(got, M) == b


@given(zm_matrices())
def test_kernel_annihilates_and_rank_nullity(M):
    K = kernel(M)
    for row in K.rows:
        assert not any(vec_mat(row, M))
    span_size = 1
    hf = howell(M)
    for row, j in zip(hf.matrix.rows, hf.pivots):
        span_size *= M.m // row[j]
    ker_size = 1
    hk = howell(K)
    for row, j in zip(hk.matrix.rows, hk.pivots):
        ker_size *= M.m // row[j]
    assert span_size * ker_size == M.m ** M.nrows


@settings(max_examples=40)
@given(zm_matrices(max_dim=2), st.data())
def test_solve_agrees_with_membership(M, data):
    b = tuple(data.draw(st.integers(0, M.m - 1)) for _ in range(M.ncols))
    x = solve(M, b)
    hf = howell(M)
    if x is None:
        assert not span_contains(hf, b)
        assert b not in enumerate_span(M)
    else:
        assert vec_mat(x, M) == b


@settings(max_examples=60)
@given(
    st.integers(1, 4),
    st.integers(1, 4),
    st.data(),
)
def test_snf_transforms(nr, nc, data):
    rows = [[data.draw(st.integers(-12, 12)) for _ in range(nc)] for _ in range(nr)]
    S = snf(rows)
    got = [
        [
            sum(S.U[i][a] * rows[a][b] * S.V[b][j] for a in range(nr) for b in range(nc))
            for j in range(nc)
        ]
        for i in range(nr)
    ]
    assert got == [list(r) for r in S.D]
    assert abs(int_det([list(r) for r in S.U])) == 1
    assert abs(int_det([list(r) for r in S.V])) == 1
    diag = S.diagonal
    for a, b in zip(diag, diag[1:]):
        if b:
            assert a != 0 and b % a == 0
        assert a >= 0 and b >= 0
    # off-diagonal entries vanish
    for i in range(nr):
        for j in range(nc):
            if i != j:
                assert S.D[i][j] == 0


@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_snf_solve_roundtrip(nr, nc, data):
    rows = [[data.draw(st.integers(-9, 9)) for _ in range(nc)] for _ in range(nr)]
    x = [data.draw(st.integers(-5, 5)) for _ in range(nr)]
    b = [sum(x[i] * rows[i][j] for i in range(nr)) for j in range(nc)]
    S = snf(rows)
    got = snf_solve(S, b)
    assert got is not None
    back = [sum(got[i] * rows[i][j] for i in range(nr)) for j in range(nc)]
    assert back == b


def test_seeded_bulk_roundtrip_smoke():
    rng = random.Random(20260818)
    for _ in range(60):
        m = rng.choice([8, 9, 27])
        nr, nc = rng.randrange(1, 5), rng.randrange(1, 5)
        M = ZmMatrix(m, [[rng.randrange(m) for _ in range(nc)] for _ in range(nr)])
        hf = howell(M)
        assert howell(hf.matrix).matrix == hf.matrix
        x = tuple(rng.randrange(m) for _ in range(nr))
        b = vec_mat(x, M)
        assert vec_mat(solve(M, b), M) == b
        for row in kernel(M).rows:
            assert not any(vec_mat(row, M))


def test_vec_mat_validates_length():
    with pytest.raises(ValueError):
        vec_mat((1, 2), ZmMatrix(4, [[1]]))


def test_solve_matrix_none_when_any_row_fails():
    M = ZmMatrix(4, [[2]])
    assert solve_matrix(M, ZmMatrix(4, [[2], [1]])) is None
    got = solve_matrix(M, ZmMatrix(4, [[2], [0]]))
    assert got is not None and got * M == ZmMatrix(4, [[2], [0]])


def test_howell_and_forms_are_values():
    M = ZmMatrix(9, [[3, 6], [0, 3]])
    assert howell(M) == howell(M)
    assert isinstance(howell(M), HowellForm)
    assert hash(M) == hash(ZmMatrix(9, [[3, 6], [0, 3]]))
