"""Exact linear algebra over Z/m (Howell forms) and over Z (Smith forms).

Vectors are rows throughout the package: a matrix acts on the right,
``x @ M`` meaning the vector-matrix product, ``solve(M, b)`` finds x with
x*M = b, and ``kernel(M)`` generates {x : x*M = 0}.

The Howell form is the canonical echelon form for row spans over Z/m:
two matrices have equal row span if and only if they have identical
Howell forms.  That property (not shared by naive echelon forms when m
is composite) is what makes submodule equality, membership and quotient
computations exact everywhere above this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ZmMatrix",
    "HowellForm",
    "SNFData",
    "howell",
    "solve",
    "solve_matrix",
    "inverse",
    "kernel",
    "span_contains",
    "span_equal",
    "snf",
    "snf_solve",
    "hnf",
    "vec_mat",
]


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (g, s, t) with s*a + t*b = g = gcd(a, b) and g >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        return -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _unit_scale(p: int, m: int) -> int:
    """Return a unit u mod m with u*p ≡ gcd(p, m) (mod m).

    Every residue class has an associate of the form d = gcd(p, m), the
    unique divisor of m in its associate class; this finds the rescaling
    unit.  p must be nonzero mod m.
    """
    d = math.gcd(p % m, m)
    md = m // d
    u0 = pow((p // d) % md, -1, md) if md > 1 else 1
    # lift a unit mod m/d to a unit mod m
    for t in range(d):
        u = u0 + t * md
        if math.gcd(u, m) == 1:
            return u % m
    raise AssertionError("unreachable: unit lift always exists")


class ZmMatrix:
    """Immutable dense matrix over Z/m with entries reduced to [0, m)."""

    __slots__ = ("m", "rows", "ncols")

    def __init__(self, m, rows, ncols=None):
        if m < 2:
            raise ValueError(f"modulus must be at least 2, got {m}")
        self.m = int(m)
        self.rows = tuple(tuple(int(e) % m for e in row) for row in rows)
        if self.rows:
            self.ncols = len(self.rows[0])
            if any(len(r) != self.ncols for r in self.rows):
                raise ValueError("ragged rows")
            if ncols is not None and ncols != self.ncols:
                raise ValueError("ncols disagrees with row length")
        else:
            if ncols is None:
                raise ValueError("a matrix with no rows needs explicit ncols")
            self.ncols = int(ncols)

    @property
    def nrows(self) -> int:
        return len(self.rows)

    @classmethod
    def identity(cls, m: int, n: int) -> "ZmMatrix":
        return cls(m, [[1 if i == j else 0 for j in range(n)] for i in range(n)], ncols=n)

    @classmethod
    def zeros(cls, m: int, nrows: int, ncols: int) -> "ZmMatrix":
        return cls(m, [[0] * ncols for _ in range(nrows)], ncols=ncols)

    def row(self, i: int) -> tuple[int, ...]:
        return self.rows[i]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ZmMatrix)
            and self.m == other.m
            and self.ncols == other.ncols
            and self.rows == other.rows
        )

    def __hash__(self):
        return hash((self.m, self.ncols, self.rows))

    def __repr__(self):
        body = ", ".join(str(list(r)) for r in self.rows)
        return f"ZmMatrix({self.m}, [{body}], ncols={self.ncols})"

    def __add__(self, other: "ZmMatrix") -> "ZmMatrix":
        self._check_same_shape(other)
        return ZmMatrix(
            self.m,
            [[x + y for x, y in zip(r, s)] for r, s in zip(self.rows, other.rows)],
            ncols=self.ncols,
        )

    def __sub__(self, other: "ZmMatrix") -> "ZmMatrix":
        self._check_same_shape(other)
        return ZmMatrix(
            self.m,
            [[x - y for x, y in zip(r, s)] for r, s in zip(self.rows, other.rows)],
            ncols=self.ncols,
        )

    def __neg__(self) -> "ZmMatrix":
        return ZmMatrix(self.m, [[-x for x in r] for r in self.rows], ncols=self.ncols)

    def __mul__(self, other):
        if isinstance(other, int):
            return ZmMatrix(self.m, [[x * other for x in r] for r in self.rows], ncols=self.ncols)
        if not isinstance(other, ZmMatrix):
            return NotImplemented
        if self.m != other.m:
            raise ValueError("modulus mismatch")
        if self.ncols != other.nrows:
            raise ValueError(f"cannot multiply {self.nrows}x{self.ncols} by {other.nrows}x{other.ncols}")
        cols = list(zip(*other.rows)) if other.rows else []
        out = []
        for r in self.rows:
            out.append([sum(a * b for a, b in zip(r, col)) for col in cols])
        return ZmMatrix(self.m, out, ncols=other.ncols)

    def __rmul__(self, scalar):
        if isinstance(scalar, int):
            return self.__mul__(scalar)
        return NotImplemented

    def transpose(self) -> "ZmMatrix":
        return ZmMatrix(self.m, list(zip(*self.rows)) if self.rows else [], ncols=self.nrows)

    def hstack(self, other: "ZmMatrix") -> "ZmMatrix":
        if self.m != other.m or self.nrows != other.nrows:
            raise ValueError("hstack needs equal modulus and row count")
        return ZmMatrix(
            self.m,
            [r + s for r, s in zip(self.rows, other.rows)],
            ncols=self.ncols + other.ncols,
        )

    def vstack(self, other: "ZmMatrix") -> "ZmMatrix":
        if self.m != other.m or self.ncols != other.ncols:
            raise ValueError("vstack needs equal modulus and column count")
        return ZmMatrix(self.m, self.rows + other.rows, ncols=self.ncols)

    def submatrix(self, row_idx, col_idx) -> "ZmMatrix":
        row_idx = list(row_idx)
        col_idx = list(col_idx)
        return ZmMatrix(
            self.m,
            [[self.rows[i][j] for j in col_idx] for i in row_idx],
            ncols=len(col_idx),
        )

    def reduce_mod(self, m2: int) -> "ZmMatrix":
        """Image under the reduction map Z/m -> Z/m2 (requires m2 | m)."""
        if self.m % m2:
            raise ValueError(f"{m2} does not divide {self.m}")
        return ZmMatrix(m2, self.rows, ncols=self.ncols)

    def is_zero(self) -> bool:
        return all(all(e == 0 for e in r) for r in self.rows)

    def _check_same_shape(self, other: "ZmMatrix") -> None:
        if self.m != other.m or self.nrows != other.nrows or self.ncols != other.ncols:
            raise ValueError("shape or modulus mismatch")


def vec_mat(x, M: ZmMatrix) -> tuple[int, ...]:
    """Row vector times matrix: (x*M) with entries reduced mod M.m."""
    if len(x) != M.nrows:
        raise ValueError(f"vector length {len(x)} != row count {M.nrows}")
    m = M.m
    out = [0] * M.ncols
    for xi, row in zip(x, M.rows):
        if xi % m:
            for j, e in enumerate(row):
                out[j] += xi * e
    return tuple(v % m for v in out)


@dataclass(frozen=True)
class HowellForm:
    """Canonical row-span representative over Z/m.

    ``matrix`` holds the canonical rows (no zero rows), ``pivots`` the
    pivot column of each row, and ``transform`` a matrix T with
    T * source = matrix, so solutions can be pulled back to source
    coordinates.
    """

    source_shape: tuple[int, int]
    matrix: ZmMatrix
    pivots: tuple[int, ...]
    transform: ZmMatrix

    @property
    def modulus(self) -> int:
        return self.matrix.m


def howell(M: ZmMatrix) -> HowellForm:
    """Howell normal form of the row span of M.

    Canonical: equal row spans give identical forms.  Pivots are
    normalized to the divisor of m in their associate class, entries
    above a pivot are reduced modulo the pivot, and the span is closed
    under the leading-zero property (for each pivot p, the row scaled by
    m/gcd(p, m) is also represented).
    """
    m = M.m
    ncols = M.ncols
    work = [list(r) for r in M.rows]
    nsrc = len(work)
    trans = [[1 if i == j else 0 for j in range(nsrc)] for i in range(nsrc)]
    top = 0
    pivots: list[int] = []
    for j in range(ncols):
        k = next((i for i in range(top, len(work)) if work[i][j]), None)
        if k is None:
            continue
        work[top], work[k] = work[k], work[top]
        trans[top], trans[k] = trans[k], trans[top]
        for i in range(top + 1, len(work)):
            b = work[i][j]
            if not b:
                continue
            a = work[top][j]
            g, s, t = _xgcd(a, b)
            at, bt = a // g, b // g
            wt, wi = work[top], work[i]
            work[top] = [(s * x + t * y) % m for x, y in zip(wt, wi)]
            work[i] = [(at * y - bt * x) % m for x, y in zip(wt, wi)]
            tt, ti = trans[top], trans[i]
            trans[top] = [(s * x + t * y) % m for x, y in zip(tt, ti)]
            trans[i] = [(at * y - bt * x) % m for x, y in zip(tt, ti)]
        p = work[top][j]
        c = m // math.gcd(p, m)
        if c > 1:
            extra = [(c * x) % m for x in work[top]]
            if any(extra):
                work.append(extra)
                trans.append([(c * x) % m for x in trans[top]])
        pivots.append(j)
        top += 1
    work = work[:top]
    trans = trans[:top]
    # normalize each pivot to the canonical divisor of m
    for i, j in enumerate(pivots):
        u = _unit_scale(work[i][j], m)
        if u != 1:
            work[i] = [(u * x) % m for x in work[i]]
            trans[i] = [(u * x) % m for x in trans[i]]
    # reduce entries above each pivot modulo the pivot
    for i, j in enumerate(pivots):
        d = work[i][j]
        for k in range(i):
            q = work[k][j] // d
            if q:
                work[k] = [(x - q * y) % m for x, y in zip(work[k], work[i])]
                trans[k] = [(x - q * y) % m for x, y in zip(trans[k], trans[i])]
    return HowellForm(
        source_shape=(M.nrows, M.ncols),
        matrix=ZmMatrix(m, work, ncols=ncols),
        pivots=tuple(pivots),
        transform=ZmMatrix(m, trans, ncols=nsrc),
    )


def _solve_coeffs(hf: HowellForm, b) -> list[int] | None:
    """Coefficients c with sum(c_i * row_i) = b against a Howell form."""
    m = hf.modulus
    if len(b) != hf.matrix.ncols:
        raise ValueError(f"vector length {len(b)} != column count {hf.matrix.ncols}")
    r = [int(e) % m for e in b]
    coeffs = []
    for row, j in zip(hf.matrix.rows, hf.pivots):
        p = row[j]
        d = math.gcd(p, m)
        if r[j] % d:
            return None
        md = m // d
        c = ((r[j] // d) * pow((p // d) % md, -1, md)) % md if md > 1 else 0
        if c:
            r = [(x - c * y) % m for x, y in zip(r, row)]
        coeffs.append(c)
    if any(r):
        return None
    return coeffs


def solve(M: ZmMatrix, b, hf: HowellForm | None = None):
    """Find x with x*M = b over Z/m; None if b is outside the row span.

    A precomputed ``howell(M)`` may be passed to amortize repeated solves
    against the same matrix.
    """
    if hf is None:
        hf = howell(M)
    coeffs = _solve_coeffs(hf, b)
    if coeffs is None:
        return None
    m = M.m
    x = [0] * M.nrows
    for c, trow in zip(coeffs, hf.transform.rows):
        if c:
            x = [(xi + c * ti) % m for xi, ti in zip(x, trow)]
    return tuple(x)


def solve_matrix(M: ZmMatrix, B: ZmMatrix, hf: HowellForm | None = None):
    """Find X with X*M = B, or None if any row of B is outside the span."""
    if M.m != B.m or B.ncols != M.ncols:
        raise ValueError("shape or modulus mismatch")
    if hf is None:
        hf = howell(M)
    out = []
    for brow in B.rows:
        x = solve(M, brow, hf=hf)
        if x is None:
            return None
        out.append(x)
    return ZmMatrix(M.m, out, ncols=M.nrows)


def inverse(M: ZmMatrix):
    """Inverse of a square matrix over Z/m, or None if not invertible."""
    if M.nrows != M.ncols:
        raise ValueError("inverse needs a square matrix")
    return solve_matrix(M, ZmMatrix.identity(M.m, M.nrows))


def kernel(M: ZmMatrix) -> ZmMatrix:
    """Canonical generating set for {x : x*M = 0} over Z/m."""
    aug = M.hstack(ZmMatrix.identity(M.m, M.nrows))
    hf = howell(aug)
    ker_rows = [
        row[M.ncols:]
        for row, j in zip(hf.matrix.rows, hf.pivots)
        if j >= M.ncols
    ]
    return ZmMatrix(M.m, ker_rows, ncols=M.nrows)


def span_contains(hf: HowellForm, x) -> bool:
    """Whether the row vector x lies in the span the Howell form presents."""
    return _solve_coeffs(hf, x) is not None


def span_equal(A: ZmMatrix, B: ZmMatrix) -> bool:
    """Whether two matrices over the same Z/m have equal row spans."""
    if A.m != B.m or A.ncols != B.ncols:
        raise ValueError("shape or modulus mismatch")
    ha, hb = howell(A), howell(B)
    return ha.matrix == hb.matrix


def hnf(rows, ncols: int | None = None):
    """Row Hermite normal form over Z: returns (rows, pivot columns).

    Pivots are positive, entries below a pivot are zero, entries above are
    reduced into [0, pivot).  Zero rows are dropped.  The row lattice is
    preserved, and the form is the canonical basis of that lattice.
    """
    A = [list(map(int, r)) for r in rows]
    nc = len(A[0]) if A else int(ncols or 0)
    if any(len(r) != nc for r in A):
        raise ValueError("ragged rows")
    top = 0
    pivots: list[int] = []
    for j in range(nc):
        k = next((i for i in range(top, len(A)) if A[i][j]), None)
        if k is None:
            continue
        A[top], A[k] = A[k], A[top]
        for i in range(top + 1, len(A)):
            b = A[i][j]
            if not b:
                continue
            a = A[top][j]
            if b % a == 0:
                q = b // a
                A[i] = [x - q * y for x, y in zip(A[i], A[top])]
            else:
                g, s, t = _xgcd(a, b)
                at, bt = a // g, b // g
                r1, r2 = A[top], A[i]
                A[top] = [s * x + t * y for x, y in zip(r1, r2)]
                A[i] = [at * y - bt * x for x, y in zip(r1, r2)]
        if A[top][j] < 0:
            A[top] = [-x for x in A[top]]
        pivots.append(j)
        top += 1
    A = A[:top]
    for i, j in enumerate(pivots):
        d = A[i][j]
        for k in range(i):
            q = A[k][j] // d
            if q:
                A[k] = [x - q * y for x, y in zip(A[k], A[i])]
    return tuple(tuple(r) for r in A), tuple(pivots)


@dataclass(frozen=True)
class SNFData:
    """Smith normal form over Z: U*A*V = D with d_1 | d_2 | ... and
    U, V unimodular."""

    matrix: tuple[tuple[int, ...], ...]
    U: tuple[tuple[int, ...], ...]
    V: tuple[tuple[int, ...], ...]
    D: tuple[tuple[int, ...], ...]

    @property
    def diagonal(self) -> tuple[int, ...]:
        n = min(len(self.D), len(self.D[0]) if self.D else 0)
        return tuple(self.D[i][i] for i in range(n))


def snf(rows, ncols: int | None = None) -> SNFData:
    """Smith normal form of an integer matrix, with transforms.

    Pass ``ncols`` only for a matrix with zero rows.
    """
    A = [list(map(int, r)) for r in rows]
    nr = len(A)
    nc = len(A[0]) if A else int(ncols or 0)
    if any(len(r) != nc for r in A):
        raise ValueError("ragged rows")
    src = tuple(tuple(r) for r in A)
    U = [[1 if i == j else 0 for j in range(nr)] for i in range(nr)]
    V = [[1 if i == j else 0 for j in range(nc)] for i in range(nc)]

    def row_combine(i1, i2, g, s, t, at, bt):
        for Mx in (A, U):
            r1, r2 = Mx[i1], Mx[i2]
            Mx[i1] = [s * x + t * y for x, y in zip(r1, r2)]
            Mx[i2] = [at * y - bt * x for x, y in zip(r1, r2)]

    def col_combine(j1, j2, g, s, t, at, bt):
        for Mx in (A, V):
            for r in Mx:
                x, y = r[j1], r[j2]
                r[j1] = s * x + t * y
                r[j2] = at * y - bt * x

    t_idx = 0
    while t_idx < min(nr, nc):
        # move a nonzero entry of smallest magnitude to the pivot seat
        best = None
        for i in range(t_idx, nr):
            for j in range(t_idx, nc):
                v = A[i][j]
                if v and (best is None or abs(v) < abs(A[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        bi, bj = best
        if bi != t_idx:
            A[t_idx], A[bi] = A[bi], A[t_idx]
            U[t_idx], U[bi] = U[bi], U[t_idx]
        if bj != t_idx:
            for Mx in (A, V):
                for r in Mx:
                    r[t_idx], r[bj] = r[bj], r[t_idx]
        while True:
            changed = False
            for i in range(t_idx + 1, nr):
                b = A[i][t_idx]
                if not b:
                    continue
                a = A[t_idx][t_idx]
                if b % a == 0:
                    # plain subtraction keeps the pivot row untouched
                    q = b // a
                    A[i] = [x - q * y for x, y in zip(A[i], A[t_idx])]
                    U[i] = [x - q * y for x, y in zip(U[i], U[t_idx])]
                else:
                    g, s, t = _xgcd(a, b)
                    row_combine(t_idx, i, g, s, t, a // g, b // g)
                changed = True
            for j in range(t_idx + 1, nc):
                b = A[t_idx][j]
                if not b:
                    continue
                a = A[t_idx][t_idx]
                if b % a == 0:
                    q = b // a
                    for Mx in (A, V):
                        for r in Mx:
                            r[j] -= q * r[t_idx]
                else:
                    g, s, t = _xgcd(a, b)
                    col_combine(t_idx, j, g, s, t, a // g, b // g)
                changed = True
            if not changed:
                p = A[t_idx][t_idx]
                bad = next(
                    (
                        i
                        for i in range(t_idx + 1, nr)
                        if any(A[i][j] % p for j in range(t_idx + 1, nc))
                    ),
                    None,
                )
                if bad is None:
                    break
                # fold the offending row in so the pivot absorbs the gcd
                A[t_idx] = [x + y for x, y in zip(A[t_idx], A[bad])]
                U[t_idx] = [x + y for x, y in zip(U[t_idx], U[bad])]
        if A[t_idx][t_idx] < 0:
            A[t_idx] = [-x for x in A[t_idx]]
            U[t_idx] = [-x for x in U[t_idx]]
        t_idx += 1
    D = tuple(tuple(r) for r in A)
    return SNFData(matrix=src, U=tuple(tuple(r) for r in U), V=tuple(tuple(r) for r in V), D=D)


def snf_solve(S: SNFData, b):
    """Find integer x with x*A = b for the matrix A the SNF was built from;
    None if b is outside the integer row lattice."""
    nr = len(S.matrix)
    nc = len(S.matrix[0]) if S.matrix else len(b)
    if len(b) != nc:
        raise ValueError("vector length mismatch")
    # x*A = b  <=>  (x*U^{-1})*D = b*V, so read off y then x = y*U
    z = [sum(int(b[i]) * S.V[i][j] for i in range(nc)) for j in range(nc)]
    y = [0] * nr
    for i in range(nc):
        d = S.D[i][i] if i < min(nr, nc) else 0
        if d == 0:
            if z[i] != 0:
                return None
        else:
            if z[i] % d:
                return None
            y[i] = z[i] // d
    x = [sum(y[i] * S.U[i][j] for i in range(nr)) for j in range(nr)]
    return tuple(x)
