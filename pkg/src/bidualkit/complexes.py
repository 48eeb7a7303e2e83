"""Two-term complexes of free modules over finite group rings.

A complex here is a single square matrix ``psi`` acting on a free module
``P``, read as the map of the complex ``P -> P`` (degree zero to degree
one).  The module provides

* cohomology in both degrees (kernel and cokernel of ``psi``);
* standard representatives: an adapted basis of ``P`` aligned with a
  chosen surjection from the degree-one cohomology onto a free module;
* determinant-line elements (a scalar coordinate against the basis wedge
  tensored with its dual wedge) and the projection ``pi`` of the
  determinant line into the exterior bidual of the degree-zero
  cohomology;
* transition maps between determinant lines: horizontal (splitting off
  decoupled coordinates of the same ring) and vertical (pushing along a
  quotient of the group while trivialising the split-off blocks by their
  characteristic scalars).

All computations are exact.
"""

from __future__ import annotations

from .errors import CannotComplete, NotSurjective, ShapeMismatch
from .grouprings import (
    FinAbGroup,
    GroupRingElem,
    RMatrix,
    _prime_of,
    is_unit,
    ring_inverse,
    ring_projection,
)
from .modalg import (
    BidualElement,
    FPModule,
    ModuleHom,
    bidual,
    bidual_inclusion,
    dual,
    exterior_power,
    rdet,
    wedge_dual_apply,
    xi,
)

__all__ = [
    "TwoTermComplex",
    "DetElement",
    "StandardRep",
    "PiImage",
    "standardize",
    "pi_raw",
    "pi_image",
    "pi_map",
    "ev_phi",
    "ev_ideal",
    "matrix_inverse",
    "block_diag",
    "euler_factor",
    "horizontal_transition",
    "vertical_transition",
]


# ---------------------------------------------------------------------------
# matrix helpers
# ---------------------------------------------------------------------------


def _det(group: FinAbGroup, m: int, rows) -> GroupRingElem:
    """Determinant with an explicit ring, so the empty matrix is one."""
    if not rows:
        return GroupRingElem.one(group, m)
    return rdet(rows)


def matrix_inverse(mat: RMatrix) -> RMatrix:
    """Inverse of a square matrix with unit determinant, by the adjugate;
    avoids dense linear algebra so it stays cheap over large group rings."""
    n = mat.nrows
    if mat.ncols != n:
        raise ShapeMismatch("only square matrices can be inverted")
    det = _det(mat.group, mat.m, mat.rows)
    det_inv = ring_inverse(det)  # ValueError when the determinant is not a unit
    if n == 0:
        return RMatrix(mat.group, mat.m, [], 0)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            minor = [
                [mat.rows[a][b] for b in range(n) if b != i]
                for a in range(n)
                if a != j
            ]
            cof = _det(mat.group, mat.m, minor)
            row.append(det_inv * (cof if (i + j) % 2 == 0 else -cof))
        rows.append(row)
    return RMatrix(mat.group, mat.m, rows, n)


def block_diag(group: FinAbGroup, m: int, mats) -> RMatrix:
    """Block-diagonal assembly of square matrices over a common ring."""
    sizes = []
    for mat in mats:
        if mat.nrows != mat.ncols:
            raise ShapeMismatch("block-diagonal parts must be square")
        sizes.append(mat.nrows)
    n = sum(sizes)
    zero = GroupRingElem.zero(group, m)
    rows = [[zero] * n for _ in range(n)]
    offset = 0
    for mat, size in zip(mats, sizes):
        for i in range(size):
            for j in range(size):
                rows[offset + i][offset + j] = mat.rows[i][j]
        offset += size
    return RMatrix(group, m, rows, n)


def _residue_rows(mat: RMatrix) -> list[list[int]]:
    """Reduction of a matrix to the residue field: augmentation modulo p
    in every entry."""
    p = _prime_of(mat.m)
    return [[e.augmentation() % p for e in row] for row in mat.rows]


def _fp_rank(rows: list[list[int]], p: int) -> int:
    """Rank of an integer matrix over the prime field."""
    work = [row[:] for row in rows]
    rank = 0
    ncols = len(work[0]) if work else 0
    for col in range(ncols):
        pivot = next(
            (i for i in range(rank, len(work)) if work[i][col] % p), None
        )
        if pivot is None:
            continue
        work[rank], work[pivot] = work[pivot], work[rank]
        inv = pow(work[rank][col], -1, p)
        work[rank] = [v * inv % p for v in work[rank]]
        for i in range(len(work)):
            if i != rank and work[i][col] % p:
                c = work[i][col] % p
                work[i] = [(a - c * b) % p for a, b in zip(work[i], work[rank])]
        rank += 1
    return rank


# ---------------------------------------------------------------------------
# the complex
# ---------------------------------------------------------------------------


class TwoTermComplex:
    """A square matrix ``psi`` on a free module, viewed as a two-term
    complex placed in degrees zero and one."""

    def __init__(self, group: FinAbGroup, m: int, psi: RMatrix):
        if psi.group != group or psi.m != m:
            raise ShapeMismatch("the matrix of a complex must live over its ring")
        if psi.nrows != psi.ncols:
            raise ShapeMismatch("the matrix of a complex must be square")
        self.group = group
        self.m = m
        self.psi = psi
        self._h0 = None
        self._h1 = None

    @property
    def d(self) -> int:
        return self.psi.nrows

    @property
    def module(self) -> FPModule:
        """The common free module in both degrees."""
        return FPModule.free(self.group, self.m, self.d)

    def hom(self) -> ModuleHom:
        return ModuleHom(self.module, self.module, self.psi)

    def h0(self) -> tuple[FPModule, ModuleHom]:
        """Degree-zero cohomology: the kernel of ``psi`` presented as a
        module together with its inclusion into the free module."""
        if self._h0 is None:
            self._h0 = self.hom().kernel()
        return self._h0

    def h1(self) -> FPModule:
        """Degree-one cohomology: the cokernel of ``psi``, presented on the
        coordinates of the free module with the rows of ``psi`` as
        relations."""
        if self._h1 is None:
            self._h1 = FPModule(self.group, self.m, self.d, rels=self.psi)
        return self._h1

    def class_map(self) -> ModuleHom:
        """The projection of the free module onto the degree-one cohomology
        (identity on coordinates)."""
        return ModuleHom(self.module, self.h1(), RMatrix.identity(self.group, self.m, self.d))

    def __eq__(self, other):
        return (
            isinstance(other, TwoTermComplex)
            and self.group == other.group
            and self.m == other.m
            and self.psi == other.psi
        )

    def __hash__(self):
        return hash((self.group, self.m, self.psi))

    def __repr__(self):
        return f"TwoTermComplex(d={self.d}, m={self.m}, |G|={self.group.order})"


# ---------------------------------------------------------------------------
# determinant line
# ---------------------------------------------------------------------------


class DetElement:
    """Element of the determinant line of a complex: the coordinate of
    ``(b_1 ^ ... ^ b_d) tensor (b_1* ^ ... ^ b_d*)`` for the basis named by
    ``tag``.  Reordering or rescaling the basis changes both tensor factors
    by mutually inverse determinants, so the coordinate itself only moves
    through :meth:`base_change`; comparisons are restricted to equal tags to
    keep basis bookkeeping explicit."""

    __slots__ = ("complex", "coeff", "tag")

    def __init__(self, complex: TwoTermComplex, coeff: GroupRingElem, tag: str = "std"):
        if coeff.group != complex.group or coeff.m != complex.m:
            raise ShapeMismatch("determinant coordinate must live over the complex's ring")
        self.complex = complex
        self.coeff = coeff
        self.tag = tag

    @classmethod
    def unit(cls, complex: TwoTermComplex, tag: str = "std") -> "DetElement":
        return cls(complex, GroupRingElem.one(complex.group, complex.m), tag)

    def base_change(self, transform: RMatrix, tag: str) -> "DetElement":
        """Express the same element against the basis obtained by applying an
        invertible ``transform`` (rows are the new basis vectors in the old
        coordinates).  The wedge factor scales by the determinant and the
        dual-wedge factor by its inverse, so the coordinate is carried by
        their product."""
        if transform.nrows != self.complex.d or transform.ncols != self.complex.d:
            raise ShapeMismatch("base change must be a square matrix of the rank")
        det = _det(self.complex.group, self.complex.m, transform.rows)
        scale = det * ring_inverse(det)  # ValueError when not invertible
        return DetElement(self.complex, self.coeff * scale, tag)

    def __eq__(self, other):
        return (
            isinstance(other, DetElement)
            and self.complex == other.complex
            and self.tag == other.tag
            and self.coeff == other.coeff
        )

    def __repr__(self):
        return f"DetElement(coeff={self.coeff!r}, tag={self.tag!r})"


# ---------------------------------------------------------------------------
# standard representatives
# ---------------------------------------------------------------------------


class StandardRep:
    """An adapted basis for a complex, relative to a surjection ``f`` of its
    degree-one cohomology onto a free module of rank ``r``: the classes of
    the trailing ``d - r`` basis vectors die under ``f`` and span its kernel,
    while the leading ``r`` map to a basis of the target."""

    def __init__(self, complex: TwoTermComplex, f: ModuleHom, basis: RMatrix):
        group, m = complex.group, complex.m
        if f.src != complex.h1():
            raise ShapeMismatch("the surjection must start from the complex's degree-one cohomology")
        X = f.tgt
        if not X.is_free:
            raise ValueError("the target of the surjection must be free")
        r = X.ngens
        d = complex.d
        if r > d:
            raise ShapeMismatch("target rank exceeds the rank of the complex")
        if basis.group != group or basis.m != m or basis.nrows != d or basis.ncols != d:
            raise ShapeMismatch("adapted basis must be a square matrix over the complex's ring")
        if not is_unit(_det(group, m, basis.rows)):
            raise ValueError("adapted basis rows do not form a basis")
        p = _prime_of(m)
        if _fp_rank(_residue_rows(f.mat), p) != r:
            raise NotSurjective("the map onto the free target is not surjective")
        to_x = ModuleHom(complex.module, X, f.mat)
        images = [to_x.apply(tuple(basis.rows[i])) for i in range(d)]
        for i in range(r, d):
            if any(not c.is_zero for c in images[i]):
                raise ValueError("basis is not adapted: a trailing vector survives the surjection")
        m_x = RMatrix(group, m, [list(images[i]) for i in range(r)], r)
        det_mx = _det(group, m, m_x.rows)
        if not is_unit(det_mx):
            raise ValueError("basis is not adapted: leading vectors do not map to a basis")
        self.complex = complex
        self.f = f
        self.basis = basis
        self.r = r
        self.m_x = m_x
        self.det_mx = det_mx

    @property
    def d(self) -> int:
        return self.complex.d

    def __repr__(self):
        return f"StandardRep(d={self.d}, r={self.r})"


def _complete_basis(group: FinAbGroup, m: int, initial, candidates, d: int):
    """Extend ``initial`` rows to ``d`` rows forming a basis, drawing from
    ``candidates``; existence is detected on the residue field, where a
    set of rows spans if and only if it spans over the whole local ring."""
    p = _prime_of(m)
    chosen = [list(row) for row in initial]
    pivots: list[tuple[int, list[int]]] = []

    def reduce_residue(vec):
        res = [e.augmentation() % p for e in vec]
        for col, prow in pivots:
            c = res[col] % p
            if c:
                res = [(a - c * b) % p for a, b in zip(res, prow)]
        return res

    for row in chosen:
        res = reduce_residue(row)
        col = next(i for i, v in enumerate(res) if v % p)
        inv = pow(res[col], -1, p)
        pivots.append((col, [v * inv % p for v in res]))
    for cand in candidates:
        if len(chosen) == d:
            break
        res = reduce_residue(cand)
        col = next((i for i, v in enumerate(res) if v % p), None)
        if col is None:
            continue
        inv = pow(res[col], -1, p)
        pivots.append((col, [v * inv % p for v in res]))
        chosen.append(list(cand))
    if len(chosen) < d:
        raise CannotComplete(
            f"could not extend {len(initial)} vectors to a basis of rank {d}"
        )
    return chosen


def standardize(complex: TwoTermComplex, f: ModuleHom) -> StandardRep:
    """Produce an adapted basis for ``f``: lift a basis of the free target
    through the class map, then complete with kernel generators (a spanning
    set, so completion always succeeds on well-formed input)."""
    group, m = complex.group, complex.m
    if f.src != complex.h1():
        raise ShapeMismatch("the surjection must start from the complex's degree-one cohomology")
    X = f.tgt
    if not X.is_free:
        raise ValueError("the target of the surjection must be free")
    r, d = X.ngens, complex.d
    p = _prime_of(m)
    if _fp_rank(_residue_rows(f.mat), p) != r:
        raise NotSurjective("the map onto the free target is not surjective")
    to_x = ModuleHom(complex.module, X, f.mat)
    leading = []
    for i in range(r):
        pre = to_x.preimage(X.gen(i))
        if pre is None:
            raise NotSurjective("a target basis vector has no preimage")
        leading.append(pre)
    kmod, kinc = to_x.kernel()
    candidates = [kinc.apply(kmod.gen(j)) for j in range(kmod.ngens)]
    rows = _complete_basis(group, m, leading, candidates, d)
    return StandardRep(complex, f, RMatrix(group, m, rows, d))


# ---------------------------------------------------------------------------
# the projection of the determinant line
# ---------------------------------------------------------------------------


class PiImage:
    """Value of the determinant-line projection: ``raw`` is the element of
    the degree-``r`` exterior bidual of the ambient free module, ``element``
    its coordinates after corestriction onto the bidual of the degree-zero
    cohomology (``kernel``, included via ``inclusion``)."""

    __slots__ = ("rep", "kernel", "inclusion", "raw", "element")

    def __init__(self, rep, kernel, inclusion, raw, element):
        self.rep = rep
        self.kernel = kernel
        self.inclusion = inclusion
        self.raw = raw
        self.element = element

    def __repr__(self):
        return f"PiImage(r={self.rep.r})"


def pi_raw(rep: StandardRep, z: DetElement) -> BidualElement:
    """Project a determinant element into the degree-``r`` exterior bidual
    of the ambient free module (no corestriction onto the kernel).

    Against an adapted basis ``b`` the projection contracts the top wedge by
    the trailing coordinate functionals of ``psi`` (composed with the duals
    of the ``b_i``), carries the sign ``(-1)^(r(d-r))``, and divides by the
    determinant of the leading-image matrix so the result is expressed
    against the standard dual wedge of the target."""
    if z.complex != rep.complex:
        raise ShapeMismatch("determinant element belongs to a different complex")
    complex = rep.complex
    group, m = complex.group, complex.m
    d, r = complex.d, rep.r
    P = complex.module
    Pstar = dual(P)
    binv = matrix_inverse(rep.basis)
    dual_cols = complex.psi * binv
    # the coordinates of psi against the leading dual basis vectors must
    # vanish: the image of psi dies in the free target
    for i in range(r):
        for k in range(d):
            assert dual_cols.rows[k][i].is_zero, (
                "complex image escapes the span of the trailing basis vectors"
            )
    phis = [
        Pstar.element(tuple(dual_cols.rows[k][i] for k in range(d)))
        for i in range(r, d)
    ]
    ext_low = exterior_power(Pstar, d - r)
    if phis:
        Phi = ext_low.wedge(phis)
    else:
        Phi = ext_low.element((GroupRingElem.one(group, m),))
    top = exterior_power(P, d)
    scale = z.coeff * _det(group, m, rep.basis.rows)
    a = top.element((scale,))
    w = wedge_dual_apply(P, Phi, a, d - r, d)
    raw_coords = xi(P, r).apply(w)
    sign = -1 if (r * (d - r)) % 2 else 1
    norm = ring_inverse(rep.det_mx)
    if sign < 0:
        norm = -norm
    B = bidual(P, r)
    raw_coords = B.element(tuple(norm * c for c in raw_coords))
    return BidualElement(P, r, raw_coords)


def pi_image(rep: StandardRep, z: DetElement) -> PiImage:
    """Project a determinant element into the exterior bidual of the
    degree-zero cohomology: the raw projection of :func:`pi_raw` followed
    by corestriction onto the bidual of the kernel."""
    raw = pi_raw(rep, z)
    complex = rep.complex
    kernel, inclusion = complex.h0()
    binc = bidual_inclusion(inclusion, rep.r)
    element = binc.preimage(raw.coords)
    assert element is not None, "projection image escapes the kernel's bidual"
    return PiImage(rep, kernel, inclusion, raw, element)


def pi_map(rep: StandardRep) -> ModuleHom:
    """The projection as a module map from the (rank-one free) determinant
    line into the exterior bidual of the degree-zero cohomology."""
    complex = rep.complex
    group, m = complex.group, complex.m
    image = pi_image(rep, DetElement.unit(complex))
    line = FPModule.free(group, m, 1)
    target = bidual(image.kernel, rep.r)
    return ModuleHom(line, target, RMatrix(group, m, [list(image.element)], target.ngens))


def ev_phi(rep: StandardRep, Phi, z: DetElement) -> GroupRingElem:
    """Evaluate the projection of ``z`` against an element of the
    degree-``r`` exterior power of the dual of the ambient module."""
    return pi_image(rep, z).raw.evaluate(Phi)


def ev_ideal(rep: StandardRep):
    """The ideal of all evaluations of the projected determinant line:
    generated by the values of the projection of a generator against the
    exterior power of the dual."""
    from .modalg import image_ideal

    return image_ideal(pi_image(rep, DetElement.unit(rep.complex)).raw)


# ---------------------------------------------------------------------------
# determinant transitions
# ---------------------------------------------------------------------------


def euler_factor(U: RMatrix) -> GroupRingElem:
    """The characteristic scalar ``det(1 - U)`` of an action matrix: the
    image of the canonical determinant basis when the block complex
    ``1 - U`` is trivialised through its cohomology."""
    if U.nrows != U.ncols:
        raise ShapeMismatch("action matrix must be square")
    ident = RMatrix.identity(U.group, U.m, U.nrows)
    return _det(U.group, U.m, (ident - U).rows)


def horizontal_transition(z: DetElement, target: TwoTermComplex, block_positions) -> DetElement:
    """Transport a determinant element when the complex splits off fully
    decoupled coordinates (the rows and columns at ``block_positions`` touch
    nothing else).  Each split-off coordinate contributes its basis vector
    tensored with the dual vector, whose evaluation is one, so the
    coordinate carries over unchanged; the structure is validated
    strictly."""
    source = z.complex
    group, m = source.group, source.m
    if target.group != group or target.m != m:
        raise ShapeMismatch("horizontal transition stays over one ring")
    blocks = sorted(set(block_positions))
    if len(blocks) != len(tuple(block_positions)):
        raise ShapeMismatch("block positions must be distinct")
    if any(b < 0 or b >= source.d for b in blocks):
        raise ShapeMismatch("block position out of range")
    if source.d != target.d + len(blocks):
        raise ShapeMismatch(
            f"rank mismatch: {source.d} != {target.d} + {len(blocks)}"
        )
    kept = [i for i in range(source.d) if i not in blocks]
    for b in blocks:
        for c in range(source.d):
            if c == b:
                continue
            if not source.psi.rows[b][c].is_zero or not source.psi.rows[c][b].is_zero:
                raise ShapeMismatch("split-off coordinate is coupled to the rest")
    for i, a in enumerate(kept):
        for j, c in enumerate(kept):
            if source.psi.rows[a][c] != target.psi.rows[i][j]:
                raise ShapeMismatch("kept coordinates do not match the target complex")
    return DetElement(target, z.coeff, z.tag)


def vertical_transition(z: DetElement, target: TwoTermComplex, blocks) -> DetElement:
    """Transport a determinant element along a quotient of the group ring:
    coefficients push through the fibre-summing projection, and each
    split-off block (appearing after projection as ``1 - U`` at the trailing
    coordinates) is trivialised through its cohomology, contributing its
    characteristic scalar ``det(1 - U)``."""
    source = z.complex
    tgroup, m = target.group, target.m
    if m != source.m:
        raise ShapeMismatch("vertical transition keeps the coefficient modulus")
    blocks = list(blocks)
    for U in blocks:
        if U.group != tgroup or U.m != m:
            raise ShapeMismatch("block action matrices must live over the target ring")
        if U.nrows != U.ncols:
            raise ShapeMismatch("block action matrices must be square")
    if source.d != target.d + sum(U.nrows for U in blocks):
        raise ShapeMismatch(
            f"rank mismatch: {source.d} != {target.d} + blocks"
        )
    projected = RMatrix(
        tgroup,
        m,
        [[ring_projection(e, tgroup) for e in row] for row in source.psi.rows],
        source.d,
    )
    ident_blocks = [
        RMatrix.identity(tgroup, m, U.nrows) - U for U in blocks
    ]
    expected = block_diag(tgroup, m, [target.psi] + ident_blocks)
    if projected != expected:
        raise ShapeMismatch(
            "projected complex does not split as the target plus trailing blocks"
        )
    coeff = ring_projection(z.coeff, tgroup)
    for U in blocks:
        coeff = coeff * euler_factor(U)
    return DetElement(target, coeff, z.tag)
