"""Finitely presented modules over (Z/m)[G], hom modules, duals, exterior
powers, exterior biduals, and the canonical maps between them.

Modules are presented by generators and a relation matrix over the group
ring; element coordinates are row vectors of group-ring elements, and
equality is decided by reducing against the Howell form of the flattened
relation lattice.  Hom modules are computed by flattening the
compatibility constraints to Z/m, solving, and re-presenting the solution
lattice over the group ring — except for free sources, which use the
standard basis presentation and never flatten (so free-module algebra
stays cheap over large group rings).

Conventions: homomorphisms act on row vectors (x maps to x·M), and a
functional on a module is stored as the matrix of its values on
generators.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations, product as _iproduct

from .errors import CapExceeded, NonSurjectiveDual, ShapeMismatch
from .zlin import ZmMatrix, howell, kernel as zm_kernel, solve as zm_solve, span_contains
from .grouprings import (
    FinAbGroup,
    GroupRingElem,
    RMatrix,
    flatten_vec,
    norm_element,
    unflatten_vec,
)

__all__ = [
    "FPModule",
    "ModuleHom",
    "HomModule",
    "ExteriorModule",
    "BidualElement",
    "hom_module",
    "dual",
    "exterior_power",
    "contraction",
    "wedge_dual_apply",
    "bidual",
    "xi",
    "bidual_contract",
    "bidual_inclusion",
    "bidual_restrict",
    "invariants_identify",
    "image_ideal",
    "submodule",
    "product_module",
    "vec_add",
    "vec_sub",
    "vec_smul",
    "vec_zero",
]

_FLATTEN_GROUP_CAP = 729
_DEGREE_CAP = 6


def _guard_flatten(group: FinAbGroup):
    if group.order > _FLATTEN_GROUP_CAP:
        raise CapExceeded(
            f"dense linear algebra over a group ring of order {group.order} "
            "is beyond the flattening cap"
        )


def vec_zero(group, m, n):
    return tuple(GroupRingElem.zero(group, m) for _ in range(n))


def vec_add(x, y):
    return tuple(a + b for a, b in zip(x, y))


def vec_sub(x, y):
    return tuple(a - b for a, b in zip(x, y))


def vec_smul(r, x):
    return tuple(a * r if isinstance(r, int) else r * a for a in x)


class FPModule:
    """Module presented by ``ngens`` generators and relation rows over R."""

    def __init__(self, group: FinAbGroup, m: int, ngens: int, rels: RMatrix | None = None):
        self.group = group
        self.m = m
        self.ngens = ngens
        if rels is None:
            rels = RMatrix(group, m, [], ngens)
        if rels.ncols != ngens:
            raise ShapeMismatch("relation rows must have one entry per generator")
        self.rels = rels
        self._hf = None

    # -- construction --------------------------------------------------------

    @classmethod
    def free(cls, group, m, d):
        return cls(group, m, d)

    @classmethod
    def zero(cls, group, m):
        return cls(group, m, 0)

    @property
    def is_free(self):
        return self.rels.nrows == 0

    def __eq__(self, other):
        return (
            isinstance(other, FPModule)
            and self.group == other.group
            and self.m == other.m
            and self.ngens == other.ngens
            and self.rels == other.rels
        )

    def __hash__(self):
        return hash((self.group, self.m, self.ngens, self.rels))

    def __repr__(self):
        return f"FPModule(gens={self.ngens}, rels={self.rels.nrows}, |G|={self.group.order}, m={self.m})"

    # -- canonical forms -------------------------------------------------------

    @property
    def flat_dim(self):
        return self.ngens * self.group.order

    def rel_howell(self):
        if self._hf is None:
            _guard_flatten(self.group)
            self._hf = howell(self.rels.flatten())
        return self._hf

    def element(self, coords) -> tuple:
        coords = tuple(coords)
        if len(coords) != self.ngens:
            raise ShapeMismatch("wrong number of coordinates")
        for e in coords:
            if e.group != self.group or e.m != self.m:
                raise ValueError("coordinate from a different ring")
        return coords

    def gen(self, i) -> tuple:
        one = GroupRingElem.one(self.group, self.m)
        zero = GroupRingElem.zero(self.group, self.m)
        return tuple(one if j == i else zero for j in range(self.ngens))

    def zero_elem(self) -> tuple:
        return vec_zero(self.group, self.m, self.ngens)

    def canon(self, x) -> tuple:
        """Canonical coset representative of x against the relation span."""
        x = self.element(x)
        if self.is_free:
            return x
        hf = self.rel_howell()
        v = list(flatten_vec(x))
        for row, j in zip(hf.matrix.rows, hf.pivots):
            q = v[j] // row[j]
            if q:
                v = [(a - q * b) % self.m for a, b in zip(v, row)]
        return tuple(unflatten_vec(self.group, self.m, v))

    def eq(self, x, y) -> bool:
        return self.canon(x) == self.canon(y)

    def is_zero_elem(self, x) -> bool:
        return self.canon(x) == self.zero_elem()

    def contains_in_relations(self, x) -> bool:
        if self.is_free:
            return all(e.is_zero for e in self.element(x))
        return span_contains(self.rel_howell(), list(flatten_vec(x)))

    def cardinality(self) -> int:
        if self.is_free:
            return self.m**self.flat_dim
        hf = self.rel_howell()
        size = 1
        pivots = dict(zip(hf.pivots, (row[j] for row, j in zip(hf.matrix.rows, hf.pivots))))
        for j in range(self.flat_dim):
            size *= pivots.get(j, self.m)
        return size

    def elements(self, cap: int = 4096):
        """All canonical representatives (guarded by cap)."""
        n = self.cardinality()
        if n > cap:
            raise CapExceeded(f"module of cardinality {n} exceeds the enumeration cap")
        if self.is_free:
            sizes = [self.m] * self.flat_dim
        else:
            hf = self.rel_howell()
            pivots = dict(zip(hf.pivots, (row[j] for row, j in zip(hf.matrix.rows, hf.pivots))))
            sizes = [pivots.get(j, self.m) for j in range(self.flat_dim)]
        for flat in _iproduct(*(range(s) for s in sizes)):
            yield tuple(unflatten_vec(self.group, self.m, flat))


def product_module(Y: FPModule, k: int) -> FPModule:
    """Direct sum of k copies of Y, coordinates concatenated."""
    zero = GroupRingElem.zero(Y.group, Y.m)
    rows = []
    for i in range(k):
        for rel in Y.rels.rows:
            row = [zero] * (Y.ngens * k)
            row[i * Y.ngens : (i + 1) * Y.ngens] = list(rel)
            rows.append(row)
    return FPModule(Y.group, Y.m, Y.ngens * k, RMatrix(Y.group, Y.m, rows, Y.ngens * k))


def _rspan_rows(group, m, flat_rows):
    """Z/m generators of the R-span of flat vectors: all group translates."""
    out = []
    for v in flat_rows:
        xs = unflatten_vec(group, m, v)
        for g in group.elements():
            out.append(list(flatten_vec([x.translate(g) for x in xs])))
    return out


def _prune_to_r_generators(group, m, flat_rows, width):
    """Greedy subset of rows whose R-span equals the R-span of all rows."""
    kept = []
    span_rows: list = []
    hf = howell(ZmMatrix(m, [], width))
    for v in flat_rows:
        if kept and span_contains(hf, list(v)):
            continue
        if not kept and not any(v):
            continue
        kept.append(list(v))
        span_rows = _rspan_rows(group, m, kept)
        hf = howell(ZmMatrix(m, span_rows, width))
    return kept


def relations_lattice(group, m, flat_gens, ambient_rel_rows, width):
    """Relation rows over R among the given flat generators, inside an
    ambient whose relation span is given by flat rows: the kernel of
    (c, t) -> sum_i c_i·w_i + sum t·rels, projected to c and unflattened."""
    elems = list(group.elements())
    rows = []
    for v in flat_gens:
        xs = unflatten_vec(group, m, v)
        for g in elems:
            rows.append(list(flatten_vec([x.translate(g) for x in xs])))
    nrows_c = len(flat_gens) * len(elems)
    rows.extend(list(r) for r in ambient_rel_rows)
    ker = zm_kernel(ZmMatrix(m, rows, width))
    rel_rows = []
    for row in ker.rows:
        c_part = row[:nrows_c]
        if not any(c_part):
            continue
        rel_rows.append(unflatten_vec(group, m, c_part))
    return rel_rows


def submodule(host: FPModule, gens) -> tuple[FPModule, "ModuleHom"]:
    """Present the submodule of ``host`` generated by the given elements;
    returns the presentation and the inclusion map."""
    _guard_flatten(host.group)
    gens = [host.element(g) for g in gens]
    flat_gens = [list(flatten_vec(g)) for g in gens]
    ambient = host.rels.flatten().rows if not host.is_free else []
    rel_rows = relations_lattice(host.group, host.m, flat_gens, ambient, host.flat_dim)
    sub = FPModule(
        host.group,
        host.m,
        len(gens),
        RMatrix(host.group, host.m, rel_rows, len(gens)),
    )
    incl = ModuleHom(sub, host, RMatrix(host.group, host.m, gens, host.ngens))
    return sub, incl


class ModuleHom:
    """Homomorphism between presented modules, as a generator-image matrix
    acting on row vectors.  Well-definedness (relations mapping into the
    target's relation span) is checked at construction."""

    def __init__(self, src: FPModule, tgt: FPModule, mat: RMatrix):
        if mat.nrows != src.ngens or mat.ncols != tgt.ngens:
            raise ShapeMismatch("hom matrix shape must be (src gens) x (tgt gens)")
        self.src = src
        self.tgt = tgt
        self.mat = mat
        for rel in src.rels.rows:
            img = mat.apply(list(rel))
            if not tgt.contains_in_relations(img):
                raise ValueError("relation does not map into the target's relations")

    @classmethod
    def identity(cls, X: FPModule):
        return cls(X, X, RMatrix.identity(X.group, X.m, X.ngens))

    def __eq__(self, other):
        if not isinstance(other, ModuleHom) or self.src != other.src or self.tgt != other.tgt:
            return False
        return all(
            self.tgt.eq(list(a), list(b)) for a, b in zip(self.mat.rows, other.mat.rows)
        )

    def __repr__(self):
        return f"ModuleHom({self.src.ngens} gens -> {self.tgt.ngens} gens)"

    def apply(self, x) -> tuple:
        return self.tgt.canon(self.mat.apply(list(self.src.element(x))))

    def then(self, other: "ModuleHom") -> "ModuleHom":
        if self.tgt != other.src:
            raise ShapeMismatch("composition target/source mismatch")
        return ModuleHom(self.src, other.tgt, self.mat * other.mat)

    @property
    def is_zero(self):
        return all(self.tgt.is_zero_elem(list(r)) for r in self.mat.rows)

    def kernel(self) -> tuple[FPModule, "ModuleHom"]:
        """Submodule of the source mapping into the target's relations."""
        _guard_flatten(self.src.group)
        rows = [list(r) for r in self.mat.flatten().rows]
        n_src = self.src.flat_dim
        if not self.tgt.is_free:
            rows.extend(list(r) for r in self.tgt.rels.flatten().rows)
        ker = zm_kernel(ZmMatrix(self.src.m, rows, self.tgt.flat_dim))
        flat = []
        for row in ker.rows:
            v = row[:n_src]
            if any(v):
                flat.append(list(v))
        pruned = _prune_to_r_generators(self.src.group, self.src.m, flat, n_src)
        gens = [tuple(unflatten_vec(self.src.group, self.src.m, v)) for v in pruned]
        return submodule(self.src, gens)

    def preimage(self, y) -> tuple | None:
        """Some x with f(x) = y in the target, or None."""
        _guard_flatten(self.src.group)
        rows = [list(r) for r in self.mat.flatten().rows]
        n_src = self.src.flat_dim
        if not self.tgt.is_free:
            rows.extend(list(r) for r in self.tgt.rels.flatten().rows)
        sol = zm_solve(ZmMatrix(self.src.m, rows, self.tgt.flat_dim), list(flatten_vec(self.tgt.element(y))))
        if sol is None:
            return None
        return tuple(unflatten_vec(self.src.group, self.src.m, sol[:n_src]))

    def is_injective(self) -> bool:
        ker, _ = self.kernel()
        return ker.cardinality() == 1

    def is_surjective(self) -> bool:
        return all(
            self.preimage(self.tgt.gen(t)) is not None for t in range(self.tgt.ngens)
        )


class HomModule(FPModule):
    """Hom_R(X, Y) presented on a finite set of generating homomorphisms.

    ``standard`` hom modules (free source) use the basis presentation: one
    generator per (source generator, target generator) pair, relations the
    block copies of the target's, and coordinate/matrix conversion is just
    reshaping — no flattening, so they work over large group rings.
    """

    def __init__(self, X: FPModule, Y: FPModule, gen_mats, rels: RMatrix, standard: bool):
        super().__init__(X.group, X.m, len(gen_mats), rels)
        self.hom_src = X
        self.hom_tgt = Y
        self.gen_mats = tuple(gen_mats)
        self.standard = standard

    def __hash__(self):
        return hash((super().__hash__(), self.hom_src, self.hom_tgt, self.gen_mats))

    def __eq__(self, other):
        return (
            isinstance(other, HomModule)
            and super().__eq__(other)
            and self.hom_src == other.hom_src
            and self.hom_tgt == other.hom_tgt
            and self.gen_mats == other.gen_mats
        )

    def as_matrix(self, h) -> RMatrix:
        """The generator-image matrix of the hom with coordinates h."""
        h = self.element(h)
        X, Y = self.hom_src, self.hom_tgt
        if self.standard:
            rows = [[h[i * Y.ngens + t] for t in range(Y.ngens)] for i in range(X.ngens)]
            return RMatrix(X.group, X.m, rows, Y.ngens)
        acc = RMatrix.zeros(X.group, X.m, X.ngens, Y.ngens)
        for c, mat in zip(h, self.gen_mats):
            if not c.is_zero:
                acc = acc + mat.map_entries(lambda e, c=c: c * e)
        return acc

    def coords_of_matrix(self, mat: RMatrix) -> tuple | None:
        """Coordinates presenting the given generator-image matrix, or None
        if it is not a well-defined hom in the lattice."""
        X, Y = self.hom_src, self.hom_tgt
        if self.standard:
            return tuple(e for row in mat.rows for e in row)
        _guard_flatten(self.group)
        width = X.ngens * Y.flat_dim
        rows = []
        for gmat in self.gen_mats:
            flat = list(flatten_vec([e for r in gmat.rows for e in r]))
            xs = unflatten_vec(self.group, self.m, flat)
            for g in self.group.elements():
                rows.append(list(flatten_vec([x.translate(g) for x in xs])))
        n_c = len(self.gen_mats) * self.group.order
        if not Y.is_free:
            zero = [0] * Y.flat_dim
            for i in range(X.ngens):
                for rel in Y.rels.flatten().rows:
                    rows.append(zero * i + list(rel) + zero * (X.ngens - 1 - i))
        target = list(flatten_vec([e for r in mat.rows for e in r]))
        sol = zm_solve(ZmMatrix(self.m, rows, width), target)
        if sol is None:
            return None
        return tuple(unflatten_vec(self.group, self.m, sol[:n_c]))

    def evaluate(self, h, x) -> tuple:
        """Value of the hom with coordinates h on the element x of X."""
        mat = self.as_matrix(h)
        return self.hom_tgt.canon(mat.apply(list(self.hom_src.element(x))))

    def as_hom(self, h) -> ModuleHom:
        return ModuleHom(self.hom_src, self.hom_tgt, self.as_matrix(h))


@lru_cache(maxsize=None)
def hom_module(X: FPModule, Y: FPModule) -> HomModule:
    """Hom_R(X, Y) as a presented module with exact evaluation."""
    if X.group != Y.group or X.m != Y.m:
        raise ValueError("hom between modules over different rings")
    group, m = X.group, X.m
    if X.ngens == 0 or Y.ngens == 0:
        return HomModule(X, Y, [], RMatrix(group, m, [], 0), standard=True)
    if X.is_free:
        gen_mats = []
        for i in range(X.ngens):
            for t in range(Y.ngens):
                rows = [
                    [
                        GroupRingElem.one(group, m)
                        if (a == i and b == t)
                        else GroupRingElem.zero(group, m)
                        for b in range(Y.ngens)
                    ]
                    for a in range(X.ngens)
                ]
                gen_mats.append(RMatrix(group, m, rows, Y.ngens))
        rels = product_module(Y, X.ngens).rels
        return HomModule(X, Y, gen_mats, rels, standard=True)

    _guard_flatten(group)
    width = X.ngens * Y.flat_dim
    # constraints: for each relation rho of X, rho·H lies in Y's relations
    rows = []
    units = []
    for i in range(X.ngens):
        for t in range(Y.ngens):
            for g in group.elements():
                units.append((i, t, g))
    for i, t, g in units:
        cond = []
        coeff = GroupRingElem.monomial(group, m, g)
        for rel in X.rels.rows:
            img = [GroupRingElem.zero(group, m)] * Y.ngens
            img[t] = rel[i] * coeff
            cond.extend(flatten_vec(img))
        rows.append(cond)
    n_h = len(units)
    if not Y.is_free:
        yrels = [list(r) for r in Y.rels.flatten().rows]
        for a in range(X.rels.nrows):
            for rel in yrels:
                pad = [0] * (Y.flat_dim * a) + list(rel) + [0] * (
                    Y.flat_dim * (X.rels.nrows - 1 - a)
                )
                rows.append(pad)
    ncols = X.rels.nrows * Y.flat_dim
    ker = zm_kernel(ZmMatrix(m, rows, ncols))
    flat_sols = []
    for row in ker.rows:
        v = row[:n_h]
        if any(v):
            flat_sols.append(list(v))
    # rows of the kernel are in (i, t, g)-coordinates = flat hom coordinates
    pruned = _prune_to_r_generators(group, m, flat_sols, width)
    gen_mats = []
    flat_kept = []
    for v in pruned:
        xs = unflatten_vec(group, m, v)
        mat = RMatrix(group, m, [xs[i * Y.ngens : (i + 1) * Y.ngens] for i in range(X.ngens)], Y.ngens)
        gen_mats.append(mat)
        flat_kept.append(v)
    ambient = []
    yflat = [list(r) for r in Y.rels.flatten().rows] if not Y.is_free else []
    for i in range(X.ngens):
        for rel in yflat:
            ambient.append([0] * (Y.flat_dim * i) + list(rel) + [0] * (Y.flat_dim * (X.ngens - 1 - i)))
    rel_rows = relations_lattice(group, m, flat_kept, ambient, width)
    rels = RMatrix(group, m, rel_rows, len(gen_mats))
    return HomModule(X, Y, gen_mats, rels, standard=False)


@lru_cache(maxsize=None)
def _ring_module(group, m) -> FPModule:
    return FPModule.free(group, m, 1)


@lru_cache(maxsize=None)
def dual(X: FPModule) -> HomModule:
    """X* = Hom_R(X, R)."""
    return hom_module(X, _ring_module(X.group, X.m))


def _functional_value(Xstar: HomModule, phi, x) -> GroupRingElem:
    return Xstar.evaluate(phi, x)[0]


# ---------------------------------------------------------------------------
# exterior powers
# ---------------------------------------------------------------------------


def rdet(rows) -> GroupRingElem:
    """Determinant over the group ring by cofactor expansion."""
    n = len(rows)
    if n == 0:
        raise ValueError("empty determinant needs a ring context")
    if n == 1:
        return rows[0][0]
    first = rows[0]
    acc = GroupRingElem.zero(first[0].group, first[0].m)
    for j in range(n):
        if first[j].is_zero:
            continue
        minor = [list(r[:j]) + list(r[j + 1 :]) for r in rows[1:]]
        term = first[j] * rdet(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def _merge_sign(i, T):
    """Sign and merged tuple for e_i ∧ e_T, or (0, None) on repetition."""
    if i in T:
        return 0, None
    less = sum(1 for t in T if t < i)
    merged = tuple(sorted((i,) + T))
    return (-1) ** less, merged


def _wedge_sign(S, T):
    """Sign of e_S ∧ e_T by inversion count, or 0 on overlap."""
    if set(S) & set(T):
        return 0, None
    inv = sum(1 for s in S for t in T if s > t)
    return (-1) ** inv, tuple(sorted(S + T))


def _subset_sign(U, S):
    """Shuffle sign of the subset U inside the sorted tuple S."""
    pos = [S.index(u) for u in U]
    return (-1) ** (sum(pos) - sum(range(len(U))))


class ExteriorModule(FPModule):
    """r-th exterior power on the generators of a host module: generators
    indexed by sorted r-subsets, relations induced from the host's."""

    def __init__(self, host: FPModule, r: int):
        if r < 0:
            raise ValueError("negative exterior degree")
        if r > _DEGREE_CAP:
            raise CapExceeded(f"exterior degree {r} exceeds the degree cap {_DEGREE_CAP}")
        group, m = host.group, host.m
        subsets = list(combinations(range(host.ngens), r))
        index = {S: i for i, S in enumerate(subsets)}
        rows = []
        zero = GroupRingElem.zero(group, m)
        if r >= 1:
            for rel in host.rels.rows:
                for T in combinations(range(host.ngens), r - 1):
                    row = [zero] * len(subsets)
                    nontrivial = False
                    for i in range(host.ngens):
                        if rel[i].is_zero:
                            continue
                        sign, merged = _merge_sign(i, T)
                        if sign == 0:
                            continue
                        row[index[merged]] = row[index[merged]] + (
                            rel[i] if sign > 0 else -rel[i]
                        )
                        nontrivial = True
                    if nontrivial:
                        rows.append(row)
        super().__init__(group, m, len(subsets), RMatrix(group, m, rows, len(subsets)))
        self.host = host
        self.r = r
        self.subsets = tuple(subsets)
        self.subset_index = index

    def __hash__(self):
        return hash((super().__hash__(), self.host, self.r))

    def __eq__(self, other):
        return (
            isinstance(other, ExteriorModule)
            and super().__eq__(other)
            and self.host == other.host
            and self.r == other.r
        )

    def wedge(self, xs) -> tuple:
        """Alternating product of r host elements, in wedge coordinates."""
        xs = [self.host.element(x) for x in xs]
        if len(xs) != self.r:
            raise ShapeMismatch(f"wedge needs exactly {self.r} factors")
        coords = []
        for S in self.subsets:
            if self.r == 0:
                coords.append(GroupRingElem.one(self.group, self.m))
                continue
            coords.append(rdet([[x[j] for j in S] for x in xs]))
        return self.canon(tuple(coords))


@lru_cache(maxsize=None)
def exterior_power(X: FPModule, r: int) -> ExteriorModule:
    return ExteriorModule(X, r)


def contraction(Xstar: HomModule, phi, r: int) -> ModuleHom:
    """The degree-lowering map of a functional: on wedge monomials,
    x_1∧…∧x_r to the signed sum of phi(x_i) times the omitted wedges."""
    if r < 1:
        raise ValueError("contraction needs degree at least 1")
    X = Xstar.hom_src
    phi_mat = Xstar.as_matrix(phi)
    high = exterior_power(X, r)
    low = exterior_power(X, r - 1)
    zero = GroupRingElem.zero(X.group, X.m)
    rows = []
    for S in high.subsets:
        row = [zero] * low.ngens
        for pos, i in enumerate(S):
            val = phi_mat.rows[i][0]
            if val.is_zero:
                continue
            rest = tuple(j for j in S if j != i)
            term = val if pos % 2 == 0 else -val
            idx = low.subset_index[rest]
            row[idx] = row[idx] + term
        rows.append(row)
    return ModuleHom(high, low, RMatrix(X.group, X.m, rows, low.ngens))


def wedge_dual_apply(X: FPModule, Phi, a, r: int, s: int) -> tuple:
    """Pair a wedge of r functionals against a degree-s wedge: the shuffle
    sum of minor determinants times the complementary wedges; an element of
    the degree-(s-r) exterior power."""
    if r > s:
        raise ShapeMismatch("cannot pair a longer wedge of functionals")
    Xstar = dual(X)
    ext_dual = exterior_power(Xstar, r)
    high = exterior_power(X, s)
    low = exterior_power(X, s - r)
    Phi = ext_dual.element(Phi)
    a = high.element(a)
    # values of dual generators on host generators
    pair = [
        [Xstar.as_matrix(Xstar.gen(t)).rows[i][0] for i in range(X.ngens)]
        for t in range(Xstar.ngens)
    ]
    zero = GroupRingElem.zero(X.group, X.m)
    out = [zero] * low.ngens
    for Tidx, T in enumerate(ext_dual.subsets):
        cT = Phi[Tidx]
        if cT.is_zero:
            continue
        for Sidx, S in enumerate(high.subsets):
            aS = a[Sidx]
            if aS.is_zero:
                continue
            for U in combinations(S, r):
                det = rdet([[pair[t][u] for u in U] for t in T]) if r else GroupRingElem.one(X.group, X.m)
                if det.is_zero:
                    continue
                sign = _subset_sign(U, S)
                rest = tuple(j for j in S if j not in U)
                term = cT * aS * det
                idx = low.subset_index[rest]
                out[idx] = out[idx] + (term if sign > 0 else -term)
    return low.canon(tuple(out))


# ---------------------------------------------------------------------------
# biduals
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def bidual(X: FPModule, r: int) -> HomModule:
    """The r-th exterior bidual: the dual of the r-th exterior power of the
    dual."""
    return dual(exterior_power(dual(X), r))


class BidualElement:
    """Element of the r-th exterior bidual of ``host``: a functional on the
    r-th exterior power of the dual, stored by its coordinates."""

    def __init__(self, host: FPModule, degree: int, coords):
        self.host = host
        self.degree = degree
        self.coords = bidual(host, degree).element(coords)

    def __repr__(self):
        return f"BidualElement(degree={self.degree})"

    @property
    def module(self) -> HomModule:
        return bidual(self.host, self.degree)

    def evaluate(self, Phi) -> GroupRingElem:
        """Value on an element of the exterior power of the dual."""
        return self.module.evaluate(self.coords, Phi)[0]

    def gen_values(self) -> tuple:
        ext = exterior_power(dual(self.host), self.degree)
        return tuple(self.evaluate(ext.gen(t)) for t in range(ext.ngens))

    def __eq__(self, other):
        return (
            isinstance(other, BidualElement)
            and self.host == other.host
            and self.degree == other.degree
            and self.module.eq(self.coords, other.coords)
        )


def xi(X: FPModule, r: int) -> ModuleHom:
    """Canonical map from the exterior power to the exterior bidual, sending
    a to the functional evaluating wedges of functionals at a."""
    Xstar = dual(X)
    ext = exterior_power(X, r)
    ext_dual = exterior_power(Xstar, r)
    target = bidual(X, r)
    pair = [
        [Xstar.as_matrix(Xstar.gen(t)).rows[i][0] for i in range(X.ngens)]
        for t in range(Xstar.ngens)
    ]
    rows = []
    for S in ext.subsets:
        # functional on ext_dual: value at wedge T is det(phi_T_i(e_S_j))
        vals = []
        for T in ext_dual.subsets:
            det = (
                rdet([[pair[t][s] for s in S] for t in T])
                if r
                else GroupRingElem.one(X.group, X.m)
            )
            vals.append([det])
        mat = RMatrix(X.group, X.m, vals, 1)
        coords = target.coords_of_matrix(mat)
        if coords is None:
            raise AssertionError("evaluation functional escapes the bidual lattice")
        rows.append(list(coords))
    return ModuleHom(ext, target, RMatrix(X.group, X.m, rows, target.ngens))


def bidual_element(X: FPModule, r: int, coords) -> BidualElement:
    return BidualElement(X, r, bidual(X, r).element(coords))


def xi_image(X: FPModule, r: int, a) -> BidualElement:
    """The bidual element attached to a wedge element."""
    return BidualElement(X, r, xi(X, r).apply(a))


def bidual_contract(X: FPModule, Phi, r: int, s: int) -> ModuleHom:
    """Degree-lowering map on biduals dual to wedging with Phi: composes a
    degree-s functional with the map (Psi maps to Phi wedge Psi)."""
    if r > s:
        raise ShapeMismatch("cannot contract by a longer wedge")
    Xstar = dual(X)
    ext_r = exterior_power(Xstar, r)
    ext_low = exterior_power(Xstar, s - r)
    ext_s = exterior_power(Xstar, s)
    Phi = ext_r.element(Phi)
    zero = GroupRingElem.zero(X.group, X.m)
    rows = []
    for U in ext_low.subsets:
        row = [zero] * ext_s.ngens
        for Tidx, T in enumerate(ext_r.subsets):
            c = Phi[Tidx]
            if c.is_zero:
                continue
            sign, merged = _wedge_sign(T, U)
            if sign == 0:
                continue
            idx = ext_s.subset_index[merged]
            row[idx] = row[idx] + (c if sign > 0 else -c)
        rows.append(row)
    wedge_map = ModuleHom(ext_low, ext_s, RMatrix(X.group, X.m, rows, ext_s.ngens))
    src = bidual(X, s)
    tgt = bidual(X, s - r)
    out_rows = []
    for i in range(src.ngens):
        composed = wedge_map.mat * src.as_matrix(src.gen(i))
        coords = tgt.coords_of_matrix(composed)
        if coords is None:
            raise AssertionError("contracted functional escapes the bidual lattice")
        out_rows.append(list(coords))
    return ModuleHom(src, tgt, RMatrix(X.group, X.m, out_rows, tgt.ngens))


def dual_restriction(inc: ModuleHom) -> ModuleHom:
    """The restriction map on duals induced by an inclusion."""
    Ystar = dual(inc.tgt)
    Xstar = dual(inc.src)
    rows = []
    for t in range(Ystar.ngens):
        mat = inc.mat * Ystar.as_matrix(Ystar.gen(t))
        coords = Xstar.coords_of_matrix(mat)
        if coords is None:
            raise AssertionError("restricted functional escapes the dual lattice")
        rows.append(list(coords))
    return ModuleHom(Ystar, Xstar, RMatrix(inc.src.group, inc.src.m, rows, Xstar.ngens))


def bidual_inclusion(inc: ModuleHom, r: int) -> ModuleHom:
    """The injective map on exterior biduals induced by an inclusion whose
    dual restriction is surjective; raises NonSurjectiveDual otherwise."""
    res = dual_restriction(inc)
    if not res.is_surjective():
        raise NonSurjectiveDual(
            "the dual restriction is not surjective; the induced bidual map "
            "is not available for this inclusion"
        )
    X, Y = inc.src, inc.tgt
    ext_res_rows = []
    ext_y = exterior_power(dual(Y), r)
    ext_x = exterior_power(dual(X), r)
    for T in ext_y.subsets:
        img = ext_x.wedge([res.apply(dual(Y).gen(t)) for t in T]) if r else ext_x.canon(
            (GroupRingElem.one(X.group, X.m),)
        )
        ext_res_rows.append(list(img))
    ext_res = ModuleHom(ext_y, ext_x, RMatrix(X.group, X.m, ext_res_rows, ext_x.ngens))
    src = bidual(X, r)
    tgt = bidual(Y, r)
    rows = []
    for i in range(src.ngens):
        composed = ext_res.mat * src.as_matrix(src.gen(i))
        coords = tgt.coords_of_matrix(composed)
        if coords is None:
            raise AssertionError("functional escapes the bidual lattice")
        rows.append(list(coords))
    return ModuleHom(src, tgt, RMatrix(X.group, X.m, rows, tgt.ngens))


def intersection_kernel(Y: FPModule, phis) -> tuple[FPModule, ModuleHom]:
    """The joint kernel of a family of functionals, as a submodule."""
    Ystar = dual(Y)
    phis = [Ystar.element(p) for p in phis]
    if not phis:
        return Y, ModuleHom.identity(Y)
    cols = [Ystar.as_matrix(p) for p in phis]
    rows = [
        [cols[j].rows[i][0] for j in range(len(phis))] for i in range(Y.ngens)
    ]
    to_free = ModuleHom(Y, FPModule.free(Y.group, Y.m, len(phis)), RMatrix(Y.group, Y.m, rows, len(phis)))
    return to_free.kernel()


def bidual_restrict(Y: FPModule, phis, r: int) -> tuple[ModuleHom, ModuleHom, FPModule]:
    """Contract a degree-(r+s) bidual by the wedge of s functionals and
    corestrict onto the bidual of their joint kernel.  Returns the
    corestricted map, the bidual inclusion it factors through, and the
    kernel module."""
    s = len(phis)
    if s == 0:
        B = bidual(Y, r)
        ident = ModuleHom.identity(B)
        return ident, ident, Y
    Ystar = dual(Y)
    ext_s = exterior_power(Ystar, s)
    Phi = ext_s.wedge([Ystar.element(p) for p in phis])
    theta = bidual_contract(Y, Phi, s, r + s)
    X, inc = intersection_kernel(Y, phis)
    binc = bidual_inclusion(inc, r)
    rows = []
    for i in range(theta.src.ngens):
        img = theta.apply(theta.src.gen(i))
        pre = binc.preimage(img)
        if pre is None:
            raise AssertionError("contracted image escapes the kernel's bidual")
        rows.append(list(pre))
    core = ModuleHom(theta.src, binc.src, RMatrix(Y.group, Y.m, rows, binc.src.ngens))
    return core, binc, X


# ---------------------------------------------------------------------------
# subgroup invariants
# ---------------------------------------------------------------------------


def _rep_read(group: FinAbGroup, qgroup: FinAbGroup, kill_axes, x: GroupRingElem) -> GroupRingElem:
    """Read an H-invariant ring element on coset representatives: the
    coefficients at exponent tuples whose killed axes vanish."""
    coeffs = {}
    for g, v in x.coeffs.items():
        if any(g[i] for i in kill_axes):
            continue
        key = tuple(e for i, e in enumerate(g) if i not in kill_axes)
        coeffs[key] = v
    return GroupRingElem(qgroup, x.m, coeffs)


def _rep_lift(group: FinAbGroup, kill_axes, x: GroupRingElem, m) -> GroupRingElem:
    """Lift a quotient-ring element along the coset-representative section."""
    coeffs = {}
    npos = len(group.orders)
    for g, v in x.coeffs.items():
        e = []
        src = iter(g)
        for i in range(npos):
            e.append(0 if i in kill_axes else next(src))
        coeffs[tuple(e)] = v
    return GroupRingElem(group, m, coeffs)


class InvariantsIdentification:
    """Mutually inverse maps between the H-invariants of an exterior bidual
    and the exterior bidual of the H-invariants over the quotient ring,
    for H a product of labeled factors acting on a free module."""

    def __init__(self, X: FPModule, labels, r: int):
        group, m = X.group, X.m
        if not X.is_free:
            raise CapExceeded(
                "subgroup-invariant identification is implemented for free modules"
            )
        labels = tuple(labels)
        for lab in labels:
            group.axis(lab)
        self.kill_axes = tuple(group.axis(lab) for lab in labels)
        q_orders = tuple(c for i, c in enumerate(group.orders) if i not in self.kill_axes)
        q_labels = tuple(
            lab for i, lab in enumerate(group.labels) if i not in self.kill_axes
        )
        self.group, self.m, self.labels, self.r = group, m, labels, r
        self.qgroup = FinAbGroup(q_orders, q_labels)
        self.X = X
        self.Xq = FPModule.free(self.qgroup, m, X.ngens)
        self.src = bidual(X, r)  # standard: coordinates over wedge subsets
        self.tgt = bidual(self.Xq, r)
        self.norm = norm_element(
            group, m, gens=[group.generator(lab) for lab in labels]
        )

    def is_invariant(self, h) -> bool:
        h = self.src.element(h)
        for lab in self.labels:
            sig = GroupRingElem.monomial(self.group, self.m, self.group.generator(lab))
            one = GroupRingElem.one(self.group, self.m)
            moved = tuple((sig - one) * c for c in h)
            if not self.src.is_zero_elem(moved):
                return False
        return True

    def forward(self, h) -> tuple:
        """Coefficients on coset representatives of an invariant element."""
        h = self.src.element(h)
        if not self.is_invariant(h):
            raise ValueError("element is not fixed by the subgroup")
        out = []
        for c in h:
            out.append(_rep_read(self.group, self.qgroup, self.kill_axes, c))
        return self.tgt.element(out)

    def backward(self, hq) -> tuple:
        """Norm times the coset-representative lift."""
        hq = self.tgt.element(hq)
        return self.src.element(
            [self.norm * _rep_lift(self.group, self.kill_axes, c, self.m) for c in hq]
        )

    def verify(self) -> bool:
        """Both composites are the identity on generators (the backward
        followed by forward needs the full norm sum to collapse)."""
        for t in range(self.tgt.ngens):
            gq = self.tgt.gen(t)
            if not self.tgt.eq(self.forward(self.backward(gq)), gq):
                return False
        # forward∘backward on the invariant submodule: check on norm multiples
        for t in range(self.src.ngens):
            h = tuple(self.norm * c for c in self.src.gen(t))
            if not self.src.eq(self.backward(self.forward(h)), h):
                return False
        return True


def invariants_identify(X: FPModule, labels, r: int) -> InvariantsIdentification:
    """Identification between invariants of the bidual and the bidual of the
    invariants for a product of labeled factors."""
    return InvariantsIdentification(X, labels, r)


def image_ideal(F: BidualElement):
    """The ideal of values of a bidual element on the generators of the
    exterior power of the dual."""
    from .fitting import Ideal

    return Ideal(F.host.group, F.host.m, F.gen_values())
