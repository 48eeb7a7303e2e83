"""Ideals of a finite group ring: Fitting ideals of presented modules,
annihilators, and relative Fitting ideals by submodule enumeration.

An ideal is stored by a finite generator list; membership and equality go
through the Howell form of the flattened span of all group translates of
the generators, so every ideal question is decided exactly.
"""

from __future__ import annotations

from itertools import combinations, product as _iproduct

from .errors import CapExceeded
from .zlin import ZmMatrix, howell, kernel as zm_kernel, span_contains, span_equal
from .grouprings import FinAbGroup, GroupRingElem, RMatrix, flatten_vec, unflatten_vec
from .modalg import FPModule, _prune_to_r_generators, rdet, submodule

__all__ = [
    "Ideal",
    "fitting_ideal",
    "annihilator",
    "relative_fitting",
]

_MINOR_CAP = 8
_ENUM_CAP_DEFAULT = 3**10


class Ideal:
    """Finitely generated ideal of (Z/m)[G]."""

    def __init__(self, group: FinAbGroup, m: int, gens):
        self.group = group
        self.m = m
        seen = []
        for g in gens:
            if g.group != group or g.m != m:
                raise ValueError("generator from a different ring")
            if not g.is_zero and g not in seen:
                seen.append(g)
        self.gens = tuple(seen)
        self._hf = None

    @classmethod
    def zero(cls, group, m):
        return cls(group, m, [])

    @classmethod
    def unit(cls, group, m):
        return cls(group, m, [GroupRingElem.one(group, m)])

    @classmethod
    def principal(cls, x: GroupRingElem):
        return cls(x.group, x.m, [x])

    def span_form(self):
        if self._hf is None:
            rows = []
            for g in self.gens:
                for h in self.group.elements():
                    rows.append(list(flatten_vec([g.translate(h)])))
            self._hf = howell(ZmMatrix(self.m, rows, self.group.order))
        return self._hf

    def contains(self, x: GroupRingElem) -> bool:
        if x.group != self.group or x.m != self.m:
            raise ValueError("element from a different ring")
        return span_contains(self.span_form(), list(flatten_vec([x])))

    def __le__(self, other: "Ideal") -> bool:
        return all(other.contains(g) for g in self.gens)

    def __eq__(self, other):
        if not isinstance(other, Ideal):
            return NotImplemented
        if self.group != other.group or self.m != other.m:
            return False
        return span_equal(self.span_form().matrix, other.span_form().matrix)

    def __hash__(self):
        hf = self.span_form()
        return hash((self.group, self.m, tuple(tuple(r) for r in hf.matrix.rows)))

    def __add__(self, other: "Ideal") -> "Ideal":
        if self.group != other.group or self.m != other.m:
            raise ValueError("ideals over different rings")
        return Ideal(self.group, self.m, self.gens + other.gens)

    def __mul__(self, other: "Ideal") -> "Ideal":
        if self.group != other.group or self.m != other.m:
            raise ValueError("ideals over different rings")
        return Ideal(self.group, self.m, [a * b for a in self.gens for b in other.gens])

    @property
    def is_zero(self) -> bool:
        return not self.gens

    @property
    def is_unit(self) -> bool:
        return self.contains(GroupRingElem.one(self.group, self.m))

    def cardinality(self) -> int:
        hf = self.span_form()
        size = 1
        for row, j in zip(hf.matrix.rows, hf.pivots):
            size *= self.m // row[j]
        return size

    def __repr__(self):
        return f"Ideal({len(self.gens)} gens over |G|={self.group.order}, m={self.m})"


def _pruned_relation_rows(X: FPModule):
    """A small set of relation rows with the same row span."""
    if X.is_free:
        return []
    flat = [list(flatten_vec(list(r))) for r in X.rels.rows]
    pruned = _prune_to_r_generators(X.group, X.m, flat, X.flat_dim)
    return [list(unflatten_vec(X.group, X.m, v)) for v in pruned]


def fitting_ideal(X: FPModule, i: int = 0) -> Ideal:
    """The i-th Fitting ideal: the ideal of (g - i)-minors of the relation
    matrix, the unit ideal for i >= g, and zero when too few relations."""
    if i < 0:
        raise ValueError("Fitting index must be nonnegative")
    g = X.ngens
    k = g - i
    if k <= 0:
        return Ideal.unit(X.group, X.m)
    rows = _pruned_relation_rows(X)
    if len(rows) < k:
        return Ideal.zero(X.group, X.m)
    if g > _MINOR_CAP or len(rows) > _MINOR_CAP:
        raise CapExceeded(
            f"minor enumeration on a {len(rows)}x{g} relation matrix exceeds "
            f"the {_MINOR_CAP}x{_MINOR_CAP} cap"
        )
    gens = []
    for rsel in combinations(range(len(rows)), k):
        for csel in combinations(range(g), k):
            gens.append(rdet([[rows[a][b] for b in csel] for a in rsel]))
    return Ideal(X.group, X.m, gens)


def _annihilator_of_ideal(J: Ideal) -> Ideal:
    group, m = J.group, J.m
    if not J.gens:
        return Ideal.unit(group, m)
    n = group.order
    rows = []
    for g in group.elements():
        mono = GroupRingElem.monomial(group, m, g)
        row = []
        for gen in J.gens:
            row.extend(flatten_vec([mono * gen]))
        rows.append(row)
    ker = zm_kernel(ZmMatrix(m, rows, n * len(J.gens)))
    flat = [list(r) for r in ker.rows if any(r)]
    pruned = _prune_to_r_generators(group, m, flat, n)
    return Ideal(group, m, [unflatten_vec(group, m, v)[0] for v in pruned])


def _annihilator_of_module(X: FPModule) -> Ideal:
    group, m = X.group, X.m
    if X.ngens == 0:
        return Ideal.unit(group, m)
    n = group.order
    width = X.ngens * X.flat_dim
    rows = []
    for g in group.elements():
        mono = GroupRingElem.monomial(group, m, g)
        row = []
        for t in range(X.ngens):
            row.extend(flatten_vec(vec_scale_at(X, mono, t)))
        rows.append(row)
    n_r = len(rows)
    if not X.is_free:
        rel_flat = [list(r) for r in X.rels.flatten().rows]
        zero = [0] * X.flat_dim
        for t in range(X.ngens):
            for rel in rel_flat:
                rows.append(zero * t + rel + zero * (X.ngens - 1 - t))
    ker = zm_kernel(ZmMatrix(m, rows, width))
    flat = [list(r[:n]) for r in ker.rows if any(r[:n])]
    pruned = _prune_to_r_generators(group, m, flat, n)
    return Ideal(group, m, [unflatten_vec(group, m, v)[0] for v in pruned])


def vec_scale_at(X: FPModule, r: GroupRingElem, t: int):
    zero = GroupRingElem.zero(X.group, X.m)
    return [r if j == t else zero for j in range(X.ngens)]


def annihilator(target) -> Ideal:
    """Elements killing every generator of an ideal or every element of a
    presented module."""
    if isinstance(target, Ideal):
        return _annihilator_of_ideal(target)
    if isinstance(target, FPModule):
        return _annihilator_of_module(target)
    raise TypeError("annihilator expects an Ideal or FPModule")


def relative_fitting(X: FPModule, y_gens, i: int, cap: int = _ENUM_CAP_DEFAULT) -> Ideal:
    """Ideal generated by the initial Fitting ideals of X/Z over all
    submodules Z of <y_gens> generated by i elements, by full enumeration."""
    if i < 0:
        raise ValueError("the generator count must be nonnegative")
    if i == 0:
        return fitting_ideal(X, 0)
    Y, incl = submodule(X, [X.element(y) for y in y_gens])
    size = Y.cardinality()
    needed = size**i
    if needed > cap:
        raise CapExceeded(
            f"relative Fitting enumeration needs {needed} tuples "
            f"(cap {cap}); shrink the submodule or the generator count"
        )
    y_elements = [incl.apply(e) for e in Y.elements(cap=cap)]
    gens = []
    for tup in _iproduct(y_elements, repeat=i):
        rel_rows = [list(r) for r in X.rels.rows] + [list(z) for z in tup]
        quotient = FPModule(X.group, X.m, X.ngens, RMatrix(X.group, X.m, rel_rows, X.ngens))
        gens.extend(fitting_ideal(quotient, 0).gens)
    return Ideal(X.group, X.m, gens)
