"""Compatible families of exterior-bidual classes over a synthetic datum.

Three layers live here:

* **families** — :class:`StarkSystem` (degree ``r + ν(n)`` classes on the
  level submodules, compatible under signed transition maps),
  :class:`KolyvaginCollection` and its flavours (degree-``r`` classes over
  the base ring), and :class:`EulerCollection` (classes over the layer
  group rings of a tower);
* **operations** — the signed transition maps ``v_transition``, the module
  of all compatible families (``stark_module``), level projections of
  determinant families (``stark_from_horizontal``, ``euler_from_tower``),
  the wedge-contraction regulator, the derivative operator, and the
  triangular change of basis ``psi`` / ``psi_inv`` between derived and
  genuine systems;
* **checks** — executable verdicts for the structural identities relating
  all of the above, packaged into serializable :class:`Report` objects.
"""

from dataclasses import dataclass
from itertools import permutations, product
import random
import time

from .errors import (
    CapExceeded,
    DatumNotRegular,
    EqualityFailure,
    IncompatibleFamily,
    MembershipFailure,
    NormRelationFailure,
    NotDKS,
    NotInvariant,
    NotKS,
    ShapeMismatch,
    TowerMismatch,
)
from .grouprings import (
    FinAbGroup,
    GroupRingElem,
    RMatrix,
    _prime_of,
    graded_piece,
    kolyvagin_derivative,
    ring_projection,
    s_operator,
)
from .modalg import (
    FPModule,
    ModuleHom,
    bidual,
    bidual_contract,
    bidual_element,
    bidual_inclusion,
    bidual_restrict,
    dual,
    exterior_power,
    image_ideal,
    invariants_identify,
    rdet,
    xi,
)
from .fitting import Ideal, fitting_ideal, relative_fitting
from .complexes import DetElement, ev_ideal, pi_raw
from .selmer_sim import (
    SelmerDatum,
    TowerDatum,
    _encode_elem,
    euler_element,
    functional_coords,
    i1_components,
    is_regular,
    level_complex,
    level_rep,
    relaxed_module,
    sha_module,
    strict_module,
)

__all__ = [
    "StarkSystem",
    "KolyvaginCollection",
    "KolyvaginSystem",
    "DerivedKS",
    "EulerCollection",
    "StarkStructure",
    "Verdict",
    "CheckResult",
    "Report",
    "level_sign",
    "v_transition",
    "stark_module",
    "stark_from_horizontal",
    "horizontal_family",
    "vertical_family",
    "regulator",
    "is_kolyvagin",
    "is_dks",
    "psi",
    "psi_inv",
    "us_to_dks",
    "bockstein_map",
    "euler_from_tower",
    "derived_classes",
    "derivative_system",
    "check_mrs",
    "check_commutative",
    "check_main",
    "check_fitting_theorems",
    "check_appendix",
    "random_element",
    "random_unit",
]


# ---------------------------------------------------------------------------
# cached per-datum building blocks
# ---------------------------------------------------------------------------


def _sub(datum: SelmerDatum, n, strict: bool = False):
    return (strict_module if strict else relaxed_module)(datum, n)


def _binc(datum: SelmerDatum, n, deg: int, strict: bool = False) -> ModuleHom:
    """Bidual inclusion of the level submodule into the master module."""
    n = datum.level_key(n)
    key = ("binc", n, deg, strict)
    if key not in datum._cache:
        _, inc = _sub(datum, n, strict)
        datum._cache[key] = bidual_inclusion(inc, deg)
    return datum._cache[key]


def _ambient(datum: SelmerDatum, deg: int) -> FPModule:
    return bidual(datum.host, deg)


def _dual_functional(datum: SelmerDatum, kind: str, q: str) -> tuple:
    key = ("dualfn", kind, q)
    if key not in datum._cache:
        datum._cache[key] = functional_coords(datum.host, datum.functional(kind, q))
    return datum._cache[key]


def _contract(datum: SelmerDatum, funcs, srcdeg: int) -> ModuleHom:
    """Contraction of the degree-``srcdeg`` ambient bidual from the left by
    the wedge of the named functionals, in the listed order."""
    funcs = tuple(funcs)
    key = ("contract", funcs, srcdeg)
    if key not in datum._cache:
        if not funcs:
            datum._cache[key] = ModuleHom.identity(_ambient(datum, srcdeg))
        else:
            Xstar = dual(datum.host)
            ext = exterior_power(Xstar, len(funcs))
            Phi = ext.wedge(
                [Xstar.element(_dual_functional(datum, k, q)) for k, q in funcs]
            )
            datum._cache[key] = bidual_contract(
                datum.host, Phi, len(funcs), srcdeg
            )
    return datum._cache[key]


def _amb_eq(datum: SelmerDatum, deg: int, x, y) -> bool:
    return _ambient(datum, deg).eq(x, y)


def level_sign(datum: SelmerDatum, m, n) -> int:
    """Sign of the permutation sending (removed primes, kept primes) — each
    block in the fixed prime order — to the primes of ``m`` in order."""
    m = datum.level_key(m)
    n = datum.level_key(n)
    seq = [q for q in m if q not in n] + [q for q in m if q in n]
    perm = [m.index(q) for q in seq]
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def random_element(group: FinAbGroup, m: int, rng: random.Random, terms: int = 3):
    """Seeded random group-ring element with a few monomial terms."""
    x = GroupRingElem.zero(group, m)
    for _ in range(terms):
        exps = tuple(rng.randrange(c) for c in group.orders)
        x = x + GroupRingElem.monomial(group, m, exps, rng.randrange(m))
    return x


def random_unit(group: FinAbGroup, m: int, rng: random.Random, terms: int = 3):
    """Seeded random unit: a random element whose augmentation is made
    coprime to the residue characteristic."""
    p = _prime_of(m)
    x = random_element(group, m, rng, terms)
    while x.augmentation() % p == 0:
        x = x + GroupRingElem.one(group, m)
    return x


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


class StarkSystem:
    """Association ``n ↦`` degree-``r+ν(n)`` bidual class of the level-``n``
    submodule, expected to be compatible under the transition maps."""

    def __init__(self, datum: SelmerDatum, values: dict):
        self.datum = datum
        self.values = {}
        for n in datum.levels():
            if n not in {datum.level_key(k) for k in values}:
                raise ValueError(f"missing level {n} in the family")
        for k, v in values.items():
            n = datum.level_key(k)
            sub, _ = _sub(datum, n)
            B = bidual(sub, datum.rank + len(n))
            self.values[n] = B.element(v)
        self._ambient = {}

    def value(self, n) -> tuple:
        return self.values[self.datum.level_key(n)]

    def ambient(self, n) -> tuple:
        """The class pushed into the bidual of the master module."""
        n = self.datum.level_key(n)
        if n not in self._ambient:
            deg = self.datum.rank + len(n)
            self._ambient[n] = _binc(self.datum, n, deg).apply(self.values[n])
        return self._ambient[n]

    def scale(self, a) -> "StarkSystem":
        if isinstance(a, int):
            a = self.datum.scalar(a)
        return StarkSystem(
            self.datum, {n: tuple(a * x for x in v) for n, v in self.values.items()}
        )

    def __eq__(self, other):
        if not isinstance(other, StarkSystem) or self.datum != other.datum:
            return NotImplemented
        for n in self.datum.levels():
            sub, _ = _sub(self.datum, n)
            B = bidual(sub, self.datum.rank + len(n))
            if not B.eq(self.values[n], other.values[n]):
                return False
        return True

    def __repr__(self):
        return f"StarkSystem(levels={len(self.values)})"


class KolyvaginCollection:
    """Association ``n ↦`` degree-``r`` class of the master module (stored in
    ambient coordinates; level memberships are checked by the verdicts)."""

    kind = "collection"

    def __init__(self, datum: SelmerDatum, values: dict):
        self.datum = datum
        B = _ambient(datum, datum.rank)
        self.values = {}
        for n in datum.levels():
            if n not in {datum.level_key(k) for k in values}:
                raise ValueError(f"missing level {n} in the collection")
        for k, v in values.items():
            self.values[datum.level_key(k)] = B.element(v)

    def value(self, n) -> tuple:
        return self.values[self.datum.level_key(n)]

    def scale(self, a):
        if isinstance(a, int):
            a = self.datum.scalar(a)
        return type(self)(
            self.datum, {n: tuple(a * x for x in v) for n, v in self.values.items()}
        )

    def __eq__(self, other):
        if not isinstance(other, KolyvaginCollection) or self.datum != other.datum:
            return NotImplemented
        r = self.datum.rank
        return all(
            _amb_eq(self.datum, r, self.values[n], other.values[n])
            for n in self.datum.levels()
        )

    def __repr__(self):
        return f"{type(self).__name__}(levels={len(self.values)})"


class KolyvaginSystem(KolyvaginCollection):
    kind = "kolyvagin"


class DerivedKS(KolyvaginCollection):
    kind = "derived"


class EulerCollection:
    """Association ``n ↦`` degree-``r`` class over the layer group ring of a
    tower, satisfying the norm relations checked at construction time."""

    def __init__(self, tower: TowerDatum, values: dict):
        self.tower = tower
        self.datum = tower.datum
        self.values = {
            self.datum.level_key(k): tuple(v) for k, v in values.items()
        }

    def value(self, n) -> tuple:
        return self.values[self.datum.level_key(n)]

    def __repr__(self):
        return f"EulerCollection(levels={len(self.values)})"


@dataclass
class StarkStructure:
    """Structure report for the module of all compatible families."""

    datum: SelmerDatum
    rank: int
    free_rank_one: bool
    fitting_ladder: list
    basis: list
    module: FPModule


@dataclass
class Verdict:
    ok: bool
    reason: str = ""
    witness: dict | None = None

    def __bool__(self):
        return self.ok


# ---------------------------------------------------------------------------
# transition maps and the module of compatible families
# ---------------------------------------------------------------------------


def v_transition(datum: SelmerDatum, m, n) -> ModuleHom:
    """Signed left contraction by the wedge of the ``v_q`` for the removed
    primes, corestricted from the level-``m`` bidual to the level-``n`` one."""
    m = datum.level_key(m)
    n = datum.level_key(n)
    if not set(n) <= set(m):
        raise ShapeMismatch(f"level {n} does not divide level {m}")
    key = ("vtrans", m, n)
    if key in datum._cache:
        return datum._cache[key]
    r = datum.rank
    sub_m, inc_m = _sub(datum, m)
    SB_m = bidual(sub_m, r + len(m))
    if m == n:
        hom = ModuleHom.identity(SB_m)
        datum._cache[key] = hom
        return hom
    removed = [q for q in m if q not in n]
    phis = []
    for q in removed:
        vals = [
            datum.apply_functional(datum.v[q], inc_m.apply(sub_m.gen(t)))
            for t in range(sub_m.ngens)
        ]
        phis.append(functional_coords(sub_m, vals))
    deg_n = r + len(n)
    core, binc_x, _ = bidual_restrict(sub_m, phis, deg_n)
    binc_m = _binc(datum, m, deg_n)
    binc_n = _binc(datum, n, deg_n)
    sign = level_sign(datum, m, n)
    sub_n, _ = _sub(datum, n)
    SB_n = bidual(sub_n, deg_n)
    rows = []
    for t in range(SB_m.ngens):
        y = core.apply(SB_m.gen(t))
        amb = binc_m.apply(binc_x.apply(y))
        pre = binc_n.preimage(amb)
        assert pre is not None, "transition image escapes the target level"
        rows.append([sign * x for x in pre])
    hom = ModuleHom(SB_m, SB_n, RMatrix(datum.group, datum.m, rows, SB_n.ngens))
    datum._cache[key] = hom
    return hom


def _strict_pairs(datum: SelmerDatum):
    levels = datum.levels()
    for m in levels:
        for n in levels:
            if n != m and set(n) < set(m):
                yield m, n


def stark_module(datum: SelmerDatum, r: int) -> StarkStructure:
    """The module of all transition-compatible families, parametrized by the
    top level: functoriality of the transition maps (checked on all chains)
    makes ``family ↦ top value`` a bijection onto the top-level bidual."""
    if r < 1:
        raise ValueError("the systems layer requires rank at least one")
    if r != datum.rank:
        raise ValueError(
            f"the datum carries rank {datum.rank}, not {r}"
        )
    key = ("stark", r)
    if key in datum._cache:
        return datum._cache[key]
    levels = datum.levels()
    top = levels[-1]
    trans = {(m, n): v_transition(datum, m, n) for m, n in _strict_pairs(datum)}
    # functoriality on all chains n < m < m'
    for mm, m in _strict_pairs(datum):
        for n in levels:
            if set(n) < set(m):
                lhs = trans[(mm, m)].then(trans[(m, n)])
                rhs = trans[(mm, n)]
                sub_n, _ = _sub(datum, n)
                SB_n = bidual(sub_n, r + len(n))
                for t in range(lhs.src.ngens):
                    assert SB_n.eq(
                        lhs.mat.rows[t], rhs.mat.rows[t]
                    ), "transition maps fail to compose"
    K = bidual(datum.host, r + datum.nprimes)
    ladder = [fitting_ideal(K, i) for i in range(K.ngens + 1)]
    free_rank_one = K.ngens >= 1 and ladder[0].is_zero and ladder[1].is_unit
    basis = []
    for t in range(K.ngens):
        values = {top: K.gen(t)}
        for n in levels:
            if n != top:
                values[n] = trans[(top, n)].apply(K.gen(t))
        fam = StarkSystem(datum, values)
        for m, n in _strict_pairs(datum):
            sub_n, _ = _sub(datum, n)
            SB_n = bidual(sub_n, r + len(n))
            assert SB_n.eq(
                trans[(m, n)].apply(fam.value(m)), fam.value(n)
            ), "basis family fails a transition"
        basis.append(fam)
    structure = StarkStructure(
        datum=datum,
        rank=r,
        free_rank_one=free_rank_one,
        fitting_ladder=ladder,
        basis=basis,
        module=K,
    )
    datum._cache[key] = structure
    return structure


# ---------------------------------------------------------------------------
# determinant families and their level projections
# ---------------------------------------------------------------------------


def horizontal_family(datum: SelmerDatum, coeff) -> dict:
    """The level family of determinant elements with one common coefficient
    on all the level complexes over the base ring."""
    if isinstance(coeff, int):
        coeff = datum.scalar(coeff)
    return {
        n: DetElement(level_complex(datum, n), coeff) for n in datum.levels()
    }


def vertical_family(tower: TowerDatum, coeff) -> dict:
    """The level family on the lifted complexes given by pushing one
    top-level coefficient down through the coefficient projections."""
    datum = tower.datum
    top = datum.levels()[-1]
    if isinstance(coeff, int):
        coeff = GroupRingElem.one(tower.group(top), datum.m) * coeff
    return {
        n: DetElement(
            tower.complex(n), ring_projection(coeff, tower.group(n))
        )
        for n in datum.levels()
    }


def stark_from_horizontal(datum: SelmerDatum, dets: dict) -> StarkSystem:
    """Project a compatible family of determinant elements on the level
    complexes to a compatible family of bidual classes, levelwise."""
    if datum.h_rels:
        raise DatumNotRegular(
            "level complexes need a free master module"
        )
    dets = {datum.level_key(k): z for k, z in dets.items()}
    levels = datum.levels()
    for n in levels:
        if n not in dets:
            raise IncompatibleFamily({"missing": list(n)})
    coeff = dets[levels[0]].coeff
    values = {}
    for n in levels:
        z = dets[n]
        C = level_complex(datum, n)
        if z.complex != C:
            raise IncompatibleFamily({"n": list(n), "reason": "wrong complex"})
        if z.coeff != coeff:
            raise IncompatibleFamily({"n": list(n), "reason": "coefficient drift"})
        raw = pi_raw(level_rep(datum, n), z)
        pre = _binc(datum, n, datum.rank + len(n)).preimage(raw.coords)
        assert pre is not None, "level projection escapes the level submodule"
        values[n] = pre
    eps = StarkSystem(datum, values)
    for m, n in _strict_pairs(datum):
        sub_n, _ = _sub(datum, n)
        SB_n = bidual(sub_n, datum.rank + len(n))
        assert SB_n.eq(
            v_transition(datum, m, n).apply(eps.value(m)), eps.value(n)
        ), "projected family fails a transition"
    return eps


def euler_from_tower(tower: TowerDatum, dets: dict) -> EulerCollection:
    """Project a vertically compatible determinant family on the lifted
    complexes to classes over the layer group rings, and check the norm
    relation with the interaction scalar at every adjacent pair."""
    datum = tower.datum
    dets = {datum.level_key(k): z for k, z in dets.items()}
    levels = datum.levels()
    for n in levels:
        if n not in dets:
            raise IncompatibleFamily({"missing": list(n)})
    for n in levels:
        if dets[n].complex != tower.complex(n):
            raise IncompatibleFamily({"n": list(n), "reason": "wrong complex"})
        for q in n:
            down = datum.level_key(tuple(x for x in n if x != q))
            if ring_projection(dets[n].coeff, tower.group(down)) != dets[down].coeff:
                raise IncompatibleFamily(
                    {"n": list(n), "q": q, "reason": "coefficient drift"}
                )
    values = {n: pi_raw(tower.rep(n), dets[n]).coords for n in levels}
    for n in levels:
        for q in n:
            down = datum.level_key(tuple(x for x in n if x != q))
            G = tower.group(down)
            E = euler_element(datum, G, q, down)
            for j, w in enumerate(values[n]):
                if ring_projection(w, G) != E * values[down][j]:
                    raise NormRelationFailure(
                        {"n": list(n), "q": q, "coordinate": j}
                    )
    return EulerCollection(tower, values)


# ---------------------------------------------------------------------------
# regulator, membership verdicts, and the triangular shift
# ---------------------------------------------------------------------------


def regulator(eps: StarkSystem) -> KolyvaginSystem:
    """Contract each level class from the left by the wedge of the
    finite-singular functionals of its level, with sign ``(-1)^{ν(n)}``."""
    datum = eps.datum
    r = datum.rank
    values = {}
    for n in datum.levels():
        amb = eps.ambient(n)
        theta = _contract(datum, tuple(("phi", q) for q in n), r + len(n))
        val = theta.apply(amb)
        if len(n) % 2:
            val = tuple(-x for x in val)
        values[n] = val
    ks = KolyvaginSystem(datum, values)
    verdict = is_kolyvagin(ks)
    if not verdict.ok:
        raise NotKS(verdict.witness)
    return ks


def _membership(datum: SelmerDatum, n, coords, strict: bool) -> bool:
    return _binc(datum, n, datum.rank, strict).preimage(coords) is not None


def is_kolyvagin(col: KolyvaginCollection) -> Verdict:
    """Membership of each class in the strict level bidual, plus the
    finite-singular relation linking adjacent levels."""
    datum = col.datum
    r = datum.rank
    for n in datum.levels():
        if not _membership(datum, n, col.value(n), strict=True):
            return Verdict(False, "membership", {"n": list(n)})
    for n in datum.levels():
        for q in n:
            down = tuple(x for x in n if x != q)
            lhs = _contract(datum, (("v", q),), r).apply(col.value(n))
            rhs = _contract(datum, (("phi", q),), r).apply(col.value(down))
            if not _amb_eq(datum, r - 1, lhs, rhs):
                return Verdict(
                    False, "finite-singular relation", {"n": list(n), "q": q}
                )
    return Verdict(True)


def is_dks(col: KolyvaginCollection) -> Verdict:
    """Membership of each class in the relaxed level bidual, the
    finite-singular relations, and strict membership of the shifted family."""
    datum = col.datum
    r = datum.rank
    for n in datum.levels():
        if not _membership(datum, n, col.value(n), strict=False):
            return Verdict(False, "membership", {"n": list(n)})
    for n in datum.levels():
        for q in n:
            down = tuple(x for x in n if x != q)
            lhs = _contract(datum, (("v", q),), r).apply(col.value(n))
            rhs = _contract(datum, (("phi", q),), r).apply(col.value(down))
            if not _amb_eq(datum, r - 1, lhs, rhs):
                return Verdict(
                    False, "finite-singular relation", {"n": list(n), "q": q}
                )
    shifted = _psi_table(datum, col.values)
    for n in datum.levels():
        if not _membership(datum, n, shifted[n], strict=True):
            return Verdict(False, "shifted membership", {"n": list(n)})
    return Verdict(True)


def _perm_terms(datum: SelmerDatum, n):
    """Nonidentity permutation terms: (parity, cross scalar with the
    transposed convention, fixed-point level)."""
    nu = len(n)
    for tau in permutations(range(nu)):
        if all(tau[i] == i for i in range(nu)):
            continue
        sign = 1
        for i in range(nu):
            for j in range(i + 1, nu):
                if tau[i] > tau[j]:
                    sign = -sign
        scalar = 1
        for i in range(nu):
            if tau[i] != i:
                scalar = scalar * datum.cross[n[tau[i]]][n[i]] % datum.m
        d_tau = datum.level_key(tuple(n[i] for i in range(nu) if tau[i] == i))
        yield sign, scalar, d_tau


def _psi_table(datum: SelmerDatum, table: dict) -> dict:
    out = {}
    for n in datum.levels():
        acc = list(table[n])
        for sign, scalar, d_tau in _perm_terms(datum, n):
            if scalar == 0:
                continue
            c = sign * scalar % datum.m
            acc = [a + c * x for a, x in zip(acc, table[d_tau])]
        out[n] = tuple(acc)
    return out


def psi(col: KolyvaginCollection) -> KolyvaginSystem:
    """The triangular shift: each level value is corrected by signed
    cross-scalar multiples of the values at its fixed-point sublevels."""
    datum = col.datum
    for n in datum.levels():
        if not _membership(datum, n, col.value(n), strict=False):
            raise NotDKS({"n": list(n), "reason": "membership"})
    return KolyvaginSystem(datum, _psi_table(datum, col.values))


def psi_inv(col: KolyvaginCollection) -> DerivedKS:
    """Inverse of the shift, by recursion over levels ordered by size."""
    datum = col.datum
    for n in datum.levels():
        if not _membership(datum, n, col.value(n), strict=False):
            raise NotKS({"n": list(n), "reason": "membership"})
    out = {}
    for n in datum.levels():
        acc = list(col.values[n])
        for sign, scalar, d_tau in _perm_terms(datum, n):
            if scalar == 0:
                continue
            c = -sign * scalar % datum.m
            acc = [a + c * x for a, x in zip(acc, out[d_tau])]
        out[n] = tuple(acc)
    return DerivedKS(datum, out)


def us_to_dks(eps: StarkSystem) -> DerivedKS:
    """Contract each level class by the wedge of the level's filtration
    functionals, keeping only the full-support choice terms: over all maps
    assigning each prime slot a component, the degree-matching survivors are
    exactly the permutations, each contributing the product of its
    off-diagonal cross scalars."""
    datum = eps.datum
    r = datum.rank
    B = _ambient(datum, r)
    values = {}
    for n in datum.levels():
        nu = len(n)
        amb = eps.ambient(n)
        acc = list(B.zero_elem())
        for tau in permutations(range(nu)):
            scalar = 1
            for i in range(nu):
                if tau[i] != i:
                    scalar = scalar * datum.cross[n[i]][n[tau[i]]] % datum.m
            if scalar == 0:
                continue
            funcs = tuple(
                ("phi" if tau[i] == i else "v", n[i]) for i in range(nu)
            )
            term = _contract(datum, funcs, r + nu).apply(amb)
            acc = [a + scalar * x for a, x in zip(acc, term)]
        if nu % 2:
            acc = [-x for x in acc]
        values[n] = tuple(acc)
    out = DerivedKS(datum, values)
    verdict = is_dks(out)
    if not verdict.ok:
        raise NotDKS(verdict.witness)
    return out


# ---------------------------------------------------------------------------
# filtration connecting maps
# ---------------------------------------------------------------------------


def bockstein_map(obj, n, q) -> ModuleHom:
    """The first-order connecting map of the level at the given prime: the
    component at the prime itself is the finite-singular functional, the
    component at each other prime of the level is the cross scalar times the
    filtration functional.  When a tower is supplied the map is recomputed
    independently from the prime column of the lifted differential and the
    two versions must agree."""
    tower = obj if isinstance(obj, TowerDatum) else None
    datum = tower.datum if tower else obj
    n = datum.level_key(n)
    if q not in n:
        raise ValueError("the prime must divide the level")
    sub, inc = _sub(datum, n)
    nu = len(n)
    tgt = FPModule.free(datum.group, datum.m, nu)
    rows = []
    for t in range(sub.ngens):
        x = inc.apply(sub.gen(t))
        row = []
        for q2 in n:
            if q2 == q:
                row.append(datum.apply_functional(datum.phi_fs[q], x))
            else:
                row.append(
                    datum.cross[q][q2] * datum.apply_functional(datum.v[q], x)
                )
        rows.append(row)
    if tower is not None:
        G = tower.group(n)
        psi_t = tower.psi(n)
        col = datum.pos(q)
        for t in range(sub.ngens):
            x = inc.apply(sub.gen(t))
            w = GroupRingElem.zero(G, datum.m)
            for i in range(datum.d):
                w = w + datum.lift(x[i], G) * psi_t.rows[i][col]
            comps = i1_components(datum, G, w)
            for idx, q2 in enumerate(n):
                got = comps.get(q2, datum.zero())
                if got != rows[t][idx]:
                    raise TowerMismatch(
                        {"n": list(n), "q": q, "generator": t, "component": q2}
                    )
    return ModuleHom(sub, tgt, RMatrix(datum.group, datum.m, rows, nu))


# ---------------------------------------------------------------------------
# derivative operator
# ---------------------------------------------------------------------------


def derived_classes(c: EulerCollection) -> DerivedKS:
    """Apply the level derivative operator to each class, check invariance
    under the labeled factors, and read the result off over the base ring."""
    tower = c.tower
    datum = c.datum
    r = datum.rank
    table = {}
    for n in datum.levels():
        coords = c.value(n)
        if not n:
            table[n] = tuple(coords)
            continue
        G = tower.group(n)
        D = kolyvagin_derivative(G, datum.m, n)
        h = tuple(D * x for x in coords)
        ident = invariants_identify(FPModule.free(G, datum.m, datum.d), n, r)
        if not ident.is_invariant(h):
            raise NotInvariant({"n": list(n)})
        table[n] = ident.forward(h)
    return DerivedKS(datum, table)


def derivative_system(c: EulerCollection) -> KolyvaginSystem:
    """The derivative operator followed by the triangular shift."""
    return psi(derived_classes(c))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _jsonable(w):
    if w is None or isinstance(w, (bool, int, str, float)):
        return w
    if isinstance(w, GroupRingElem):
        return _encode_elem(w)
    if isinstance(w, Ideal):
        return {"generators": [_encode_elem(g) for g in w.gens]}
    if isinstance(w, dict):
        return {str(k): _jsonable(v) for k, v in w.items()}
    if isinstance(w, (list, tuple)):
        return [_jsonable(v) for v in w]
    return repr(w)


@dataclass
class CheckResult:
    name: str
    anchor: str
    verdict: str
    witness: object = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.verdict in ("PASS", "SKIPPED")

    def payload(self, timings: bool = True) -> dict:
        out = {
            "name": self.name,
            "anchor": self.anchor,
            "verdict": self.verdict,
            "witness": _jsonable(self.witness),
        }
        if timings:
            out["seconds"] = round(self.seconds, 6)
        return out


class Report:
    """Serializable list of check results."""

    schema = "bidualkit-report/1"

    def __init__(self, results=()):
        self.results = list(results)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def add(self, result: CheckResult):
        self.results.append(result)

    def extend(self, other: "Report"):
        self.results.extend(other.results)

    def __iter__(self):
        return iter(self.results)

    def payload(self, timings: bool = True) -> dict:
        return {
            "schema": self.schema,
            "ok": self.ok,
            "results": [r.payload(timings) for r in self.results],
        }

    def __repr__(self):
        marks = ",".join(f"{r.anchor}:{r.verdict}" for r in self.results)
        return f"Report({marks})"


_CHECK_ERRORS = (
    MembershipFailure,
    EqualityFailure,
    NotKS,
    NotDKS,
    NotInvariant,
    NormRelationFailure,
    IncompatibleFamily,
    TowerMismatch,
    ShapeMismatch,
)


def _run(report: Report, name: str, anchor: str, fn) -> bool:
    t0 = time.perf_counter()
    try:
        witness = fn()
        verdict, ok = "PASS", True
    except _CHECK_ERRORS as e:
        witness = e.args[0] if e.args else repr(e)
        verdict, ok = "FAIL", False
    except CapExceeded as e:
        witness = str(e)
        verdict, ok = "SKIPPED", True
    report.add(CheckResult(name, anchor, verdict, witness, time.perf_counter() - t0))
    return ok


def _skip(report: Report, name: str, anchor: str):
    report.add(CheckResult(name, anchor, "SKIPPED", "prerequisite failed"))


# ---------------------------------------------------------------------------
# theorem checkers
# ---------------------------------------------------------------------------


def _mrs_rhs(datum: SelmerDatum, eps: StarkSystem, n, G: FinAbGroup) -> list:
    """Right side of the level congruence: expand the wedge of the level's
    filtration functionals over all choice assignments, each term lifting
    its base contraction and carrying its filtration monomial."""
    r = datum.rank
    nu = len(n)
    amb = eps.ambient(n)
    width = _ambient(datum, r).ngens
    acc = [GroupRingElem.zero(G, datum.m) for _ in range(width)]
    for kappa in product(range(nu), repeat=nu):
        scalar = 1
        for i in range(nu):
            if kappa[i] != i:
                scalar = scalar * datum.cross[n[i]][n[kappa[i]]] % datum.m
        if scalar == 0:
            continue
        funcs = tuple(
            ("phi" if kappa[i] == i else "v", n[i]) for i in range(nu)
        )
        base = _contract(datum, funcs, r + nu).apply(amb)
        mono = GroupRingElem.one(G, datum.m) * scalar
        for i in range(nu):
            mono = mono * datum.t_elem(G, n[kappa[i]])
        for j in range(width):
            acc[j] = acc[j] + datum.lift(base[j], G) * mono
    return acc


def check_mrs(tower: TowerDatum, dets: dict) -> Report:
    """For each level, compare the class of the lifted projection in the
    degree-``ν`` graded piece of the filtration with the expansion of the
    contracted level projection."""
    datum = tower.datum
    dets = {datum.level_key(k): z for k, z in dets.items()}
    report = Report()
    state = {}

    def build_euler():
        state["c"] = euler_from_tower(tower, dets)
        return None

    def build_stark():
        base = datum.level_key(())
        if base not in dets:
            raise IncompatibleFamily({"missing": []})
        coeff = ring_projection(dets[base].coeff, datum.group)
        state["eps"] = stark_from_horizontal(
            datum, horizontal_family(datum, coeff)
        )
        return None

    def congruence():
        c, eps = state["c"], state["eps"]
        r = datum.rank
        for n in datum.levels():
            nu = len(n)
            coords = c.value(n)
            if nu == 0:
                if not _amb_eq(datum, r, tuple(coords), eps.ambient(n)):
                    raise EqualityFailure({"n": [], "coordinate": None})
                continue
            G = tower.group(n)
            piece = graded_piece(G, nu, datum.m)
            for j, w in enumerate(coords):
                if not piece.contains(w, nu):
                    raise MembershipFailure({"n": list(n), "coordinate": j})
            rhs = _mrs_rhs(datum, eps, n, G)
            for j, w in enumerate(coords):
                if piece.class_of(w) != piece.class_of(rhs[j]):
                    raise EqualityFailure({"n": list(n), "coordinate": j})
        return None

    ok = _run(report, "norm-compatible lift family", "lift-projection-norm", build_euler)
    ok = _run(report, "level projection family", "level-projection-family", build_stark) and ok
    if ok:
        _run(report, "graded resolvent congruence", "resolvent-congruence", congruence)
    else:
        _skip(report, "graded resolvent congruence", "resolvent-congruence")
    return report


def check_commutative(datum: SelmerDatum, *, multiples: int = 20, seed: int = 0) -> Report:
    """The square: shifting the choice-expansion family equals the
    regulator, on a basis family and random scalar multiples of it."""
    if not is_regular(datum):
        raise DatumNotRegular("the square needs a regular datum")
    report = Report()

    def square():
        st = stark_module(datum, datum.rank)
        rng = random.Random(f"bidualkit-commutative:{seed}:{datum.signature()}")
        families = list(st.basis)
        for _ in range(multiples):
            families += [
                fam.scale(random_element(datum.group, datum.m, rng))
                for fam in st.basis
            ]
        for i, fam in enumerate(families):
            lhs = psi(us_to_dks(fam))
            rhs = regulator(fam)
            for n in datum.levels():
                if not _amb_eq(datum, datum.rank, lhs.value(n), rhs.value(n)):
                    raise EqualityFailure({"family": i, "n": list(n)})
        return None

    _run(report, "shift of the choice expansion equals the regulator",
         "regulator-square", square)
    return report


def check_main(tower: TowerDatum, dets: dict) -> Report:
    """Derivative classes of the lifted family equal the regulator of the
    projected family, and the derivability index ideal is computed."""
    datum = tower.datum
    dets = {datum.level_key(k): z for k, z in dets.items()}
    report = Report()
    state = {}

    def derivative():
        c = euler_from_tower(tower, dets)
        state["D"] = derivative_system(c)
        return None

    def equality():
        base = datum.level_key(())
        if base not in dets:
            raise IncompatibleFamily({"missing": []})
        base_coeff = ring_projection(dets[base].coeff, datum.group)
        eps = stark_from_horizontal(datum, horizontal_family(datum, base_coeff))
        kappa = regulator(eps)
        state["kappa"] = kappa
        D = state["D"]
        for n in datum.levels():
            if not _amb_eq(datum, datum.rank, D.value(n), kappa.value(n)):
                raise EqualityFailure({"n": list(n)})
        return None

    def index_ideal():
        st = stark_module(datum, datum.rank)
        gen = regulator(st.basis[0]) if st.basis else None
        D = state["D"]
        cols = []
        for n in datum.levels():
            for j in range(len(D.value(n))):
                cols.append((gen.value(n)[j] if gen else datum.zero(),
                             D.value(n)[j]))
        width = len(cols)
        rows = [
            [x for x, _ in cols],
            [-y for _, y in cols],
        ]
        M2 = ModuleHom(
            FPModule.free(datum.group, datum.m, 2),
            FPModule.free(datum.group, datum.m, width),
            RMatrix(datum.group, datum.m, rows, width),
        )
        kernel, inc = M2.kernel()
        gens = [inc.apply(kernel.gen(t))[0] for t in range(kernel.ngens)]
        J = Ideal(datum.group, datum.m, gens)
        return {"generators": [_encode_elem(g) for g in J.gens]}

    ok = _run(report, "derivative system of the lift family",
              "derivative-system", derivative)
    if ok:
        _run(report, "derivative equals the regulator",
             "derivative-equals-regulator", equality)
        _run(report, "derivability index ideal",
             "stark-derivability-index", index_ideal)
    else:
        _skip(report, "derivative equals the regulator",
              "derivative-equals-regulator")
        _skip(report, "derivability index ideal", "stark-derivability-index")
    return report


def check_fitting_theorems(datum: SelmerDatum) -> Report:
    """Exact ideal equalities: per-level determinant images against Fitting
    ideals of the level cohomology, the full Fitting ladder of the residual
    cokernel against joins of determinant images, the base case against the
    family's base image, and the relative-Fitting enumeration."""
    if datum.h_rels:
        raise DatumNotRegular("the Fitting identities need a free master module")
    report = Report()
    r = datum.rank
    N = datum.nprimes
    images = {}

    def level_images():
        for n in datum.levels():
            C = level_complex(datum, n)
            rep = level_rep(datum, n)
            images[n] = ev_ideal(rep)
            lhs = fitting_ideal(C.h1(), r + len(n))
            if not (lhs == images[n]):
                raise EqualityFailure(
                    {"n": list(n), "left": lhs, "right": images[n]}
                )
        return None

    def sha_ladder():
        S = sha_module(datum, ())
        for i in range(N + 1):
            lhs = fitting_ideal(S, i)
            rhs = Ideal(datum.group, datum.m, [])
            for n in datum.levels():
                if len(n) == i:
                    rhs = rhs + images[n]
            if not (lhs == rhs):
                raise EqualityFailure({"index": i, "left": lhs, "right": rhs})
        if not fitting_ideal(S, N + r + 1).is_unit:
            raise EqualityFailure({"index": N + r + 1, "reason": "not unit"})
        return None

    def sha_base():
        S = sha_module(datum, ())
        st = stark_module(datum, r)
        lhs = fitting_ideal(S, 0)
        rhs = Ideal(datum.group, datum.m, [])
        for fam in st.basis:
            F = bidual_element(datum.host, r, fam.ambient(()))
            rhs = rhs + image_ideal(F)
        if not (lhs == rhs):
            raise EqualityFailure({"left": lhs, "right": rhs})
        return None

    def relative_ladder():
        S = sha_module(datum, ())
        y = [S.gen(t) for t in range(S.ngens)]
        for i in range(1, N + 1):
            lhs = relative_fitting(S, y, i)
            rhs = fitting_ideal(S, i)
            if not (lhs == rhs):
                raise EqualityFailure({"index": i, "left": lhs, "right": rhs})
        return None

    ok = _run(report, "determinant image matches the level Fitting ideal",
              "determinant-image-matches-fitting", level_images)
    if ok:
        _run(report, "residual Fitting ladder from determinant images",
             "sha-fitting-ladder", sha_ladder)
        _run(report, "base Fitting ideal from the family's base image",
             "sha-fitting-base", sha_base)
        _run(report, "relative Fitting enumeration agrees with the ladder",
             "relative-fitting-ladder", relative_ladder)
    else:
        _skip(report, "residual Fitting ladder from determinant images",
              "sha-fitting-ladder")
        _skip(report, "base Fitting ideal from the family's base image",
              "sha-fitting-base")
        _skip(report, "relative Fitting enumeration agrees with the ladder",
              "relative-fitting-ladder")
    return report


# ---------------------------------------------------------------------------
# structural checks (canonical map, invariants, derivative combinatorics)
# ---------------------------------------------------------------------------


def _doubled_group(datum: SelmerDatum, G: FinAbGroup, n) -> FinAbGroup:
    orders = tuple(G.orders) + tuple(G.orders[G.axis(q)] for q in n)
    labels = tuple(G.labels) + tuple(q + "'" for q in n)
    return FinAbGroup(orders, labels)


def _derivative_projector_identity(datum: SelmerDatum, G: FinAbGroup, n, x) -> bool:
    """The alternating projector applied to the twisted diagonal sum equals
    the signed derivative against the full filtration monomial, modulo the
    next power of the filtration of the auxiliary factor."""
    m = datum.m
    nu = len(n)
    Gext = _doubled_group(datum, G, n)
    axes = [G.axis(q) for q in n]
    gl = len(G.orders)
    big: dict = {}
    for sigma in product(*(range(G.orders[a]) for a in axes)):
        shift = [0] * gl
        for a, e in zip(axes, sigma):
            shift[a] = e
        for g, v in x.coeffs.items():
            e = list(G.mul(g, tuple(shift)))
            e += [(-s) % G.orders[a] for a, s in zip(axes, sigma)]
            key = tuple(e)
            big[key] = (big.get(key, 0) + v) % m
    lhs = s_operator(Gext, [q + "'" for q in n])(GroupRingElem(Gext, m, big))
    D = kolyvagin_derivative(G, m, n)
    dx = D * x
    rhs = GroupRingElem(
        Gext, m, {tuple(g) + (0,) * nu: v for g, v in dx.coeffs.items()}
    )
    for q in n:
        rhs = rhs * datum.t_elem(Gext, q + "'")
    if nu % 2:
        rhs = -rhs
    delta = lhs - rhs
    Hp = FinAbGroup(
        tuple(G.orders[a] for a in axes), tuple(q + "'" for q in n)
    )
    comps: dict = {}
    for e, v in delta.coeffs.items():
        comps.setdefault(e[:gl], {})[e[gl:]] = v
    piece = graded_piece(Hp, nu, m)
    return all(
        piece.contains(GroupRingElem(Hp, m, cc), nu + 1)
        for cc in comps.values()
    )


def _delta_partitions(items):
    """Ordered set partitions (c_1, ..., c_k) of the given label set."""
    items = list(items)
    if not items:
        yield ()
        return
    first = items[0]
    rest = items[1:]
    masks = list(product((0, 1), repeat=len(rest)))
    for mask in masks:
        block = [first] + [x for x, b in zip(rest, mask) if b]
        remaining = [x for x, b in zip(rest, mask) if not b]
        for tail in _delta_partitions(remaining):
            for pos in range(len(tail) + 1):
                yield tail[:pos] + (tuple(block),) + tail[pos:]


def check_appendix(datum: SelmerDatum, *, seed: int = 0, group_cap: int = 4096) -> Report:
    """Structural identities: bijectivity of the canonical map on free
    modules, the invariants identification, the derivative projector
    identity, and the block determinant recursion for interaction scalars."""
    report = Report()
    rng = random.Random(f"bidualkit-appendix:{seed}:{datum.signature()}")

    def canonical_map():
        X = FPModule.free(datum.group, datum.m, datum.d)
        degs = sorted({1, datum.rank, min(datum.d, 3), datum.d})
        for r in degs:
            h = xi(X, r)
            if not (h.is_injective() and h.is_surjective()):
                raise EqualityFailure({"degree": r})
        return None

    def invariants():
        checked = 0
        for n in datum.levels():
            if not n:
                continue
            G = datum.tower_group(n)
            if G.order > group_cap:
                continue
            ident = invariants_identify(
                FPModule.free(G, datum.m, datum.d), n, datum.rank
            )
            if not ident.verify():
                raise EqualityFailure({"n": list(n)})
            checked += 1
        if checked == 0:
            raise CapExceeded("all layer groups exceed the verification cap")
        return None

    def projector():
        checked = 0
        for n in datum.levels():
            if not 1 <= len(n) <= 3:
                continue
            G = datum.tower_group(n)
            ext_order = G.order
            for q in n:
                ext_order *= G.orders[G.axis(q)]
            if ext_order > group_cap:
                continue
            for _ in range(3):
                x = random_element(G, datum.m, rng)
                if not _derivative_projector_identity(datum, G, n, x):
                    raise EqualityFailure({"n": list(n)})
            checked += 1
        if checked == 0 and datum.nprimes:
            raise CapExceeded("all doubled layer groups exceed the cap")
        return None

    def block_recursion():
        top = datum.levels()[-1]
        if not top:
            return None
        G = datum.tower_group(top)
        nu_top = len(top)

        def P(q, labels):
            return euler_element(datum, G, q, labels)

        for d_size in range(1, min(nu_top, 3) + 1):
            for d in [lev for lev in datum.levels() if len(lev) == d_size]:
                comp = tuple(q for q in top if q not in d)
                lhs = GroupRingElem.zero(G, datum.m)
                for parts in _delta_partitions(d):
                    k = len(parts)
                    term = GroupRingElem.one(G, datum.m)
                    for q in parts[-1]:
                        term = term * P(q, tuple(q2 for q2 in top if q2 != q))
                    sign = -1 if len(parts[-1]) % 2 else 1
                    for i in range(k - 1):
                        for q in parts[i]:
                            term = term * P(q, parts[i + 1])
                    lhs = lhs + sign * term
                rows = []
                for qi in d:
                    row = []
                    for qj in d:
                        row.append(-P(qi, comp) if qi == qj else -P(qi, (qj,)))
                    rows.append(row)
                rhs = rdet(rows)
                piece = graded_piece(G, d_size, datum.m)
                if piece.class_of(lhs) != piece.class_of(rhs):
                    raise EqualityFailure({"d": list(d)})
        return None

    _run(report, "canonical map bijective on free modules",
         "bidual-canonical-map", canonical_map)
    _run(report, "invariants identification verifies",
         "invariants-identification", invariants)
    _run(report, "derivative projector identity",
         "derivative-projector", projector)
    _run(report, "block determinant recursion",
         "block-determinant-recursion", block_recursion)
    return report
