"""Seeded synthetic local-condition data over finite group rings.

A :class:`SelmerDatum` packages: a coefficient ring ``Z/p^k``; an abelian
p-group Γ acting through its group ring ``R``; a finitely presented master
module ``H`` over ``R`` with a designated core rank ``r``; an ordered list
of auxiliary "prime" labels, each carrying a cyclic layer group ``G_q``; a
pair of functionals ``(v_q, phi_q)`` on ``H`` per label; and a table of
local polynomials ``P_q(x) = (x - 1) Q_q(x)`` together with interaction
exponents ``a[q][q']`` whose first-order constants are
``cross[q][q'] = -a[q][q'] * Q_q(1)``.

Levels are subsets of the labels.  The level-``n`` submodule is the joint
kernel of the ``v_q`` for ``q`` outside ``n``; each level carries a square
two-term complex whose degree-zero cohomology is that submodule, plus a
standard surjection onto a free module (level slots for the labels inside
``n`` first, core slots after).

A :class:`TowerDatum` lifts the level complexes to the group rings of
``Γ × ∏_{q in n} G_q``.  Reduction to Γ recovers the level complex (B1);
the columns at labels inside the level lie in the relative augmentation
ideal (B2); and their first-order components encode the functionals and
the interaction constants (B3).

Generation is deterministic per seed.  Data serialize to canonical JSON
(schema ``bidualkit-datum/1``) and round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass

from .complexes import StandardRep, TwoTermComplex
from .errors import DatumNotRegular
from .grouprings import FinAbGroup, GroupRingElem, RMatrix, is_unit, ring_projection
from .modalg import FPModule, ModuleHom, dual, intersection_kernel, submodule

__all__ = [
    "SCHEMA",
    "SelmerDatum",
    "TowerDatum",
    "AxiomRecord",
    "ValidationReport",
    "generate_selmer",
    "generate_tower",
    "validate",
    "sha_module",
    "is_regular",
    "relaxed_module",
    "strict_module",
    "level_complex",
    "level_rep",
    "euler_element",
    "functional_coords",
    "i1_components",
    "dumps",
    "loads",
]

SCHEMA = "bidualkit-datum/1"

_ODD_PRIMES = (3, 5, 7, 11, 13)


# ---------------------------------------------------------------------------
# element / matrix encoding helpers
# ---------------------------------------------------------------------------


def _encode_elem(x: GroupRingElem) -> list:
    terms = [[list(map(int, exps)), int(c) % x.m] for exps, c in x.coeffs.items() if c % x.m]
    terms.sort(key=lambda t: t[0])
    return terms


def _decode_elem(group: FinAbGroup, m: int, terms) -> GroupRingElem:
    coeffs = {}
    for exps, c in terms:
        exps = group.reduce(tuple(int(e) for e in exps))
        if len(exps) != len(group.orders):
            raise ValueError("element term has the wrong number of exponents")
        coeffs[exps] = (coeffs.get(exps, 0) + int(c)) % m
    return GroupRingElem(group, m, coeffs)


def _encode_rows(rows) -> list:
    return [[_encode_elem(x) for x in row] for row in rows]


def _decode_rows(group, m, data) -> list:
    return [[_decode_elem(group, m, t) for t in row] for row in data]


# ---------------------------------------------------------------------------
# the datum
# ---------------------------------------------------------------------------


class SelmerDatum:
    """Deterministic synthetic datum: master module, local functionals,
    local polynomial table, and the level machinery built from them."""

    def __init__(
        self,
        *,
        seed: int,
        p: int,
        k: int,
        gamma_order: int,
        rank: int,
        regime: str,
        primes,
        prime_orders,
        h_ngens: int,
        h_rels,
        v,
        phi_fs,
        p_poly,
        q_poly,
        frob_log,
    ):
        if p not in _ODD_PRIMES:
            raise ValueError("p must be an odd prime")
        if k < 1:
            raise ValueError("k must be at least 1")
        if rank < 1:
            raise ValueError("core rank must be at least 1")
        if regime not in ("regular", "degenerate"):
            raise ValueError("regime must be 'regular' or 'degenerate'")
        self.seed = int(seed)
        self.p = int(p)
        self.k = int(k)
        self.m = p**k
        gamma_order = int(gamma_order)
        if gamma_order != 1:
            n0 = gamma_order
            while n0 % p == 0:
                n0 //= p
            if n0 != 1:
                raise ValueError("the Γ-factor order must be a power of p")
        self.gamma_order = gamma_order
        self.rank = int(rank)
        self.regime = regime
        self.primes = tuple(primes)
        if len(set(self.primes)) != len(self.primes) or not self.primes:
            raise ValueError("prime labels must be distinct and nonempty")
        self.prime_orders = {q: int(prime_orders[q]) for q in self.primes}
        for q, c in self.prime_orders.items():
            if c % self.m:
                raise ValueError("each layer-group order must be a multiple of p^k")
        self.h_ngens = int(h_ngens)
        if gamma_order > 1:
            self.group = FinAbGroup((gamma_order,), (None,))
        else:
            self.group = FinAbGroup((), ())
        rel_rows = [list(row) for row in (h_rels or [])]
        self.h_rels = tuple(tuple(row) for row in rel_rows)
        self.host = FPModule(
            self.group, self.m, self.h_ngens, RMatrix(self.group, self.m, rel_rows, self.h_ngens)
        )
        self.v = {q: tuple(v[q]) for q in self.primes}
        self.phi_fs = {q: tuple(phi_fs[q]) for q in self.primes}
        for q in self.primes:
            if len(self.v[q]) != self.h_ngens or len(self.phi_fs[q]) != self.h_ngens:
                raise ValueError("functional coordinate vectors must have one entry per generator")
        self.p_poly = {q: tuple(int(c) % self.m for c in p_poly[q]) for q in self.primes}
        self.q_poly = {q: tuple(int(c) % self.m for c in q_poly[q]) for q in self.primes}
        self.frob_log = {
            q: {
                q2: int(frob_log[q][q2]) % self.prime_orders[q2]
                for q2 in self.primes
                if q2 != q
            }
            for q in self.primes
        }
        self.cross = {
            q: {
                q2: (-self.frob_log[q][q2] * sum(self.q_poly[q])) % self.m
                for q2 in self.primes
                if q2 != q
            }
            for q in self.primes
        }
        self._cache = {}

    # -- basic shape ------------------------------------------------------

    @property
    def nprimes(self) -> int:
        return len(self.primes)

    @property
    def d(self) -> int:
        return self.h_ngens

    def pos(self, q: str) -> int:
        """Generator slot of the label ``q`` (core slots come first)."""
        return self.rank + self.primes.index(q)

    def level_key(self, n) -> tuple:
        labs = set(n)
        unknown = labs - set(self.primes)
        if unknown:
            raise ValueError(f"unknown prime labels: {sorted(unknown)}")
        return tuple(q for q in self.primes if q in labs)

    def levels(self) -> tuple:
        """All levels (subsets of the labels), smallest first, in a fixed
        deterministic order."""
        key = ("levels",)
        if key not in self._cache:
            out = [()]
            for q in self.primes:
                out.extend(n + (q,) for n in list(out))
            out.sort(key=lambda n: (len(n), tuple(self.primes.index(q) for q in n)))
            self._cache[key] = tuple(out)
        return self._cache[key]

    def complement(self, n) -> tuple:
        n = self.level_key(n)
        return tuple(q for q in self.primes if q not in n)

    # -- ring elements ----------------------------------------------------

    def one(self) -> GroupRingElem:
        return GroupRingElem.one(self.group, self.m)

    def zero(self) -> GroupRingElem:
        return GroupRingElem.zero(self.group, self.m)

    def scalar(self, c: int) -> GroupRingElem:
        return GroupRingElem.one(self.group, self.m) * (c % self.m)

    def tower_group(self, n) -> FinAbGroup:
        n = self.level_key(n)
        key = ("group", n)
        if key not in self._cache:
            self._cache[key] = FinAbGroup(
                self.group.orders + tuple(self.prime_orders[q] for q in n),
                self.group.labels + n,
            )
        return self._cache[key]

    def lift(self, x: GroupRingElem, group: FinAbGroup) -> GroupRingElem:
        """Trivially lift an element of ``R`` along the extra labeled axes
        of ``group`` (which must extend Γ by trailing factors)."""
        pad = len(group.orders) - len(self.group.orders)
        coeffs = {exps + (0,) * pad: c for exps, c in x.coeffs.items()}
        return GroupRingElem(group, self.m, coeffs)

    def gamma_part(self, exps) -> tuple:
        return tuple(exps[: len(self.group.orders)])

    def t_elem(self, group: FinAbGroup, q: str) -> GroupRingElem:
        """The element ``σ_q - 1`` of the layer group ring."""
        exps = [0] * len(group.orders)
        exps[group.axis(q)] = 1
        return GroupRingElem.monomial(group, self.m, tuple(exps)) - GroupRingElem.one(
            group, self.m
        )

    # -- functionals ------------------------------------------------------

    def functional(self, kind: str, q: str) -> tuple:
        return (self.v if kind == "v" else self.phi_fs)[q]

    def apply_functional(self, coords_fn, x) -> GroupRingElem:
        acc = self.zero()
        for c, xc in zip(coords_fn, x):
            acc = acc + c * xc
        return acc

    # -- serialization ----------------------------------------------------

    def payload(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "selmer",
            "seed": self.seed,
            "p": self.p,
            "k": self.k,
            "gamma": self.gamma_order,
            "rank": self.rank,
            "regime": self.regime,
            "primes": list(self.primes),
            "prime_orders": {q: self.prime_orders[q] for q in self.primes},
            "h_ngens": self.h_ngens,
            "h_rels": _encode_rows(self.h_rels),
            "v": {q: [_encode_elem(x) for x in self.v[q]] for q in self.primes},
            "phi_fs": {q: [_encode_elem(x) for x in self.phi_fs[q]] for q in self.primes},
            "p_poly": {q: list(self.p_poly[q]) for q in self.primes},
            "q_poly": {q: list(self.q_poly[q]) for q in self.primes},
            "frob_log": {q: dict(self.frob_log[q]) for q in self.primes},
            "cross": {q: dict(self.cross[q]) for q in self.primes},
        }

    def signature(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, SelmerDatum) and self.payload() == other.payload()

    def __repr__(self):
        return (
            f"SelmerDatum(seed={self.seed}, p={self.p}, k={self.k}, "
            f"gamma={self.gamma_order}, rank={self.rank}, primes={len(self.primes)}, "
            f"regime={self.regime!r})"
        )


class TowerDatum:
    """Lift of a regular datum's level complexes to the layer group rings."""

    def __init__(self, datum: SelmerDatum, seed: int, noise_terms: int, psis: dict):
        self.datum = datum
        self.seed = int(seed)
        self.noise_terms = int(noise_terms)
        self.psis = {datum.level_key(n): psis[n] for n in psis}
        missing = [n for n in datum.levels() if n not in self.psis]
        if missing:
            raise ValueError(f"tower is missing levels: {missing}")
        self._cache = {}

    def group(self, n) -> FinAbGroup:
        return self.datum.tower_group(n)

    def psi(self, n) -> RMatrix:
        return self.psis[self.datum.level_key(n)]

    def complex(self, n) -> TwoTermComplex:
        n = self.datum.level_key(n)
        key = ("complex", n)
        if key not in self._cache:
            self._cache[key] = TwoTermComplex(self.group(n), self.datum.m, self.psi(n))
        return self._cache[key]

    def rep(self, n) -> StandardRep:
        """Standard surjection of the level-``n`` lifted complex onto the
        free core: classes of the core generators, identity basis."""
        n = self.datum.level_key(n)
        key = ("rep", n)
        if key not in self._cache:
            datum = self.datum
            C = self.complex(n)
            G = self.group(n)
            r, d, m = datum.rank, datum.d, datum.m
            X = FPModule.free(G, m, r)
            one = GroupRingElem.one(G, m)
            zero = GroupRingElem.zero(G, m)
            rows = [[one if j == i else zero for j in range(r)] for i in range(d)]
            for i in range(r, d):
                rows[i] = [zero] * r
            f = ModuleHom(C.h1(), X, RMatrix(G, m, rows, r))
            self._cache[key] = StandardRep(C, f, RMatrix.identity(G, m, d))
        return self._cache[key]

    def payload(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "tower",
            "seed": self.seed,
            "noise_terms": self.noise_terms,
            "datum": self.datum.payload(),
            "psis": {",".join(n): _encode_rows(self.psis[n].rows) for n in self.datum.levels()},
        }

    def __eq__(self, other):
        return isinstance(other, TowerDatum) and self.payload() == other.payload()

    def __repr__(self):
        return f"TowerDatum(seed={self.seed}, datum={self.datum!r})"


# ---------------------------------------------------------------------------
# level machinery
# ---------------------------------------------------------------------------


def relaxed_module(datum: SelmerDatum, n):
    """The level-``n`` submodule of ``H``: joint kernel of the ``v_q`` for
    ``q`` outside ``n``.  Returns ``(submodule, inclusion)``."""
    n = datum.level_key(n)
    key = ("relaxed", n)
    if key not in datum._cache:
        conds = [datum.v[q] for q in datum.complement(n)]
        datum._cache[key] = _kernel_of(datum, conds)
    return datum._cache[key]


def strict_module(datum: SelmerDatum, n):
    """The strict level-``n`` submodule: the relaxed one intersected with
    the kernels of ``phi_q`` for ``q`` inside ``n``."""
    n = datum.level_key(n)
    key = ("strict", n)
    if key not in datum._cache:
        conds = [datum.v[q] for q in datum.complement(n)] + [datum.phi_fs[q] for q in n]
        datum._cache[key] = _kernel_of(datum, conds)
    return datum._cache[key]


def functional_coords(host: FPModule, values) -> tuple:
    """Coordinates of a functional against the generators of the dual
    module, given its values on the host generators.  For a free host the
    two agree; otherwise the values are solved against the dual's
    generating homomorphisms."""
    values = tuple(values)
    if host.is_free:
        return values
    Ystar = dual(host)
    mat = RMatrix(host.group, host.m, [[x] for x in values], 1)
    coords = Ystar.coords_of_matrix(mat)
    if coords is None:
        raise ValueError("functional is not well defined on the module")
    return coords


def _kernel_of(datum: SelmerDatum, conds):
    if not conds:
        ident = ModuleHom(
            datum.host,
            datum.host,
            RMatrix.identity(datum.group, datum.m, datum.h_ngens),
        )
        return datum.host, ident
    return intersection_kernel(
        datum.host, [functional_coords(datum.host, c) for c in conds]
    )


def level_complex(datum: SelmerDatum, n) -> TwoTermComplex:
    """The square two-term complex of the level: columns at labels outside
    ``n`` carry the ``v_q`` coordinates; all other columns vanish."""
    n = datum.level_key(n)
    key = ("complex", n)
    if key not in datum._cache:
        if datum.h_rels:
            raise DatumNotRegular("level complexes require a free master module")
        d, m, G = datum.d, datum.m, datum.group
        zero = GroupRingElem.zero(G, m)
        rows = [[zero] * d for _ in range(d)]
        for q in datum.complement(n):
            j = datum.pos(q)
            for i in range(d):
                rows[i][j] = datum.v[q][i]
        datum._cache[key] = TwoTermComplex(G, m, RMatrix(G, m, rows, d))
    return datum._cache[key]


def level_rep(datum: SelmerDatum, n) -> StandardRep:
    """Standard surjection of the level complex onto a free module with the
    level slots first (in label order) and the core slots after, against the
    basis that lists those rows first."""
    n = datum.level_key(n)
    key = ("rep", n)
    if key not in datum._cache:
        C = level_complex(datum, n)
        G, m, d, r = datum.group, datum.m, datum.d, datum.rank
        nu = len(n)
        one = GroupRingElem.one(G, m)
        zero = GroupRingElem.zero(G, m)
        X = FPModule.free(G, m, r + nu)
        rows = [[zero] * (r + nu) for _ in range(d)]
        for idx, q in enumerate(n):
            rows[datum.pos(q)][idx] = one
        for i in range(r):
            rows[i][nu + i] = one
        f = ModuleHom(C.h1(), X, RMatrix(G, m, rows, r + nu))
        order = (
            [datum.pos(q) for q in n]
            + list(range(r))
            + [datum.pos(q) for q in datum.complement(n)]
        )
        brows = [[one if j == src else zero for j in range(d)] for src in order]
        datum._cache[key] = StandardRep(C, f, RMatrix(G, m, brows, d))
    return datum._cache[key]


def sha_module(datum: SelmerDatum, n) -> FPModule:
    """Cokernel of the joint map ``(v_q)_{q outside n}: H -> R^{#outside}``,
    presented on the surviving label slots."""
    n = datum.level_key(n)
    key = ("sha", n)
    if key not in datum._cache:
        comp = datum.complement(n)
        rows = [[datum.v[q][i] for q in comp] for i in range(datum.h_ngens)]
        datum._cache[key] = FPModule(
            datum.group, datum.m, len(comp), RMatrix(datum.group, datum.m, rows, len(comp))
        )
    return datum._cache[key]


def euler_element(datum: SelmerDatum, group: FinAbGroup, q: str, labels) -> GroupRingElem:
    """``P_q`` evaluated at the product over the given labels ``q' != q`` of
    ``σ_{q'}`` raised to minus the interaction exponent ``a[q][q']``."""
    exps = [0] * len(group.orders)
    for lab in labels:
        if lab == q:
            continue
        ax = group.axis(lab)
        exps[ax] = (-datum.frob_log[q][lab]) % group.orders[ax]
    base = tuple(exps)
    coeffs = {}
    for j, c in enumerate(datum.p_poly[q]):
        if c % datum.m == 0:
            continue
        gj = group.reduce(tuple(j * e for e in base))
        coeffs[gj] = (coeffs.get(gj, 0) + c) % datum.m
    return GroupRingElem(group, datum.m, coeffs)


def i1_components(datum: SelmerDatum, group: FinAbGroup, w: GroupRingElem) -> dict:
    """First-order components of an element of the relative augmentation
    ideal: for each labeled factor ``q'`` the ``R``-coefficient of
    ``σ_{q'} - 1`` modulo second order, read off exponent by exponent."""
    gl = len(datum.group.orders)
    comps = {lab: {} for lab in group.labels if lab is not None}
    for exps, c in w.coeffs.items():
        if c % datum.m == 0:
            continue
        gpart = tuple(exps[:gl])
        for ax, lab in enumerate(group.labels):
            if lab is None:
                continue
            e = exps[ax]
            if e:
                d = comps[lab]
                d[gpart] = (d.get(gpart, 0) + c * e) % datum.m
    return {
        lab: GroupRingElem(datum.group, datum.m, comps[lab])
        for lab in comps
    }


def is_regular(datum: SelmerDatum) -> bool:
    """A datum is regular when the master module is free of rank
    ``rank + #primes`` and the joint local map splits off a free summand
    (equivalently here: is surjective)."""
    key = ("is_regular",)
    if key not in datum._cache:
        ok = not datum.h_rels and datum.h_ngens == datum.rank + datum.nprimes
        if ok:
            ok = _joint_local_map(datum).is_surjective()
        datum._cache[key] = ok
    return datum._cache[key]


def _joint_local_map(datum: SelmerDatum) -> ModuleHom:
    key = ("joint_local",)
    if key not in datum._cache:
        N = datum.nprimes
        rows = [[datum.v[q][i] for q in datum.primes] for i in range(datum.h_ngens)]
        datum._cache[key] = ModuleHom(
            datum.host,
            FPModule.free(datum.group, datum.m, N),
            RMatrix(datum.group, datum.m, rows, N),
        )
    return datum._cache[key]


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def generate_selmer(
    seed: int,
    *,
    p: int = 3,
    k: int = 1,
    gamma: int = 1,
    rank: int = 1,
    nprimes: int = 1,
    regime: str = "regular",
) -> SelmerDatum:
    """Deterministically generate a datum.  The regular regime produces a
    free master module with a split-surjective joint local map; the
    degenerate regime adds a torsion relation and scales functionals by
    ``p`` so the joint local map is no longer surjective."""
    if p == 2:
        raise ValueError("p must be odd")
    if p not in _ODD_PRIMES:
        raise ValueError("p must be an odd prime")
    if k < 1:
        raise ValueError("k must be at least 1")
    if rank < 1:
        raise ValueError("core rank must be at least 1")
    if nprimes < 1:
        raise ValueError("at least one prime label is required")
    if regime not in ("regular", "degenerate"):
        raise ValueError("regime must be 'regular' or 'degenerate'")
    m = p**k
    rng = random.Random(f"bidualkit:{seed}:{p}:{k}:{gamma}:{rank}:{nprimes}:{regime}")
    group = FinAbGroup((gamma,), (None,)) if gamma > 1 else FinAbGroup((), ())
    primes = tuple(f"q{i + 1}" for i in range(nprimes))
    d = rank + nprimes

    def rnd_elem():
        coeffs = {}
        for _ in range(rng.randrange(1, 4)):
            exps = tuple(rng.randrange(c) for c in group.orders)
            coeffs[exps] = (coeffs.get(exps, 0) + rng.randrange(m)) % m
        return GroupRingElem(group, m, coeffs)

    def rnd_unit():
        while True:
            x = rnd_elem()
            if is_unit(x):
                return x

    one = GroupRingElem.one(group, m)
    zero = GroupRingElem.zero(group, m)
    # an invertible matrix, built from elementary operations
    A = [[one if i == j else zero for j in range(d)] for i in range(d)]
    for _ in range(3 * d + rng.randrange(4)):
        i, j = rng.sample(range(d), 2)
        c = rnd_elem()
        A[i] = [A[i][t] + c * A[j][t] for t in range(d)]
    for i in range(d):
        u = rnd_unit()
        A[i] = [u * A[i][t] for t in range(d)]
    v = {q: tuple(A[i][rank + idx] for i in range(d)) for idx, q in enumerate(primes)}
    phi_fs = {q: tuple(rnd_elem() for _ in range(d)) for q in primes}
    q_poly = {
        q: tuple(rng.randrange(m) for _ in range(1 + rng.randrange(2)))
        for q in primes
    }
    p_poly = {}
    for q in primes:
        qs = q_poly[q]
        coeffs = [0] * (len(qs) + 1)
        for j, c in enumerate(qs):
            coeffs[j + 1] = (coeffs[j + 1] + c) % m
            coeffs[j] = (coeffs[j] - c) % m
        p_poly[q] = tuple(coeffs)
    frob_log = {
        q: {q2: rng.randrange(m) for q2 in primes if q2 != q} for q in primes
    }
    h_rels = []
    if regime == "degenerate":
        tors = p ** (k - 1)
        rel = [zero] * d
        rel[d - 1] = one * tors
        h_rels.append(rel)
        pmul = one * p
        v = {
            q: tuple(
                (pmul * x if i == d - 1 else x) for i, x in enumerate(v[q])
            )
            for q in v
        }
        phi_fs = {
            q: tuple(
                (pmul * x if i == d - 1 else x) for i, x in enumerate(phi_fs[q])
            )
            for q in phi_fs
        }
        last = primes[-1]
        v = {
            q: (tuple(pmul * x for x in v[q]) if q == last else v[q]) for q in v
        }
    return SelmerDatum(
        seed=seed,
        p=p,
        k=k,
        gamma_order=gamma,
        rank=rank,
        regime=regime,
        primes=primes,
        prime_orders={q: m for q in primes},
        h_ngens=d,
        h_rels=h_rels,
        v=v,
        phi_fs=phi_fs,
        p_poly=p_poly,
        q_poly=q_poly,
        frob_log=frob_log,
    )


def generate_tower(seed: int, datum: SelmerDatum, *, noise_terms: int = 2) -> TowerDatum:
    """Deterministically lift a regular datum's level complexes.  Noise is
    seeded once at the top level inside ``(σ_q - 1) * I`` and pushed down
    through the layer-group projections, so the lifts are compatible."""
    if not is_regular(datum):
        raise DatumNotRegular(
            "tower lifts require a free master module with a surjective joint local map"
        )
    rng = random.Random(f"bidualkit-tower:{seed}:{datum.signature()}:{noise_terms}")
    m, d = datum.m, datum.d
    top = datum.levels()[-1]
    Gtop = datum.tower_group(top)

    def rnd_ideal_elem():
        coeffs = {}
        for _ in range(noise_terms):
            exps = tuple(rng.randrange(c) for c in Gtop.orders)
            coeffs[exps] = (coeffs.get(exps, 0) + rng.randrange(m)) % m
        w = GroupRingElem(Gtop, m, coeffs)
        return w - datum.lift(ring_projection(w, datum.group), Gtop)

    noise_top = {q: [rnd_ideal_elem() for _ in range(d)] for q in datum.primes}

    psis = {}
    for n in datum.levels():
        G = datum.tower_group(n)
        zero = GroupRingElem.zero(G, m)
        rows = [[zero] * d for _ in range(d)]
        for q in datum.complement(n):
            j = datum.pos(q)
            for i in range(d):
                rows[i][j] = datum.lift(datum.v[q][i], G)
        for q in n:
            j = datum.pos(q)
            t_q = datum.t_elem(G, q)
            ptil = euler_element(datum, G, q, [lab for lab in n if lab != q])
            for i in range(d):
                noise = ring_projection(noise_top[q][i], G)
                rows[i][j] = t_q * (datum.lift(datum.phi_fs[q][i], G) + noise) + ptil * datum.lift(
                    datum.v[q][i], G
                )
        psis[n] = RMatrix(G, m, rows, d)
    return TowerDatum(datum, seed, noise_terms, psis)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class AxiomRecord:
    axiom: str
    verdict: str
    witness: dict | None
    detail: str

    @property
    def ok(self) -> bool:
        return self.verdict == "PASS"

    def payload(self) -> dict:
        return {
            "axiom": self.axiom,
            "verdict": self.verdict,
            "witness": self.witness,
            "detail": self.detail,
        }


class ValidationReport:
    def __init__(self, records):
        self.records = list(records)

    @property
    def ok(self) -> bool:
        return all(rec.ok for rec in self.records)

    def __iter__(self):
        return iter(self.records)

    def record(self, axiom: str) -> AxiomRecord:
        for rec in self.records:
            if rec.axiom == axiom:
                return rec
        raise KeyError(axiom)

    def payload(self) -> dict:
        return {"records": [rec.payload() for rec in self.records]}

    def __repr__(self):
        verdicts = ", ".join(f"{rec.axiom}:{rec.verdict}" for rec in self.records)
        return f"ValidationReport({verdicts})"


def validate(obj) -> ValidationReport:
    """Per-axiom machine validation with witnesses.  Accepts a datum
    (axioms A1-A4) or a tower (the datum's axioms plus B1-B3)."""
    if isinstance(obj, TowerDatum):
        records = list(validate(obj.datum).records)
        records.extend(_validate_tower(obj))
        return ValidationReport(records)
    datum = obj
    records = [
        _check_a1(datum),
        _check_a2(datum),
        _check_a3(datum),
        _check_a4(datum),
    ]
    return ValidationReport(records)


def _check_a1(datum: SelmerDatum) -> AxiomRecord:
    m = datum.m
    for q in datum.primes:
        if sum(datum.p_poly[q]) % m:
            return AxiomRecord(
                "A1",
                "FAIL",
                {"q": q, "p_at_one": sum(datum.p_poly[q]) % m},
                "local polynomial does not vanish at 1",
            )
        qs = datum.q_poly[q]
        conv = [0] * (len(qs) + 1)
        for j, c in enumerate(qs):
            conv[j + 1] = (conv[j + 1] + c) % m
            conv[j] = (conv[j] - c) % m
        ps = list(datum.p_poly[q])
        width = max(len(conv), len(ps))
        conv += [0] * (width - len(conv))
        ps += [0] * (width - len(ps))
        if [c % m for c in conv] != [c % m for c in ps]:
            return AxiomRecord(
                "A1",
                "FAIL",
                {"q": q},
                "local polynomial does not factor as (x - 1) times its cofactor",
            )
        qq1 = sum(qs) % m
        for q2 in datum.primes:
            if q2 == q:
                continue
            expect = (-datum.frob_log[q][q2] * qq1) % m
            if datum.cross[q][q2] != expect:
                return AxiomRecord(
                    "A1",
                    "FAIL",
                    {"q": q, "q2": q2, "cross": datum.cross[q][q2], "expected": expect},
                    "interaction constant disagrees with the polynomial table",
                )
        if datum.prime_orders[q] % m:
            return AxiomRecord(
                "A1", "FAIL", {"q": q}, "layer-group order is not a multiple of p^k"
            )
    return AxiomRecord("A1", "PASS", None, "local polynomials vanish at 1 and factor correctly")


def _check_a2(datum: SelmerDatum) -> AxiomRecord:
    V = _joint_local_map(datum)
    if V.is_surjective():
        return AxiomRecord("A2", "PASS", None, "joint local map is split surjective")
    return AxiomRecord(
        "A2",
        "FAIL",
        {"primes": list(datum.primes)},
        "joint local map is not surjective",
    )


def _span_size(host: FPModule, gens) -> int:
    gens = [g for g in gens if not host.is_zero_elem(g)]
    if not gens:
        return 1
    sub, _ = submodule(host, gens)
    return sub.cardinality()


def _check_a3(datum: SelmerDatum) -> AxiomRecord:
    for n in datum.levels():
        sub, inc = relaxed_module(datum, n)
        C = None
        if not datum.h_rels:
            C = level_complex(datum, n)
            kern, kinc = C.h0()
            if kern.cardinality() != sub.cardinality():
                return AxiomRecord(
                    "A3",
                    "FAIL",
                    {"n": list(n)},
                    "level complex kernel does not match the level submodule",
                )
            for t in range(kern.ngens):
                if inc.preimage(kinc.apply(kern.gen(t))) is None:
                    return AxiomRecord(
                        "A3",
                        "FAIL",
                        {"n": list(n), "gen": t},
                        "level complex kernel escapes the level submodule",
                    )
    for mlev in datum.levels():
        for q in mlev:
            n = tuple(x for x in mlev if x != q)
            ok, witness, msg = _gd_exact(datum, n, mlev, q)
            if not ok:
                witness = dict(witness or {})
                witness.update({"n": list(n), "m": list(mlev), "q": q})
                return AxiomRecord("A3", "FAIL", witness, msg)
    return AxiomRecord(
        "A3", "PASS", None, "six-term level sequences are exact at every joint"
    )


def _gd_exact(datum: SelmerDatum, n, mlev, q):
    """Exactness of 0 -> H(n) -> H(m) -> R -> Sha(n) -> Sha(m) -> 0 for an
    adjacent pair m = n + {q}, checked joint by joint."""
    G, M = datum.group, datum.m
    A, incA = relaxed_module(datum, n)
    B, incB = relaxed_module(datum, mlev)
    D = sha_module(datum, n)
    E = sha_module(datum, mlev)
    # inclusion A -> B
    rows = []
    for t in range(A.ngens):
        pre = incB.preimage(incA.apply(A.gen(t)))
        if pre is None:
            return False, {"gen": t}, "smaller level escapes the larger level"
        rows.append(list(pre))
    iota = ModuleHom(A, B, RMatrix(G, M, rows, B.ngens))
    kc, _ = iota.kernel()
    if kc.cardinality() != 1:
        return False, None, "level inclusion is not injective"
    # B -> R via v_q
    f2 = ModuleHom(
        B,
        FPModule.free(G, M, 1),
        RMatrix(
            G,
            M,
            [[datum.apply_functional(datum.v[q], incB.apply(B.gen(t)))] for t in range(B.ngens)],
            1,
        ),
    )
    if not iota.then(f2).is_zero:
        return False, None, "local map does not kill the smaller level"
    k2, _ = f2.kernel()
    if k2.cardinality() != _span_size(B, [iota.apply(A.gen(t)) for t in range(A.ngens)]):
        return False, None, "kernel of the local map exceeds the smaller level"
    # R -> Sha(n) at the slot of q
    compn = datum.complement(n)
    slot = compn.index(q)
    one = GroupRingElem.one(G, M)
    zero = GroupRingElem.zero(G, M)
    f3 = ModuleHom(
        FPModule.free(G, M, 1),
        D,
        RMatrix(G, M, [[one if j == slot else zero for j in range(D.ngens)]], D.ngens),
    )
    if not f2.then(f3).is_zero:
        return False, None, "local values do not die in the level cokernel"
    k3, _ = f3.kernel()
    if k3.cardinality() != _span_size(
        FPModule.free(G, M, 1), [f2.apply(B.gen(t)) for t in range(B.ngens)]
    ):
        return False, None, "kernel into the cokernel exceeds the local image"
    # Sha(n) -> Sha(m), dropping the slot of q
    compm = datum.complement(mlev)
    rows4 = []
    for q2 in compn:
        if q2 == q:
            rows4.append([zero] * E.ngens)
        else:
            j = compm.index(q2)
            rows4.append([one if t == j else zero for t in range(E.ngens)])
    f4 = ModuleHom(D, E, RMatrix(G, M, rows4, E.ngens))
    if not f3.then(f4).is_zero:
        return False, None, "slot class survives into the larger cokernel"
    k4, _ = f4.kernel()
    if k4.cardinality() != _span_size(D, [f3.apply((one,))]):
        return False, None, "kernel between cokernels exceeds the slot class"
    if not f4.is_surjective():
        return False, None, "cokernel projection is not surjective"
    return True, None, ""


def _check_a4(datum: SelmerDatum) -> AxiomRecord:
    for n in datum.levels():
        sub, inc = strict_module(datum, n)
        rel, rinc = relaxed_module(datum, n)
        for t in range(sub.ngens):
            x = inc.apply(sub.gen(t))
            if rinc.preimage(x) is None:
                return AxiomRecord(
                    "A4",
                    "FAIL",
                    {"n": list(n), "gen": t},
                    "strict level escapes the relaxed level",
                )
            for q in n:
                val = datum.apply_functional(datum.phi_fs[q], x)
                if not val.is_zero:
                    return AxiomRecord(
                        "A4",
                        "FAIL",
                        {"n": list(n), "gen": t, "q": q},
                        "strict level does not kill the finite-singular functional",
                    )
    return AxiomRecord(
        "A4", "PASS", None, "strict levels sit inside relaxed levels and kill their functionals"
    )


def _validate_tower(tower: TowerDatum):
    records = []
    datum = tower.datum
    # B1: reduction to Γ recovers the level complex
    rec = None
    for n in datum.levels():
        psi = tower.psi(n)
        target = level_complex(datum, n).psi
        for i in range(datum.d):
            for j in range(datum.d):
                red = ring_projection(psi.rows[i][j], datum.group)
                if red != target.rows[i][j]:
                    rec = AxiomRecord(
                        "B1",
                        "FAIL",
                        {"n": list(n), "row": i, "col": j},
                        "coinvariant reduction disagrees with the level complex",
                    )
                    break
            if rec:
                break
        if rec:
            break
    records.append(
        rec
        or AxiomRecord("B1", "PASS", None, "coinvariant reduction recovers every level complex")
    )
    # B2: columns at level labels lie in the relative augmentation ideal
    rec = None
    for n in datum.levels():
        psi = tower.psi(n)
        for q in n:
            j = datum.pos(q)
            for i in range(datum.d):
                if not ring_projection(psi.rows[i][j], datum.group).is_zero:
                    rec = AxiomRecord(
                        "B2",
                        "FAIL",
                        {"n": list(n), "q": q, "row": i},
                        "level-label column escapes the relative augmentation ideal",
                    )
                    break
            if rec:
                break
        if rec:
            break
    records.append(
        rec
        or AxiomRecord(
            "B2", "PASS", None, "level-label columns lie in the relative augmentation ideal"
        )
    )
    # B3: first-order components match the functional/interaction table
    rec = None
    for n in datum.levels():
        if rec:
            break
        G = tower.group(n)
        psi = tower.psi(n)
        sub, inc = relaxed_module(datum, n)
        for q in n:
            if rec:
                break
            j = datum.pos(q)
            for t in range(sub.ngens):
                x = inc.apply(sub.gen(t))
                w = GroupRingElem.zero(G, datum.m)
                for i in range(datum.d):
                    w = w + datum.lift(x[i], G) * psi.rows[i][j]
                comps = i1_components(datum, G, w)
                for q2 in n:
                    if q2 == q:
                        expect = datum.apply_functional(datum.phi_fs[q], x)
                    else:
                        expect = datum.apply_functional(datum.v[q], x) * datum.cross[q][q2]
                    if comps.get(q2, datum.zero()) != expect:
                        rec = AxiomRecord(
                            "B3",
                            "FAIL",
                            {"n": list(n), "q": q, "gen": t, "component": q2},
                            "first-order component disagrees with the table",
                        )
                        break
                if rec:
                    break
    records.append(
        rec
        or AxiomRecord(
            "B3", "PASS", None, "first-order components match the functional and interaction table"
        )
    )
    return records


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def dumps(obj) -> str:
    """Canonical JSON serialization (sorted keys, no whitespace)."""
    return json.dumps(obj.payload(), sort_keys=True, separators=(",", ":"))


def loads(text: str):
    """Inverse of :func:`dumps`; raises ``ValueError`` on malformed input."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema") != SCHEMA:
        raise ValueError(f"expected schema {SCHEMA!r}")
    kind = data.get("kind")
    if kind == "selmer":
        return _datum_from_payload(data)
    if kind == "tower":
        datum = _datum_from_payload(data["datum"])
        psis = {}
        for levkey, rows in data["psis"].items():
            n = datum.level_key(levkey.split(",") if levkey else ())
            G = datum.tower_group(n)
            decoded = _decode_rows(G, datum.m, rows)
            psis[n] = RMatrix(G, datum.m, decoded, datum.d)
        return TowerDatum(datum, int(data["seed"]), int(data["noise_terms"]), psis)
    raise ValueError(f"unknown kind {kind!r}")


def _datum_from_payload(data: dict) -> SelmerDatum:
    if data.get("schema") != SCHEMA or data.get("kind") != "selmer":
        raise ValueError(f"expected a {SCHEMA!r} datum payload")
    try:
        p, k = int(data["p"]), int(data["k"])
        m = p**k
        gamma = int(data["gamma"])
        group = FinAbGroup((gamma,), (None,)) if gamma > 1 else FinAbGroup((), ())
        primes = tuple(data["primes"])

        def dec(t):
            return _decode_elem(group, m, t)

        datum = SelmerDatum(
            seed=int(data["seed"]),
            p=p,
            k=k,
            gamma_order=gamma,
            rank=int(data["rank"]),
            regime=data["regime"],
            primes=primes,
            prime_orders={q: int(data["prime_orders"][q]) for q in primes},
            h_ngens=int(data["h_ngens"]),
            h_rels=[[dec(t) for t in row] for row in data["h_rels"]],
            v={q: [dec(t) for t in data["v"][q]] for q in primes},
            phi_fs={q: [dec(t) for t in data["phi_fs"][q]] for q in primes},
            p_poly={q: data["p_poly"][q] for q in primes},
            q_poly={q: data["q_poly"][q] for q in primes},
            frob_log={q: data["frob_log"][q] for q in primes},
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed datum payload: {exc}") from exc
    stored = {
        q: {q2: int(c) % m for q2, c in data.get("cross", {}).get(q, {}).items()}
        for q in primes
    }
    if stored and stored != datum.cross:
        raise ValueError("stored interaction constants disagree with the polynomial table")
    return datum
