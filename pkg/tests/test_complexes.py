"""Tests for two-term complexes: cohomology, standard representatives,
determinant lines, the bidual projection, and determinant transitions."""

import random

import pytest

from bidualkit.complexes import (
    DetElement,
    StandardRep,
    TwoTermComplex,
    _complete_basis,
    block_diag,
    euler_factor,
    ev_ideal,
    ev_phi,
    horizontal_transition,
    matrix_inverse,
    pi_image,
    pi_map,
    standardize,
    vertical_transition,
)
from bidualkit.errors import CannotComplete, NotSurjective, ShapeMismatch
from bidualkit.fitting import Ideal, annihilator, fitting_ideal
from bidualkit.grouprings import (
    FinAbGroup,
    GroupRingElem,
    RMatrix,
    is_unit,
    ring_projection,
)
from bidualkit.modalg import (
    BidualElement,
    FPModule,
    ModuleHom,
    bidual_inclusion,
    dual,
    exterior_power,
    rdet,
    submodule,
    xi,
)

from ma_util import rnd_ring_elem

C3 = FinAbGroup((3,))


def scal(group, m, c):
    return GroupRingElem(group, m, {group.identity: c})


def rnd_unit(rng, group, m):
    while True:
        u = rnd_ring_elem(rng, group, m)
        if is_unit(u):
            return u


def rnd_unit_matrix(rng, group, m, d):
    if d == 0:
        return RMatrix(group, m, [], 0)
    while True:
        rows = [[rnd_ring_elem(rng, group, m) for _ in range(d)] for _ in range(d)]
        mat = RMatrix(group, m, rows, d)
        if is_unit(rdet(mat.rows)):
            return mat


def split_rep(rng, group, m, d, r):
    """Complex acting diagonally on the rows of a random basis ``B``:
    the leading ``r`` rows are killed and the trailing rows are scaled by
    units, so the degree-one cohomology is free of rank ``r``.  Returns the
    complex, an adapted representative, the units, and ``B``."""
    B = rnd_unit_matrix(rng, group, m, d)
    binv = matrix_inverse(B)
    units = [rnd_unit(rng, group, m) for _ in range(d - r)]
    zero = GroupRingElem.zero(group, m)
    diag = [[zero] * d for _ in range(d)]
    for j, u in enumerate(units):
        diag[r + j][r + j] = u
    psi = binv * RMatrix(group, m, diag, d) * B
    C = TwoTermComplex(group, m, psi)
    fmat = RMatrix(group, m, [[binv.rows[k][i] for i in range(r)] for k in range(d)], r)
    f = ModuleHom(C.h1(), FPModule.free(group, m, r), fmat)
    return C, StandardRep(C, f, B), units, B


def nonsplit_rep(rng, group, m, d, r):
    """Complex conjugated from an arbitrary matrix whose leading ``r``
    columns vanish (so the coordinate surjection is well defined), with the
    conjugating basis adapted by construction."""
    B = rnd_unit_matrix(rng, group, m, d)
    binv = matrix_inverse(B)
    zero = GroupRingElem.zero(group, m)
    rows = [
        [zero] * r + [rnd_ring_elem(rng, group, m) for _ in range(d - r)]
        for _ in range(d)
    ]
    psi = binv * RMatrix(group, m, rows, d) * B
    C = TwoTermComplex(group, m, psi)
    fmat = RMatrix(group, m, [[binv.rows[k][i] for i in range(r)] for k in range(d)], r)
    f = ModuleHom(C.h1(), FPModule.free(group, m, r), fmat)
    return C, StandardRep(C, f, B)


def diag_a_complex(m, a):
    """The 2x2 complex [[0,0],[0,a]] over (Z/m)[C3] with the coordinate
    surjection onto the class of the first generator."""
    zero = GroupRingElem.zero(C3, m)
    one = GroupRingElem.one(C3, m)
    psi = RMatrix(C3, m, [[zero, zero], [zero, a]], 2)
    C = TwoTermComplex(C3, m, psi)
    f = ModuleHom(C.h1(), FPModule.free(C3, m, 1), RMatrix(C3, m, [[one], [zero]], 1))
    return C, f


# ---------------------------------------------------------------------------
# the complex and its cohomology
# ---------------------------------------------------------------------------


class TestTwoTermComplex:
    def test_cohomology_of_diagonal_example(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        # H1 = R + R/3 over R = (Z/9)[C3]: 9^3 * 3^3 elements
        assert C.h1().cardinality() == 729 * 27
        kernel, inclusion = C.h0()
        assert kernel.cardinality() == 729 * 27
        hom = C.hom()
        for i in range(kernel.ngens):
            image = hom.apply(inclusion.apply(kernel.gen(i)))
            assert all(c.is_zero for c in image)

    def test_h0_and_h1_have_equal_cardinality(self):
        # the ring is self-injective and psi is square, so kernel and
        # cokernel have the same size
        for seed in range(3):
            rng = random.Random(seed)
            rows = [[rnd_ring_elem(rng, C3, 9) for _ in range(2)] for _ in range(2)]
            C = TwoTermComplex(C3, 9, RMatrix(C3, 9, rows, 2))
            assert C.h0()[0].cardinality() == C.h1().cardinality()

    def test_class_map_kills_relations(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        cmap = C.class_map()
        H1 = C.h1()
        for row in C.psi.rows:
            assert H1.is_zero_elem(cmap.apply(tuple(row)))
        for i in range(2):
            assert H1.eq(cmap.apply(C.module.gen(i)), H1.gen(i))

    def test_shape_errors(self):
        zero = GroupRingElem.zero(C3, 9)
        with pytest.raises(ShapeMismatch):
            TwoTermComplex(C3, 9, RMatrix(C3, 9, [[zero, zero]], 2))
        with pytest.raises(ShapeMismatch):
            TwoTermComplex(C3, 3, RMatrix(C3, 9, [[zero]], 1))

    def test_equality_and_hashing(self):
        a = scal(C3, 9, 3)
        C1, _ = diag_a_complex(9, a)
        C2, _ = diag_a_complex(9, a)
        C3_, _ = diag_a_complex(9, scal(C3, 9, 6))
        assert C1 == C2 and hash(C1) == hash(C2)
        assert C1 != C3_
        assert len({C1, C2, C3_}) == 2

    def test_module_is_free_of_rank_d(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        assert C.d == 2
        assert C.module == FPModule.free(C3, 9, 2)


# ---------------------------------------------------------------------------
# matrix inversion over the group ring
# ---------------------------------------------------------------------------


class TestMatrixInverse:
    def test_random_unit_matrices_have_two_sided_inverses(self):
        for d in (0, 1, 2, 3):
            rng = random.Random(10 + d)
            M = rnd_unit_matrix(rng, C3, 9, d)
            Minv = matrix_inverse(M)
            ident = RMatrix.identity(C3, 9, d)
            assert M * Minv == ident
            assert Minv * M == ident

    def test_non_unit_determinant_raises(self):
        with pytest.raises(ValueError):
            matrix_inverse(RMatrix(C3, 9, [[scal(C3, 9, 3)]], 1))

    def test_non_square_raises(self):
        zero = GroupRingElem.zero(C3, 9)
        with pytest.raises(ShapeMismatch):
            matrix_inverse(RMatrix(C3, 9, [[zero, zero]], 2))


# ---------------------------------------------------------------------------
# determinant-line elements
# ---------------------------------------------------------------------------


class TestDetElement:
    def test_unit_element(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        z = DetElement.unit(C)
        assert z.coeff == GroupRingElem.one(C3, 9)
        assert z.tag == "std"

    def test_coefficient_ring_is_checked(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        with pytest.raises(ShapeMismatch):
            DetElement(C, GroupRingElem.one(C3, 3))

    def test_base_change_keeps_coordinate_and_retags(self):
        # the wedge factor and the dual-wedge factor scale by mutually
        # inverse determinants, so the coordinate is untouched
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        rng = random.Random(5)
        z = DetElement(C, rnd_ring_elem(rng, C3, 9), "std")
        T = rnd_unit_matrix(rng, C3, 9, 2)
        moved = z.base_change(T, "adapted")
        assert moved.coeff == z.coeff
        assert moved.tag == "adapted"

    def test_base_change_requires_invertible_transform(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        z = DetElement.unit(C)
        T = RMatrix.identity(C3, 9, 2) * scal(C3, 9, 3)
        with pytest.raises(ValueError):
            z.base_change(T, "bad")
        with pytest.raises(ShapeMismatch):
            z.base_change(RMatrix.identity(C3, 9, 3), "bad")

    def test_equality_respects_tags_and_complexes(self):
        a = scal(C3, 9, 3)
        C1, _ = diag_a_complex(9, a)
        C2, _ = diag_a_complex(9, scal(C3, 9, 6))
        assert DetElement.unit(C1) == DetElement.unit(C1)
        assert DetElement.unit(C1) != DetElement.unit(C1, tag="other")
        assert DetElement.unit(C1) != DetElement.unit(C2)


# ---------------------------------------------------------------------------
# standard representatives
# ---------------------------------------------------------------------------


class TestStandardRep:
    def test_valid_adapted_basis(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        assert rep.r == 1 and rep.d == 2
        assert rep.m_x == RMatrix.identity(C3, 9, 1)
        assert rep.det_mx == GroupRingElem.one(C3, 9)

    def test_trailing_vector_surviving_rejected(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        zero, one = GroupRingElem.zero(C3, 9), GroupRingElem.one(C3, 9)
        swapped = RMatrix(C3, 9, [[zero, one], [one, zero]], 2)
        with pytest.raises(ValueError, match="survives"):
            StandardRep(C, f, swapped)

    def test_non_surjective_map_rejected(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        zero = GroupRingElem.zero(C3, 9)
        fmat = RMatrix(C3, 9, [[scal(C3, 9, 3)], [zero]], 1)
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 1), fmat)
        with pytest.raises(NotSurjective):
            StandardRep(C, f, RMatrix.identity(C3, 9, 2))

    def test_wrong_source_rejected(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        other = ModuleHom(
            FPModule.free(C3, 9, 2),
            FPModule.free(C3, 9, 1),
            f.mat,
        )
        with pytest.raises(ShapeMismatch):
            StandardRep(C, other, RMatrix.identity(C3, 9, 2))

    def test_non_basis_rows_rejected(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        degenerate = RMatrix.identity(C3, 9, 2) * scal(C3, 9, 3)
        with pytest.raises(ValueError, match="basis"):
            StandardRep(C, f, degenerate)

    def test_target_rank_above_complex_rank_rejected(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        zero = GroupRingElem.zero(C3, 9)
        f = ModuleHom(
            C.h1(),
            FPModule.free(C3, 9, 3),
            RMatrix(C3, 9, [[zero] * 3, [zero] * 3], 3),
        )
        with pytest.raises(ShapeMismatch):
            StandardRep(C, f, RMatrix.identity(C3, 9, 2))


class TestStandardize:
    def test_zero_map_full_rank_target(self):
        # psi = 0: the degree-one cohomology is the whole free module and
        # any basis is adapted
        C = TwoTermComplex(C3, 9, RMatrix.zeros(C3, 9, 2, 2))
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 2), RMatrix.identity(C3, 9, 2))
        rep = standardize(C, f)
        assert rep.r == 2
        assert is_unit(rep.det_mx)

    def test_machine_basis_on_diagonal_example(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        rep = standardize(C, f)
        assert rep.r == 1
        # exactness: the classes of the trailing vectors span the kernel
        # of f, of size |H1| / |X|
        H1 = C.h1()
        sub, _ = submodule(H1, [tuple(rep.basis.rows[1])])
        assert sub.cardinality() == H1.cardinality() // f.tgt.cardinality()

    def test_rank_zero_target(self):
        # psi invertible: trivial cohomology, the only surjection is onto
        # the rank-zero module and the projection line is a unit
        C = TwoTermComplex(C3, 9, RMatrix.identity(C3, 9, 2))
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 0), RMatrix(C3, 9, [[], []], 0))
        rep = standardize(C, f)
        assert rep.r == 0
        assert C.h1().cardinality() == 1

    def test_trailing_classes_span_kernel_on_seeded_complexes(self):
        for seed, (d, r, m) in [(21, (2, 1, 9)), (22, (3, 1, 3)), (23, (3, 2, 9))]:
            rng = random.Random(seed)
            C, built = nonsplit_rep(rng, C3, m, d, r)
            rep = standardize(C, built.f)
            H1 = C.h1()
            sub, _ = submodule(H1, [tuple(rep.basis.rows[i]) for i in range(r, d)])
            assert sub.cardinality() * rep.f.tgt.cardinality() == H1.cardinality()

    def test_not_surjective(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 1), RMatrix.zeros(C3, 9, 2, 1))
        with pytest.raises(NotSurjective):
            standardize(C, f)

    def test_complete_basis_reports_exhaustion(self):
        one = GroupRingElem.one(C3, 9)
        zero = GroupRingElem.zero(C3, 9)
        initial = [(one, zero)]
        candidates = [(one, zero), (zero, scal(C3, 9, 3))]
        with pytest.raises(CannotComplete):
            _complete_basis(C3, 9, initial, candidates, 2)


# ---------------------------------------------------------------------------
# the projection into the exterior bidual
# ---------------------------------------------------------------------------


class TestPiImage:
    def test_diagonal_example_pin(self):
        # psi = [[0,0],[0,a]]: the determinant generator projects to the
        # image of a*(first generator) in the bidual
        a = scal(C3, 9, 3)
        C, f = diag_a_complex(9, a)
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        img = pi_image(rep, DetElement.unit(C))
        P = C.module
        zero = GroupRingElem.zero(C3, 9)
        expected = BidualElement(P, 1, xi(P, 1).apply((a, zero)))
        assert img.raw == expected

    def test_corestriction_is_consistent(self):
        a = scal(C3, 9, 3)
        C, f = diag_a_complex(9, a)
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        img = pi_image(rep, DetElement.unit(C))
        binc = bidual_inclusion(img.inclusion, rep.r)
        lifted = binc.apply(img.element)
        assert tuple(lifted) == tuple(img.raw.coords)

    def test_zero_entry_gives_zero_image(self):
        C, f = diag_a_complex(9, GroupRingElem.zero(C3, 9))
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        img = pi_image(rep, DetElement.unit(C))
        assert all(c.is_zero for c in img.raw.coords)

    def test_zero_complex_top_rank_pin(self):
        # psi = 0 with d = r: the projection sends the determinant
        # generator to the image of the full basis wedge
        C = TwoTermComplex(C3, 9, RMatrix.zeros(C3, 9, 2, 2))
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 2), RMatrix.identity(C3, 9, 2))
        rep = standardize(C, f)
        img = pi_image(rep, DetElement.unit(C))
        P = C.module
        top = exterior_power(P, 2)
        wedge = top.wedge([P.gen(0), P.gen(1)])
        assert img.raw == BidualElement(P, 2, xi(P, 2).apply(wedge))

    def test_split_complexes_match_hand_formula(self):
        # diagonal action on an adapted basis: the projection of the
        # determinant generator is the product of the trailing units times
        # the image of the leading basis wedge
        cases = [
            (31, (2, 1, 9)),
            (32, (2, 1, 3)),
            (33, (3, 1, 9)),
            (34, (3, 2, 3)),
            (35, (3, 2, 9)),
            (36, (2, 2, 9)),
            (37, (3, 3, 3)),
        ]
        for seed, (d, r, m) in cases:
            rng = random.Random(seed)
            C, rep, units, B = split_rep(rng, C3, m, d, r)
            img = pi_image(rep, DetElement.unit(C))
            P = C.module
            prod = GroupRingElem.one(C3, m)
            for u in units:
                prod = prod * u
            wedge = exterior_power(P, r).wedge([tuple(B.rows[i]) for i in range(r)])
            expected = BidualElement(P, r, xi(P, r).apply(tuple(prod * c for c in wedge)))
            assert img.raw == expected, f"seed {seed}"

    def test_output_independent_of_adapted_basis(self):
        # replace the adapted basis by another one adapted to the same
        # surjection: leading rows shifted by kernel rows, trailing rows
        # mixed by a unit transform; the projection must not move
        cases = [(41, (2, 1, 9)), (42, (3, 2, 3)), (43, (3, 1, 9))]
        for seed, (d, r, m) in cases:
            rng = random.Random(seed)
            C, rep = nonsplit_rep(rng, C3, m, d, r)
            z = DetElement(C, rnd_ring_elem(rng, C3, m))
            base = pi_image(rep, z)
            zero = GroupRingElem.zero(C3, m)
            for _ in range(2):
                W = rnd_unit_matrix(rng, C3, m, d - r)
                blocks = [
                    [
                        scal(C3, m, 1 if i == j else 0)
                        for j in range(r)
                    ]
                    + [rnd_ring_elem(rng, C3, m) for _ in range(d - r)]
                    for i in range(r)
                ]
                blocks += [
                    [zero] * r + list(W.rows[i]) for i in range(d - r)
                ]
                T = RMatrix(C3, m, blocks, d)
                rep2 = StandardRep(C, rep.f, T * rep.basis)
                again = pi_image(rep2, z)
                assert again.raw == base.raw, f"seed {seed}"
                assert again.element == base.element, f"seed {seed}"
            machine = pi_image(standardize(C, rep.f), z)
            assert machine.raw == base.raw, f"seed {seed}"

    def test_pi_map_matrix_row(self):
        C, f = diag_a_complex(9, scal(C3, 9, 3))
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        hom = pi_map(rep)
        img = pi_image(rep, DetElement.unit(C))
        assert hom.src == FPModule.free(C3, 9, 1)
        assert tuple(hom.mat.rows[0]) == tuple(img.element)
        assert hom.apply(hom.src.gen(0)) == tuple(img.element)

    def test_projection_is_linear_in_the_coefficient(self):
        rng = random.Random(44)
        C, rep = nonsplit_rep(rng, C3, 9, 2, 1)
        c = rnd_ring_elem(rng, C3, 9)
        one_img = pi_image(rep, DetElement.unit(C))
        scaled_img = pi_image(rep, DetElement(C, c))
        assert tuple(scaled_img.raw.coords) == tuple(c * v for v in one_img.raw.coords)


# ---------------------------------------------------------------------------
# evaluation against dual functionals
# ---------------------------------------------------------------------------


class TestEvaluation:
    def test_values_on_the_diagonal_example(self):
        a = scal(C3, 9, 3)
        C, f = diag_a_complex(9, a)
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        P = C.module
        Pstar = dual(P)
        ext = exterior_power(Pstar, 1)
        z = DetElement.unit(C)
        e1 = ext.element(Pstar.element(P.gen(0)))
        e2 = ext.element(Pstar.element(P.gen(1)))
        assert ev_phi(rep, e1, z) == a
        assert ev_phi(rep, e2, z).is_zero

    def test_ev_ideal_of_diagonal_example(self):
        a = scal(C3, 9, 3)
        C, f = diag_a_complex(9, a)
        rep = StandardRep(C, f, RMatrix.identity(C3, 9, 2))
        assert ev_ideal(rep) == Ideal.principal(a)
        assert ev_ideal(rep) == fitting_ideal(C.h1(), 1)

    def test_rank_zero_cases_give_determinant_ideal(self):
        # invertible psi: unit ideal; diagonal psi with one non-unit: the
        # ideal of the determinant
        C = TwoTermComplex(C3, 9, RMatrix.identity(C3, 9, 2))
        f = ModuleHom(C.h1(), FPModule.free(C3, 9, 0), RMatrix(C3, 9, [[], []], 0))
        assert ev_ideal(standardize(C, f)).is_unit

        a = scal(C3, 9, 3)
        one = GroupRingElem.one(C3, 9)
        zero = GroupRingElem.zero(C3, 9)
        C2 = TwoTermComplex(C3, 9, RMatrix(C3, 9, [[one, zero], [zero, a]], 2))
        f2 = ModuleHom(C2.h1(), FPModule.free(C3, 9, 0), RMatrix(C3, 9, [[], []], 0))
        assert ev_ideal(standardize(C2, f2)) == Ideal.principal(a)
        assert ev_ideal(standardize(C2, f2)) == fitting_ideal(C2.h1(), 0)

    def test_evaluation_ideal_equals_fitting_ideals(self):
        # the ideal of all evaluations equals the r-th Fitting ideal of the
        # degree-one cohomology and the zeroth Fitting ideal of ker f, and
        # in particular the annihilators agree
        cases = [
            (51, (2, 1, 9), True),
            (52, (3, 2, 3), True),
            (53, (2, 1, 9), False),
            (54, (3, 1, 3), False),
            (55, (3, 2, 9), False),
            (56, (2, 2, 3), False),
        ]
        for seed, (d, r, m), split in cases:
            rng = random.Random(seed)
            if split:
                C, rep, _, _ = split_rep(rng, C3, m, d, r)
            else:
                C, rep = nonsplit_rep(rng, C3, m, d, r)
            I_ev = ev_ideal(rep)
            I_fit = fitting_ideal(C.h1(), r)
            kmod, _ = rep.f.kernel()
            I_ker = fitting_ideal(kmod, 0)
            assert I_ev == I_fit, f"seed {seed}"
            assert I_fit == I_ker, f"seed {seed}"
            assert annihilator(I_ev) == annihilator(I_ker), f"seed {seed}"


# ---------------------------------------------------------------------------
# characteristic scalars of action blocks
# ---------------------------------------------------------------------------


class TestEulerFactor:
    def test_zero_and_identity_actions(self):
        assert euler_factor(RMatrix.zeros(C3, 9, 2, 2)) == GroupRingElem.one(C3, 9)
        assert euler_factor(RMatrix.identity(C3, 9, 2)).is_zero

    def test_companion_matrix_pin(self):
        # action by the companion matrix of x^2 - x - 1 over Z/3:
        # det(1 - U) = -1
        triv = FinAbGroup(())
        one = GroupRingElem.one(triv, 3)
        zero = GroupRingElem.zero(triv, 3)
        U = RMatrix(triv, 3, [[zero, one], [one, one]], 2)
        assert euler_factor(U) == -one

    def test_single_entry(self):
        rng = random.Random(61)
        u = rnd_ring_elem(rng, C3, 9)
        U = RMatrix(C3, 9, [[u]], 1)
        assert euler_factor(U) == GroupRingElem.one(C3, 9) - u

    def test_multiplicative_over_block_sums(self):
        rng = random.Random(62)
        U1 = RMatrix(C3, 9, [[rnd_ring_elem(rng, C3, 9) for _ in range(2)] for _ in range(2)], 2)
        U2 = RMatrix(C3, 9, [[rnd_ring_elem(rng, C3, 9)]], 1)
        combined = euler_factor(block_diag(C3, 9, [U1, U2]))
        assert combined == euler_factor(U1) * euler_factor(U2)

    def test_non_square_raises(self):
        zero = GroupRingElem.zero(C3, 9)
        with pytest.raises(ShapeMismatch):
            euler_factor(RMatrix(C3, 9, [[zero, zero]], 2))


# ---------------------------------------------------------------------------
# horizontal transitions
# ---------------------------------------------------------------------------


def embed_with_blocks(C_small, positions, entries):
    """Build a larger complex containing ``C_small`` with fully decoupled
    extra coordinates at ``positions`` carrying the given diagonal
    entries."""
    group, m = C_small.group, C_small.m
    d = C_small.d + len(positions)
    zero = GroupRingElem.zero(group, m)
    rows = [[zero] * d for _ in range(d)]
    kept = [i for i in range(d) if i not in positions]
    for i, a in enumerate(kept):
        for j, b in enumerate(kept):
            rows[a][b] = C_small.psi.rows[i][j]
    for pos, entry in zip(sorted(positions), entries):
        rows[pos][pos] = entry
    return TwoTermComplex(group, m, RMatrix(group, m, rows, d))


class TestHorizontalTransition:
    def test_no_blocks_is_identity(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        rng = random.Random(71)
        z = DetElement(C, rnd_ring_elem(rng, C3, 9))
        moved = horizontal_transition(z, C, [])
        assert moved == z

    def test_split_block_keeps_coordinate(self):
        rng = random.Random(72)
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        for entry in (GroupRingElem.zero(C3, 9), rnd_ring_elem(rng, C3, 9)):
            big = embed_with_blocks(C, [2], [entry])
            z = DetElement(big, rnd_ring_elem(rng, C3, 9))
            moved = horizontal_transition(z, C, [2])
            assert moved.complex == C
            assert moved.coeff == z.coeff
            assert moved.tag == z.tag

    def test_block_position_may_interleave(self):
        rng = random.Random(73)
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        entry = rnd_ring_elem(rng, C3, 9)
        big = embed_with_blocks(C, [1], [entry])
        z = DetElement(big, rnd_ring_elem(rng, C3, 9))
        moved = horizontal_transition(z, C, [1])
        assert moved.coeff == z.coeff

    def test_composite_of_single_splits_equals_direct(self):
        rng = random.Random(74)
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        e1, e2 = rnd_ring_elem(rng, C3, 9), rnd_ring_elem(rng, C3, 9)
        big = embed_with_blocks(C, [1, 3], [e1, e2])
        mid_drop_first = embed_with_blocks(C, [2], [e2])
        mid_drop_second = embed_with_blocks(C, [1], [e1])
        z = DetElement(big, rnd_ring_elem(rng, C3, 9))
        direct = horizontal_transition(z, C, [1, 3])
        via_first = horizontal_transition(
            horizontal_transition(z, mid_drop_first, [1]), C, [2]
        )
        via_second = horizontal_transition(
            horizontal_transition(z, mid_drop_second, [3]), C, [1]
        )
        assert direct == via_first == via_second

    def test_coupled_coordinate_rejected(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        big = embed_with_blocks(C, [2], [scal(C3, 9, 2)])
        rows = [list(row) for row in big.psi.rows]
        rows[0][2] = GroupRingElem.one(C3, 9)
        coupled = TwoTermComplex(C3, 9, RMatrix(C3, 9, rows, 3))
        z = DetElement.unit(coupled)
        with pytest.raises(ShapeMismatch, match="coupled"):
            horizontal_transition(z, C, [2])

    def test_kept_part_must_match_target(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        other, _ = diag_a_complex(9, scal(C3, 9, 6))
        big = embed_with_blocks(C, [2], [scal(C3, 9, 2)])
        z = DetElement.unit(big)
        with pytest.raises(ShapeMismatch, match="match"):
            horizontal_transition(z, other, [2])

    def test_rank_and_position_errors(self):
        C, _ = diag_a_complex(9, scal(C3, 9, 3))
        big = embed_with_blocks(C, [2], [scal(C3, 9, 2)])
        z = DetElement.unit(big)
        with pytest.raises(ShapeMismatch):
            horizontal_transition(z, C, [])
        with pytest.raises(ShapeMismatch):
            horizontal_transition(z, C, [5])
        with pytest.raises(ShapeMismatch):
            horizontal_transition(z, C, [2, 2])


# ---------------------------------------------------------------------------
# vertical transitions
# ---------------------------------------------------------------------------

G_S = FinAbGroup((3,), ("s",))
G_SG = FinAbGroup((3, 3), ("s", "g"))
G_G9 = FinAbGroup((9,), ("g",))
G_G3 = FinAbGroup((3,), ("g",))
G_TRIV = FinAbGroup(())


class TestVerticalTransition:
    def test_same_group_no_blocks_is_identity(self):
        rng = random.Random(81)
        rows = [[rnd_ring_elem(rng, G_S, 9) for _ in range(2)] for _ in range(2)]
        C = TwoTermComplex(G_S, 9, RMatrix(G_S, 9, rows, 2))
        z = DetElement(C, rnd_ring_elem(rng, G_S, 9))
        moved = vertical_transition(z, C, [])
        assert moved == z

    def test_scalar_block_pin(self):
        # collapse (Z/9)[Z/3] onto Z/9: the one surviving block contributes
        # its characteristic scalar
        g = GroupRingElem.monomial(G_G3, 9, (1,))
        x = GroupRingElem.one(G_G3, 9) - g + scal(G_G3, 9, 4) * g  # augments to 4
        C_top = TwoTermComplex(G_G3, 9, RMatrix(G_G3, 9, [[x]], 1))
        C_bot = TwoTermComplex(G_TRIV, 9, RMatrix(G_TRIV, 9, [], 0))
        u = scal(G_TRIV, 9, 1) - ring_projection(x, G_TRIV)  # 1 - 4 = -3
        U = RMatrix(G_TRIV, 9, [[u]], 1)
        coeff = GroupRingElem.monomial(G_G3, 9, (1,), 2)  # 2g, augments to 2
        z = DetElement(C_top, coeff)
        moved = vertical_transition(z, C_bot, [U])
        assert moved.complex == C_bot
        assert moved.coeff == scal(G_TRIV, 9, 2 * 4)

    def test_three_level_chain_composes(self):
        # (Z/9)[Z/9] -> (Z/9)[Z/3] -> Z/9 with one block split off at each
        # step: the composite transition equals the direct one
        rng = random.Random(82)
        m = 9
        s = rnd_ring_elem(rng, G_G9, m, terms=3)
        t = rnd_ring_elem(rng, G_G9, m, terms=3)
        zero = GroupRingElem.zero(G_G9, m)
        C2 = TwoTermComplex(G_G9, m, RMatrix(G_G9, m, [[s, zero], [zero, t]], 2))
        s1 = ring_projection(s, G_G3)
        t1 = ring_projection(t, G_G3)
        C1 = TwoTermComplex(G_G3, m, RMatrix(G_G3, m, [[s1]], 1))
        C0 = TwoTermComplex(G_TRIV, m, RMatrix(G_TRIV, m, [], 0))
        one3 = GroupRingElem.one(G_G3, m)
        one0 = GroupRingElem.one(G_TRIV, m)
        U_a = RMatrix(G_G3, m, [[one3 - t1]], 1)
        U_b = RMatrix(G_TRIV, m, [[one0 - ring_projection(s1, G_TRIV)]], 1)
        U_a0 = RMatrix(G_TRIV, m, [[one0 - ring_projection(s, G_TRIV)]], 1)
        U_b0 = RMatrix(G_TRIV, m, [[one0 - ring_projection(t, G_TRIV)]], 1)
        z = DetElement(C2, rnd_ring_elem(rng, G_G9, m, terms=3))
        composite = vertical_transition(vertical_transition(z, C1, [U_a]), C0, [U_b])
        direct = vertical_transition(z, C0, [U_a0, U_b0])
        assert composite == direct

    def test_projection_mismatch_rejected(self):
        g = GroupRingElem.monomial(G_G3, 9, (1,))
        one = GroupRingElem.one(G_G3, 9)
        C_top = TwoTermComplex(G_G3, 9, RMatrix(G_G3, 9, [[g + one]], 1))
        C_bot = TwoTermComplex(G_TRIV, 9, RMatrix(G_TRIV, 9, [], 0))
        wrong = RMatrix(G_TRIV, 9, [[scal(G_TRIV, 9, 5)]], 1)
        with pytest.raises(ShapeMismatch, match="split"):
            vertical_transition(DetElement.unit(C_top), C_bot, [wrong])

    def test_ring_checks(self):
        C_top = TwoTermComplex(G_G3, 9, RMatrix(G_G3, 9, [[GroupRingElem.one(G_G3, 9)]], 1))
        C_bot3 = TwoTermComplex(G_TRIV, 3, RMatrix(G_TRIV, 3, [], 0))
        with pytest.raises(ShapeMismatch):
            vertical_transition(DetElement.unit(C_top), C_bot3, [])
        C_bot = TwoTermComplex(G_TRIV, 9, RMatrix(G_TRIV, 9, [], 0))
        bad_block = RMatrix(G_G3, 9, [[GroupRingElem.zero(G_G3, 9)]], 1)
        with pytest.raises(ShapeMismatch):
            vertical_transition(DetElement.unit(C_top), C_bot, [bad_block])

    def test_norm_relation_on_two_level_towers(self):
        # push the projection of a determinant element down a two-level
        # tower: the fibre-sum of the top evaluation equals the evaluation
        # of the transported element, i.e. the bottom value picks up the
        # characteristic scalar of the split-off block
        for seed in (83, 84, 85):
            rng = random.Random(seed)
            m = 9
            d, r = 3, 1
            units = [rnd_unit(rng, G_SG, m) for _ in range(d - r)]
            zero_sg = GroupRingElem.zero(G_SG, m)
            rows = [[zero_sg] * d for _ in range(d)]
            for j, u in enumerate(units):
                rows[r + j][r + j] = u
            C_top = TwoTermComplex(G_SG, m, RMatrix(G_SG, m, rows, d))
            f_top = ModuleHom(
                C_top.h1(),
                FPModule.free(G_SG, m, r),
                RMatrix(G_SG, m, [[GroupRingElem.one(G_SG, m)]] + [[zero_sg]] * (d - 1), r),
            )
            rep_top = StandardRep(C_top, f_top, RMatrix.identity(G_SG, m, d))

            kept = ring_projection(units[0], G_S)
            dropped = ring_projection(units[1], G_S)
            zero_s = GroupRingElem.zero(G_S, m)
            C_bot = TwoTermComplex(
                G_S, m, RMatrix(G_S, m, [[zero_s, zero_s], [zero_s, kept]], 2)
            )
            f_bot = ModuleHom(
                C_bot.h1(),
                FPModule.free(G_S, m, r),
                RMatrix(G_S, m, [[GroupRingElem.one(G_S, m)], [zero_s]], r),
            )
            rep_bot = StandardRep(C_bot, f_bot, RMatrix.identity(G_S, m, 2))
            U = RMatrix(G_S, m, [[GroupRingElem.one(G_S, m) - dropped]], 1)

            z_top = DetElement(C_top, rnd_ring_elem(rng, G_SG, m))
            z_bot = vertical_transition(z_top, C_bot, [U])

            def first_dual_wedge(C):
                P = C.module
                Pstar = dual(P)
                return exterior_power(Pstar, r).element(Pstar.element(P.gen(0)))

            top_value = ev_phi(rep_top, first_dual_wedge(C_top), z_top)
            bot_value = ev_phi(rep_bot, first_dual_wedge(C_bot), z_bot)
            assert ring_projection(top_value, G_S) == bot_value, f"seed {seed}"

            plain = DetElement(C_bot, ring_projection(z_top.coeff, G_S))
            plain_value = ev_phi(rep_bot, first_dual_wedge(C_bot), plain)
            assert ring_projection(top_value, G_S) == euler_factor(U) * plain_value, (
                f"seed {seed}"
            )
