"""Exact computational algebra over Z/m and finite group rings.

Modules build on each other roughly bottom-up: ``zlin`` (Howell and
Smith forms), ``grouprings`` (group rings of finite abelian groups and
their augmentation filtration), ``modalg`` (finitely presented modules,
duals, exterior powers and biduals), ``fitting`` (Fitting ideals and
annihilators), ``complexes`` (two-term complexes, standard form,
determinant functionals), ``selmer_sim`` (seeded synthetic Selmer data
and towers), ``systems`` (Stark / Kolyvagin / derived collections and
the structural checks), ``cli`` (command-line front end).
"""

__version__ = "0.1.0"

from .errors import (
    BidualkitError,
    CannotComplete,
    CapExceeded,
    DatumNotRegular,
    EqualityFailure,
    IncompatibleFamily,
    MembershipFailure,
    NonSurjectiveDual,
    NormRelationFailure,
    NotDKS,
    NotInvariant,
    NotKS,
    NotSurjective,
    ShapeMismatch,
    TowerMismatch,
)
from .grouprings import (
    FinAbGroup,
    GroupRingElem,
    RMatrix,
    graded_piece,
    is_unit,
    kolyvagin_derivative,
    norm_element,
    ring_inverse,
    ring_projection,
    s_operator,
)
from .modalg import (
    FPModule,
    ModuleHom,
    bidual,
    bidual_element,
    dual,
    exterior_power,
    image_ideal,
    invariants_identify,
    submodule,
    xi,
)
from .fitting import Ideal, annihilator, fitting_ideal, relative_fitting
from .complexes import DetElement, StandardRep, TwoTermComplex, pi_image, pi_raw
from .selmer_sim import (
    SelmerDatum,
    TowerDatum,
    dumps,
    generate_selmer,
    generate_tower,
    loads,
    validate,
)
from .systems import (
    DerivedKS,
    EulerCollection,
    KolyvaginCollection,
    KolyvaginSystem,
    Report,
    StarkSystem,
    check_appendix,
    check_commutative,
    check_fitting_theorems,
    check_main,
    check_mrs,
    derivative_system,
    euler_from_tower,
    is_dks,
    is_kolyvagin,
    psi,
    psi_inv,
    regulator,
    stark_from_horizontal,
    stark_module,
    us_to_dks,
    v_transition,
)
