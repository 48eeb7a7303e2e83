"""Exception types shared across the package.

Each class corresponds to a contract violation or a legitimate negative
outcome that callers are expected to catch.  Plain ``ValueError`` is used
for malformed arguments (wrong dimensions, bad moduli); the classes here
carry domain meaning.
"""


class BidualkitError(Exception):
    """Base class for all domain errors raised by this package."""


class CapExceeded(BidualkitError):
    """A combinatorial size cap (exterior-power degree, enumeration bound)
    was exceeded.  Carries the offending size in args."""


class NonSurjectiveDual(BidualkitError):
    """A dual-module map expected to be surjective is not; the bidual
    inclusion cannot be inverted along it."""


class ShapeMismatch(BidualkitError):
    """Two complexes or families that must share shape data (rank, level
    sets, coefficient ring) do not."""


class NotSurjective(BidualkitError):
    """The designated surjection of a complex fails to be onto."""


class CannotComplete(BidualkitError):
    """No basis completion exists for the requested adapted form."""


class DatumNotRegular(BidualkitError):
    """Tower-level constructions require a regular datum (all local
    conditions split with unit local factors); this datum is not."""


class IncompatibleFamily(BidualkitError):
    """A family of per-level classes violates the compatibility its
    construction requires (horizontal transition mismatch)."""


class NotKS(BidualkitError):
    """The collection fails the Kolyvagin-system finite-singular relation;
    args carry the first failing (level, prime) witness."""


class NotDKS(BidualkitError):
    """The collection fails the derived-system congruence relations;
    args carry the first failing (level, prime) witness."""


class TowerMismatch(BidualkitError):
    """A tower and a datum (or two towers) that must come from the same
    seeded instance do not match."""


class NormRelationFailure(BidualkitError):
    """Vertical transitions of the tower classes fail the expected
    norm relation; args carry the failing (level, sublevel) pair."""


class NotInvariant(BidualkitError):
    """An element expected to be invariant under the level group is not."""


class MembershipFailure(BidualkitError):
    """A class expected to lie in the stated filtration step (or submodule)
    does not; args carry the (level, coordinate) witness."""


class EqualityFailure(BidualkitError):
    """Two classes that a congruence identity requires to be equal are not;
    args carry the (level, coordinate) witness."""
