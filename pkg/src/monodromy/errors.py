"""Exception hierarchy shared across the package.

Every numeric failure mode has a named exception so that callers (and the
CLI exit-code mapping) can distinguish "bad input" from "the numerics did
not certify".
"""


class MonodromyError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionViolation(MonodromyError):
    """An operation was called outside its documented domain."""


# --- special functions -------------------------------------------------------

class PoleAtNonPositiveInteger(MonodromyError):
    """Argument of Gamma/digamma too close to a non-positive integer."""


class BranchCut(MonodromyError):
    """log_gamma evaluated on the negative real axis."""


# --- rational matrices, contours, quadrature ---------------------------------

class NearPole(MonodromyError):
    """Evaluation point too close to a pole of a rational function."""


class SingularFamily(MonodromyError):
    """Matrix rational function with identically vanishing determinant."""


class IllConditioned(MonodromyError):
    """Linearized rational fit system is numerically rank-deficient."""


class DegreeTooLow(MonodromyError):
    """Rational fit residual too large for the requested degrees."""


class NotRegular(MonodromyError):
    """Taylor expansion requested at a pole."""


class NonCongruentViolation(MonodromyError):
    """Required separation from integer translates failed."""


class NotConverged(MonodromyError):
    """Quadrature did not stabilize under node doubling."""


# --- difference equations -----------------------------------------------------

class ResonantSystem(MonodromyError):
    """ad(A0) has an eigenvalue in Z\\{0}; formal solution not unique."""


class TruncationInsufficient(MonodromyError):
    """Fundamental solutions did not stabilize under doubling of N."""


class PoleHit(MonodromyError):
    """Evaluation point of a fundamental solution hit a translated pole."""


class FitResidualTooLarge(MonodromyError):
    """Connection-matrix rational fit exceeded its residual budget."""


class PeriodicityViolation(MonodromyError):
    """Sampled connection matrix failed the 1-periodicity check."""


class NotCommuting(MonodromyError):
    """Commuting-family assumption violated on samples."""


class ClusterAmbiguity(MonodromyError):
    """Eigenvalue clustering unstable at the requested tolerance."""


class ConsistencyViolation(MonodromyError):
    """Logarithm choices do not sum to the prescribed residue matrix."""


class BranchOutOfDomain(MonodromyError):
    """A required logarithm falls outside the branch set."""


class NotUnipotent(MonodromyError):
    """Unipotent/nilpotent hypothesis violated."""


class RelationViolation(MonodromyError):
    """Residue-sum constraint of the unipotent factorization failed."""


class NonCongruentPi(MonodromyError):
    """The branch set itself failed its non-congruence test."""


# --- representation data ------------------------------------------------------

class RationalHbar(MonodromyError):
    """Deformation parameter indistinguishable from a small rational."""


class ZeroDilation(MonodromyError):
    """Loop-side shift by zero requested."""


class FactorizationFailure(MonodromyError):
    """Eigenvalue zeros/poles cannot be chained into shift ladders."""


class LocationOutsideDomain(MonodromyError):
    """q-character location outside the branch set."""


# --- functor ------------------------------------------------------------------

class QuadratureNotConverged(MonodromyError):
    """Contour integrals changed too much under node doubling."""


class RelationCheckFailed(MonodromyError):
    """Mandatory post-verification of algebra relations failed."""
