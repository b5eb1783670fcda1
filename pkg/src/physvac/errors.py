"""Exception types shared across the package.

Each error names the contract it guards; modules raise these instead of
bare ValueError so drivers can map failures to precise report lines.
"""


class PhysvacError(Exception):
    """Base class for all package errors."""


class DegenerateBoundary(PhysvacError):
    """Defining function fails the nondegeneracy screen at a located root."""


class NegativeInterior(PhysvacError):
    """Defining function dips negative strictly inside the fluid domain."""


class InsufficientResolution(PhysvacError):
    """Grid or smoothness budget cannot support the requested derivative."""


class OutOfHull(PhysvacError):
    """Resampling target lies beyond the source hull plus one stencil width."""


class WeightNotIntegrable(PhysvacError):
    """Weight exponent at or below -1/2; the weighted L2 norm diverges."""


class ParameterMismatch(PhysvacError):
    """Embedding audit parameters violate the admissible trade."""


class InadmissibleExponents(PhysvacError):
    """Interpolation audit exponents break the stated balance constraints."""


class EmptyDecomposition(PhysvacError):
    """Frequency envelope requested for an empty list of pieces."""


class IllConditionedMoments(PhysvacError):
    """Bump moment-correction system is numerically singular."""


class ScaleTooFine(PhysvacError):
    """Regularization scale 2^-2h is unresolvable on the given grid."""


class BoundaryLost(PhysvacError):
    """Regularized defining function has no sign change in the enlarged domain."""


class WeightFailure(PhysvacError):
    """Operator assembly called with an invalid kappa or weight."""


class SpectralFailure(PhysvacError):
    """Generalized symmetric eigensolver failed to converge."""


class DomainsDisjoint(PhysvacError):
    """Two states share no common domain, or are not Lipschitz-close."""


class KappaMismatch(PhysvacError):
    """Distance between states with different kappa is undefined."""


class DegenerateDenominator(PhysvacError):
    """Equivalence ratio requested for an identically close pair."""


class NoRoot(PhysvacError):
    """Weight-profile moment correction could not be bracketed."""


class MeshTangled(PhysvacError):
    """Flow transport produced a non-monotone node map."""


class BootstrapBreach(PhysvacError):
    """Control norm B exceeded its bootstrap bound during evolution."""


class BackgroundTooCoarse(PhysvacError):
    """Linearized solve needs the background stored at every step."""


class OdeBlowup(PhysvacError):
    """Affine oracle ODE system left the admissible region."""


class TimestepCollapse(PhysvacError):
    """Lagrangian solver CFL time step shrank below the useful floor."""


class UnbalancedResidual(PhysvacError):
    """Recurrence residual contains an endpoint term; engine bug."""


class ConfigError(PhysvacError):
    """Run configuration failed validation; message names the constraint."""
