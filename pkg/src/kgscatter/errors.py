"""Exception hierarchy.

Every failure raised by the toolkit derives from :class:`KGScatterError`, so
callers (the CLI in particular) can catch one type and report the class name.
"""


class KGScatterError(Exception):
    """Base class for all toolkit errors."""


# geometry
class LineIntersectsObstacle(KGScatterError):
    pass


class RadiusTooSmall(KGScatterError):
    pass


class ConvexHullViolation(KGScatterError):
    pass


class LinkingNotQuantized(KGScatterError):
    """Linking quadrature did not settle near an integer after max refinement."""


class InvalidObstacle(KGScatterError):
    pass


# potentials
class DomainError(KGScatterError):
    pass


class EvaluationTooCloseToDisk(KGScatterError):
    pass


class QuadratureNonConvergent(KGScatterError):
    pass


class NonConvergent(KGScatterError):
    pass


class FluxMismatch(KGScatterError):
    pass


class DecayClassError(KGScatterError):
    pass


# lineflux
class SlowDecay(KGScatterError):
    pass


class NoRepresentative(KGScatterError):
    pass


class ClassCrossing(KGScatterError):
    pass


# hm_scattering
class ConfigNotFieldFree(KGScatterError):
    pass


class SupportViolation(KGScatterError):
    pass


# kg_solver
class StabilityViolation(KGScatterError):
    pass


class PacketEscaped(KGScatterError):
    pass


class InsufficientOverlap(KGScatterError):
    pass


class ResolutionTooCoarse(KGScatterError):
    pass


# inversion
class UnwrapAmbiguity(KGScatterError):
    pass


class InsufficientAngles(KGScatterError):
    pass


class PlaneBlocked(KGScatterError):
    pass


class MomentInversionIllposed(KGScatterError):
    pass


class ModeMismatch(KGScatterError):
    pass


class BCorrectionNonConvergent(KGScatterError):
    pass


class NotDetermined(KGScatterError):
    """The requested quantity is not determined by high-momenta scattering data."""


# cli / config
class ConfigError(KGScatterError):
    pass
