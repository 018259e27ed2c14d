"""Exception hierarchy shared by all modules."""


class SpecregError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(SpecregError, ValueError):
    """An argument violates a documented precondition."""


class GridMismatchError(SpecregError):
    """Two grid-based objects do not live on the same grid."""


class DecompositionError(SpecregError):
    """A matrix factorization failed or a required solve is singular."""


class DegenerateDensityError(SpecregError):
    """A constructed density has nonpositive total mass."""


class DegenerateFunctionalError(SpecregError):
    """A linear functional is numerically in the null space of the plug-in
    operator; pointwise CLT-based intervals are unavailable for it."""


class EnvelopeError(SpecregError):
    """A rejection sampler saw a target value above its envelope."""


class ConfigError(SpecregError):
    """A benchmark configuration file failed to parse or validate."""
