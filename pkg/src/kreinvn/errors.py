"""Exception types shared across the package."""


class SpaceMismatchError(ValueError):
    """A grid function or operator does not belong to the expected space."""


class RankDeficiencyError(ValueError):
    """A set of vectors or a constraint matrix is numerically rank deficient."""


class SpectrumError(ValueError):
    """A spectral parameter lies in (or too close to) the spectrum."""


class NotRelativelyPrimeError(ValueError):
    """Two extensions share boundary conditions beyond the minimal domain."""


class SingularBracketError(ValueError):
    """A matrix that a resolvent formula must invert is singular."""
