"""Exception types raised by tomolr."""


class TomographyError(Exception):
    """Base class for all tomolr errors."""


class DimensionMismatch(TomographyError, ValueError):
    pass


class InvalidOperator(TomographyError, ValueError):
    """An operator or state failed a Hermiticity / trace / positivity check."""


class RankDeficient(TomographyError):
    """The design matrix does not have full column rank d**2."""


class SingularSystem(TomographyError):
    """A linear system with gamma = 0 could not be factorized."""


class DegenerateProbability(TomographyError, ValueError):
    """Some outcome probability is 0 or 1, so the true weight is undefined."""


class DegenerateState(TomographyError):
    """The state is the maximally mixed state, for which gamma* does not exist."""


class IncompleteMeasurement(TomographyError, ValueError):
    """Collective sampling was requested on a POVM that does not sum to identity."""
