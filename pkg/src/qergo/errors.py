"""Exception and warning types shared across the package."""


class ModelError(ValueError):
    """Raised when a model construction recipe yields an invalid Markov model."""


class NondegeneracyError(RuntimeError):
    """Raised when the dominant eigenvalue is not simple within tolerance."""


class PositivityError(RuntimeError):
    """Raised when a principal eigenvector has genuinely mixed signs.

    This signals a reducible chain or a violated positivity-improving
    assumption rather than numerical noise.
    """


class DegenerateSupportError(ValueError):
    """Raised when an initial measure gives zero surviving mass."""


class FitError(ValueError):
    """Raised when a log-linear rate fit is impossible (nonpositive values)."""


class ClassifierError(ValueError):
    """Raised for profile/potential combinations the regime rules do not cover."""


class NonuniquenessWarning(UserWarning):
    """Emitted when the dominant transition eigenvalue is (nearly) degenerate,
    so the quasi-stationary measure need not be unique."""
