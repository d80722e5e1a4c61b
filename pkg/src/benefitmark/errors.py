"""Exception hierarchy shared by all benefitmark modules."""


class BenefitmarkError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BenefitmarkError, ValueError):
    """Input data or configuration does not satisfy a contract."""


class DegenerateError(BenefitmarkError, ValueError):
    """A quantity is undefined for the given data (zero denominator, empty group)."""


class FitError(BenefitmarkError):
    """A model fit failed."""


class RankDeficientError(FitError):
    pass


class SeparationError(FitError):
    pass


class ConvergenceError(FitError):
    pass


class BootstrapError(BenefitmarkError):
    """Too many bootstrap replicates failed."""
