"""Exception types shared across the package."""


class DlganError(Exception):
    """Base class for all package-specific failures."""


class ConfigInvalid(DlganError):
    """A configuration field violates its constraints; message names the field."""


class ShapeMismatch(DlganError):
    pass


class FeatureCountMismatch(DlganError):
    pass


class NoNumericColumns(DlganError):
    pass


class EmptyAfterCleaning(DlganError):
    pass


class SeriesTooShort(DlganError):
    pass


class IndivisibleLength(DlganError):
    pass


class HeadDivisibility(DlganError):
    pass


class BadWindow(DlganError):
    pass


class MissingTarget(DlganError):
    pass


class UnexpectedTarget(DlganError):
    pass


class NonFiniteActivation(DlganError):
    pass


class NonFiniteLogit(DlganError):
    pass


class DivergenceDetected(DlganError):
    pass


class InsufficientData(DlganError):
    pass


class UntrainedCheckpoint(DlganError):
    pass


class VersionMismatch(DlganError):
    pass


class CorruptFile(DlganError):
    pass
