"""Exception types raised across the toolkit."""


class EEGVerifyError(Exception):
    """Base class for all toolkit errors."""


# dataset-io
class ParseError(EEGVerifyError, ValueError):
    pass


class MissingFile(EEGVerifyError, FileNotFoundError):
    pass


class SplitOverlap(EEGVerifyError, ValueError):
    pass


class NotFound(EEGVerifyError, KeyError):
    pass


class RateMismatch(EEGVerifyError, ValueError):
    pass


class IoError(EEGVerifyError, OSError):
    pass


# dsp / features
class InvalidBand(EEGVerifyError, ValueError):
    pass


class NonFiniteInput(EEGVerifyError, ValueError):
    pass


class TooShort(EEGVerifyError, ValueError):
    pass


class ChannelCountMismatch(EEGVerifyError, ValueError):
    pass


class IdentityMismatch(EEGVerifyError, ValueError):
    pass


# kpca
class RankDeficient(EEGVerifyError, ValueError):
    pass


class InsufficientData(EEGVerifyError, ValueError):
    pass


# encoder / loss
class DimMismatch(EEGVerifyError, ValueError):
    pass


class NonFiniteActivation(EEGVerifyError, FloatingPointError):
    pass


class StaleCache(EEGVerifyError, RuntimeError):
    pass


class NeedTwoUtterances(EEGVerifyError, ValueError):
    pass


class NonUnitDvec(EEGVerifyError, ValueError):
    pass


# protocol
class InvalidWindow(EEGVerifyError, ValueError):
    pass


class FeatureMissing(EEGVerifyError, KeyError):
    pass


class DegenerateBatch(EEGVerifyError, ValueError):
    pass


class TooFewWindows(EEGVerifyError, ValueError):
    pass


class EmptyScores(EEGVerifyError, ValueError):
    pass


class CheckpointMismatch(EEGVerifyError, ValueError):
    """Checkpoint magic/version/shape does not match what the reader expects."""
