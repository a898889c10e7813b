"""Named error types raised across the package."""


class ZskwsError(Exception):
    """Base class for every error this package raises on purpose."""


# dsp / datakit
class AudioTooShort(ZskwsError):
    pass


class BadSampleRate(ZskwsError):
    pass


class BadFormat(ZskwsError):
    pass


class NotMono(ZskwsError):
    pass


class OutOfVocabulary(ZskwsError):
    def __init__(self, token):
        super().__init__(f"OutOfVocabulary({token!r})")
        self.token = token


class InsufficientKeywords(ZskwsError):
    pass


class UnknownPhonemeId(ZskwsError):
    pass


# model
class OddDim(ZskwsError):
    pass


class ShapeMismatch(ZskwsError):
    pass


class EmptyBatch(ZskwsError):
    pass


class InfeasibleTarget(ZskwsError):
    pass


# losses
class LengthMismatch(ZskwsError):
    pass


class NotSquare(ZskwsError):
    pass


class NonFiniteTerm(ZskwsError):
    pass


# training / checkpoints
class DataExhausted(ZskwsError):
    pass


class NonFiniteLoss(ZskwsError):
    pass


class BadMagic(ZskwsError):
    pass


class CrcMismatch(ZskwsError):
    pass


class VersionUnsupported(ZskwsError):
    pass


class BadCheckpoint(ZskwsError):
    pass


# metrics
class DegenerateLabels(ZskwsError):
    pass


class NoNegatives(ZskwsError):
    pass


class InconsistentCandidates(ZskwsError):
    pass
