"""Exception types shared across the authentication pipeline.

The pipeline fails loudly: a degenerate input anywhere aborts the whole
decision rather than propagating NaNs into an accept/reject verdict.
"""


class VoiceAuthError(Exception):
    """Base class for all library errors."""


class AudioFormatError(VoiceAuthError):
    """File is not a readable PCM WAV (bad header or unsupported encoding)."""


class EmptyAudioError(VoiceAuthError):
    """Audio file decodes to zero samples."""


class BufferTooShortError(VoiceAuthError):
    """Signal shorter than one analysis frame."""


class ZeroEnergyError(VoiceAuthError):
    """Signal (or frame) has no energy; features are undefined."""


class NumericalError(VoiceAuthError):
    """A numeric routine became ill-conditioned (e.g. singular recursion)."""


class DimensionMismatchError(VoiceAuthError):
    """Feature vector does not match the dimension a model was trained on."""


class NotTrainedError(VoiceAuthError):
    """A model is used before training / loading weights."""


class LockedCredentialError(VoiceAuthError):
    """Signing was attempted without a prior accepting authentication decision."""


class RegistrationConflictError(VoiceAuthError):
    """A different public key is already registered for this (user, service)."""


class UnknownUserError(VoiceAuthError):
    """The relying party has no record of this user."""


class ConfigError(VoiceAuthError):
    """Pipeline configuration is missing, stale, or inconsistent."""


class TransmissionError(VoiceAuthError):
    """The relying-party service could not be reached or returned garbage."""


class StageError(VoiceAuthError):
    """A pipeline stage failed; carries the stage name and the original cause.

    Raised by the fused authentication path so that no partial decision can
    ever be observed by callers.
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
