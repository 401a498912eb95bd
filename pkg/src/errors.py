"""Exception tree shared by every SkillFlow module."""


class SkillFlowError(Exception):
    """Base class for all SkillFlow errors."""


class InvalidArgumentError(SkillFlowError, ValueError):
    pass


class ConfigError(SkillFlowError, ValueError):
    pass


class InvalidSkillNameError(InvalidArgumentError):
    pass


# Register


class DescriptionConflictError(SkillFlowError):
    """A skill name was recorded again with a different description."""


class SkillConflictError(SkillFlowError):
    """A skill name arrived with a body that differs from the one we own."""


# Agent runtime


class SkillUnavailableError(SkillFlowError):
    def __init__(self, skill: str) -> None:
        super().__init__(f"no known owner for skill '{skill}'")
        self.skill = skill


class AcquisitionError(SkillFlowError):
    def __init__(self, skill: str, peer: str, reason: str) -> None:
        super().__init__(f"could not acquire '{skill}' from {peer}: {reason}")
        self.skill = skill
        self.peer = peer
        self.reason = reason


class RemoteCallError(AcquisitionError):
    """A remote skill execution (baseline path) failed."""


class IntegrationError(SkillFlowError):
    pass


class NotOwnedError(SkillFlowError):
    pass


class NotExecutableError(SkillFlowError):
    pass


class StartupError(SkillFlowError):
    pass


class CalendarConflictError(SkillFlowError):
    pass


class NegotiationFailedError(SkillFlowError):
    def __init__(self, message: str, messages_exchanged: int = 0) -> None:
        super().__init__(message)
        self.messages_exchanged = messages_exchanged


# Transport


class TransportError(SkillFlowError):
    pass


class TransportTimeoutError(TransportError):
    pass


# Wire codec


class FrameEncodeError(SkillFlowError):
    pass


class FrameDecodeError(SkillFlowError):
    """Base for every way a frame can fail to decode."""


class ShortReadError(FrameDecodeError):
    pass


class FrameTooLargeError(FrameDecodeError):
    pass


class InvalidEncodingError(FrameDecodeError):
    pass


class MalformedPayloadError(FrameDecodeError):
    pass


class UnknownMessageTypeError(FrameDecodeError):
    pass


class MissingFieldError(FrameDecodeError):
    pass


class InvalidFieldError(FrameDecodeError):
    pass
