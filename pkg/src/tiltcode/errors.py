"""Exception types shared across the package."""


class TiltcodeError(Exception):
    """Base class for package errors."""


class TiltFloorError(TiltcodeError, ValueError):
    """Requested tilt is below the smallest tilt the package can normalize."""


class InstanceTooLargeError(TiltcodeError, ValueError):
    """An exact (enumeration or DP) computation was asked for beyond its size cap."""


class FormatError(TiltcodeError):
    """A coded stream has a bad header, version, tokenizer or framing."""


class CorruptStreamError(FormatError):
    """The coded payload is inconsistent with its own framing or checksum."""
