"""
Error hierarchy for the positioning services.

Protocol outcomes that the FTM state machine models as phases (negotiation
timeout, rejection, security violation) are not exceptions; see
``session.FailureReason``.
"""


class PositioningError(Exception):
    """Base class for every error raised by the positioning services"""
    pass


# geometry

class InvalidGeometry(PositioningError):
    """A position, angle or room placement is not physically valid"""
    pass


# frames

class FrameCodecError(PositioningError):
    """Raised when an FTM frame or EDMG PPDU cannot be encoded or decoded"""
    pass


class TruncatedFrame(FrameCodecError):
    """Input is shorter than the lengths it declares"""
    pass


class DuplicateElement(FrameCodecError):
    """A measurement element kind appears more than once"""
    pass


class UnknownElementTag(FrameCodecError):
    """An element tag is not known to this codec"""

    def __init__(self, tag: int):
        super().__init__(f"Unknown element tag 0x{tag:02x}")
        self.tag = tag


class InvariantViolation(FrameCodecError):
    """A value breaks a type invariant"""
    pass


class TrnConfigMismatch(FrameCodecError):
    """TRN sequence count does not match num_units x (P + M)"""
    pass


# golay

class GolayError(PositioningError):
    pass


class NotPowerOfTwo(GolayError):
    pass


class LengthMismatch(GolayError):
    pass


# channel

class ChannelError(PositioningError):
    pass


class UnknownSta(ChannelError):
    pass


class EmptyChannel(ChannelError):
    pass


# beamtraining

class BeamTrainingError(PositioningError):
    pass


class EmptyGroup(BeamTrainingError):
    pass


class EmptyPdp(BeamTrainingError):
    pass


# session

class SessionError(PositioningError):
    pass


class NonMonotonicTimestamps(SessionError):
    pass


class NegativeRtt(SessionError):
    pass


class EmptyBurst(SessionError):
    pass


class NoPath(SessionError):
    """The channel between the two stations has no taps"""
    pass


class ProtocolViolation(SessionError):
    """An operation was attempted in a phase where the FTM sequence forbids it"""
    pass


# secure

class SecurityError(PositioningError):
    pass


class PasnAbort(SecurityError):
    """PASN handshake aborted; ``reason`` is one of BadMac, ParamMismatch"""

    def __init__(self, reason: str, detail: str = ''):
        message = f"PASN aborted: {reason}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.reason = reason


class IntegrityFailure(SecurityError):
    pass


class NonceReuse(SecurityError):
    pass


class ZeroLength(SecurityError):
    pass


class TrnCapacityExceeded(SecurityError):
    """A secure TRN subfield beyond the TRN field, or more key stream than HKDF can expand"""
    pass


# solver

class SolverError(PositioningError):
    pass


class RayMissesWall(SolverError):
    pass


class PathTooShort(SolverError):
    pass


class EmptyList(SolverError):
    pass


# harness

class HarnessError(PositioningError):
    pass


class ConfigError(HarnessError):
    """Invalid scenario configuration; ``path`` names the offending field"""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class MissingScenario(HarnessError):
    pass
