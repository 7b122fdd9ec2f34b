"""Exception hierarchy shared by every module of the package."""


class HandXferError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(HandXferError, ValueError):
    pass


# geometry
class DegenerateDisparity(HandXferError, ValueError):
    pass


class NonPositiveDepth(HandXferError, ValueError):
    pass


class DegenerateConfiguration(HandXferError, ValueError):
    pass


class ParallelRays(HandXferError, ValueError):
    pass


# demonstration data and files
class FormatError(HandXferError):
    """Raised when a binary container cannot be decoded."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class VersionMismatch(UnsupportedVersion):
    """Model container written by an incompatible version."""


class TruncatedFile(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass


class InvalidTrajectory(HandXferError, ValueError):
    pass


class InvalidWorkspace(HandXferError, ValueError):
    pass


class MissingDepth(HandXferError):
    pass


class FrameCountMismatch(HandXferError):
    pass


class AllPointsInvisible(HandXferError):
    pass


class BundleError(HandXferError):
    """Malformed or incomplete perception bundle directory."""


# alignment / training
class NMismatch(HandXferError, ValueError):
    pass


class EmptyDataset(HandXferError, ValueError):
    pass


class NonAlignedInput(HandXferError, ValueError):
    pass


# kinematics / rollout
class JointLimitViolation(HandXferError, ValueError):
    pass


class IKDiverged(HandXferError):
    pass
