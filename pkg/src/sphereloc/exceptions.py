"""Exception hierarchy shared across the toolkit."""


class SphereLocError(Exception):
    """Base class for all toolkit errors."""


# --- data loading ---------------------------------------------------------
class UnreadableFile(SphereLocError):
    pass


class MalformedRecord(SphereLocError):
    pass


class MissingPose(SphereLocError):
    pass


# --- splits / mining ------------------------------------------------------
class EmptyInput(SphereLocError):
    pass


class NoRevisitsFound(SphereLocError):
    pass


class UnknownRecordingLabel(SphereLocError):
    pass


class InsufficientCandidates(SphereLocError):
    pass


# --- geometry / signals ---------------------------------------------------
class OriginPoint(SphereLocError):
    """A zero-length vector has no direction on the sphere."""


class BadGridShape(SphereLocError):
    pass


class BandwidthMismatch(SphereLocError):
    pass


class ChannelMismatch(SphereLocError):
    pass


# --- model / training -----------------------------------------------------
class ShapeMismatch(SphereLocError):
    pass


class UninitializedWeights(SphereLocError):
    pass


class DimensionMismatch(SphereLocError):
    pass


class NonFiniteLoss(SphereLocError):
    """Training aborted because the loss became NaN/Inf."""


# --- retrieval ------------------------------------------------------------
class EmptyDatabase(SphereLocError):
    pass
