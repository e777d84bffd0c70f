"""Shared error hierarchy.

Every failure that crosses the library boundary carries a stable machine
code so the CLI can emit machine-parsable diagnostics without string
matching on messages.
"""


class EarcamError(Exception):
    """Base class for all package-level errors."""

    code = "ERROR"


class NoConvergenceError(EarcamError):
    """Rig calibration left a residual above the acceptance bound."""

    code = "NO_CONVERGENCE"


class PlaneBehindCameraError(EarcamError):
    """The scene plane does not lie in front of both cameras."""

    code = "PLANE_BEHIND_CAMERA"


class BlindSpotNotFoundError(EarcamError):
    """The scanned object never became fully visible within the search range."""

    code = "NOT_FOUND"


class MalformedHeaderError(EarcamError):
    """Image header bytes do not form a valid P5 header."""

    code = "MALFORMED_HEADER"


class TruncatedPayloadError(EarcamError):
    """Image payload is shorter than width*height bytes."""

    code = "TRUNCATED_PAYLOAD"


class DutyExceededError(EarcamError):
    """Requested query rate implies more than 100% active duty."""

    code = "DUTY_EXCEEDED"


class ImageTooSmallError(EarcamError):
    """Input image is below the minimum size for feature detection."""

    code = "IMAGE_TOO_SMALL"


class RansacFailedError(EarcamError):
    """No model hypothesis reached the minimum inlier count."""

    code = "RANSAC_FAILED"


class NoWakeWordError(EarcamError):
    """Transcript contains no wake phrase above the confidence threshold."""

    code = "NO_WAKE_WORD"
