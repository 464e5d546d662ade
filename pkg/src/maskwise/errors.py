"""Exception taxonomy shared by all maskwise modules.

Every error carries a stable machine-readable ``code`` so the HTTP service
and the CLI can map failures without string matching.
"""

from __future__ import annotations


class MaskwiseError(Exception):
    """Base class; ``code`` is stable across releases."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)


class MalformedImage(MaskwiseError):
    code = "malformed_image"


class UnsupportedFormat(MaskwiseError):
    code = "unsupported_format"


class EmptyMask(MaskwiseError):
    code = "empty_mask"


class TooFewPixels(MaskwiseError):
    code = "too_few_pixels"


class RegionLeftImage(MaskwiseError):
    code = "region_left_image"


class MaskCoversEverything(MaskwiseError):
    code = "mask_covers_everything"


class SolverDiverged(MaskwiseError):
    code = "solver_diverged"


class LengthMismatch(MaskwiseError):
    code = "length_mismatch"


class DimMismatch(MaskwiseError):
    code = "dim_mismatch"


class SingularSystem(MaskwiseError):
    code = "singular_system"


class ShapeMismatch(MaskwiseError):
    code = "shape_mismatch"


class NonFiniteOutput(MaskwiseError):
    code = "non_finite_output"


class NonFiniteLoss(MaskwiseError):
    code = "non_finite_loss"


class RemoteUnavailable(MaskwiseError):
    code = "remote_unavailable"


class ProtocolViolation(MaskwiseError):
    code = "protocol_violation"
