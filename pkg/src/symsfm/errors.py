"""Exception and warning types shared across the toolkit."""


class SymsfmError(Exception):
    """Base class for all toolkit errors."""


class InputError(SymsfmError):
    """Malformed user input: files, schemas, configurations."""


class DegeneracyError(SymsfmError):
    """Numerical degeneracy in otherwise well-formed data."""


# geometry ------------------------------------------------------------------

class DegenerateShape(DegeneracyError):
    """All points coincide; the shape cannot be normalized."""


class RankDeficient(DegeneracyError):
    """A matrix required to have full row/column rank does not."""


class LengthMismatch(SymsfmError):
    """Paired sequences have different lengths or point counts."""


class NoVisiblePoints(DegeneracyError):
    """An image has no visible keypoints to centralize."""


class MirrorViolation(InputError):
    """Declared mirror pairs do not satisfy the reflection relation."""


class RankDeficiencyWarning(UserWarning):
    """Non-fatal rank deficiency; the result is still returned."""


# single-image pipeline -------------------------------------------------------

class AxisDegenerate(DegeneracyError):
    """A declared axis projects to a near-zero image displacement."""


class SlopeCoincidence(DegeneracyError):
    """Two projected axis slopes coincide; the camera solve is singular."""


class NegativeSquare(DegeneracyError):
    """The slope system produced a negative squared camera entry."""


class YZSingular(DegeneracyError):
    """The 2x2 in-plane block of the camera is numerically singular."""


class IncompleteVisibility(DegeneracyError):
    """The single-image pipeline needs every referenced keypoint visible."""


# multi-image solver ----------------------------------------------------------

class TooFewImages(DegeneracyError):
    """Fewer images than the solve requires."""


class DegenerateScale(DegeneracyError):
    """The recovered squared scale is non-positive (no extent along the
    symmetry direction)."""


class IllConditioned(DegeneracyError):
    """The stacked constraint system is too ill-conditioned to solve."""


class SingularAmbiguity(DegeneracyError):
    """The recovered scale/mixing correction is not invertible."""


class SingularNormalMatrix(DegeneracyError):
    """The stacked camera rows do not span 3D (e.g. a single view)."""


class InsufficientVisibilityWarning(UserWarning):
    """A keypoint is occluded in almost every image; completion of its
    column is unreliable."""


class NonConvergenceWarning(UserWarning):
    """The solver hit its iteration cap before the energy settled."""


# dataset / result files ------------------------------------------------------

class ConfigInvalid(InputError):
    """A scene or solver configuration fails validation."""


class ParseError(InputError):
    """A dataset or result file does not match the documented schema."""


class SchemaVersionUnsupported(InputError):
    """The file declares a schema version this build does not read."""


class IoError(InputError):
    """Filesystem failure while reading or writing an artifact."""
