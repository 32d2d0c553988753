"""Exception hierarchy shared across the toolkit."""


class ProstsegError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(ProstsegError):
    """Two grids that must share a shape do not."""


class IllegalLabel(ProstsegError):
    """A mask contains a value outside the known class ids."""


class ComboMismatch(ProstsegError):
    """Labels present in a mask disagree with its declared zone combination."""


class ParseError(ProstsegError):
    """A manifest, config, or archive could not be parsed."""


class MissingFile(ProstsegError):
    """A path referenced by a manifest does not exist."""


class TooFewPerCombo(ProstsegError):
    """A stratified split needs more entries per zone combination."""


class DegenerateGeometry(ProstsegError):
    """Phantom parameters would render an empty zone."""


class InvalidSpec(ProstsegError):
    """An architecture spec violates its own constraints."""


class ShapeError(ProstsegError):
    """Network input is not at the canonical resolution."""


class SpecMismatch(ProstsegError):
    """A weight archive was trained with a different architecture spec."""


class ChecksumError(ProstsegError):
    """A weight archive failed its integrity check."""


class EmptyStack(ProstsegError):
    """A probability stack with zero samples was reduced."""


class MissingTruth(ProstsegError):
    """A ground-truth mask is required for the requested grouping."""


class NoBoundary(ProstsegError):
    """A mask with a single class has no inter-class edges."""


class EmptyManifest(ProstsegError):
    """An operation requires at least one manifest entry."""


class DivergedLoss(ProstsegError):
    """Training hit a non-finite loss; carries the last recoverable checkpoint."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class ManifestMismatch(ProstsegError):
    """Evaluation runs being compared used different test sets or T."""


class ModelNotStochastic(UserWarning):
    """Monte-Carlo sampling requested from a model that cannot vary its output."""
