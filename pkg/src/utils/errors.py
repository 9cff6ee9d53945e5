# Exception hierarchy shared by all components


class DCLNetError(Exception):
    """Base class for every error raised by this package."""


class VolumeFormatError(DCLNetError):
    """A volume header or raw payload does not follow the on-disk format."""


class GeometryError(DCLNetError):
    """Volumes disagree on geometry, or a geometry is invalid."""


class StreamlineFormatError(DCLNetError):
    """A streamline file line could not be parsed."""


class PhantomError(DCLNetError):
    """The phantom configuration cannot produce a sample."""


class TrainingDivergedError(DCLNetError):
    """The training loss became non-finite."""

    def __init__(self, message: str, checkpoint: str = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class UsageError(DCLNetError):
    """Command-line usage error."""
