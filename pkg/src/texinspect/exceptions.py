"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument violates an operation's preconditions."""


class ImageFormatError(ValueError):
    """A raster decodes but has an unsupported layout (e.g. channel count)."""


class CheckpointError(RuntimeError):
    """A checkpoint directory is missing, corrupt, or incompatible."""


class TrainingError(RuntimeError):
    """Training hit a non-finite loss; ``dump_path`` points at the saved state, if any."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
