"""Exception hierarchy shared by all geoseg stages."""


class GeosegError(Exception):
    """Base class for every error raised by geoseg."""


class AlignmentError(GeosegError):
    """Depth, color and label grids disagree in size."""


class PaletteError(GeosegError):
    """A label image contains a color outside the class palette."""

    def __init__(self, color, x, y):
        self.color = tuple(int(c) for c in color)
        self.x = int(x)
        self.y = int(y)
        super().__init__(f"unknown label color {self.color} at pixel (x={self.x}, y={self.y})")


class RasterSizeError(GeosegError):
    """Raster too small for the requested operation."""


class ShapeError(GeosegError):
    """Tensor shapes do not match what a layer expects."""


class StateError(GeosegError):
    """An operation was called out of order (e.g. backward before forward)."""


class TrainingError(GeosegError):
    """Training diverged; the loss became non-finite."""

    def __init__(self, epoch, last_good_epoch):
        self.epoch = epoch
        self.last_good_epoch = last_good_epoch
        super().__init__(
            f"loss became non-finite in epoch {epoch}; last good epoch was {last_good_epoch}"
        )


class DegenerateDataError(GeosegError):
    """Training data cannot define the requested model."""


class GeometryError(GeosegError):
    """Degenerate polygon or prism."""


class SpecError(GeosegError):
    """Invalid synthetic scene description."""


class ConfigError(GeosegError):
    """Invalid pipeline configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class StageOrderError(GeosegError):
    """A pipeline stage was run before the stage that produces its inputs."""

    def __init__(self, stage, missing):
        self.stage = stage
        self.missing = str(missing)
        super().__init__(f"stage '{stage}' needs {self.missing}; run the upstream stage first")


class FormatError(GeosegError):
    """A binary or text artifact is malformed."""
