"""Exception hierarchy shared across the package."""


class ClothstackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ClothstackError):
    """An argument violates a documented precondition."""


class FormatError(ClothstackError):
    """A file could not be parsed. Carries an optional line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class UsageError(ClothstackError):
    """Unsupported mode of use, e.g. an unknown file extension."""


class DegenerateGeometryError(ClothstackError):
    """A face has zero area or is otherwise unusable; names the face."""

    def __init__(self, message, face=None):
        self.face = face
        super().__init__(message)


class SingularBlendError(ClothstackError):
    """A blended skinning matrix is (near-)singular; names the vertex."""

    def __init__(self, message, vertex=None):
        self.vertex = vertex
        super().__init__(message)


class SamplingStarvationError(ClothstackError):
    """Point sampling could not reach the requested counts."""


class DivergenceError(ClothstackError):
    """Training produced a non-finite loss; names the step."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class UndefinedMetricError(ClothstackError):
    """A metric has no defined value for the given inputs."""


class StageError(ClothstackError):
    """A pipeline stage failed; names the stage and layer."""

    def __init__(self, message, stage=None, layer=None):
        self.stage = stage
        self.layer = layer
        super().__init__(message)
