"""Exception taxonomy.

Every failure mode promised by a module contract has its own class so
callers (and the CLI exit-code mapping) can tell them apart without
string matching.
"""


class OcclufitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(OcclufitError):
    """Operand shapes disagree with each other or with a model basis."""


class ArgumentError(OcclufitError):
    """An argument is outside its documented domain."""


class GeometryError(OcclufitError):
    """Degenerate mesh geometry (zero-area triangle, isolated vertex)."""


class BehindCameraError(OcclufitError):
    """A vertex projected at or behind the camera plane."""

    def __init__(self, vertex_index: int, depth: float):
        super().__init__(
            f"vertex {vertex_index} has camera-space depth {depth:g} <= eps"
        )
        self.vertex_index = vertex_index
        self.depth = depth


class DegenerateMaskError(OcclufitError):
    """A mask with no usable pixels for the requested operation."""


class DegenerateRenderError(OcclufitError):
    """A render with empty coverage where covered pixels are required."""


class DegenerateEmbeddingError(OcclufitError):
    """An embedding with (near-)zero norm; cosine distance is undefined."""


class DivergenceError(OcclufitError):
    """The fit loss exceeded the divergence guard."""

    def __init__(self, message: str, loss_trace: list[float]):
        super().__init__(message)
        self.loss_trace = loss_trace


class EvaluationError(OcclufitError):
    """An objective evaluation returned a non-finite value."""


class BasisFileError(OcclufitError):
    """Base class for basis container problems."""


class BasisFormatError(BasisFileError):
    """Malformed or truncated basis container."""


class BasisDimensionError(BasisFileError):
    """Basis container fields are internally inconsistent."""


class ImageIOError(OcclufitError):
    """Base class for raster file problems."""


class UnsupportedImageError(ImageIOError):
    """File extension/format outside the supported set (PNG, PGM, PPM)."""


class CorruptImageError(ImageIOError):
    """The file exists but cannot be decoded."""


class ConfigError(OcclufitError):
    """Pipeline configuration is invalid or incomplete."""
