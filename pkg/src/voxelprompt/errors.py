"""Exception types shared across the engine.

Every error carries a stable ``code`` string so the HTTP layer and clients
can dispatch on it without parsing messages.
"""


class VoxelPromptError(Exception):
    """Base class for all engine errors."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# --- volume I/O ---

class BadMagic(VoxelPromptError):
    code = "BadMagic"


class UnsupportedDatatype(VoxelPromptError):
    code = "UnsupportedDatatype"


class TruncatedData(VoxelPromptError):
    code = "TruncatedData"


class DimMismatch(VoxelPromptError):
    code = "DimMismatch"


# --- geometry ---

class SingularAffine(VoxelPromptError):
    code = "SingularAffine"


class OutOfBounds(VoxelPromptError):
    code = "OutOfBounds"


class PromptsUnfittable(VoxelPromptError):
    code = "PromptsUnfittable"


# --- model backend ---

class EmptyIncludeSet(VoxelPromptError):
    code = "EmptyIncludeSet"


class UnknownBackend(VoxelPromptError):
    code = "UnknownBackend"


class ArtifactNotFound(VoxelPromptError):
    code = "ArtifactNotFound"


class RuntimeUnavailable(VoxelPromptError):
    code = "RuntimeUnavailable"


class ShapeMismatch(VoxelPromptError):
    code = "ShapeMismatch"


# --- session / uncertainty ---

class IndexOutOfRange(VoxelPromptError):
    code = "IndexOutOfRange"


class NoWorkingMask(VoxelPromptError):
    code = "NoWorkingMask"


class EmptyMask(VoxelPromptError):
    code = "EmptyMask"
