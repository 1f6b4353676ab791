"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Two arrays have incompatible shapes for the requested operation."""


class SizeLimitError(ValueError):
    """A size guard was exceeded (for example too many icosphere subdivisions)."""


class DegenerateMeshError(ValueError):
    """A mesh has no usable surface (total face area is zero)."""


class NonFiniteError(ArithmeticError):
    """A forward evaluation produced NaN or Inf."""


class ParseError(ValueError):
    """A text file could not be parsed. Carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class CheckpointError(ValueError):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint header announces an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """The checkpoint file ended before all declared content was read."""


class CheckpointShapeError(CheckpointError):
    """Array contents disagree with their declared shapes."""


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite. Carries the failing step."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step
