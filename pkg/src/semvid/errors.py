"""Exception types shared across the package."""


class SemvidError(Exception):
    """Base class for all package-specific errors."""


class InputDataError(SemvidError, ValueError):
    """Malformed or inconsistent input data (frames, directories, bit counts)."""


class ShapeError(SemvidError, ValueError):
    """Array shape inconsistent with the operation's contract."""


class CapacityError(SemvidError, ValueError):
    """Payload does not fit into the sampled channel realization."""


class ConfigError(SemvidError, ValueError):
    """Invalid or inconsistent configuration."""


class RateInfeasibleError(ConfigError):
    """No symbol budget satisfies the requested bandwidth ratio target."""

    def __init__(self, msg: str, min_achievable_cbr: float):
        super().__init__(msg)
        self.min_achievable_cbr = min_achievable_cbr


class CodeError(SemvidError, ValueError):
    """Defective channel code definition (rank, degrees, file format)."""


class StreamError(SemvidError, ValueError):
    """Structurally unreadable bitstream (truncated header or index table)."""


class DivergenceError(SemvidError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at training step {step}")
        self.step = step
