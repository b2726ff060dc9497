"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError / CheckpointError -> 3, NumericalError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class MissingArtifactError(FileNotFoundError):
    """A required checkpoint or result file does not exist."""


class CheckpointError(RuntimeError):
    """Checkpoint file is corrupt, truncated, or shape-incompatible."""


class NumericalError(RuntimeError):
    """Non-finite values or ill-conditioned systems encountered."""


class PrecoderError(NumericalError):
    """A precoder failed; carries the Monte Carlo draw index if known."""

    def __init__(self, message: str, draw_index: int | None = None):
        if draw_index is not None:
            message = f"draw {draw_index}: {message}"
        super().__init__(message)
        self.draw_index = draw_index
