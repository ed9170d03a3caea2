"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class InputError(ValueError):
    """User-supplied data is malformed (non-finite values, bad sizes)."""


class ParseError(ValueError):
    """A data file could not be parsed; the message names the offending row."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss); carries diagnostics in the message."""


class DegenerateBaselineError(RuntimeError):
    """The representation gap ``h_t - h_baseline`` is too small to normalize by."""

    def __init__(self, gap_norm: float):
        super().__init__(
            f"degenerate baseline: ||h_t - h_baseline|| = {gap_norm:.3e}"
        )
        self.gap_norm = gap_norm


class CheckpointFormatError(RuntimeError):
    """A checkpoint file is missing, corrupted, or has an unsupported version."""
