"""Exception types shared across the pipeline."""


class MmrError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(MmrError):
    """Invalid configuration value or unsatisfiable setting."""


class ShapeError(MmrError):
    """Array shape or length violates an operation's contract."""


class DesignError(MmrError):
    """A designed filter or derived structure is unusable (e.g. unstable)."""


class DegenerateSegment(MmrError):
    """Signal (or a subband) has no usable variance."""


class NumericError(MmrError):
    """Non-finite values encountered where finite values are required."""


class ContractError(MmrError):
    """API misuse: an argument violates a documented precondition."""


class UndefinedMetric(MmrError):
    """Metric is undefined for the given inputs (e.g. single-class AUROC)."""


class SchemaError(ConfigError):
    """Config document violates the strict schema; carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
