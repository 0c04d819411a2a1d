"""
Exception hierarchy for the noise tolerant domain adaptation toolkit.
Every error carries a stable machine code used by the command-line surface.
"""
from typing import Optional


class NTDAError(Exception):
    """Base class for all toolkit errors"""
    code = 'ntda_error'
    exit_code = 1


class ShapeError(NTDAError, ValueError):
    """Operand shapes do not chain"""
    code = 'shape_mismatch'


class NonFiniteError(NTDAError, ValueError):
    """NaN or Inf where finite values are required"""
    code = 'non_finite'


class GradientOracleError(NTDAError):
    """Finite-difference oracle could not evaluate the loss"""
    code = 'oracle_failure'


class EmptyBatchError(NTDAError, ValueError):
    code = 'empty_batch'


class InsufficientDataError(NTDAError, ValueError):
    code = 'insufficient_data'


class DegenerateDataError(NTDAError, ValueError):
    code = 'degenerate_data'


class ConfigurationError(NTDAError, ValueError):
    """Invalid hyper-parameter or configuration value"""
    code = 'invalid_config'
    exit_code = 2


class UsageError(NTDAError):
    code = 'usage'
    exit_code = 2


class NotApplicableError(NTDAError):
    """Metric requested without the data it needs (e.g. clean flags)"""
    code = 'not_applicable'


class NonFiniteGradientError(NTDAError, FloatingPointError):
    """Raised by the optimizer; names the offending parameter group"""
    code = 'non_finite_gradient'

    def __init__(self, group: str, parameter: str):
        self.group = group
        self.parameter = parameter
        super().__init__(f"non-finite gradient in parameter group '{group}' ({parameter})")


class DatasetParseError(NTDAError, ValueError):
    """Malformed dataset file"""
    code = 'parse_error'

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class CellFailedError(NTDAError):
    """An experiment cell raised; completed rows were flushed before aborting"""
    code = 'cell_failed'

    def __init__(self, cell_id: str, message: str, partial_path: Optional[str] = None):
        self.cell_id = cell_id
        self.partial_path = partial_path
        suffix = f" (partial results in {partial_path})" if partial_path else ''
        super().__init__(f"cell {cell_id} failed: {message}{suffix}")


class MissingInputError(NTDAError):
    """A required input file does not exist"""
    code = 'missing_input'
