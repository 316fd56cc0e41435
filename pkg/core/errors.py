from typing import Optional, Tuple


class CbsaError(Exception):
    """Base class for every error raised by the library."""


class NonFiniteInput(CbsaError, ValueError):
    def __init__(self, what: str = "matrix"):
        super().__init__(f"{what} contains NaN or Inf entries")
        self.what = what


class DimensionMismatch(CbsaError, ValueError):
    def __init__(self, op: str, left: Tuple[int, ...], right: Optional[Tuple[int, ...]] = None, detail: str = ""):
        shapes = f"{tuple(left)}" if right is None else f"{tuple(left)} vs {tuple(right)}"
        message = f"{op}: incompatible shapes {shapes}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right) if right is not None else None


class NotPositiveDefinite(CbsaError, ArithmeticError):
    def __init__(self, pivot_index: int, pivot_value: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot_index} = {pivot_value:.3e}")
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class NotConverged(CbsaError, ArithmeticError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


class ConfigError(CbsaError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"invalid config '{key}': {message}")
        self.key = key


class RankDeficient(CbsaError, ArithmeticError):
    def __init__(self, column: int):
        super().__init__(f"column {column} is linearly dependent on the preceding columns")
        self.column = column
