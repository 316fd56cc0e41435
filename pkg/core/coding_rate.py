"""
Coding-rate functionals of the rate-reduction objective and their gradients.

R(Z) = ½ logdet(I_N + (d / (N ε²)) ZᵀZ), measured in nats.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Tuple

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .linalg import Matrix, as_matrix, inv_psd, logdet_psd, matmul
from .logging import get_logger
from .subspaces import SubspaceBank

logger = get_logger("coding_rate")

DEFAULT_EPSILON = 0.5


class EpsilonConfig(Protocol):
    epsilon: float


@dataclass(frozen=True)
class CodingRateConfig:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon", f"must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class CodingRateReport:
    ambient_rate: float
    per_subspace_rates: np.ndarray
    representative_rates: np.ndarray
    constraint_gaps: np.ndarray
    delta_r: float

    def to_dict(self) -> dict:
        return {
            "ambient_rate": self.ambient_rate,
            "per_subspace_rates": self.per_subspace_rates.tolist(),
            "representative_rates": self.representative_rates.tolist(),
            "constraint_gaps": self.constraint_gaps.tolist(),
            "delta_r": self.delta_r,
        }


def coding_rate(z, cfg: EpsilonConfig) -> float:
    z = as_matrix(z)
    d, n = z.shape
    scale = d / (n * cfg.epsilon ** 2)
    # logdet(I_N + c·ZᵀZ) = logdet(I_d + c·ZZᵀ); factor whichever Gram is smaller
    gram = matmul(z.T, z) if n <= d else matmul(z, z.T)
    return 0.5 * logdet_psd(np.eye(gram.shape[0]) + scale * gram)


def normalize_columns(z) -> Matrix:
    z = as_matrix(z)
    norms = np.sqrt(np.sum(z * z, axis=0))
    safe = np.where(norms > 0.0, norms, 1.0)
    return z / safe


def coding_rate_normalized(z, cfg: EpsilonConfig) -> float:
    return coding_rate(normalize_columns(z), cfg)


def compression_term(z, bank: SubspaceBank, cfg: EpsilonConfig) -> np.ndarray:
    """Per-subspace rates R(U_kᵀZ); their sum is the compression term."""
    return np.array([coding_rate(z_bar, cfg) for z_bar in bank.project(z)])


def coding_rate_gradient(q_bar, cfg: EpsilonConfig) -> Matrix:
    """∇R(Q̄) = α·Q̄·(I_m + α Q̄ᵀQ̄)⁻¹ with α = p / (m ε²)."""
    q_bar = as_matrix(q_bar)
    p, m = q_bar.shape
    alpha = p / (m * cfg.epsilon ** 2)
    return alpha * matmul(q_bar, inv_psd(np.eye(m) + alpha * matmul(q_bar.T, q_bar)))


def reduced_coding_rate(before, after, cfg: EpsilonConfig) -> float:
    before = as_matrix(before)
    after = as_matrix(after)
    if before.shape != after.shape:
        raise DimensionMismatch("reduced_coding_rate", before.shape, after.shape)
    return coding_rate(before, cfg) - coding_rate(after, cfg)


def coding_rate_report(z, q, bank: SubspaceBank, cfg: EpsilonConfig) -> CodingRateReport:
    ambient = coding_rate(z, cfg)
    per_subspace = compression_term(z, bank, cfg)
    representative = compression_term(q, bank, cfg)
    return CodingRateReport(
        ambient_rate=ambient,
        per_subspace_rates=per_subspace,
        representative_rates=representative,
        constraint_gaps=np.abs(representative - per_subspace),
        delta_r=ambient - float(np.sum(per_subspace)),
    )


def finite_difference_gradient(f: Callable[[Matrix], float], x, h: float = 1e-5) -> Matrix:
    """Central differences of a scalar function, one entry at a time."""
    x = np.array(as_matrix(x), dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(*x.shape):
        original = x[index]
        x[index] = original + h
        f_plus = f(x)
        x[index] = original - h
        f_minus = f(x)
        x[index] = original
        grad[index] = (f_plus - f_minus) / (2.0 * h)
    return grad


@dataclass
class GradCheckResult:
    success: bool
    shape: Tuple[int, int]
    max_relative_error: float
    worst_index: Tuple[int, int]
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "shape": list(self.shape),
            "max_relative_error": self.max_relative_error,
            "worst_index": list(self.worst_index),
            "message": self.message,
        }


def check_coding_rate_gradient(
    q_bar,
    cfg: EpsilonConfig,
    *,
    tolerance: float = 1e-5,
    h: float = 1e-5,
    corrupt: float = 0.0,
    gradient_fn: Optional[Callable[[Matrix, EpsilonConfig], Matrix]] = None,
) -> GradCheckResult:
    """
    Compare the analytic gradient with central differences of coding_rate.

    Errors are entrywise, relative to the largest gradient entry. A nonzero
    `corrupt` perturbs the last analytic entry by that fraction of the scale,
    giving a negative control.
    """
    q_bar = as_matrix(q_bar)
    analytic = np.array((gradient_fn or coding_rate_gradient)(q_bar, cfg), dtype=np.float64)
    scale = float(np.max(np.abs(analytic)))
    if corrupt:
        analytic[-1, -1] += corrupt * scale

    numeric = finite_difference_gradient(lambda x: coding_rate(x, cfg), q_bar, h=h)
    scale = max(scale, float(np.max(np.abs(numeric))), 1e-8)
    errors = np.abs(analytic - numeric) / scale
    worst = np.unravel_index(int(np.argmax(errors)), errors.shape)
    worst_index = (int(worst[0]), int(worst[1]))
    max_error = float(errors[worst])
    success = max_error < tolerance
    message = "" if success else (
        f"entry {worst_index}: analytic {analytic[worst]:.6e} vs finite difference {numeric[worst]:.6e}"
    )
    logger.debug(f"gradient check {q_bar.shape}: max relative error {max_error:.3e}")
    return GradCheckResult(success, (q_bar.shape[0], q_bar.shape[1]), max_error, worst_index, message)
