from typing import Callable, Optional, Sequence, Type, Union

from base_operator import AttentionConfig, AttentionOperator, CbsaResult, RepresentativeOperator
from core.errors import ConfigError
from core.linalg import Matrix, as_matrix
from core.subspaces import SubspaceBank

OperatorSelector = Union[str, Type[AttentionOperator], AttentionOperator, Callable[..., Matrix]]


def build_operator(op: OperatorSelector, cfg: AttentionConfig, *, workers: int = 1) -> Callable[..., Matrix]:
    from . import OPERATOR_REGISTRY

    if isinstance(op, str):
        cls = OPERATOR_REGISTRY.get(op)
        if cls is None:
            raise ConfigError("op", f"unknown operator {op!r}; expected one of {', '.join(OPERATOR_REGISTRY)}")
        return cls(cfg, workers=workers)
    if isinstance(op, type) and issubclass(op, AttentionOperator):
        return op(cfg, workers=workers)
    if isinstance(op, AttentionOperator):
        return op
    # plain function with the (z, bank, cfg) signature of the cbsa_* wrappers
    return lambda z, bank: op(z, bank, cfg)


def residual_step(
    z,
    bank: SubspaceBank,
    cfg: AttentionConfig,
    op: OperatorSelector = "softmax",
    *,
    coeffs: Optional[Sequence[Matrix]] = None,
    workers: int = 1,
) -> Matrix:
    """
    Z − κ·op(Z). A negative κ de-compresses.

    With `coeffs`, a representative operator reuses those broadcast matrices
    instead of running pooling and extraction.
    """
    z = as_matrix(z, "tokens")
    operator = build_operator(op, cfg, workers=workers)
    if coeffs is not None:
        if not isinstance(operator, RepresentativeOperator):
            raise ConfigError("op", "frozen coefficients need a representative operator")
        update = operator.run_with_coefficients(z, bank, coeffs).output
    else:
        update = operator(z, bank)
    return z - cfg.kappa * update


def frozen_residual_step(
    z,
    bank: SubspaceBank,
    cfg: AttentionConfig,
    coeffs: Sequence[Matrix],
    op: OperatorSelector = "exact",
    *,
    workers: int = 1,
) -> Matrix:
    return residual_step(z, bank, cfg, op, coeffs=coeffs, workers=workers)


def run_cbsa(
    z,
    bank: SubspaceBank,
    cfg: AttentionConfig,
    op: OperatorSelector = "softmax",
    *,
    workers: int = 1,
) -> CbsaResult:
    """Full operator run with the per-head trace and, where used, the representatives."""
    operator = build_operator(op, cfg, workers=workers)
    if not isinstance(operator, AttentionOperator):
        raise ConfigError("op", "run_cbsa needs an operator class or name")
    return operator.run(z, bank)
