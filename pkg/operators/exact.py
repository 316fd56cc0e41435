import numpy as np

from base_operator import AttentionConfig, RepresentativeOperator
from core.coding_rate import EpsilonConfig
from core.linalg import Matrix, as_matrix, inv_psd, matmul
from core.subspaces import SubspaceBank


def contract_exact(q_bar, cfg: EpsilonConfig) -> Matrix:
    """Q̄·(I_m + (p / (m ε²)) Q̄ᵀQ̄)⁻¹, i.e. (m ε² / p)·∇R(Q̄)."""
    q_bar = as_matrix(q_bar, "representatives")
    p, m = q_bar.shape
    alpha = p / (m * cfg.epsilon ** 2)
    return matmul(q_bar, inv_psd(np.eye(m) + alpha * matmul(q_bar.T, q_bar)))


class ExactCbsa(RepresentativeOperator):
    """Contraction by the exact coding-rate gradient of the representatives."""

    name = "exact"

    def contract(self, q_bar: Matrix) -> Matrix:
        return contract_exact(q_bar, self.cfg)


def cbsa_exact(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return ExactCbsa(cfg, workers=workers)(z, bank)
