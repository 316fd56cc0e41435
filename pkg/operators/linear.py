import numpy as np

from base_operator import AttentionConfig, HeadTrace, HeadwiseOperator
from core.linalg import Matrix, matmul, sym_eig
from core.subspaces import SubspaceBank


def spectral_gate(eigenvalues, epsilon: float) -> np.ndarray:
    """f(λ) = ε² / (ε² + λ): 1 at λ = 0, decreasing towards 0 as λ grows."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    eps2 = epsilon ** 2
    return eps2 / (eps2 + eigenvalues)


class LinearCbsa(HeadwiseOperator):
    """
    Representatives fixed to the SVD of each head's token projection, so the
    contraction becomes a spectral function of the p×p token covariance:
    head_k = F((U_kᵀZ)(U_kᵀZ)ᵀ)·U_kᵀZ. Linear in N.
    """

    name = "linear"

    def head(self, index: int, z_bar: Matrix) -> HeadTrace:
        covariance = matmul(z_bar, z_bar.T)
        eig = sym_eig(covariance)
        gains = spectral_gate(eig.eigenvalues, self.cfg.epsilon)
        gate = matmul(eig.eigenvectors * gains, eig.eigenvectors.T)
        return HeadTrace(index=index, z_proj=z_bar, output=matmul(gate, z_bar))


def cbsa_linear(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return LinearCbsa(cfg, workers=workers)(z, bank)
