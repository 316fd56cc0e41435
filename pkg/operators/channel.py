import numpy as np

from base_operator import AttentionConfig, HeadTrace, HeadwiseOperator
from core.linalg import Matrix, matmul
from core.subspaces import SubspaceBank

from .linear import spectral_gate


class ChannelCbsa(HeadwiseOperator):
    """Each basis direction is gated by f of its own second moment."""

    name = "channel"

    def head(self, index: int, z_bar: Matrix) -> HeadTrace:
        second_moments = np.diag(matmul(z_bar, z_bar.T))
        gains = spectral_gate(second_moments, self.cfg.epsilon)
        return HeadTrace(index=index, z_proj=z_bar, output=gains[:, None] * z_bar)


def cbsa_channel(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return ChannelCbsa(cfg, workers=workers)(z, bank)
