from base_operator import AttentionConfig, HeadTrace, HeadwiseOperator
from core.linalg import Matrix
from core.subspaces import SubspaceBank

from .softmax import contract_softmax


class Mssa(HeadwiseOperator):
    """Multi-head subspace self-attention: every token is its own representative."""

    name = "mssa"

    def head(self, index: int, z_bar: Matrix) -> HeadTrace:
        return HeadTrace(index=index, z_proj=z_bar, output=contract_softmax(z_bar))


def mssa(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return Mssa(cfg, workers=workers)(z, bank)
