from base_operator import AttentionConfig, RepresentativeOperator
from core.linalg import Matrix, as_matrix, matmul, softmax_cols
from core.subspaces import SubspaceBank


def contract_softmax(q_bar) -> Matrix:
    q_bar = as_matrix(q_bar, "representatives")
    return matmul(q_bar, softmax_cols(matmul(q_bar.T, q_bar)))


class SoftmaxCbsa(RepresentativeOperator):
    """
    Default operator: the inverse in the exact contraction is replaced by a
    Gram matrix followed by a column softmax. No temperature is applied.
    """

    name = "softmax"

    def contract(self, q_bar: Matrix) -> Matrix:
        return contract_softmax(q_bar)


def cbsa_softmax(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return SoftmaxCbsa(cfg, workers=workers)(z, bank)
