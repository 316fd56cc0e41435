from base_operator import AttentionConfig, RepresentativeOperator
from core.linalg import Matrix
from core.subspaces import SubspaceBank


class AgentCbsa(RepresentativeOperator):
    """Extraction followed directly by broadcast; the contraction step is the identity."""

    name = "agent"

    def contract(self, q_bar: Matrix) -> Matrix:
        return q_bar


def cbsa_agent(z, bank: SubspaceBank, cfg: AttentionConfig, *, workers: int = 1) -> Matrix:
    return AgentCbsa(cfg, workers=workers)(z, bank)
