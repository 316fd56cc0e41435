from .exact import ExactCbsa, cbsa_exact, contract_exact
from .softmax import SoftmaxCbsa, cbsa_softmax, contract_softmax
from .mssa import Mssa, mssa
from .linear import LinearCbsa, cbsa_linear, spectral_gate
from .channel import ChannelCbsa, cbsa_channel
from .agent import AgentCbsa, cbsa_agent

OPERATOR_REGISTRY = {
    "exact": ExactCbsa,
    "softmax": SoftmaxCbsa,
    "mssa": Mssa,
    "linear": LinearCbsa,
    "channel": ChannelCbsa,
    "agent": AgentCbsa,
}

from .residual import build_operator, frozen_residual_step, residual_step, run_cbsa  # noqa: E402

__all__ = [
    'ExactCbsa', 'SoftmaxCbsa', 'Mssa', 'LinearCbsa', 'ChannelCbsa', 'AgentCbsa',
    'cbsa_exact', 'cbsa_softmax', 'mssa', 'cbsa_linear', 'cbsa_channel', 'cbsa_agent',
    'contract_exact', 'contract_softmax', 'spectral_gate',
    'OPERATOR_REGISTRY', 'build_operator', 'residual_step', 'frozen_residual_step', 'run_cbsa',
]
