"""
Shared pipeline of the contract-and-broadcast attention family.

Every operator maps tokens Z (d×N) to Σ_k U_k·head_k(U_kᵀZ). Operators that
work through representatives run pooling → extraction → contraction →
broadcast per head; the others act on the token projections directly.
"""
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, DimensionMismatch
from core.linalg import Matrix, as_matrix, matmul, numerical_rank, softmax_cols
from core.logging import get_logger
from core.subspaces import SubspaceBank


@dataclass(frozen=True)
class AttentionConfig:
    d: int
    K: int
    m: int
    N: int
    epsilon: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("d", "K", "m", "N"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        if self.d % self.K != 0:
            raise ConfigError("K", f"must divide d={self.d}")
        if self.m > self.N:
            raise ConfigError("m", f"must not exceed N={self.N}, got {self.m}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon", f"must be > 0, got {self.epsilon}")

    @property
    def p(self) -> int:
        return self.d // self.K

    @classmethod
    def for_input(
        cls,
        z,
        bank: SubspaceBank,
        *,
        m: Optional[int] = None,
        epsilon: float = 0.5,
        kappa: float = 1.0,
    ) -> "AttentionConfig":
        z = as_matrix(z)
        d, n = z.shape
        if m is None:
            m = min(bank.p, n)
        return cls(d=d, K=bank.K, m=m, N=n, epsilon=epsilon, kappa=kappa)


@dataclass(frozen=True)
class RepresentativeSet:
    q: Matrix
    coeffs: Tuple[Matrix, ...]
    projections: Tuple[Matrix, ...]

    def __post_init__(self):
        m = self.q.shape[1]
        for a in self.coeffs:
            if a.shape[1] != m:
                raise DimensionMismatch("RepresentativeSet", self.q.shape, a.shape, detail="A_k must have m columns")


@dataclass
class HeadTrace:
    index: int
    z_proj: Matrix
    output: Matrix
    q_proj: Optional[Matrix] = None
    coeffs: Optional[Matrix] = None
    contraction: Optional[Matrix] = None

    def attention_rank(self, tol: float = 1e-6) -> Optional[int]:
        if self.coeffs is None:
            return None
        return attention_rank_diagnostic(self.coeffs, tol)


@dataclass
class CbsaResult:
    output: Matrix
    heads: List[HeadTrace] = field(default_factory=list)
    representatives: Optional[RepresentativeSet] = None


def init_representatives_pool(z, m: int) -> Matrix:
    """Means of m contiguous token segments; earlier segments take the extra tokens."""
    z = as_matrix(z)
    n = z.shape[1]
    if m <= 0 or m > n:
        raise DimensionMismatch("init_representatives_pool", (m,), (n,), detail="need 0 < m <= N")
    base, extra = divmod(n, m)
    q0 = np.zeros((z.shape[0], m))
    start = 0
    for j in range(m):
        size = base + (1 if j < extra else 0)
        q0[:, j] = np.mean(z[:, start:start + size], axis=1)
        start += size
    return q0


def extract_representatives(z, q0, bank: SubspaceBank) -> RepresentativeSet:
    """One cross-attention step per head: A_k = softmax((U_kᵀZ)ᵀ(U_kᵀQ₀)), Q̄_k = (U_kᵀZ)·A_k."""
    z = as_matrix(z)
    q0 = as_matrix(q0, "initial representatives")
    if q0.shape[0] != z.shape[0]:
        raise DimensionMismatch("extract_representatives", z.shape, q0.shape)
    coeffs = []
    projections = []
    q = np.zeros_like(q0)
    for u, z_bar, q0_bar in zip(bank.bases, bank.project(z), bank.project(q0)):
        a = softmax_cols(matmul(z_bar.T, q0_bar))
        q_bar = matmul(z_bar, a)
        coeffs.append(a)
        projections.append(q_bar)
        q += matmul(u, q_bar)
    return RepresentativeSet(q=q, coeffs=tuple(coeffs), projections=tuple(projections))


def attention_rank_diagnostic(a, tol: float = 1e-6) -> int:
    return numerical_rank(a, tol)


class AttentionOperator(ABC):
    name = "base"

    def __init__(
        self,
        cfg: AttentionConfig,
        *,
        workers: int = 1,
        out_bases: Optional[Sequence[Matrix]] = None,
    ):
        self.cfg = cfg
        self.workers = max(1, int(workers))
        # overparameterized back-projection; U_k is used when unset
        self.out_bases = tuple(as_matrix(u, "output basis") for u in out_bases) if out_bases is not None else None
        self.logger = get_logger(f"operators.{self.name}")

    def __call__(self, z, bank: SubspaceBank) -> Matrix:
        return self.run(z, bank).output

    def _check(self, z, bank: SubspaceBank) -> Matrix:
        z = as_matrix(z, "tokens")
        if z.shape != (self.cfg.d, self.cfg.N):
            raise DimensionMismatch(self.name, z.shape, (self.cfg.d, self.cfg.N), detail="tokens vs config (d, N)")
        if bank.d != self.cfg.d or bank.K != self.cfg.K:
            raise DimensionMismatch(self.name, (bank.d, bank.K), (self.cfg.d, self.cfg.K), detail="bank vs config (d, K)")
        if self.out_bases is not None and len(self.out_bases) != bank.K:
            raise DimensionMismatch(self.name, (len(self.out_bases),), (bank.K,), detail="one output basis per head")
        return z

    def _map_heads(self, fn: Callable[[int], HeadTrace], count: int) -> List[HeadTrace]:
        if self.workers == 1 or count == 1:
            return [fn(k) for k in range(count)]
        with ThreadPoolExecutor(max_workers=min(self.workers, count)) as executor:
            return list(executor.map(fn, range(count)))

    def _assemble(self, bank: SubspaceBank, heads: List[HeadTrace]) -> Matrix:
        bases = self.out_bases or bank.bases
        out = np.zeros((bank.d, heads[0].output.shape[1]))
        # fixed head order keeps the sum reproducible
        for head in heads:
            out += matmul(bases[head.index], head.output)
        return out

    @abstractmethod
    def run(self, z, bank: SubspaceBank) -> CbsaResult:
        """Map tokens Z (d×N) to the d×N update with one HeadTrace per head."""


class HeadwiseOperator(AttentionOperator):
    """Operators that act on each head's token projection directly."""

    def run(self, z, bank: SubspaceBank) -> CbsaResult:
        z = self._check(z, bank)
        projections = bank.project(z)
        heads = self._map_heads(lambda k: self.head(k, projections[k]), bank.K)
        self.logger.debug(f"{self.name}: {bank.K} heads on {z.shape[1]} tokens")
        return CbsaResult(output=self._assemble(bank, heads), heads=heads)

    @abstractmethod
    def head(self, index: int, z_bar: Matrix) -> HeadTrace:
        """Per-head map of the token projection U_kᵀZ (p×N) to a p×N output."""


class RepresentativeOperator(AttentionOperator):
    """Operators that contract representatives and broadcast the result to all tokens."""

    @abstractmethod
    def contract(self, q_bar: Matrix) -> Matrix:
        """Contraction of one head's representatives Q̄_k (p×m)."""

    def run(self, z, bank: SubspaceBank) -> CbsaResult:
        z = self._check(z, bank)
        q0 = init_representatives_pool(z, self.cfg.m)
        reps = extract_representatives(z, q0, bank)
        result = self.run_with(z, bank, reps.projections, reps.coeffs)
        result.representatives = reps
        return result

    def run_with(self, z, bank: SubspaceBank, q_bars: Sequence[Matrix], coeffs: Sequence[Matrix]) -> CbsaResult:
        """Contract and broadcast given representatives, skipping pooling and extraction."""
        z = self._check(z, bank)
        if len(q_bars) != bank.K or len(coeffs) != bank.K:
            raise DimensionMismatch(self.name, (len(q_bars), len(coeffs)), (bank.K,), detail="one representative set per head")
        projections = bank.project(z)

        def _head(k: int) -> HeadTrace:
            q_bar = as_matrix(q_bars[k], "representatives")
            a = as_matrix(coeffs[k], "coefficients")
            if a.shape != (z.shape[1], q_bar.shape[1]):
                raise DimensionMismatch(self.name, a.shape, (z.shape[1], q_bar.shape[1]), detail="A_k must be N×m")
            contraction = self.contract(q_bar)
            return HeadTrace(
                index=k,
                z_proj=projections[k],
                output=matmul(contraction, a.T),
                q_proj=q_bar,
                coeffs=a,
                contraction=contraction,
            )

        heads = self._map_heads(_head, bank.K)
        return CbsaResult(output=self._assemble(bank, heads), heads=heads)

    def run_with_coefficients(self, z, bank: SubspaceBank, coeffs: Sequence[Matrix]) -> CbsaResult:
        """Frozen broadcast: Q̄_k = (U_kᵀZ)·A_k for the given A_k."""
        projections = bank.project(as_matrix(z))
        q_bars = [matmul(z_bar, as_matrix(a)) for z_bar, a in zip(projections, coeffs)]
        return self.run_with(z, bank, q_bars, coeffs)
