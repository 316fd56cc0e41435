from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionMismatch
from .linalg import Matrix, as_matrix, matmul, random_orthogonal


def _frozen(x) -> Matrix:
    arr = np.array(as_matrix(x, "basis"), dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SubspaceBank:
    """
    K orthonormal d×p bases U_k with pK = d and U_iᵀU_j = 0 for i ≠ j.

    tol bounds the allowed deviation of the stacked Gram matrix from identity;
    pass tol=None for learned or perturbed banks and inspect incoherence().
    """

    bases: Tuple[Matrix, ...]
    tol: Optional[float] = 1e-8

    def __post_init__(self):
        bases = tuple(_frozen(u) for u in self.bases)
        object.__setattr__(self, "bases", bases)
        if not bases:
            raise DimensionMismatch("SubspaceBank", (0,), detail="at least one basis is required")
        shape = bases[0].shape
        for u in bases:
            if u.shape != shape:
                raise DimensionMismatch("SubspaceBank", shape, u.shape, detail="all bases must share one shape")
        d, p = shape
        if p * len(bases) != d:
            raise DimensionMismatch("SubspaceBank", (d,), (p, len(bases)), detail="p·K must equal d")
        if self.tol is not None and self.incoherence() > self.tol:
            raise DimensionMismatch(
                "SubspaceBank", shape,
                detail=f"bases are not orthonormal and mutually orthogonal within {self.tol:g} "
                       f"(deviation {self.incoherence():.3e})",
            )

    @property
    def d(self) -> int:
        return self.bases[0].shape[0]

    @property
    def p(self) -> int:
        return self.bases[0].shape[1]

    @property
    def K(self) -> int:
        return len(self.bases)

    def stacked(self) -> Matrix:
        return np.hstack(self.bases)

    def incoherence(self) -> float:
        """Max deviation of [U_1 … U_K]ᵀ[U_1 … U_K] from the identity."""
        stacked = self.stacked()
        gram = matmul(stacked.T, stacked)
        return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))

    def project(self, z) -> List[Matrix]:
        z = as_matrix(z)
        if z.shape[0] != self.d:
            raise DimensionMismatch("project", z.shape, (self.d, self.p), detail="token dimension must equal d")
        return [matmul(u.T, z) for u in self.bases]

    @classmethod
    def from_orthogonal(cls, basis, K: int, tol: Optional[float] = 1e-8) -> "SubspaceBank":
        basis = as_matrix(basis)
        d = basis.shape[1]
        if d % K != 0:
            raise DimensionMismatch("SubspaceBank.from_orthogonal", (d,), (K,), detail="K must divide d")
        p = d // K
        return cls(tuple(basis[:, k * p:(k + 1) * p] for k in range(K)), tol=tol)

    @classmethod
    def random(cls, d: int, K: int, rng: np.random.Generator) -> "SubspaceBank":
        return cls.from_orthogonal(random_orthogonal(d, rng), K)

    @classmethod
    def canonical(cls, d: int, K: int) -> "SubspaceBank":
        return cls.from_orthogonal(np.eye(d), K)

    @classmethod
    def identity(cls, d: int) -> "SubspaceBank":
        return cls.canonical(d, 1)
