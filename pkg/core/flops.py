"""
Analytic cost accounting for one attention layer.

Counts are in multiply-adds: an (a×b)·(b×c) product costs a·b·c. Softmax,
normalization and pooling are not counted; only matrix products are.
"""
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional

from .errors import ConfigError, DimensionMismatch


def macs_matmul(a: int, b: int, c: int) -> int:
    return a * b * c


@dataclass(frozen=True)
class CostBreakdown:
    total: int
    extraction: int
    contraction: int
    broadcast: int
    projection: int
    assembly: int
    pairwise_similarities: int

    def __post_init__(self):
        parts = self.projection + self.assembly + self.extraction + self.contraction + self.broadcast
        if parts != self.total:
            raise ValueError(f"sub-costs sum to {parts}, total is {self.total}")
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def _head_dim(N: int, d: int, H: int) -> int:
    for name, value in (("N", N), ("d", d), ("H", H)):
        if value <= 0:
            raise ConfigError(name, f"must be positive, got {value}")
    if d % H != 0:
        raise DimensionMismatch("flops", (d,), (H,), detail="H must divide d")
    return d // H


def cost_mssa(N: int, d: int, H: int) -> CostBreakdown:
    p = _head_dim(N, d, H)
    projection = H * macs_matmul(p, d, N)
    # Gram (U_kᵀZ)ᵀ(U_kᵀZ) plus applying the softmax weights
    contraction = H * (macs_matmul(N, p, N) + macs_matmul(p, N, N))
    assembly = H * macs_matmul(d, p, N)
    return CostBreakdown(
        total=projection + assembly + contraction,
        extraction=0,
        contraction=contraction,
        broadcast=0,
        projection=projection,
        assembly=assembly,
        pairwise_similarities=H * N * N,
    )


def cost_cbsa(N: int, d: int, H: int, m: Optional[int] = None, *, count_broadcast: bool = True) -> CostBreakdown:
    """
    Per head: project tokens, score them against the initial representatives,
    aggregate representatives, contract (Gram + apply), broadcast, back-project.

    count_broadcast=False leaves the N·m broadcast weights out of the
    pairwise-similarity count, since they reuse the extraction scores.
    """
    p = _head_dim(N, d, H)
    m = p if m is None else m
    if m <= 0 or m > N:
        raise DimensionMismatch("cost_cbsa", (m,), (N,), detail="need 0 < m <= N")

    projection = H * macs_matmul(p, d, N)
    extraction = H * macs_matmul(N, p, m)
    contraction = H * macs_matmul(m, p, m)
    broadcast = H * macs_matmul(p, m, N)
    assembly = H * (macs_matmul(p, N, m) + macs_matmul(p, m, m) + macs_matmul(d, p, N))

    per_head_pairs = N * m + m * m + (N * m if count_broadcast else 0)
    return CostBreakdown(
        total=projection + assembly + extraction + contraction + broadcast,
        extraction=extraction,
        contraction=contraction,
        broadcast=broadcast,
        projection=projection,
        assembly=assembly,
        pairwise_similarities=H * per_head_pairs,
    )


def crossover_n(d: int, H: int, m: Optional[int] = None) -> int:
    """Sequence length at which both mechanisms cost the same: N = 2m."""
    p = _head_dim(1, d, H)
    return 2 * (p if m is None else m)


def sweep(
    n_range: Iterable[int],
    d: int,
    H: int,
    m: Optional[int] = None,
    *,
    count_broadcast: bool = True,
) -> List[Dict[str, object]]:
    rows: List[Dict[str, object]] = []
    for n in n_range:
        n = int(n)
        costs = {
            "mssa": cost_mssa(n, d, H),
            "cbsa": cost_cbsa(n, d, H, m, count_broadcast=count_broadcast),
        }
        for mechanism, cost in costs.items():
            rows.append({
                "mechanism": mechanism,
                "N": n,
                "d": d,
                "H": H,
                "m": n if mechanism == "mssa" else (d // H if m is None else m),
                **cost.to_dict(),
            })
    return rows
