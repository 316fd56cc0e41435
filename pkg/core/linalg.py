"""
Dense linear algebra kernels with a fixed evaluation order.

Every routine here is a pure function of its inputs: the same input always
produces bit-identical output, which keeps traces and goldens stable.
"""
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import numpy.typing as npt

from .errors import DimensionMismatch, NonFiniteInput, NotConverged, NotPositiveDefinite, RankDeficient

Matrix = npt.NDArray[np.float64]

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SVD_RANK_TOL = 1e-10


@dataclass(frozen=True)
class SymEig:
    eigenvalues: npt.NDArray[np.float64]
    eigenvectors: Matrix

    def reconstruct(self) -> Matrix:
        return matmul(self.eigenvectors * self.eigenvalues, self.eigenvectors.T)


@dataclass(frozen=True)
class SvdFactors:
    left: Matrix
    singular: npt.NDArray[np.float64]
    right: Matrix

    def reconstruct(self) -> Matrix:
        return matmul(self.left * self.singular, self.right.T)


def as_matrix(x, what: str = "matrix") -> Matrix:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionMismatch("as_matrix", arr.shape, detail=f"{what} must be a non-empty 2-D array")
    if not np.isfinite(arr).all():
        raise NonFiniteInput(what)
    return arr


def _require_square(x: Matrix, op: str) -> None:
    if x.shape[0] != x.shape[1]:
        raise DimensionMismatch(op, x.shape, detail="expected a square matrix")


def is_symmetric(x, tol: float = SYMMETRY_TOL) -> bool:
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(x))))
    return float(np.max(np.abs(x - x.T))) <= tol * scale


def _require_symmetric(x: Matrix, op: str) -> None:
    _require_square(x, op)
    if not is_symmetric(x):
        raise DimensionMismatch(op, x.shape, detail=f"matrix is not symmetric within {SYMMETRY_TOL:g}")


def matmul(a, b) -> Matrix:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch("matmul", a.shape, b.shape)
    out = np.zeros((a.shape[0], b.shape[1]))
    # accumulate over the inner index in ascending order, entry by entry
    for k in range(a.shape[1]):
        out += np.outer(a[:, k], b[k, :])
    return out


def softmax_cols(x) -> Matrix:
    x = as_matrix(x)
    shifted = x - np.max(x, axis=0, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=0, keepdims=True)


def cholesky(x) -> Matrix:
    """Lower factor L with L·Lᵀ = x; raises NotPositiveDefinite at the first non-positive pivot."""
    x = as_matrix(x)
    _require_symmetric(x, "cholesky")
    n = x.shape[0]
    lower = np.zeros_like(x)
    for j in range(n):
        pivot = x[j, j] - float(np.dot(lower[j, :j], lower[j, :j]))
        if not pivot > 0.0:
            raise NotPositiveDefinite(j, pivot)
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1:, j] = (x[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def logdet_psd(x) -> float:
    lower = cholesky(x)
    return 2.0 * float(np.sum(np.log(np.diag(lower))))


def inv_psd(x) -> Matrix:
    lower = cholesky(x)
    n = lower.shape[0]
    identity = np.eye(n)

    # L·Y = I
    y = np.zeros((n, n))
    for i in range(n):
        y[i] = (identity[i] - lower[i, :i] @ y[:i]) / lower[i, i]

    # Lᵀ·X = Y
    inv = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        inv[i] = (y[i] - lower[i + 1:, i] @ inv[i + 1:]) / lower[i, i]
    return 0.5 * (inv + inv.T)


def _off_diagonal_norm(a: Matrix) -> float:
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def _fix_column_signs(vectors: Matrix) -> Matrix:
    """Largest-magnitude entry of every column positive; ties resolve to the first index."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def sym_eig(x) -> SymEig:
    """Cyclic Jacobi eigensolver; eigenvalues returned in descending order."""
    a = np.array(as_matrix(x), dtype=np.float64)
    _require_symmetric(a, "sym_eig")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)

    scale = math.sqrt(float(np.sum(a * a)))
    tol = JACOBI_TOL * scale if scale > 0.0 else JACOBI_TOL

    sweeps = 0
    residual = _off_diagonal_norm(a)
    while residual >= tol:
        if sweeps >= JACOBI_MAX_SWEEPS:
            raise NotConverged(sweeps, residual)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        sweeps += 1
        residual = _off_diagonal_norm(a)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return SymEig(eigenvalues=eigenvalues[order], eigenvectors=_fix_column_signs(v[:, order]))


def _orthogonalize(vec: np.ndarray, basis: List[np.ndarray]) -> np.ndarray:
    # two passes of modified Gram-Schmidt
    out = vec.copy()
    for _ in range(2):
        for b in basis:
            out = out - float(np.dot(b, out)) * b
    return out


def gram_schmidt(x) -> Matrix:
    """Orthonormalize the columns of x left to right."""
    x = as_matrix(x)
    accepted: List[np.ndarray] = []
    for j in range(x.shape[1]):
        col = _orthogonalize(x[:, j], accepted)
        norm = float(np.linalg.norm(col))
        reference = float(np.linalg.norm(x[:, j]))
        if reference == 0.0 or norm <= 1e-10 * reference:
            raise RankDeficient(j)
        accepted.append(col / norm)
    return np.column_stack(accepted)


def random_orthogonal(n: int, rng: np.random.Generator) -> Matrix:
    return gram_schmidt(rng.standard_normal((n, n)))


def _complete_columns(columns: List[Optional[np.ndarray]], dim: int) -> Matrix:
    """Fill missing columns with standard basis vectors orthogonalized against the others."""
    accepted = [c for c in columns if c is not None]
    candidate = 0
    out = list(columns)
    for i, col in enumerate(out):
        if col is not None:
            continue
        while True:
            if candidate >= dim:
                raise RankDeficient(i)
            e = np.zeros(dim)
            e[candidate] = 1.0
            candidate += 1
            v = _orthogonalize(e, accepted)
            norm = float(np.linalg.norm(v))
            if norm > 1e-8:
                v = v / norm
                out[i] = v
                accepted.append(v)
                break
    return np.column_stack(out)


def thin_svd(x) -> SvdFactors:
    """Thin SVD through the eigendecomposition of the smaller Gram matrix."""
    x = as_matrix(x)
    rows, cols = x.shape
    wide = rows <= cols
    gram = matmul(x, x.T) if wide else matmul(x.T, x)
    eig = sym_eig(gram)
    known = eig.eigenvectors
    sigma = np.sqrt(np.maximum(eig.eigenvalues, 0.0))
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    cutoff = SVD_RANK_TOL * sigma_max

    other_dim = cols if wide else rows
    recovered = matmul(x.T, known) if wide else matmul(x, known)

    columns: List[Optional[np.ndarray]] = []
    accepted: List[np.ndarray] = []
    noise_floor = False
    for i in range(sigma.size):
        if noise_floor or sigma[i] <= cutoff:
            noise_floor = True
            sigma[i] = 0.0
            columns.append(None)
            continue
        col = _orthogonalize(recovered[:, i] / sigma[i], accepted)
        norm = float(np.linalg.norm(col))
        if norm < 0.5:
            # sigma is rounding noise from here on; these directions carry no information
            noise_floor = True
            sigma[i] = 0.0
            columns.append(None)
            continue
        col = col / norm
        columns.append(col)
        accepted.append(col)
    other = _complete_columns(columns, other_dim)

    if wide:
        return SvdFactors(left=known, singular=sigma, right=other)
    return SvdFactors(left=other, singular=sigma, right=known)


def numerical_rank(x, tol: float = 1e-6) -> int:
    factors = thin_svd(x)
    sigma = factors.singular
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > tol * sigma[0]))
