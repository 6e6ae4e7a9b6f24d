"""Small dense linear algebra: matrix partitioning, affine projection,
Gram factorizations and extremal eigenvalue estimation.

Everything here works on plain float64 numpy arrays and has value
semantics; nothing keeps mutable shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class InputError(ValueError):
    """Rejected input (bad shapes, invalid parameters, inconsistent sizes)."""


class FactorizationError(RuntimeError):
    """A Gram matrix could not be factorized; signals a rank-deficient block."""


class PowerIterationError(RuntimeError):
    """Power iteration did not converge; carries the last eigenvalue estimate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise InputError(f"expected a nonempty 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix entries must be finite")
    return A


def as_vector(v, length: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if length is not None and v.shape[0] != length:
        raise InputError(f"{name} must have length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} entries must be finite")
    return v


@dataclass(frozen=True)
class PartitionSpec:
    """How a matrix is split across nodes.

    kind is "row" or "column"; sizes holds the per-node block sizes, which
    must sum to the corresponding matrix dimension.
    """

    kind: str
    sizes: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("row", "column"):
            raise InputError(f"partition kind must be 'row' or 'column', got {self.kind!r}")
        if len(self.sizes) == 0 or any(int(s) <= 0 for s in self.sizes):
            raise InputError("partition sizes must be positive integers")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def n_nodes(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @classmethod
    def even(cls, kind: str, total: int, n_nodes: int) -> "PartitionSpec":
        """Equal-size partition; requires n_nodes to divide total."""
        if n_nodes <= 0 or total % n_nodes != 0:
            raise InputError(f"{n_nodes} nodes do not evenly divide dimension {total}")
        return cls(kind, (total // n_nodes,) * n_nodes)


@dataclass(frozen=True)
class GramFactorization:
    """Cholesky factor of A A^T for an m-by-n matrix A.

    lower is lower triangular with lower @ lower.T == A @ A.T up to the
    tiny diagonal jitter added when the plain factorization breaks down.
    """

    shape: tuple[int, int]
    lower: np.ndarray


def gram_factorization(A) -> GramFactorization:
    """Factor A A^T, adding a diagonal jitter of 1e-12 * trace/m on breakdown.

    Raises FactorizationError if the matrix stays numerically singular even
    with jitter (a genuinely rank-deficient block).
    """
    A = as_matrix(A)
    m = A.shape[0]
    gram = A @ A.T
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(gram) / m
        try:
            lower = np.linalg.cholesky(gram + jitter * np.eye(m))
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                f"Gram matrix of a {A.shape[0]}x{A.shape[1]} block is singular"
            ) from exc
    return GramFactorization(shape=A.shape, lower=lower)


def gram_solve(fact: GramFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve (A A^T) z = rhs using the cached Cholesky factor."""
    y = solve_triangular(fact.lower, rhs, lower=True)
    return solve_triangular(fact.lower.T, y, lower=False)


def partition(A, b, spec: PartitionSpec):
    """Slice A (and b, for row partitions) into contiguous per-node blocks.

    Returns a list of (A_p, b_p) pairs for a row partition, or a list of
    column blocks A_p for a column partition (b is shared by all nodes).
    Concatenating the blocks in node order reconstructs the inputs exactly.
    """
    A = as_matrix(A)
    m, n = A.shape
    b = as_vector(b, m, "b")
    if spec.kind == "row":
        if spec.total != m:
            raise InputError(f"row partition sizes sum to {spec.total}, expected m={m}")
        offsets = np.cumsum((0,) + spec.sizes)
        return [
            (A[offsets[p] : offsets[p + 1], :].copy(), b[offsets[p] : offsets[p + 1]].copy())
            for p in range(spec.n_nodes)
        ]
    if spec.total != n:
        raise InputError(f"column partition sizes sum to {spec.total}, expected n={n}")
    offsets = np.cumsum((0,) + spec.sizes)
    return [A[:, offsets[p] : offsets[p + 1]].copy() for p in range(spec.n_nodes)]


def affine_projection(A, b, fact: GramFactorization, point) -> np.ndarray:
    """Project a point onto the affine set {x : A x = b}.

    Computes x = p - A^T (A A^T)^{-1} (A p - b), i.e. the Euclidean
    projection. A must have full row rank and fact must be its cached
    Gram factorization.
    """
    A = as_matrix(A)
    p = as_vector(point, A.shape[1], "point")
    bv = as_vector(b, A.shape[0], "b")
    residual = A @ p - bv
    return p - A.T @ gram_solve(fact, residual)


def lambda_max(M, tol: float = 1e-8, max_iter: int = 20000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    The start vector is the normalized all-ones vector; if that lies in the
    kernel (as it does for every graph Laplacian) the iteration falls back
    deterministically to a normalized index ramp. Convergence is declared
    when the eigen-residual ||M v - theta v|| drops below 0.5 * tol * theta,
    which bounds the relative eigenvalue error by tol once the iterate has
    aligned with the top eigenspace.
    """
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise InputError("lambda_max expects a square matrix")
    if tol <= 0 or max_iter < 1:
        raise InputError("tol must be positive and max_iter at least 1")
    P = M.shape[0]

    v = np.ones(P) / np.sqrt(P)
    w = M @ v
    if np.linalg.norm(w) <= 1e2 * np.finfo(float).eps * max(1.0, np.abs(M).max()):
        # all-ones start is (numerically) in the kernel; use a ramp instead
        v = np.arange(1.0, P + 1.0)
        v /= np.linalg.norm(v)
        w = M @ v
        if np.linalg.norm(w) == 0.0:
            return 0.0

    theta = 0.0
    for _ in range(max_iter):
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        w = M @ v
        theta = float(v @ w)
        if np.linalg.norm(w - theta * v) <= 0.5 * tol * max(theta, np.finfo(float).tiny):
            return theta
    raise PowerIterationError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations", theta
    )
