"""Graph Laplacians, connectivity checks and the synchronization projector."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg


class GraphError(ValueError):
    pass


class NotConnected(GraphError):
    pass


class ComplexSpectrum(GraphError):
    pass


class NotDiagonalizable(GraphError):
    pass


ZERO_TOL = 1e-9
IMAG_TOL = 1e-9
COND_MAX = 1e8


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Adjacency weights; ``weights[k, j]`` is the weight of edge j -> k."""

    weights: np.ndarray

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise GraphError("adjacency weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency must have a zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable) -> "WeightedDigraph":
        """Build from ``(source, target, weight)`` triples, 0-based nodes."""
        a = np.zeros((n, n))
        for edge in edges:
            j, k = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= j < n and 0 <= k < n):
                raise GraphError(f"edge {j}->{k} out of range for {n} nodes")
            if j == k:
                raise GraphError(f"self-loop at node {j}")
            a[k, j] += w
        return cls(a)

    @classmethod
    def from_laplacian(cls, L) -> "WeightedDigraph":
        L = np.asarray(L, dtype=float)
        a = -L.copy()
        np.fill_diagonal(a, 0.0)
        # negative zeros from the sign flip are harmless but ugly
        a[a == 0] = 0.0
        return cls(a)


def laplacian(g: WeightedDigraph) -> np.ndarray:
    a = g.weights
    L = -a.copy()
    np.fill_diagonal(L, 0.0)
    L[L == 0] = 0.0
    np.fill_diagonal(L, a.sum(axis=1))
    return L


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    L: np.ndarray
    eigenvalues: np.ndarray
    lambda_min_nonzero: float
    lambda_max_nonzero: float
    diagonalizable: bool
    symmetric: bool

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def vertices(self) -> tuple[float, float]:
        return self.lambda_min_nonzero, self.lambda_max_nonzero


def zero_tolerance(L: np.ndarray) -> float:
    return ZERO_TOL * max(1.0, np.linalg.norm(L, np.inf))


def spectrum(L) -> LaplacianSpectrum:
    """Eigen-structure of a Laplacian plus the checks needed by the gain design.

    Raises ``NotConnected`` unless exactly one eigenvalue is (numerically)
    zero, ``ComplexSpectrum`` if the spectrum is not real and
    ``NotDiagonalizable`` if the eigenvector matrix is ill-conditioned.
    Non-symmetric Laplacians with a real diagonalizable spectrum are accepted
    and flagged through ``symmetric=False``.
    """
    L = np.array(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise GraphError(f"Laplacian must be square, got shape {L.shape}")
    n = L.shape[0]
    tol = zero_tolerance(L)
    if np.max(np.abs(L.sum(axis=1))) > tol:
        raise GraphError("Laplacian rows must sum to zero")
    if n < 2:
        raise NotConnected("a single node has no synchronization problem (n < 2)")

    symmetric = bool(np.array_equal(L, L.T))
    if symmetric:
        vals = np.linalg.eigvalsh(L)
        diagonalizable = True
    else:
        vals, vecs = np.linalg.eig(L)
        if np.max(np.abs(vals.imag)) > IMAG_TOL * max(1.0, np.linalg.norm(L, np.inf)):
            raise ComplexSpectrum(f"Laplacian has complex eigenvalues: {vals}")
        vals = vals.real
        cond = np.linalg.cond(vecs)
        diagonalizable = bool(np.isfinite(cond) and cond <= COND_MAX)
        if not diagonalizable:
            raise NotDiagonalizable(f"eigenvector matrix condition number {cond:.3g}")

    vals = np.sort(vals)
    n_zero = int(np.sum(np.abs(vals) < tol))
    if n_zero != 1:
        raise NotConnected(f"expected exactly one zero eigenvalue, found {n_zero}")
    if vals[1] <= 0:
        raise NotConnected(f"nonzero eigenvalue {vals[1]:.3g} is not positive")
    vals.setflags(write=False)
    L.setflags(write=False)
    return LaplacianSpectrum(
        L=L,
        eigenvalues=vals,
        lambda_min_nonzero=float(vals[1]),
        lambda_max_nonzero=float(vals[-1]),
        diagonalizable=diagonalizable,
        symmetric=symmetric,
    )


def sync_projector(n: int) -> np.ndarray:
    """Rows form an orthonormal basis of the complement of the all-ones vector.

    The returned ``Mt`` has shape ``(n - 1, n)`` with ``Mt @ Mt.T = I`` and
    ``Mt.T @ Mt = I - 11^T / n``.
    """
    if n < 2:
        raise ValueError("projector needs n >= 2")
    return scipy.linalg.helmert(n)
