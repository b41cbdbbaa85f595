"""Plant data, certificates and the symmetric blocks of the synchronization LMIs.

Two families of matrix inequalities are assembled here:

* analysis blocks, for a given coupling gain ``K`` with a diagonal Lyapunov
  weight ``R`` and multiplier ``tau``;
* design blocks, linear in ``(W, Y, sigma)``, from which ``K = Y W^-1``.

Vertex blocks are evaluated at the extreme nonzero Laplacian eigenvalues and
the source blocks at ``chi in {0, 1}``; both are affine in the swept parameter
so the endpoint checks cover the whole interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


def _matrix(x, name: str, ndim: int = 2) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0 and ndim == 2:
        a = a.reshape(1, 1)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


def _positive_diagonal(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 1:
        a = np.diag(a)
    a = _matrix(a, name)
    if a.shape[0] != a.shape[1] or np.any(a != np.diag(np.diag(a))):
        raise ValueError(f"{name} must be diagonal")
    if np.any(np.diag(a) <= 0):
        raise ValueError(f"{name} must have strictly positive diagonal entries")
    return a


def _positive(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise ValueError(f"{name} must be a positive real, got {x}")
    return x


def symmetric_from_blocks(a11, a12, a22) -> np.ndarray:
    """[[a11, a12], [a12^T, a22]] built from its upper triangle, exactly symmetric."""
    m = np.block([[a11, a12], [np.zeros((a12.shape[1], a12.shape[0])), a22]])
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


@dataclass(frozen=True, eq=False)
class ConeBound:
    """Incremental cone bound ``[dq; dh]^T [[0, G12], [G12^T, G22]] [dq; dh] >= 0``."""

    G12: np.ndarray
    G22: np.ndarray

    def __post_init__(self):
        g12 = _matrix(self.G12, "G12")
        g22 = _matrix(self.G22, "G22")
        if g22.shape[0] != g22.shape[1] or g22.shape[0] != g12.shape[1]:
            raise DimensionError(f"G12 {g12.shape} and G22 {g22.shape} are inconsistent")
        if not np.allclose(g22, g22.T, rtol=1e-12, atol=0):
            raise NotSymmetric("G22 must be symmetric")
        if np.linalg.eigvalsh(g22).max() >= 0:
            raise ValueError("G22 must be negative definite")
        object.__setattr__(self, "G12", g12)
        object.__setattr__(self, "G22", g22)


@dataclass(frozen=True, eq=False)
class HyperbolicPlant:
    """One agent ``x_t + S x_chi + E h(Q x) = 0`` with ``x(t, 0) = H x(t, 1) + B u``.

    ``nonlinearity`` names the map ``h`` (see ``pdesync.sim.NONLINEARITIES``);
    it only matters for simulation, the LMIs see ``h`` through ``cone``.
    """

    S: np.ndarray
    E: np.ndarray
    B: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    cone: ConeBound
    nonlinearity: str = "tanh"

    def __post_init__(self):
        S = _positive_diagonal(self.S, "S")
        E, B, H, Q = (_matrix(getattr(self, k), k) for k in "EBHQ")
        n_p = S.shape[0]
        if H.shape != (n_p, n_p):
            raise DimensionError(f"H must be {n_p}x{n_p}, got {H.shape}")
        if E.shape[0] != n_p or B.shape[0] != n_p or Q.shape[1] != n_p:
            raise DimensionError("E, B need n_p rows and Q needs n_p columns")
        if self.cone.G12.shape != (Q.shape[0], E.shape[1]):
            raise DimensionError(
                f"G12 must be n_z x n_e = {(Q.shape[0], E.shape[1])}, got {self.cone.G12.shape}"
            )
        for k, v in zip("SEBHQ", (S, E, B, H, Q)):
            object.__setattr__(self, k, v)

    @property
    def n_p(self) -> int:
        return self.S.shape[0]

    @property
    def n_e(self) -> int:
        return self.E.shape[1]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_z(self) -> int:
        return self.Q.shape[0]

    @property
    def speeds(self) -> np.ndarray:
        return np.diag(self.S).copy()


@dataclass(frozen=True, eq=False)
class AnalysisCertificate:
    K: np.ndarray
    R: np.ndarray
    mu: float
    tau: float
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "K", _matrix(self.K, "K"))
        object.__setattr__(self, "R", _positive_diagonal(self.R, "R"))
        object.__setattr__(self, "mu", _positive(self.mu, "mu"))
        object.__setattr__(self, "tau", _positive(self.tau, "tau"))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", _positive(self.alpha, "alpha"))
        if self.K.shape[1] != self.R.shape[0]:
            raise DimensionError(f"K {self.K.shape} does not match R {self.R.shape}")


@dataclass(frozen=True, eq=False)
class DesignCertificate:
    W: np.ndarray
    Y: np.ndarray
    sigma: float
    mu: float
    K: np.ndarray = field(init=False)

    def __post_init__(self):
        W = _positive_diagonal(self.W, "W")
        Y = _matrix(self.Y, "Y")
        if Y.shape[1] != W.shape[0]:
            raise DimensionError(f"Y {Y.shape} does not match W {W.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "sigma", _positive(self.sigma, "sigma"))
        object.__setattr__(self, "mu", _positive(self.mu, "mu"))
        K = Y / np.diag(W)[None, :]
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_gain(cls, K, W, sigma: float, mu: float) -> "DesignCertificate":
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = np.diag(W)
        return cls(W=W, Y=np.asarray(K, dtype=float) @ W, sigma=sigma, mu=mu)

    def to_analysis(self) -> AnalysisCertificate:
        """R = W^-1, tau = 1/sigma, same K and mu."""
        return AnalysisCertificate(
            K=self.K, R=np.diag(1.0 / np.diag(self.W)), mu=self.mu, tau=1.0 / self.sigma
        )


def _check_rho(rho) -> float:
    rho = float(rho)
    if not np.isfinite(rho):
        raise ValueError("rho must be finite")
    return rho


def _check_chi(chi) -> float:
    chi = float(chi)
    if not 0.0 <= chi <= 1.0:
        raise ValueError(f"chi must lie in [0, 1], got {chi}")
    return chi


def _check_gain(p: HyperbolicPlant, K: np.ndarray):
    if K.shape != (p.n_u, p.n_p):
        raise DimensionError(f"K must be {p.n_u}x{p.n_p}, got {K.shape}")


def analysis_vertex_block(p: HyperbolicPlant, c: AnalysisCertificate, rho: float) -> np.ndarray:
    """[[-e^-mu R, (H + rho B K)^T R], [., -R]]."""
    _check_gain(p, c.K)
    if c.R.shape[0] != p.n_p:
        raise DimensionError("R does not match the plant")
    rho = _check_rho(rho)
    closed = p.H + rho * (p.B @ c.K)
    return symmetric_from_blocks(-np.exp(-c.mu) * c.R, closed.T @ c.R, -c.R)


def analysis_phi(p: HyperbolicPlant, c: AnalysisCertificate, chi: float) -> np.ndarray:
    chi = _check_chi(chi)
    if c.R.shape[0] != p.n_p:
        raise DimensionError("R does not match the plant")
    weight = np.exp(-c.mu * chi)
    s_inv = np.diag(1.0 / np.diag(p.S))
    a12 = -weight * (s_inv @ c.R @ p.E) + c.tau * (p.Q.T @ p.cone.G12)
    return symmetric_from_blocks(-c.mu * weight * c.R, a12, c.tau * p.cone.G22)


def design_vertex_matrix(p: HyperbolicPlant, W, Y, mu: float, rho: float) -> np.ndarray:
    """Design vertex block from raw arrays; affine in ``(W, Y)`` for fixed ``mu``."""
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if W.shape != (p.n_p, p.n_p) or Y.shape != (p.n_u, p.n_p):
        raise DimensionError(f"W {W.shape} / Y {Y.shape} do not match the plant")
    rho = _check_rho(rho)
    a12 = W @ p.H.T + rho * (Y.T @ p.B.T)
    return symmetric_from_blocks(-np.exp(-mu) * W, a12, -W)


def design_phi_matrix(p: HyperbolicPlant, W, sigma: float, mu: float, chi: float) -> np.ndarray:
    """Design source block from raw arrays; affine in ``(W, sigma)`` for fixed ``mu``."""
    W = np.asarray(W, dtype=float)
    if W.shape != (p.n_p, p.n_p):
        raise DimensionError(f"W {W.shape} does not match the plant")
    chi = _check_chi(chi)
    weight = np.exp(-mu * chi)
    s_inv = np.diag(1.0 / np.diag(p.S))
    a12 = -sigma * weight * (s_inv @ p.E) + W @ p.Q.T @ p.cone.G12
    return symmetric_from_blocks(-mu * weight * W, a12, sigma * p.cone.G22)


def design_vertex_block(p: HyperbolicPlant, d: DesignCertificate, rho: float) -> np.ndarray:
    return design_vertex_matrix(p, d.W, d.Y, d.mu, rho)


def design_phi_s(p: HyperbolicPlant, d: DesignCertificate, chi: float) -> np.ndarray:
    return design_phi_matrix(p, d.W, d.sigma, d.mu, chi)


def schur_T(p: HyperbolicPlant, c: AnalysisCertificate, lam: float) -> np.ndarray:
    """(H + lam B K)^T R (H + lam B K) - e^-mu R, the Schur complement of the vertex block."""
    _check_gain(p, c.K)
    closed = p.H + float(lam) * (p.B @ c.K)
    t = closed.T @ c.R @ closed - np.exp(-c.mu) * c.R
    return 0.5 * (t + t.T)


def default_tol(M: np.ndarray) -> float:
    return 1e-9 * max(1.0, np.linalg.norm(M, 2))


def lambda_max(M) -> float:
    M = np.asarray(M, dtype=float)
    scale = max(1.0, np.max(np.abs(M)))
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise NotSymmetric("matrix is not symmetric")
    return float(np.linalg.eigvalsh(M)[-1])


def is_nsd(M, tol: float | None = None) -> bool:
    """M is negative semidefinite: largest eigenvalue <= tol."""
    M = np.asarray(M, dtype=float)
    if tol is None:
        tol = default_tol(M)
    return lambda_max(M) <= tol


def is_nd(M, tol: float | None = None) -> bool:
    """M is negative definite: largest eigenvalue < -tol."""
    M = np.asarray(M, dtype=float)
    if tol is None:
        tol = default_tol(M)
    return lambda_max(M) < -tol
