"""Synchronization metrics on cell-average states of shape ``(n_agents, cells, n_p)``.

All spatial integrals use the midpoint rule on the simulation grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .graph import sync_projector
from .lmi import AnalysisCertificate, ConeBound, HyperbolicPlant

__all__ = [
    "InsufficientDecay",
    "SyncMetrics",
    "avg_sync_error",
    "sync_distance",
    "sync_distance_projected",
    "lyapunov_value",
    "coercivity_constant",
    "decay_rate",
    "DecayFit",
    "cone_bound_check",
    "ConeCheckReport",
    "sync_metrics",
    "sync_projector",
]


class InsufficientDecay(ValueError):
    pass


@dataclass(frozen=True)
class SyncMetrics:
    t: float
    avg_error_profile: np.ndarray
    sync_distance: float
    lyapunov_value: float


def _cells_dchi(states: np.ndarray, dchi: float | None) -> float:
    return 1.0 / states.shape[1] if dchi is None else dchi


def avg_sync_error(states: np.ndarray) -> np.ndarray:
    """Mean over agents i >= 2 of x_1 - x_i, per cell."""
    states = np.asarray(states, dtype=float)
    if states.shape[0] < 2:
        raise ValueError("need at least two agents")
    return np.mean(states[:1] - states[1:], axis=0)


def sync_distance(states: np.ndarray, dchi: float | None = None) -> float:
    """L2 distance to the synchronization set, via deviations from the agent mean."""
    states = np.asarray(states, dtype=float)
    dchi = _cells_dchi(states, dchi)
    # shift by agent 1 first so identical agents give exactly zero
    rel = states - states[:1]
    dev = rel - rel.mean(axis=0, keepdims=True)
    return float(np.sqrt(dchi * np.sum(dev**2)))


def sync_distance_projected(states: np.ndarray, Mt: np.ndarray | None = None, dchi: float | None = None) -> float:
    """Same distance computed as the norm of the projected error ``(Mt kron I) x``."""
    states = np.asarray(states, dtype=float)
    Mt = sync_projector(states.shape[0]) if Mt is None else Mt
    dchi = _cells_dchi(states, dchi)
    e = np.einsum("ij,jcp->icp", Mt, states)
    return float(np.sqrt(dchi * np.sum(e**2)))


def lyapunov_value(
    states: np.ndarray,
    p: HyperbolicPlant,
    c: AnalysisCertificate,
    Mt: np.ndarray | None = None,
) -> float:
    """sum_i int_0^1 e^{-mu chi} w_i^T S^-1 R w_i dchi with w = (Mt kron I) x."""
    states = np.asarray(states, dtype=float)
    Mt = sync_projector(states.shape[0]) if Mt is None else Mt
    cells = states.shape[1]
    chi = (np.arange(cells) + 0.5) / cells
    w = np.einsum("ij,jcp->icp", Mt, states)
    weight = np.diag(c.R) / p.speeds
    density = np.exp(-c.mu * chi)[None, :] * np.sum(w**2 * weight, axis=2)
    return float(np.sum(density) / cells)


def coercivity_constant(p: HyperbolicPlant, c: AnalysisCertificate) -> float:
    """c with V >= c * d^2: the smallest value of the weight over [0, 1]."""
    return float(np.exp(-c.mu) * np.min(np.diag(c.R) / p.speeds))


def sync_metrics(states: np.ndarray, t: float, p: HyperbolicPlant, c: AnalysisCertificate | None = None) -> SyncMetrics:
    return SyncMetrics(
        t=t,
        avg_error_profile=avg_sync_error(states),
        sync_distance=sync_distance(states),
        lyapunov_value=lyapunov_value(states, p, c) if c is not None else float("nan"),
    )


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    samples: int


def decay_rate(
    times,
    distances=None,
    window: tuple[float, float] | None = None,
    floor: float = 1e-12,
) -> DecayFit:
    """Least-squares slope of log d(t), restricted to ``window`` and d > floor.

    ``times`` may also be a ``NetworkTrajectory``, in which case its recorded
    synchronization distance is fitted and ``distances`` must be omitted.
    """
    if distances is None:
        times, distances = times.times, times.metrics["sync_distance"]
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if t.shape != d.shape or t.ndim != 1:
        raise ValueError("times and distances must be 1-D arrays of equal length")
    if d.size == 0 or not np.any(d[1:] < 0.5 * d[0]):
        raise InsufficientDecay("distance never drops below half its initial value")
    mask = d > floor
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    if mask.sum() < 10:
        raise InsufficientDecay(f"only {int(mask.sum())} samples above the noise floor")
    x, y = t[mask], np.log(d[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=float(slope), r_squared=float(r2), samples=int(mask.sum()))


@dataclass(frozen=True)
class ConeCheckReport:
    ok: bool
    min_value: float
    worst_pair: tuple[np.ndarray, np.ndarray]
    samples: int
    tol: float


def cone_bound_check(
    h: Callable[[np.ndarray], np.ndarray],
    cone: ConeBound,
    low,
    high,
    samples: int = 4096,
    tol: float = 1e-9,
) -> ConeCheckReport:
    """Sample the incremental cone inequality on pairs from the box [low, high].

    Pairs come from an unscrambled Halton sequence, so the result is
    deterministic. A sampler can refute the bound but never certify it.
    """
    n_z = cone.G12.shape[0]
    low = np.broadcast_to(np.asarray(low, dtype=float), (n_z,))
    high = np.broadcast_to(np.asarray(high, dtype=float), (n_z,))
    pts = qmc.Halton(d=2 * n_z, scramble=False).random(samples + 1)[1:]
    q1 = low + (high - low) * pts[:, :n_z]
    q2 = low + (high - low) * pts[:, n_z:]
    dq = q1 - q2
    dh = np.asarray(h(q1), dtype=float).reshape(samples, -1) - np.asarray(h(q2), dtype=float).reshape(samples, -1)
    form = 2.0 * np.einsum("si,ij,sj->s", dq, cone.G12, dh) + np.einsum("si,ij,sj->s", dh, cone.G22, dh)
    scale = np.maximum(1.0, np.sum(dq**2, axis=1) + np.sum(dh**2, axis=1))
    k = int(np.argmin(form / scale))
    ok = bool(np.all(form >= -tol * scale))
    return ConeCheckReport(ok=ok, min_value=float(form[k]), worst_pair=(q1[k], q2[k]), samples=samples, tol=tol)
