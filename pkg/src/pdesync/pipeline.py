"""Run the coupled network and summarize how well it synchronizes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, sim
from .lmi import AnalysisCertificate, HyperbolicPlant

DISTANCE_RATIO_MAX = 0.05
R2_MIN = 0.9
BOUNDARY_MIN = 0.01
DISAGREEMENT_RATIO_MAX = 0.05


@dataclass
class SyncSummary:
    distance_ratio: float
    fit: metrics.DecayFit | None
    leader_boundary_max: float
    disagreement_initial: float
    disagreement_late: float
    lyapunov_step_ratio: float
    lyapunov_slack: float
    late_window: tuple[float, float]

    @property
    def disagreement_ratio(self) -> float:
        if self.disagreement_initial == 0:
            return np.inf if self.disagreement_late > 0 else 0.0
        return self.disagreement_late / self.disagreement_initial

    def checks(self) -> dict[str, bool]:
        out = {
            "distance_ratio": self.distance_ratio <= DISTANCE_RATIO_MAX,
            "decay_fit": self.fit is not None and self.fit.rate < 0 and self.fit.r_squared >= R2_MIN,
            "non_vanishing": self.leader_boundary_max >= BOUNDARY_MIN,
            "boundary_agreement": self.disagreement_late <= DISAGREEMENT_RATIO_MAX * self.disagreement_initial,
        }
        if np.isfinite(self.lyapunov_step_ratio):
            out["lyapunov_monotone"] = self.lyapunov_step_ratio <= self.lyapunov_slack
        return out


def boundary_disagreement(boundary: np.ndarray) -> np.ndarray:
    """max_{i,j} |x_i(t, 1) - x_j(t, 1)| for every recorded time."""
    diff = boundary[:, :, None, :] - boundary[:, None, :, :]
    return np.max(np.linalg.norm(diff, axis=3), axis=(1, 2))


def lyapunov_step_ratio(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=float)
    if np.any(np.isnan(v)):
        return float("nan")
    prev, nxt = v[:-1], v[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prev > 0, nxt / prev, np.where(nxt > 0, np.inf, 1.0))
    return float(np.max(ratio))


def summarize(traj: sim.NetworkTrajectory, fit_start: float = 2.0, late_start: float | None = None) -> SyncSummary:
    t = traj.times
    t_final = float(t[-1])
    d = traj.metrics["sync_distance"]
    try:
        fit = metrics.decay_rate(t, d, window=(fit_start, t_final))
    except metrics.InsufficientDecay:
        fit = None
    late_start = 0.75 * t_final if late_start is None else late_start
    late = t >= late_start
    dis = boundary_disagreement(traj.boundary)
    return SyncSummary(
        distance_ratio=float(d[-1] / d[0]) if d[0] > 0 else float("nan"),
        fit=fit,
        leader_boundary_max=float(np.max(np.linalg.norm(traj.boundary[late, 0, :], axis=1))),
        disagreement_initial=float(dis[0]),
        disagreement_late=float(np.max(dis[late])),
        lyapunov_step_ratio=lyapunov_step_ratio(traj.metrics["lyapunov_value"]),
        lyapunov_slack=1.0 + 10.0 * traj.grid.dchi,
        late_window=(late_start, t_final),
    )


def run_network(
    p: HyperbolicPlant,
    L,
    K,
    initial,
    *,
    cells: int = 200,
    cfl: float = 0.9,
    t_final: float = 20.0,
    snapshot_times=(0.0, 2.0, 5.0, 20.0),
    certificate: AnalysisCertificate | None = None,
) -> sim.NetworkTrajectory:
    grid = sim.Grid.for_plant(p, cells, cfl)
    snaps = [s for s in snapshot_times if s <= t_final]
    return sim.simulate(p, L, K, grid, initial, t_final, snaps, certificate=certificate)
