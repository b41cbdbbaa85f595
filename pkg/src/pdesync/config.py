"""Experiment configuration and certificate files (YAML)."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import presets, sim
from .graph import GraphError, WeightedDigraph, laplacian
from .lmi import AnalysisCertificate, ConeBound, DesignCertificate, HyperbolicPlant

EXAMPLE_PRESET = "paper-example"


class ConfigError(ValueError):
    pass


def _rows(m) -> list[list[float]]:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    return [[float(v) for v in row] for row in a]


@dataclass
class PlantConfig:
    S: list
    E: list
    B: list
    H: list
    Q: list
    G12: list
    G22: list
    nonlinearity: str = "tanh"

    def build(self) -> HyperbolicPlant:
        return HyperbolicPlant(
            S=self.S, E=self.E, B=self.B, H=self.H, Q=self.Q,
            cone=ConeBound(self.G12, self.G22), nonlinearity=self.nonlinearity,
        )


@dataclass
class GraphConfig:
    laplacian: list | None = None
    nodes: int | None = None
    edges: list | None = None

    def build(self) -> np.ndarray:
        if self.laplacian is not None:
            if self.edges is not None:
                raise ConfigError("graph: give either 'laplacian' or 'edges', not both")
            return np.array(self.laplacian, dtype=float)
        if self.edges is None or self.nodes is None:
            raise ConfigError("graph: need 'laplacian' or both 'nodes' and 'edges'")
        return laplacian(WeightedDigraph.from_edges(self.nodes, self.edges))


@dataclass
class SolverConfig:
    mu_grid: list | None = None
    bound: float = 100.0


@dataclass
class GridConfig:
    cells: int = 200
    cfl: float = 0.9
    t_final: float = presets.T_FINAL
    snapshot_times: list = field(default_factory=lambda: list(presets.SNAPSHOT_TIMES))


@dataclass
class InitialConfig:
    preset: str | None = EXAMPLE_PRESET
    # per agent, per state component: {"a": [...], "b": [...]} cosine / sine coefficients
    profiles: list | None = None

    def build(self):
        if self.profiles is not None:
            return [sim.trig_profile(agent) for agent in self.profiles]
        if self.preset == EXAMPLE_PRESET:
            return sim.example_initial_conditions()
        raise ConfigError(f"unknown initial-condition preset {self.preset!r}")

    def agent_count(self) -> int:
        if self.profiles is not None:
            return len(self.profiles)
        return len(sim.EXAMPLE_INITIAL)


@dataclass
class ExperimentConfig:
    plant: PlantConfig
    graph: GraphConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: str | None = None
    name: str = "experiment"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        known = {"plant", "graph", "solver", "grid", "initial", "output", "name"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(
                plant=PlantConfig(**data["plant"]),
                graph=GraphConfig(**data["graph"]),
                solver=SolverConfig(**(data.get("solver") or {})),
                grid=GridConfig(**(data.get("grid") or {})),
                initial=InitialConfig(**(data.get("initial") or {})),
                output=data.get("output"),
                name=data.get("name", "experiment"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cfg

    def validate(self) -> tuple[HyperbolicPlant, np.ndarray]:
        """Build plant and Laplacian and cross-check every dimension."""
        try:
            plant = self.plant.build()
            L = self.graph.build()
            sim.nonlinearity(plant)
        except (ValueError, GraphError) as exc:
            raise ConfigError(str(exc)) from exc
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ConfigError(f"Laplacian must be square, got {L.shape}")
        if self.initial.profiles is not None or L.shape[0] > 1:
            agents = self.initial.agent_count()
            if agents != L.shape[0]:
                raise ConfigError(f"{agents} initial profiles for a graph of {L.shape[0]} nodes")
            comps = {len(a) for a in self.initial.profiles} if self.initial.profiles else {2}
            if comps != {plant.n_p}:
                raise ConfigError(f"initial profiles must have {plant.n_p} components")
        if self.solver.mu_grid is not None and (not self.solver.mu_grid or min(self.solver.mu_grid) <= 0):
            raise ConfigError("solver.mu_grid must be a nonempty list of positive numbers")
        g = self.grid
        if g.cells < 8 or not 0 < g.cfl <= 1 or g.t_final <= 0:
            raise ConfigError("grid: need cells >= 8, 0 < cfl <= 1, t_final > 0")
        if any(t < 0 or t > g.t_final for t in g.snapshot_times):
            raise ConfigError("grid.snapshot_times must lie in [0, t_final]")
        return plant, L


def example_config() -> ExperimentConfig:
    return ExperimentConfig(
        plant=PlantConfig(**copy.deepcopy(presets.PLANT)),
        graph=GraphConfig(laplacian=copy.deepcopy(presets.LAPLACIAN)),
        name=EXAMPLE_PRESET,
    )


def load_config(source: str | Path) -> ExperimentConfig:
    """Load a YAML config, or the built-in preset when ``source`` names it."""
    if str(source) == EXAMPLE_PRESET:
        return example_config()
    path = Path(source)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg))


# certificates


def certificate_to_dict(cert) -> dict[str, Any]:
    if isinstance(cert, DesignCertificate):
        return {
            "kind": "design",
            "mu": cert.mu,
            "W": [float(v) for v in np.diag(cert.W)],
            "Y": _rows(cert.Y),
            "sigma": cert.sigma,
            "K": _rows(cert.K),
        }
    if isinstance(cert, AnalysisCertificate):
        out = {
            "kind": "analysis",
            "mu": cert.mu,
            "R": [float(v) for v in np.diag(cert.R)],
            "tau": cert.tau,
            "K": _rows(cert.K),
        }
        if cert.alpha is not None:
            out["alpha"] = cert.alpha
        return out
    if isinstance(cert, np.ndarray):
        return {"kind": "gain", "K": _rows(cert)}
    raise TypeError(f"not a certificate: {type(cert).__name__}")


def certificate_from_dict(data: dict):
    """DesignCertificate, AnalysisCertificate, or a bare gain array for ``kind: gain``."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("certificate must be a mapping with a 'kind' key")
    kind = data["kind"]
    try:
        if kind == "design":
            # K in the file is informational; it is always recomputed as Y W^-1
            return DesignCertificate(W=np.diag(data["W"]), Y=data["Y"], sigma=data["sigma"], mu=data["mu"])
        if kind == "analysis":
            return AnalysisCertificate(
                K=data["K"], R=np.diag(data["R"]), mu=data["mu"], tau=data["tau"], alpha=data.get("alpha")
            )
        if kind == "gain":
            return np.atleast_2d(np.asarray(data["K"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} certificate: {exc}") from exc
    raise ConfigError(f"unknown certificate kind {kind!r}")


def save_certificate(cert, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(certificate_to_dict(cert), sort_keys=False, default_flow_style=None))


def load_certificate(path: str | Path):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read certificate {path}: {exc}") from exc
    return certificate_from_dict(data)
