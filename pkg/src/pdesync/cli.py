"""Command-line front end: ``pdesync {spectrum,design,verify,simulate,reproduce,fuzz,preset}``.

Exit codes: 0 success, 1 config or certificate error, 2 graph fails the
connectivity / spectrum checks, 3 infeasible or failed verification,
4 solver breakdown or simulation failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import graph, pipeline, presets, sdp, sim
from .lmi import AnalysisCertificate, DesignCertificate
from .metrics import avg_sync_error

EXIT_OK, EXIT_CONFIG, EXIT_GRAPH, EXIT_INFEASIBLE, EXIT_BREAKDOWN = 0, 1, 2, 3, 4
REPORTED_MARGIN_TOL = 1e-4
CSV_FMT = "%.17g"

log = logging.getLogger("pdesync")


class StageFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(args, cfg=None) -> Path:
    out = args.out or os.environ.get("PDE_SYNC_OUT") or (cfg.output if cfg else None) or "pdesync-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> cfgmod.ExperimentConfig:
    try:
        cfg = cfgmod.load_config(args.config)
    except cfgmod.ConfigError as exc:
        raise StageFailed(EXIT_CONFIG, str(exc)) from exc
    if getattr(args, "cells", None) and len(args.cells) == 1:
        cfg.grid.cells = args.cells[0]
    if getattr(args, "cfl", None) is not None:
        cfg.grid.cfl = args.cfl
    if getattr(args, "tfinal", None) is not None:
        cfg.grid.t_final = args.tfinal
        cfg.grid.snapshot_times = [t for t in cfg.grid.snapshot_times if t <= args.tfinal]
    if getattr(args, "mu", None):
        cfg.solver.mu_grid = list(args.mu)
    return cfg


def _validated(cfg):
    try:
        return cfg.validate()
    except cfgmod.ConfigError as exc:
        raise StageFailed(EXIT_CONFIG, f"invalid config: {exc}") from exc


def _spectrum(L) -> graph.LaplacianSpectrum:
    try:
        return graph.spectrum(L)
    except graph.GraphError as exc:
        raise StageFailed(EXIT_GRAPH, f"{type(exc).__name__}: {exc}") from exc


def _load_cert(path):
    if path is None:
        raise StageFailed(EXIT_CONFIG, "--cert is required")
    try:
        return cfgmod.load_certificate(path)
    except cfgmod.ConfigError as exc:
        raise StageFailed(EXIT_CONFIG, str(exc)) from exc


def _gain_of(cert) -> np.ndarray:
    return cert if isinstance(cert, np.ndarray) else cert.K


def _analysis_of(cert) -> AnalysisCertificate | None:
    if isinstance(cert, DesignCertificate):
        return cert.to_analysis()
    if isinstance(cert, AnalysisCertificate):
        return cert
    return None


# stages


def stage_spectrum(L, echo=print) -> graph.LaplacianSpectrum:
    spec = _spectrum(L)
    echo("eigenvalues: " + ", ".join(f"{v:.12g}" for v in spec.eigenvalues))
    echo(f"lambda_min_nonzero: {spec.lambda_min_nonzero:.12g}")
    echo(f"lambda_max_nonzero: {spec.lambda_max_nonzero:.12g}")
    echo(f"connected: yes  diagonalizable: {'yes' if spec.diagonalizable else 'no'}")
    if not spec.symmetric:
        echo("warning: Laplacian is not symmetric (directed graph); only its real spectrum is used")
    return spec


def stage_design(plant, spec, cfg, echo=print) -> DesignCertificate:
    try:
        cert = sdp.design_gain(plant, spec, cfg.solver.mu_grid, bound=cfg.solver.bound)
    except sdp.InfeasibleOnGrid as exc:
        for mu, rep in exc.diagnostics:
            log.info("mu=%.6g best margin %.3e (%s)", mu, rep.best_margin, rep.message)
        raise StageFailed(EXIT_INFEASIBLE, str(exc)) from exc
    except sdp.SolverError as exc:
        raise StageFailed(EXIT_BREAKDOWN, f"{type(exc).__name__}: {exc}") from exc
    echo(f"mu: {cert.mu:.12g}")
    echo("K: " + np.array2string(cert.K, precision=8))
    echo("W: " + np.array2string(np.diag(cert.W), precision=8))
    echo(f"sigma: {cert.sigma:.12g}")
    return cert


def stage_verify(plant, spec, cert, echo=print) -> bool:
    try:
        return _verify(plant, spec, cert, echo)
    except ValueError as exc:
        raise StageFailed(EXIT_CONFIG, f"certificate does not fit the plant: {exc}") from exc


def _verify(plant, spec, cert, echo) -> bool:
    ok = True
    if isinstance(cert, DesignCertificate):
        rep = sdp.verify_design(plant, spec, cert)
        echo("design conditions")
        echo(rep.table())
        ok &= rep.feasible
        cert = cert.to_analysis()
    if isinstance(cert, AnalysisCertificate):
        rep = sdp.verify_analysis(plant, spec, cert)
        echo("analysis conditions")
        echo(rep.table())
        echo(f"decay margin alpha: {rep.extra['alpha']:.6e}")
        ok &= rep.feasible
        if rep.failed:
            echo("failed blocks: " + ", ".join(rep.failed))
    else:
        raise StageFailed(EXIT_CONFIG, "a bare gain cannot be verified; provide a design or analysis certificate")
    return ok


def write_csvs(traj: sim.NetworkTrajectory, out: Path) -> list[Path]:
    chi = traj.grid.midpoints
    cols, names = [chi], ["chi"]
    for snap in traj.snapshots:
        err = avg_sync_error(snap.states)
        for c in range(err.shape[1]):
            cols.append(err[:, c])
            names.append(f"e{c + 1}_t={snap.t:g}")
    paths = [out / "avg_error_profiles.csv", out / "boundary_traces.csv", out / "metrics.csv"]
    np.savetxt(paths[0], np.column_stack(cols), fmt=CSV_FMT, delimiter=",", header=",".join(names), comments="")

    steps, n, n_p = traj.boundary.shape
    names = ["t"] + [f"x{i + 1}_{c + 1}" for i in range(n) for c in range(n_p)]
    data = np.column_stack([traj.times, traj.boundary.reshape(steps, n * n_p)])
    np.savetxt(paths[1], data, fmt=CSV_FMT, delimiter=",", header=",".join(names), comments="")

    data = np.column_stack([traj.times, traj.metrics["sync_distance"], traj.metrics["lyapunov_value"]])
    np.savetxt(paths[2], data, fmt=CSV_FMT, delimiter=",", header="t,sync_distance,lyapunov_value", comments="")
    return paths


def stage_simulate(plant, L, cert, cfg, out: Path, echo=print) -> sim.NetworkTrajectory:
    g = cfg.grid
    try:
        traj = pipeline.run_network(
            plant, L, _gain_of(cert), cfg.initial.build(),
            cells=g.cells, cfl=g.cfl, t_final=g.t_final,
            snapshot_times=g.snapshot_times, certificate=_analysis_of(cert),
        )
    except sim.SimulationError as exc:
        raise StageFailed(EXIT_BREAKDOWN, f"{type(exc).__name__}: {exc}") from exc
    for path in write_csvs(traj, out):
        echo(f"wrote {path}")
    return traj


# commands


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    try:
        L = cfg.graph.build()
    except (cfgmod.ConfigError, graph.GraphError) as exc:
        raise StageFailed(EXIT_CONFIG, str(exc)) from exc
    stage_spectrum(L)
    return EXIT_OK


def cmd_design(args) -> int:
    cfg = _load(args)
    plant, L = _validated(cfg)
    spec = _spectrum(L)
    cert = stage_design(plant, spec, cfg)
    rep = sdp.verify_design(plant, spec, cert)
    print(rep.table())
    out = _out_dir(args, cfg) / "certificate.yaml"
    cfgmod.save_certificate(cert, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    plant, L = _validated(cfg)
    spec = _spectrum(L)
    cert = _load_cert(args.cert)
    return EXIT_OK if stage_verify(plant, spec, cert) else EXIT_INFEASIBLE


def cmd_simulate(args) -> int:
    cfg = _load(args)
    plant, L = _validated(cfg)
    cert = _load_cert(args.cert)
    K = _gain_of(cert)
    if K.shape != (plant.n_u, plant.n_p):
        raise StageFailed(EXIT_CONFIG, f"gain shape {K.shape} does not match the plant")
    traj = stage_simulate(plant, L, cert, cfg, _out_dir(args, cfg))
    d = traj.metrics["sync_distance"]
    print(f"sync_distance: t=0 {d[0]:.6e}  t={traj.times[-1]:g} {d[-1]:.6e}")
    return EXIT_OK


def _convergence(args) -> int:
    cells = sorted(args.cells)
    errors = sim.transport_errors(cells, cfl=args.cfl or 0.9)
    ratios = errors[:-1] / errors[1:]
    print(f"{'cells':>8} {'L2 error':>14} {'ratio':>8}")
    for i, (c, e) in enumerate(zip(cells, errors)):
        r = f"{ratios[i - 1]:8.4f}" if i else " " * 8
        print(f"{c:>8} {e:>14.6e} {r}")
    ok = bool(np.all((ratios >= 1.7) & (ratios <= 2.3)))
    print(f"order check (ratios in [1.7, 2.3]): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_reproduce(args) -> int:
    if args.cells and len(args.cells) > 1:
        return _convergence(args)
    start = time.perf_counter()
    args.config = args.config or cfgmod.EXAMPLE_PRESET
    cfg = _load(args)
    plant, L = _validated(cfg)
    out = _out_dir(args, cfg)
    checks: dict[str, bool] = {}

    print("== spectrum")
    spec = stage_spectrum(L)

    print("== reported certificate")
    reported = presets.reported_certificate()
    rep = sdp.verify_design(plant, spec, reported)
    print(rep.table())
    checks["reported_certificate"] = max(rep.margins.values()) <= REPORTED_MARGIN_TOL

    print("== design")
    cert = stage_design(plant, spec, cfg)
    cfgmod.save_certificate(cert, out / "certificate.yaml")

    print("== verify")
    checks["design_verified"] = stage_verify(plant, spec, cert)
    if not checks["design_verified"]:
        raise StageFailed(EXIT_INFEASIBLE, "designed certificate failed verification")

    print("== simulate")
    traj = stage_simulate(plant, L, cert, cfg, out)
    summary = pipeline.summarize(traj)
    fit = summary.fit
    print(f"sync distance ratio d(T)/d(0): {summary.distance_ratio:.6e}")
    if fit is not None:
        print(f"decay fit on [2, T]: rate {fit.rate:.6f}  r^2 {fit.r_squared:.6f}")
    print(f"max |x_1(t,1)| on [{summary.late_window[0]:g}, T]: {summary.leader_boundary_max:.6f}")
    print(
        f"boundary disagreement: t=0 {summary.disagreement_initial:.6e}, "
        f"max on late window {summary.disagreement_late:.6e} (informational)"
    )
    print(f"max V(t_k+1)/V(t_k): {summary.lyapunov_step_ratio:.8f} (slack {summary.lyapunov_slack:.4f})")
    sync_checks = summary.checks()
    for key in ("distance_ratio", "decay_fit", "non_vanishing", "lyapunov_monotone"):
        checks[key] = sync_checks.get(key, False)

    print("== summary")
    for key, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {key}")
    print(f"elapsed {time.perf_counter() - start:.1f} s")
    return EXIT_OK if all(checks.values()) else EXIT_INFEASIBLE


def cmd_fuzz(args) -> int:
    rng = np.random.default_rng(args.seed)
    feasible = unsound = errors = 0
    for k in range(args.count):
        prob = sdp.random_problem(rng)
        try:
            rep = sdp.solve_feasibility(prob)
        except sdp.SolverError as exc:
            errors += 1
            print(f"problem {k}: {type(exc).__name__}: {exc}")
            continue
        feasible += rep.feasible
        bad = sdp.audit(prob, rep)
        if bad:
            unsound += 1
            print(f"problem {k}: unsound accept, violated {bad}")
    print(f"seed {args.seed}: {args.count} problems, {feasible} feasible, {errors} solver errors, {unsound} unsound accepts")
    return EXIT_OK if unsound == 0 else EXIT_INFEASIBLE


def cmd_preset(args) -> int:
    cfg = cfgmod.example_config()
    text = cfgmod.dump_config(cfg)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdesync", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_default=cfgmod.EXAMPLE_PRESET):
        p.add_argument("--config", default=config_default, help="YAML config path or 'paper-example'")
        p.add_argument("--out", help="output directory (default $PDE_SYNC_OUT)")
        p.add_argument("--cert", help="certificate YAML")
        p.add_argument("--mu", type=float, action="append", help="mu grid point (repeatable)")
        p.add_argument("--cells", type=int, action="append", help="grid cells (repeatable in reproduce)")
        p.add_argument("--cfl", type=float)
        p.add_argument("--tfinal", type=float)
        p.add_argument("--seed", type=int, default=0, help="unused here; see the fuzz command")

    for name, fn, help_ in (
        ("spectrum", cmd_spectrum, "Laplacian spectrum and connectivity checks"),
        ("design", cmd_design, "synthesize a coupling gain"),
        ("verify", cmd_verify, "check a certificate against the LMI conditions"),
        ("simulate", cmd_simulate, "simulate the network and write CSV files"),
        ("reproduce", cmd_reproduce, "run the full example pipeline"),
    ):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("fuzz", help="solver soundness fuzz on random small LMI problems")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50)
    p.set_defaults(func=cmd_fuzz)
    p = sub.add_parser("preset", help="print the paper-example config as YAML")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
