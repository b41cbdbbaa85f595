"""Small dense LMI feasibility solver and the gain design / verification built on it.

The solver maximizes a common margin ``t`` such that every block satisfies
``F_k(x) + eps_k I + t I <= 0`` (``eps_k`` is the strictness margin for strict
blocks, zero otherwise), using a log-determinant barrier and damped Newton
steps. Each scalar decision variable is also boxed to ``|x_i| <= bound`` so the
margin stays bounded for homogeneous problems. Verdicts are re-derived from
plain eigenvalue checks on the user's block callables, never from solver
internals.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import lmi
from .graph import LaplacianSpectrum
from .lmi import AnalysisCertificate, DesignCertificate, HyperbolicPlant

log = logging.getLogger(__name__)

POSDIAG, FULL, POSSCALAR = "posdiag", "full", "posscalar"
FEAS_TOL = 1e-8
DEFAULT_MU_GRID = tuple(np.logspace(-3, np.log10(5.0), 40))


class SolverError(RuntimeError):
    pass


class MaxIterations(SolverError):
    pass


class NumericalBreakdown(SolverError):
    pass


class InfeasibleOnGrid(RuntimeError):
    def __init__(self, diagnostics: list[tuple[float, "FeasibilityReport"]]):
        self.diagnostics = diagnostics
        best = max((r.best_margin for _, r in diagnostics), default=float("nan"))
        super().__init__(
            f"no feasible point on a grid of {len(diagnostics)} mu values "
            f"(best common margin {best:.3g})"
        )


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    shape: tuple[int, ...]

    def __post_init__(self):
        if self.kind == POSDIAG:
            ok = len(self.shape) == 1 and self.shape[0] >= 1
        elif self.kind == FULL:
            ok = len(self.shape) == 2 and min(self.shape) >= 1
        elif self.kind == POSSCALAR:
            ok = self.shape == ()
        else:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if not ok:
            raise ValueError(f"bad shape {self.shape} for {self.kind} variable {self.name!r}")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def unpack(self, flat: np.ndarray):
        if self.kind == POSDIAG:
            return np.diag(flat)
        if self.kind == FULL:
            return flat.reshape(self.shape)
        return float(flat[0])

    def pack(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        if self.kind == POSDIAG:
            return np.diag(value).copy() if value.ndim == 2 else value.ravel().copy()
        return value.ravel().copy()

    def initial(self) -> np.ndarray:
        if self.kind == FULL:
            return np.zeros(self.size)
        return np.ones(self.size)


@dataclass(frozen=True)
class Block:
    """Symmetric matrix ``fn(values)``, required ``<= 0`` (or ``< 0`` when strict)."""

    name: str
    fn: Callable[[dict], np.ndarray]
    strict: bool = False


@dataclass
class LmiProblem:
    variables: list[Variable]
    blocks: list[Block]
    epsilon: float | None = None
    bound: float = 100.0

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        if not self.blocks:
            raise ValueError("problem has no blocks")
        if self.bound <= 0:
            raise ValueError("bound must be positive")

    @property
    def dim(self) -> int:
        return sum(v.size for v in self.variables)

    def unpack(self, x: np.ndarray) -> dict:
        values, i = {}, 0
        for v in self.variables:
            values[v.name] = v.unpack(x[i : i + v.size])
            i += v.size
        return values

    def pack(self, values: dict) -> np.ndarray:
        return np.concatenate([v.pack(values[v.name]) for v in self.variables])

    def evaluate(self, values: dict) -> list[np.ndarray]:
        return [np.asarray(b.fn(values), dtype=float) for b in self.blocks]

    def affine_form(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per block ``(F0, Fi)`` with ``F(x) = F0 + sum_i x_i Fi[i]``; checks affinity."""
        n = self.dim
        f0 = self.evaluate(self.unpack(np.zeros(n)))
        coeffs = [np.empty((n,) + m.shape) for m in f0]
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            for k, m in enumerate(self.evaluate(self.unpack(e))):
                coeffs[k][i] = m - f0[k]
        probe = np.linspace(-1.0, 1.0, n) if n > 1 else np.array([0.7])
        for k, m in enumerate(self.evaluate(self.unpack(probe))):
            m_aff = f0[k] + np.tensordot(probe, coeffs[k], axes=1)
            scale = max(1.0, np.max(np.abs(m)))
            if m.shape[0] != m.shape[1] or np.max(np.abs(m - m.T)) > 1e-12 * scale:
                raise ValueError(f"block {self.blocks[k].name!r} is not symmetric")
            if np.max(np.abs(m - m_aff)) > 1e-9 * scale:
                raise ValueError(f"block {self.blocks[k].name!r} is not affine")
        return list(zip(f0, coeffs))

    def scale(self, form=None) -> float:
        form = form or self.affine_form()
        norms = [np.max(np.abs(f0)) for f0, _ in form]
        norms += [np.max(np.abs(fi)) for _, fi in form if fi.size]
        return max(1.0, max(norms))


@dataclass
class FeasibilityReport:
    feasible: bool
    assignment: dict | None
    margins: dict[str, float]
    iterations: int = 0
    residual: float = 0.0
    best_margin: float = float("nan")
    failed: list[str] = field(default_factory=list)
    message: str = ""
    extra: dict = field(default_factory=dict)

    def table(self) -> str:
        lines = [f"{'block':<24} {'lambda_max':>14}  status"]
        for name, m in self.margins.items():
            status = "FAIL" if name in self.failed else "ok"
            lines.append(f"{name:<24} {m:>14.6e}  {status}")
        return "\n".join(lines)


def _recheck(prob: LmiProblem, values: dict, eps: float) -> tuple[dict, list[str], float]:
    margins, failed, residual = {}, [], 0.0
    for block, m in zip(prob.blocks, prob.evaluate(values)):
        shift = eps if block.strict else 0.0
        lam = lmi.lambda_max(m)
        margins[block.name] = lam
        if not lmi.is_nsd(m + shift * np.eye(m.shape[0]), FEAS_TOL):
            failed.append(block.name)
        residual = max(residual, lam + shift)
    for v in prob.variables:
        if v.kind in (POSDIAG, POSSCALAR):
            entries = np.atleast_1d(v.pack(values[v.name]))
            if np.any(entries <= 0):
                failed.append(f"{v.name}>0")
    return margins, failed, max(residual, 0.0)


def solve_feasibility(
    prob: LmiProblem,
    *,
    max_newton: int = 200,
    max_outer: int = 40,
    rel_gap: float = 1e-6,
) -> FeasibilityReport:
    """Barrier interior-point search for a point satisfying every block.

    Returns a report whose ``feasible`` flag comes from an independent
    eigenvalue re-check of the returned assignment. An infeasible verdict only
    means no point was found.
    """
    form = prob.affine_form()
    scale = prob.scale(form)
    eps = prob.epsilon if prob.epsilon is not None else 1e-6 * scale
    n = prob.dim

    # lift every constraint to "G(x) + t I <= 0" with G affine in x
    consts, lins = [], []
    for (f0, fi), block in zip(form, prob.blocks):
        shift = eps if block.strict else 0.0
        consts.append(f0 + shift * np.eye(f0.shape[0]))
        lins.append(fi)
    box_c, box_l = [], []
    offset = 0
    for v in prob.variables:
        for j in range(v.size):
            e = np.zeros(n)
            e[offset + j] = 1.0
            box_c += [-prob.bound, -prob.bound]
            box_l += [e, -e]
            if v.kind != FULL:
                box_c.append(0.0)
                box_l.append(-e)
        offset += v.size
    box_c = np.array(box_c)
    box_l = np.array(box_l).reshape(len(box_c), n)
    m_total = sum(c.shape[0] for c in consts) + len(box_c)

    def slacks(z):
        x, t = z[:-1], z[-1]
        mats = []
        for c, fi in zip(consts, lins):
            g = c + np.tensordot(x, fi, axes=1)
            mats.append(-(g + t * np.eye(c.shape[0])))
        lin = -(box_c + box_l @ x + t)
        return mats, lin

    def max_violation(x):
        worst = max(np.linalg.eigvalsh(c + np.tensordot(x, fi, axes=1))[-1] for c, fi in zip(consts, lins))
        return max(worst, np.max(box_c + box_l @ x))

    x0 = np.concatenate([v.initial() for v in prob.variables])
    z = np.append(x0, -max_violation(x0) - 1.0)

    def barrier(z, c):
        mats, lin = slacks(z)
        if np.any(lin <= 0):
            return np.inf
        total = -c * z[-1] - np.sum(np.log(lin))
        for s in mats:
            try:
                chol = np.linalg.cholesky(s)
            except np.linalg.LinAlgError:
                return np.inf
            total -= 2.0 * np.sum(np.log(np.diag(chol)))
        return total

    def grad_hess(z, c):
        mats, lin = slacks(z)
        grad = np.zeros(n + 1)
        hess = np.zeros((n + 1, n + 1))
        grad[-1] = -c
        for s, fi in zip(mats, lins):
            s_inv = np.linalg.inv(s)
            s_inv = 0.5 * (s_inv + s_inv.T)
            a = np.concatenate([fi, np.eye(s.shape[0])[None]], axis=0)
            sa = np.einsum("ij,kjl->kil", s_inv, a)
            grad += np.einsum("kii->k", sa)
            hess += np.einsum("aij,bji->ab", sa, sa)
        a_lin = np.hstack([box_l, np.ones((len(lin), 1))])
        w = 1.0 / lin
        grad += a_lin.T @ w
        hess += (a_lin * (w**2)[:, None]).T @ a_lin
        return grad, hess

    c = 1.0
    iterations = 0
    status = "max outer iterations"
    for _ in range(max_outer):
        for _ in range(max_newton):
            iterations += 1
            grad, hess = grad_hess(z, c)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                raise NumericalBreakdown("non-finite barrier derivatives")
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError as exc:
                raise NumericalBreakdown(f"singular Newton system: {exc}") from exc
            decrement = float(-grad @ step)
            if decrement < 0 or not np.isfinite(decrement):
                raise NumericalBreakdown("Newton system lost positive definiteness")
            if decrement / 2.0 < 1e-9:
                break
            f_z = barrier(z, c)
            alpha = 1.0
            while alpha > 1e-14:
                trial = z + alpha * step
                f_t = barrier(trial, c)
                if f_t <= f_z - 0.25 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break
            if np.array_equal(trial, z):
                break
            z = trial
        else:
            raise MaxIterations(f"centering did not converge within {max_newton} Newton steps")
        gap = m_total / c
        t = z[-1]
        if t + gap < -FEAS_TOL * scale:
            status = "margin upper bound below zero"
            break
        if gap < max(rel_gap * abs(t), 1e-10 * scale):
            status = "converged"
            break
        c *= 10.0

    values = prob.unpack(z[:-1])
    margins, failed, residual = _recheck(prob, values, eps)
    feasible = not failed
    return FeasibilityReport(
        feasible=feasible,
        assignment=values if feasible else None,
        margins=margins,
        iterations=iterations,
        residual=residual,
        best_margin=float(z[-1]),
        failed=failed,
        message=status,
        extra={"epsilon": eps, "last_point": values},
    )


def _affine_block(f0: np.ndarray, coeffs: np.ndarray, variables: list[Variable]) -> Callable[[dict], np.ndarray]:
    def fn(values):
        x = np.concatenate([v.pack(values[v.name]) for v in variables])
        return f0 + np.tensordot(x, coeffs, axes=1)

    return fn


def random_problem(rng: np.random.Generator, max_blocks: int = 3, max_size: int = 3) -> LmiProblem:
    """A small random LMI problem with mixed variable kinds, for fuzzing.

    Offsets are drawn on both sides of zero, so roughly half of the problems
    are infeasible.
    """
    variables = [Variable("d", POSDIAG, (int(rng.integers(1, 3)),)), Variable("s", POSSCALAR, ())]
    if rng.random() < 0.5:
        variables.append(Variable("f", FULL, (1, int(rng.integers(1, 3)))))
    dim = sum(v.size for v in variables)
    blocks = []
    for k in range(int(rng.integers(1, max_blocks + 1))):
        m = int(rng.integers(1, max_size + 1))
        g = rng.normal(size=(m, m))
        f0 = 0.5 * (g + g.T) + rng.uniform(-3.0, 1.0) * np.eye(m)
        coeffs = rng.normal(size=(dim, m, m))
        coeffs = 0.5 * (coeffs + coeffs.transpose(0, 2, 1))
        blocks.append(Block(f"B{k}", _affine_block(f0, coeffs, variables), strict=bool(rng.random() < 0.5)))
    return LmiProblem(variables, blocks, bound=10.0)


def audit(prob: LmiProblem, report: FeasibilityReport) -> list[str]:
    """Constraints a ``feasible`` report violates, found with plain eigenvalues.

    Empty for infeasible reports. Strict blocks must sit below ``-eps``.
    """
    if not report.feasible:
        return []
    eps = report.extra.get("epsilon", 0.0)
    bad = []
    for block, m in zip(prob.blocks, prob.evaluate(report.assignment)):
        top = np.linalg.eigvalsh(0.5 * (m + m.T))[-1]
        if top > (-eps if block.strict else 0.0) + FEAS_TOL * max(1.0, np.linalg.norm(m, 2)):
            bad.append(block.name)
    for v in prob.variables:
        if v.kind != FULL and np.any(np.atleast_1d(v.pack(report.assignment[v.name])) <= 0):
            bad.append(v.name)
    return bad


def design_problem(p: HyperbolicPlant, spec: LaplacianSpectrum, mu: float, bound: float = 100.0) -> LmiProblem:
    """The gain-design LMIs at fixed ``mu`` in the variables W, Y, sigma."""
    variables = [
        Variable("W", POSDIAG, (p.n_p,)),
        Variable("Y", FULL, (p.n_u, p.n_p)),
        Variable("sigma", POSSCALAR, ()),
    ]
    blocks = []
    for label, rho in (("vertex@lambda_min", spec.lambda_min_nonzero), ("vertex@lambda_max", spec.lambda_max_nonzero)):
        blocks.append(Block(label, lambda v, rho=rho: lmi.design_vertex_matrix(p, v["W"], v["Y"], mu, rho)))
    for chi in (0.0, 1.0):
        blocks.append(
            Block(f"phi@chi={chi:g}", lambda v, chi=chi: lmi.design_phi_matrix(p, v["W"], v["sigma"], mu, chi), strict=True)
        )
    return LmiProblem(variables, blocks, bound=bound)


def _solve_at(p, spec, mu, bound):
    try:
        report = solve_feasibility(design_problem(p, spec, mu, bound))
    except SolverError as exc:
        return FeasibilityReport(False, None, {}, message=f"{type(exc).__name__}: {exc}")
    if report.feasible:
        a = report.assignment
        cert = DesignCertificate(W=a["W"], Y=a["Y"], sigma=a["sigma"], mu=mu)
        check = verify_design(p, spec, cert)
        if not check.feasible:
            report.feasible = False
            report.failed = check.failed
            report.message = "solver point rejected by verify_design"
        else:
            report.extra["certificate"] = cert
    return report


def design_gain(
    p: HyperbolicPlant,
    spec: LaplacianSpectrum,
    mu_grid: Sequence[float] | None = None,
    *,
    bound: float = 100.0,
    workers: int = 1,
) -> DesignCertificate:
    """Line search over ``mu``; the first feasible grid point (in grid order) wins."""
    grid = [float(m) for m in (DEFAULT_MU_GRID if mu_grid is None else mu_grid)]
    if not grid or any(m <= 0 for m in grid):
        raise ValueError("mu grid must be nonempty with positive entries")
    diagnostics = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda m: _solve_at(p, spec, m, bound), grid))
        for mu, report in zip(grid, reports):
            if report.feasible:
                return report.extra["certificate"]
            diagnostics.append((mu, report))
    else:
        for mu in grid:
            report = _solve_at(p, spec, mu, bound)
            log.debug("mu=%.6g feasible=%s margin=%.3g", mu, report.feasible, report.best_margin)
            if report.feasible:
                return report.extra["certificate"]
            diagnostics.append((mu, report))
    raise InfeasibleOnGrid(diagnostics)


def _report(named_blocks, strict_names) -> FeasibilityReport:
    margins, failed, residual = {}, [], 0.0
    for name, m in named_blocks:
        margins[name] = lmi.lambda_max(m)
        ok = lmi.is_nd(m) if name in strict_names else lmi.is_nsd(m)
        if not ok:
            failed.append(name)
        residual = max(residual, margins[name])
    return FeasibilityReport(
        feasible=not failed,
        assignment=None,
        margins=margins,
        residual=residual,
        best_margin=-max(margins.values()),
        failed=failed,
    )


def verify_design(p: HyperbolicPlant, spec: LaplacianSpectrum, d: DesignCertificate) -> FeasibilityReport:
    blocks = [
        ("vertex@lambda_min", lmi.design_vertex_block(p, d, spec.lambda_min_nonzero)),
        ("vertex@lambda_max", lmi.design_vertex_block(p, d, spec.lambda_max_nonzero)),
        ("phi@chi=0", lmi.design_phi_s(p, d, 0.0)),
        ("phi@chi=1", lmi.design_phi_s(p, d, 1.0)),
    ]
    report = _report(blocks, {"phi@chi=0", "phi@chi=1"})
    report.assignment = {"W": d.W, "Y": d.Y, "sigma": d.sigma, "mu": d.mu, "K": d.K}
    return report


def decay_margin(p: HyperbolicPlant, c: AnalysisCertificate) -> float:
    """A feasible decrement ``alpha`` from the source-block margins (0 if none)."""
    alphas = []
    for chi in (0.0, 1.0):
        margin = -lmi.lambda_max(lmi.analysis_phi(p, c, chi))
        alphas.append(margin / (np.exp(-c.mu * chi) * np.max(np.diag(c.R))))
    return max(0.0, min(alphas))


def verify_analysis(p: HyperbolicPlant, spec: LaplacianSpectrum, c: AnalysisCertificate) -> FeasibilityReport:
    blocks = [
        ("vertex@lambda_min", lmi.analysis_vertex_block(p, c, spec.lambda_min_nonzero)),
        ("vertex@lambda_max", lmi.analysis_vertex_block(p, c, spec.lambda_max_nonzero)),
        ("phi@chi=0", lmi.analysis_phi(p, c, 0.0)),
        ("phi@chi=1", lmi.analysis_phi(p, c, 1.0)),
    ]
    report = _report(blocks, {"phi@chi=0", "phi@chi=1"})
    report.assignment = {"K": c.K, "R": c.R, "mu": c.mu, "tau": c.tau}
    report.extra["alpha"] = decay_margin(p, c)
    return report
