import numpy as np
import pytest

from pdesync import presets, sdp
from pdesync.graph import spectrum
from pdesync.lmi import AnalysisCertificate, ConeBound, DesignCertificate, HyperbolicPlant
from pdesync.sdp import Block, LmiProblem, Variable


def variant(**overrides):
    data = dict(presets.PLANT)
    data.update(overrides)
    return HyperbolicPlant(
        S=data["S"], E=data["E"], B=data["B"], H=data["H"], Q=data["Q"],
        cone=ConeBound(data["G12"], data["G22"]),
    )


def scalar(name="w"):
    return [Variable(name, sdp.POSSCALAR, ())]


def test_single_scalar_block_feasible():
    rep = sdp.solve_feasibility(LmiProblem(scalar(), [Block("neg", lambda v: np.array([[-v["w"]]]))]))
    assert rep.feasible
    assert rep.assignment["w"] > 0


def test_contradictory_scalar_bounds():
    prob = LmiProblem(
        scalar(),
        [
            Block("w<=1", lambda v: np.array([[v["w"] - 1.0]])),
            Block("w>=1.5", lambda v: np.array([[1.0 - v["w"]]]), strict=True),
        ],
        epsilon=0.5,
    )
    rep = sdp.solve_feasibility(prob)
    assert not rep.feasible
    assert rep.assignment is None
    assert rep.best_margin < 0
    assert rep.failed


def test_problem_rejects_non_affine_blocks():
    prob = LmiProblem(scalar(), [Block("sq", lambda v: np.array([[v["w"] ** 2 - 1.0]]))])
    with pytest.raises(ValueError, match="affine"):
        sdp.solve_feasibility(prob)


def test_variable_shapes():
    with pytest.raises(ValueError):
        Variable("x", sdp.POSDIAG, (2, 2))
    with pytest.raises(ValueError):
        Variable("x", "symmetric", (2,))
    v = Variable("W", sdp.POSDIAG, (3,))
    np.testing.assert_array_equal(v.unpack(v.pack(np.diag([1.0, 2.0, 3.0]))), np.diag([1.0, 2.0, 3.0]))


def test_example_mu_is_feasible(plant, spec):
    prob = sdp.design_problem(plant, spec, presets.MU)
    rep = sdp.solve_feasibility(prob)
    assert rep.feasible
    a = rep.assignment
    cert = DesignCertificate(W=a["W"], Y=a["Y"], sigma=a["sigma"], mu=presets.MU)
    assert sdp.verify_design(plant, spec, cert).feasible
    assert sdp.verify_analysis(plant, spec, cert.to_analysis()).feasible


def test_design_gain_round_trip(plant, spec):
    cert = sdp.design_gain(plant, spec)
    assert sdp.verify_design(plant, spec, cert).feasible
    rep = sdp.verify_analysis(plant, spec, cert.to_analysis())
    assert rep.feasible
    assert rep.extra["alpha"] > 0
    np.testing.assert_allclose(cert.K @ cert.W, cert.Y, atol=1e-9)


def test_design_gain_grid_order(plant, spec):
    cert = sdp.design_gain(plant, spec, [presets.MU, 1e-3])
    assert cert.mu == presets.MU


def test_unstable_feedthrough_without_actuation_is_infeasible(spec):
    p = variant(B=[[0.0], [0.0]], H=[[2.0, 0.0], [0.0, 2.0]], E=[[0.0], [0.0]])
    grid = np.logspace(-3, np.log10(5.0), 20)
    with pytest.raises(sdp.InfeasibleOnGrid) as info:
        sdp.design_gain(p, spec, grid)
    assert len(info.value.diagnostics) == 20
    assert all(not rep.feasible for _, rep in info.value.diagnostics)


def test_full_actuation_is_trivially_feasible(spec):
    p = variant(B=np.eye(2).tolist(), H=np.zeros((2, 2)).tolist(), E=[[0.0], [0.0]])
    cert = sdp.design_gain(p, spec)
    assert np.max(np.abs(cert.K)) < 1e-6


def test_design_gain_rejects_bad_grid(plant, spec):
    with pytest.raises(ValueError):
        sdp.design_gain(plant, spec, [])
    with pytest.raises(ValueError):
        sdp.design_gain(plant, spec, [0.1, -1.0])


def test_reported_certificate_verifies(plant, spec, reported_cert):
    rep = sdp.verify_design(plant, spec, reported_cert)
    assert rep.feasible
    assert max(rep.margins.values()) <= 1e-4
    assert set(rep.margins) == {"vertex@lambda_min", "vertex@lambda_max", "phi@chi=0", "phi@chi=1"}


def test_negated_gain_fails_in_vertex_blocks(plant, spec):
    bad = DesignCertificate.from_gain([[0.0, 0.309]], presets.W_DIAG, presets.SIGMA, presets.MU)
    rep = sdp.verify_design(plant, spec, bad)
    assert not rep.feasible
    assert rep.failed and all(name.startswith("vertex") for name in rep.failed)
    assert "FAIL" in rep.table()


def test_trivial_design_certificate(spec):
    p = variant(E=[[0.0], [0.0]], H=np.zeros((2, 2)).tolist(), Q=[[0.0, 0.0]])
    d = DesignCertificate(W=np.eye(2), Y=np.zeros((1, 2)), sigma=1.0, mu=1.0)
    assert sdp.verify_design(p, spec, d).feasible


def test_zero_multiplier_is_rejected(reported_cert):
    a = reported_cert.to_analysis()
    with pytest.raises(ValueError):
        AnalysisCertificate(K=a.K, R=a.R, mu=a.mu, tau=0.0)


def test_scaled_mu_fails(plant, spec, reported_cert):
    a = reported_cert.to_analysis()
    bad = AnalysisCertificate(K=a.K, R=a.R, mu=100 * a.mu, tau=a.tau)
    rep = sdp.verify_analysis(plant, spec, bad)
    assert not rep.feasible
    assert set(rep.failed) <= set(rep.margins)


def test_verification_is_deterministic(plant, spec, reported_cert):
    a = sdp.verify_design(plant, spec, reported_cert)
    b = sdp.verify_design(plant, spec, reported_cert)
    assert a.margins == b.margins


def test_design_is_deterministic(plant, spec):
    grid = sdp.DEFAULT_MU_GRID[:24]
    first = sdp.design_gain(plant, spec, grid)
    second = sdp.design_gain(plant, spec, grid)
    threaded = sdp.design_gain(plant, spec, grid, workers=4)
    for other in (second, threaded):
        assert other.mu == first.mu
        assert np.array_equal(other.W, first.W)
        assert np.array_equal(other.Y, first.Y)
        assert other.sigma == first.sigma


def test_margins_continuous_in_certificate(plant, spec, reported_cert):
    base = sdp.verify_design(plant, spec, reported_cert).margins
    bumped = DesignCertificate(
        W=reported_cert.W * (1 + 1e-8), Y=reported_cert.Y, sigma=reported_cert.sigma, mu=reported_cert.mu
    )
    moved = sdp.verify_design(plant, spec, bumped).margins
    assert max(abs(moved[k] - base[k]) for k in base) < 1e-5


def test_fuzz_soundness():
    rng = np.random.default_rng(2024)
    verdicts = []
    for _ in range(50):
        prob = sdp.random_problem(rng)
        rep = sdp.solve_feasibility(prob)
        verdicts.append(rep.feasible)
        assert sdp.audit(prob, rep) == []
    assert 0 < sum(verdicts) < 50


def test_audit_catches_a_forged_report():
    prob = LmiProblem(scalar(), [Block("w<=1", lambda v: np.array([[v["w"] - 1.0]]))])
    forged = sdp.FeasibilityReport(feasible=True, assignment={"w": 3.0}, margins={})
    assert sdp.audit(prob, forged) == ["w<=1"]
