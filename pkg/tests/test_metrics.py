import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pdesync import metrics, presets, sim
from pdesync.lmi import AnalysisCertificate, ConeBound
from pdesync.metrics import InsufficientDecay

states_strategy = st.tuples(st.integers(2, 6), st.integers(1, 12), st.integers(1, 3)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.floats(-10, 10, allow_subnormal=False))
)


def test_avg_error_identical_agents_is_zero():
    x = np.tile(np.random.default_rng(0).normal(size=(1, 20, 2)), (4, 1, 1))
    assert np.array_equal(metrics.avg_sync_error(x), np.zeros((20, 2)))


def test_avg_error_two_agents_is_difference():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 20, 2))
    np.testing.assert_array_equal(metrics.avg_sync_error(x), x[0] - x[1])


def test_avg_error_of_initial_data():
    grid = sim.Grid(cells=64, dt=0.01, cfl=0.9)
    state = sim.initial_state(sim.example_initial_conditions(), grid, 2)
    chi = grid.midpoints
    expected = (3 * (np.cos(2 * np.pi * chi) - 1) - 2 * np.sin(2 * np.pi * chi)) / 3
    np.testing.assert_allclose(metrics.avg_sync_error(state.states)[:, 0], expected, atol=1e-14)


def test_avg_error_needs_two_agents():
    with pytest.raises(ValueError):
        metrics.avg_sync_error(np.zeros((1, 8, 2)))


def test_sync_distance_examples():
    assert metrics.sync_distance(np.ones((3, 10, 2))) == 0.0
    c = 0.75
    x = np.stack([np.full((16, 1), c), np.full((16, 1), -c)])
    assert metrics.sync_distance(x) == pytest.approx(np.sqrt(2) * c, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(states_strategy)
def test_sync_distance_formulas_agree(x):
    assert metrics.sync_distance(x) == pytest.approx(metrics.sync_distance_projected(x), abs=1e-10, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(states_strategy)
def test_sync_distance_zero_iff_synchronized(x):
    synced = np.broadcast_to(x[:1], x.shape)
    assert metrics.sync_distance(synced) == 0.0
    if np.max(np.abs(x - x[:1])) > 1e-100:  # squares of tinier gaps underflow
        assert metrics.sync_distance(x) > 0.0


def test_lyapunov_identical_agents_is_zero(plant, reported_cert):
    x = np.tile(np.ones((1, 20, 2)), (4, 1, 1))
    assert metrics.lyapunov_value(x, plant, reported_cert.to_analysis()) == pytest.approx(0.0, abs=1e-28)


def test_lyapunov_reduces_to_squared_distance(plant):
    c = AnalysisCertificate(K=[[0.0, 0.0]], R=plant.S, mu=1e-300, tau=1.0)
    x = np.random.default_rng(3).normal(size=(4, 30, 2))
    assert metrics.lyapunov_value(x, plant, c) == pytest.approx(metrics.sync_distance(x) ** 2, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(states_strategy.filter(lambda x: x.shape[2] == 2), st.floats(0.01, 3.0), st.floats(0.1, 10), st.floats(0.1, 10))
def test_lyapunov_coercive(x, mu, r1, r2):
    p = presets.example_plant()
    c = AnalysisCertificate(K=[[0.0, 0.0]], R=np.diag([r1, r2]), mu=mu, tau=1.0)
    v = metrics.lyapunov_value(x, p, c)
    d = metrics.sync_distance(x)
    assert v >= metrics.coercivity_constant(p, c) * d**2 * (1 - 1e-12) - 1e-300


def test_sync_metrics_bundle(plant, reported_cert):
    x = np.random.default_rng(4).normal(size=(4, 10, 2))
    m = metrics.sync_metrics(x, 1.5, plant, reported_cert.to_analysis())
    assert m.t == 1.5
    assert m.sync_distance == metrics.sync_distance(x)
    assert m.avg_error_profile.shape == (10, 2)
    assert np.isnan(metrics.sync_metrics(x, 0.0, plant).lyapunov_value)


def test_decay_rate_exact_exponential():
    t = np.linspace(0, 20, 201)
    fit = metrics.decay_rate(t, np.exp(-0.5 * t))
    assert fit.rate == pytest.approx(-0.5, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_decay_rate_window():
    t = np.linspace(0, 20, 201)
    d = np.where(t < 2, 1.0 + 0.0 * t, np.exp(-0.3 * (t - 2)))
    d[0] = 1.0
    fit = metrics.decay_rate(t, np.exp(-0.3 * t) * (1 + (t < 2)), window=(2, 20))
    assert fit.rate == pytest.approx(-0.3, abs=1e-9)
    assert fit.samples == 181


def test_decay_rate_constant_raises():
    t = np.linspace(0, 20, 201)
    with pytest.raises(InsufficientDecay):
        metrics.decay_rate(t, np.ones_like(t))


def test_decay_rate_needs_samples_above_floor():
    t = np.linspace(0, 1, 50)
    d = np.where(t < 0.1, 1.0, 0.0)
    with pytest.raises(InsufficientDecay):
        metrics.decay_rate(t, d)


def test_cone_check_tanh():
    rep = metrics.cone_bound_check(np.tanh, ConeBound([[1.0]], [[-2.0]]), -5, 5)
    assert rep.ok
    assert rep.min_value >= 0


def test_cone_check_identity_is_boundary():
    rep = metrics.cone_bound_check(lambda q: q, ConeBound([[1.0]], [[-2.0]]), -5, 5)
    assert rep.ok
    assert rep.min_value == pytest.approx(0.0, abs=1e-12)


def test_cone_check_steep_map_violates():
    rep = metrics.cone_bound_check(lambda q: 2 * q, ConeBound([[1.0]], [[-2.0]]), -5, 5)
    assert not rep.ok
    q1, q2 = rep.worst_pair
    assert rep.min_value == pytest.approx(-4 * float(q1[0] - q2[0]) ** 2)


def test_cone_check_is_deterministic():
    cone = ConeBound([[1.0]], [[-2.0]])
    a = metrics.cone_bound_check(np.sin, cone, -1.5, 1.5, samples=512)
    b = metrics.cone_bound_check(np.sin, cone, -1.5, 1.5, samples=512)
    assert a.min_value == b.min_value and a.ok
