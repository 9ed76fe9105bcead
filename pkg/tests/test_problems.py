import numpy as np
import pytest
import tomli_w
from hypothesis import given, settings
from hypothesis import strategies as st

from piccolo.analysis import imitation_bound, telescoping_residual
from piccolo.base_alg import AdaGrad
from piccolo.errors import ConfigError, StructuralError
from piccolo.geometry import L2Ball, ProductSimplex, WeightSchedule
from piccolo.meta import run
from piccolo.models import make_model
from piccolo.problems import (NoiseSpec, PolicyProblem, SoftmaxPolicyProblem, SyntheticOCO, TabularMDP, garnet,
                              gridworld, il_round_loss, load_mdp, mdp_from_dict, mdp_to_dict, occupancy,
                              optimal_policy, performance, performance_difference_residual, perturb, q_v_a,
                              rl_round_loss, rollout_states, sample_gradient)


def random_policy(rng, S, A):
    return rng.dirichlet(np.ones(A), size=S)


@pytest.fixture
def mdp(rng):
    return garnet(10, 4, 3, 0.9, rng)


# -- occupancy / evaluation ------------------------------------------------------------

def test_occupancy_single_state():
    m = TabularMDP(np.ones((1, 2, 1)), np.zeros((1, 2)), 0.9, np.ones(1))
    assert np.allclose(occupancy(m, np.array([[0.3, 0.7]])), [1.0])


def test_occupancy_two_state_chain():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    m = TabularMDP(P, np.zeros((2, 1)), 0.5, np.array([1.0, 0.0]))
    assert np.allclose(occupancy(m, np.ones((2, 1))), [0.5, 0.5], atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_occupancy_is_distribution(seed):
    rng = np.random.default_rng(seed)
    m = garnet(6, 3, 2, 0.9, rng)
    d = occupancy(m, random_policy(rng, 6, 3))
    assert abs(d.sum() - 1.0) <= 1e-12 and np.all(d >= -1e-15)


def test_advantage_mean_zero(mdp, rng):
    pi = random_policy(rng, mdp.S, mdp.A)
    _, _, A = q_v_a(mdp, pi)
    assert np.max(np.abs(np.sum(pi * A, axis=1))) <= 1e-12


def test_zero_cost_values():
    m = TabularMDP(garnet(4, 2, 2, 0.9, np.random.default_rng(0)).P, np.zeros((4, 2)), 0.9, np.ones(4) / 4)
    Q, V, A = q_v_a(m, np.full((4, 2), 0.5))
    assert not Q.any() and not V.any() and not A.any()
    assert performance(m, np.full((4, 2), 0.5)) == 0.0


def test_value_matches_value_iteration(rng):
    m = garnet(3, 2, 2, 0.9, rng)
    pi = random_policy(rng, 3, 2)
    c_pi = np.sum(pi * m.c, axis=1)
    P_pi = m.P_pi(pi)
    V = np.zeros(3)
    for _ in range(10_000):
        V = c_pi + m.gamma * P_pi @ V
    assert np.allclose(q_v_a(m, pi)[1], V, atol=1e-8)


def test_performance_equals_scaled_start_value(rng):
    for _ in range(20):
        m = garnet(8, 3, 3, 0.9, rng)
        pi = random_policy(rng, 8, 3)
        assert performance(m, pi) == pytest.approx((1 - m.gamma) * m.mu @ q_v_a(m, pi)[1], abs=1e-10)


def test_constant_cost_performance(rng):
    m = garnet(5, 2, 2, 0.8, rng)
    m = TabularMDP(m.P, np.full((5, 2), 0.37), m.gamma, m.mu)
    assert performance(m, random_policy(rng, 5, 2)) == pytest.approx(0.37, abs=1e-12)


# -- losses ----------------------------------------------------------------------------

def test_performance_difference_identity(rng):
    for _ in range(50):
        m = garnet(10, 4, 3, 0.9, rng)
        assert performance_difference_residual(m, random_policy(rng, 10, 4), random_policy(rng, 10, 4)) <= 1e-8


def test_improvement_loss_zero_at_previous(mdp, rng):
    pi_n, prev = random_policy(rng, 10, 4), random_policy(rng, 10, 4)
    assert abs(rl_round_loss(mdp, prev, pi_n, prev)[0]) <= 1e-15


def test_improvement_loss_telescopes(mdp, rng):
    prev = random_policy(rng, 10, 4)
    pi = random_policy(rng, 10, 4)
    val, _ = rl_round_loss(mdp, pi, pi, prev)
    assert val == pytest.approx(performance(mdp, pi) - performance(mdp, prev), abs=1e-10)


def test_improvement_gradient_finite_differences(mdp, rng):
    pi_n, prev, pi = (random_policy(rng, 10, 4) for _ in range(3))
    _, grad = rl_round_loss(mdp, pi, pi_n, prev)
    x = pi.ravel()
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1e-6
        fd[i] = (rl_round_loss(mdp, x + e, pi_n, prev)[0] - rl_round_loss(mdp, x - e, pi_n, prev)[0]) / 2e-6
    assert np.linalg.norm(fd - grad) <= 1e-5 * np.linalg.norm(grad)


def test_imitation_loss_zero_at_expert(mdp, rng):
    star = optimal_policy(mdp)
    assert abs(il_round_loss(mdp, star, random_policy(rng, 10, 4), star)[0]) <= 1e-12


def test_imitation_loss_linear(mdp, rng):
    star = optimal_policy(mdp)
    pi_n, p1, p2 = (random_policy(rng, 10, 4) for _ in range(3))
    mid = il_round_loss(mdp, 0.5 * p1 + 0.5 * p2, pi_n, star)[0]
    avg = 0.5 * il_round_loss(mdp, p1, pi_n, star)[0] + 0.5 * il_round_loss(mdp, p2, pi_n, star)[0]
    assert mid == pytest.approx(avg, abs=1e-12)


def test_optimal_policy_is_greedy_fixpoint(mdp):
    star = optimal_policy(mdp)
    Q, _, _ = q_v_a(mdp, star)
    assert np.allclose(np.sum(star * Q, axis=1), Q.min(axis=1), atol=1e-12)


def test_telescoping_along_run():
    m = garnet(10, 4, 3, 0.9, np.random.default_rng(8))
    prob = PolicyProblem(m, "rl", samples=0)
    res = run(prob, AdaGrad(prob.set, eta=0.2), "piccolo", make_model("last"), WeightSchedule(0), 40, seed=1)
    pi0 = res.trace[0].pi
    total = sum(t.loss for t in res.trace)
    assert total == pytest.approx(performance(m, res.trace[-1].pi) - performance(m, pi0), abs=1e-8)
    assert telescoping_residual(m, res.decisions, pi0) <= 1e-10


def test_first_round_loss_is_zero():
    prob = PolicyProblem(gridworld(3), "rl")
    res = run(prob, AdaGrad(prob.set), "model_free", make_model("zero"), WeightSchedule(0), 1)
    pi1 = res.trace[0].pi
    assert prob.round_loss(1, pi1, pi1).value(pi1) == pytest.approx(0.0, abs=1e-15)


def test_imitation_bound_along_run():
    m = garnet(10, 4, 3, 0.9, np.random.default_rng(2))
    prob = PolicyProblem(m, "il", samples=0)
    res = run(prob, AdaGrad(prob.set, eta=0.5), "piccolo", make_model("oracle"), WeightSchedule(1), 60, seed=3)
    check = imitation_bound(prob, res.decisions, WeightSchedule(1).weights(60))
    assert check.C >= 1.0 and check.holds


# -- sampled gradients --------------------------------------------------------------------

def test_synthetic_noise_free_gradient_exact():
    prob = SyntheticOCO(L2Ball.origin(3), "quadratic", base=np.array([1.0, 0.0, 0.0]))
    pi = np.array([0.2, 0.3, -0.1])
    g = sample_gradient(prob, pi, 5, np.random.default_rng(0))
    assert np.array_equal(g, prob.round_loss(5).grad(pi))


def test_synthetic_gradient_unbiased_and_bounded():
    sigma = 0.4
    prob = SyntheticOCO(ProductSimplex(1, 4), "linear", base=np.array([0.1, 0.2, 0.3, 0.4]),
                        noise=NoiseSpec(sigma, 0, 0))
    rng = np.random.default_rng(0)
    pi = prob.set.center()
    loss = prob.round_loss(1)
    gs = np.array([prob.sample_gradient(loss, pi, rng)[0] for _ in range(100_000)])
    assert np.all(np.abs(gs.mean(0) - loss.grad(pi)) <= 5 * sigma / np.sqrt(1e5))
    assert np.max(np.linalg.norm(gs - loss.grad(pi), axis=1)) <= sigma + 1e-12


def test_synthetic_expected_gradient_bound():
    prob = SyntheticOCO(L2Ball.origin(4), "linear", base=np.ones(4) * 0.5, amplitude=0.3, period=20, jitter=0.2)
    G = prob.gradient_bound()
    assert max(np.linalg.norm(prob.round_loss(n).grad(np.zeros(4))) for n in range(1, 200)) <= G


def test_sample_gradient_seeded():
    prob = SyntheticOCO(L2Ball.origin(3), "linear", noise=NoiseSpec(1.0, 0, 0))
    a = sample_gradient(prob, np.zeros(3), 1, np.random.default_rng(42))
    b = sample_gradient(prob, np.zeros(3), 1, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_tabular_sampled_gradient_unbiased():
    m = gridworld(3, 0.1, 0.9)
    prob = PolicyProblem(m, "rl", samples=50)
    pi = prob.set.center()
    prev = random_policy(np.random.default_rng(1), 9, 4).ravel()
    loss = prob.round_loss(1, pi, prev)
    rng = np.random.default_rng(0)
    gs = np.array([prob.sample_gradient(loss, pi, rng)[0] for _ in range(4000)])
    se = gs.std(0) / np.sqrt(len(gs))
    assert np.all(np.abs(gs.mean(0) - loss.grad(pi)) <= 5 * se + 1e-12)


def test_rollout_states_follow_occupancy():
    m = garnet(5, 2, 2, 0.8, np.random.default_rng(4))
    pi = np.full((5, 2), 0.5)
    states = rollout_states(m, pi, 200_000, np.random.default_rng(0))
    emp = np.bincount(states, minlength=5) / states.size
    assert np.allclose(emp, occupancy(m, pi), atol=5e-3)


def test_softmax_gradient_and_fisher():
    m = garnet(4, 3, 2, 0.9, np.random.default_rng(5))
    prob = SoftmaxPolicyProblem(m)
    theta = np.random.default_rng(6).normal(size=12)
    loss = prob.round_loss(1, theta, np.zeros(12))
    fd = np.array([(loss.value(theta + 1e-6 * e) - loss.value(theta - 1e-6 * e)) / 2e-6 for e in np.eye(12)])
    assert np.allclose(fd, loss.grad(theta), atol=1e-8)
    F = prob.fisher(theta)
    assert np.allclose(F, F.T) and np.min(np.linalg.eigvalsh(F)) >= -1e-12


# -- instances and validation ------------------------------------------------------------

def test_gridworld_structure():
    m = gridworld(5, 0.1, 0.9, start="corner")
    assert m.S == 25 and m.A == 4 and m.mu[0] == 1.0
    assert np.allclose(m.P.sum(axis=2), 1.0, atol=1e-12)
    assert m.P[24, :, 24].min() == 1.0 and not m.c[24].any()
    with pytest.raises(StructuralError):
        gridworld(3, start="middle")


def test_perturbed_mdp_is_valid(mdp):
    q = perturb(mdp, 0.5, np.random.default_rng(0))
    assert np.allclose(q.P.sum(axis=2), 1.0, atol=1e-12) and not np.array_equal(q.P, mdp.P)


def test_mdp_validation():
    P = np.full((2, 1, 2), 0.5)
    with pytest.raises(StructuralError):
        TabularMDP(P * 1.1, np.zeros((2, 1)), 0.9, np.array([0.5, 0.5]))
    with pytest.raises(StructuralError):
        TabularMDP(P, np.zeros((2, 1)), 1.0, np.array([0.5, 0.5]))
    with pytest.raises(StructuralError):
        TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([0.7, 0.5]))


def test_mdp_file_roundtrip(tmp_path, mdp):
    path = tmp_path / "m.toml"
    path.write_text(tomli_w.dumps(mdp_to_dict(mdp)))
    back = load_mdp(path)
    assert np.array_equal(back.P, mdp.P) and np.array_equal(back.c, mdp.c) and back.gamma == mdp.gamma


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.pop("P"), "missing"),
    (lambda d: d.update(extra=1), "unknown"),
    (lambda d: d.update(c=d["c"][:-1]), "field c"),
    (lambda d: d.update(gamma=1.5), "gamma"),
    (lambda d: d.update(S=0), "positive"),
])
def test_mdp_file_errors(mdp, mutate, message):
    d = mdp_to_dict(mdp)
    mutate(d)
    with pytest.raises(ConfigError, match=message):
        mdp_from_dict(d)


def test_mdp_file_unreadable(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("S = [")
    with pytest.raises(ConfigError):
        load_mdp(bad)
    with pytest.raises(ConfigError):
        load_mdp(tmp_path / "missing.toml")
