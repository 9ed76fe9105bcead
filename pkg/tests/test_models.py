import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from piccolo.base_alg import AdaGrad, BasicMD
from piccolo.errors import StructuralError
from piccolo.geometry import Box, L2Ball, SquaredEuclidean, WeightSchedule
from piccolo.meta import prediction_step, run
from piccolo.models import (Adversarial, FixedPointConfig, LearnedLinear, PredictionContext, ReplayAverage,
                            RoundData, fixed_point_predict, make_model, model_update, predict)
from piccolo.problems import LinQuadLoss, NoiseSpec, SyntheticOCO


def data(n, g, loss=None):
    g = np.asarray(g, float)
    return RoundData(n=n, pi=np.zeros_like(g), g=g, ghat=np.zeros_like(g), sampled_loss=loss)


def ctx_for(problem=None, n=1, d=2):
    return PredictionContext(n=n, problem=problem, pi_prev=np.zeros(d))


def quadratic_problem(fset, b, curvature=1.0, noise=NoiseSpec()):
    return SyntheticOCO(fset, "quadratic", base=b, curvature=curvature, noise=noise)


# -- predict examples --------------------------------------------------------------

@given(x=arrays(np.float64, 3, elements=st.floats(-1e6, 1e6)))
def test_zero_model(x):
    assert np.array_equal(predict(make_model("zero"), x, ctx_for(d=3)), np.zeros(3))


def test_adversarial_example():
    m = make_model("adversarial")
    m.reset()
    model_update(m, data(1, [2.0, 0.0]))
    model_update(m, data(2, [0.0, 1.0]))
    assert np.allclose(m.predict(np.zeros(2), None), [0.0, -2.0])


def test_adversarial_running_max_norm():
    m = Adversarial()
    m.reset()
    for n, g in enumerate(([2.0, 0.0], [0.0, 1.0], [3.0, 4.0]), start=1):
        model_update(m, data(n, g))
    assert m.max_norm == 5.0


def test_adversarial_zero_gradient_predicts_zero():
    m = Adversarial()
    m.reset()
    model_update(m, data(1, [1.0, 1.0]))
    model_update(m, data(2, [0.0, 0.0]))
    assert np.array_equal(m.predict(np.zeros(2), None), np.zeros(2))


@given(gs=arrays(np.float64, (6, 3), elements=st.floats(-10, 10)))
def test_adversarial_norm_and_alignment(gs):
    m = Adversarial()
    m.reset()
    for n, g in enumerate(gs, start=1):
        model_update(m, data(n, g))
        out = m.predict(np.zeros(3), None)
        if np.linalg.norm(g) > 0:
            assert np.linalg.norm(out) == pytest.approx(m.max_norm, rel=1e-12)
            assert out @ g <= 0.0


def test_replay_average_example():
    m = ReplayAverage(K=2, reevaluate=False)
    model_update(m, data(1, [5.0, 5.0]))
    model_update(m, data(2, [1.0, 0.0]))
    model_update(m, data(3, [0.0, 1.0]))
    assert np.allclose(m.predict(np.zeros(2), None), [0.5, 0.5])


def test_replay_single_slot_example():
    m = ReplayAverage(K=1, reevaluate=False)
    model_update(m, data(1, [3.0, 3.0]))
    assert np.allclose(m.predict(np.zeros(2), None), [3.0, 3.0])


def test_empty_buffer_predicts_zero():
    for kind in ("last", "replay"):
        m = make_model(kind)
        assert np.array_equal(m.predict(np.ones(2), ctx_for()), np.zeros(2))


def test_last_gradient_reevaluates_sampled_loss():
    prob = quadratic_problem(Box.unconstrained(2), np.zeros(2))
    m = make_model("last")
    loss = LinQuadLoss(np.zeros(2), 1.0, np.array([1.0, 0.0]))
    model_update(m, data(1, loss.grad(np.zeros(2)), loss))
    assert np.allclose(m.predict(np.array([2.0, 2.0]), ctx_for(prob)), [1.0, 2.0])
    stored = make_model("last", reevaluate=False)
    model_update(stored, data(1, loss.grad(np.zeros(2)), loss))
    assert np.allclose(stored.predict(np.array([2.0, 2.0]), ctx_for(prob)), [-1.0, 0.0])


def test_model_factory_validation():
    with pytest.raises(StructuralError):
        make_model("crystal-ball")
    with pytest.raises(StructuralError):
        ReplayAverage(K=0)


# -- learned linear ------------------------------------------------------------------

def test_learned_linear_zero_error_leaves_parameters():
    m = LearnedLinear()
    m.reset()
    pi = np.array([0.5, -0.5])
    model_update(m, RoundData(n=1, pi=pi, g=np.zeros(2), ghat=np.zeros(2)))
    W = m.W.copy()
    g = m.predict(pi)
    model_update(m, RoundData(n=2, pi=pi, g=g, ghat=g))
    assert np.array_equal(m.W, W)


def test_learned_linear_average_error_decreases():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    avgs = []
    for N in (100, 400, 1600):
        m = LearnedLinear()
        m.reset()
        r = np.random.default_rng(1)
        err = 0.0
        for n in range(1, N + 1):
            pi = r.uniform(-1, 1, 3)
            g = A @ pi
            err += float(np.sum((m.predict(pi) - g) ** 2))
            model_update(m, RoundData(n=n, pi=pi, g=g, ghat=np.zeros(3)))
        avgs.append(err / N)
    assert avgs[0] > avgs[1] > avgs[2]


# -- fixed point -------------------------------------------------------------------------

def test_fixed_point_closed_form():
    eta, w = 0.3, 2.0
    b = np.array([1.0, -2.0, 0.5])
    prob = quadratic_problem(Box.unconstrained(3), b)
    alg = BasicMD(prob.set, SquaredEuclidean(1.0), eta=eta, c=0.0)
    pihat = np.array([0.2, 0.1, -0.4])
    h, H = alg.init(pihat)
    m = make_model("oracle")
    ctx = PredictionContext(1, prob, pihat)
    m.begin_round(ctx, np.random.default_rng(0))
    res = fixed_point_predict(m, alg, h, H, w, FixedPointConfig(max_iters=100, tol=1e-12), ctx)
    expect = (eta * w * b + pihat) / (1 + eta * w)
    assert res.converged and res.residual <= 1e-10
    assert np.allclose(res.pi, expect, atol=1e-10)
    assert np.allclose(res.ghat, expect - b, atol=1e-10)


def test_fixed_point_anderson_matches_picard():
    b = np.array([0.3, -0.7])
    prob = quadratic_problem(L2Ball.origin(2, 0.5), b)
    alg = BasicMD(prob.set, SquaredEuclidean(1.0), eta=0.8, c=0.0)
    h, H = alg.init(np.zeros(2))
    ctx = PredictionContext(1, prob, np.zeros(2))
    m = make_model("oracle")
    m.begin_round(ctx, np.random.default_rng(0))
    a = fixed_point_predict(m, alg, h, H, 1.0, FixedPointConfig(100, 1e-9), ctx)
    b2 = fixed_point_predict(m, alg, h, H, 1.0, FixedPointConfig(100, 1e-9, "anderson", 3), ctx)
    assert a.converged and b2.converged and b2.iters <= a.iters
    assert np.allclose(a.pi, b2.pi, atol=1e-8)


def test_fixed_point_constant_model_one_iteration():
    prob = SyntheticOCO(L2Ball.origin(3), "linear", base=np.array([1.0, 0.0, -1.0]))
    alg = AdaGrad(prob.set)
    h, H = alg.init(np.zeros(3))
    ctx = PredictionContext(1, prob, np.zeros(3))
    m = make_model("oracle")
    m.begin_round(ctx, np.random.default_rng(0))
    res = fixed_point_predict(m, alg, h, H, 1.0, FixedPointConfig(), ctx)
    assert res.iters == 1 and res.residual == 0.0


def test_fixed_point_zero_model():
    prob = SyntheticOCO(L2Ball.origin(3), "linear")
    alg = AdaGrad(prob.set)
    x = np.array([0.1, 0.2, 0.3])
    h, H = alg.init(x)
    res = fixed_point_predict(make_model("zero"), alg, h, H, 1.0, FixedPointConfig(), PredictionContext(1, prob, x))
    assert np.array_equal(res.pi, x) and res.residual == 0.0


def test_fixed_point_self_consistency():
    prob = quadratic_problem(L2Ball.origin(4), np.array([2.0, 0.0, -1.0, 0.5]), curvature=2.0)
    alg = BasicMD(prob.set, SquaredEuclidean(1.0), eta=0.2, c=0.0)
    h, H = alg.init(np.zeros(4))
    ctx = PredictionContext(1, prob, np.zeros(4))
    m = make_model("oracle")
    m.begin_round(ctx, np.random.default_rng(0))
    cfg = FixedPointConfig(max_iters=60, tol=1e-9)
    res = fixed_point_predict(m, alg, h, H, 1.0, cfg, ctx)
    assert res.converged
    again = alg.project(prediction_step(alg, h, H, res.ghat, 1.0), H)
    assert np.linalg.norm(again - res.pi) <= cfg.tol


def test_fixed_point_config_validation():
    with pytest.raises(StructuralError):
        FixedPointConfig(max_iters=0)
    with pytest.raises(StructuralError):
        FixedPointConfig(method="newton")


def test_oracle_fixed_point_leaves_only_rounding_error():
    # noise-free quadratic problem: every e_n is below 10 x tolerance
    fset = L2Ball.origin(5)
    prob = SyntheticOCO(fset, "quadratic", base=np.linspace(-1, 1, 5), amplitude=0.5, period=30, jitter=0.3,
                        curvature=1.0, path_seed=3)
    cfg = FixedPointConfig(max_iters=20, tol=1e-8)
    res = run(prob, BasicMD(fset, SquaredEuclidean(1.0), eta=0.3, c=0.0), "piccolo", make_model("oracle"),
              WeightSchedule(0), 100, fixed_point=cfg)
    assert max(np.linalg.norm(t.e) for t in res.trace) <= 10 * cfg.tol


def test_oracle_noise_is_fixed_within_round():
    prob = SyntheticOCO(L2Ball.origin(3), "linear", noise=NoiseSpec(0.0, 0.5, 0.0))
    m = make_model("oracle")
    ctx = PredictionContext(1, prob, np.zeros(3))
    m.begin_round(ctx, np.random.default_rng(0))
    a, b = m.predict(np.zeros(3), ctx), m.predict(np.ones(3) * 0.1, ctx)
    assert np.array_equal(a, b) and 0 < np.linalg.norm(a) <= 0.5


def test_biased_oracle_offset_norm():
    prob = SyntheticOCO(L2Ball.origin(3), "linear", noise=NoiseSpec(0.0, 0.0, 0.25))
    ctx = PredictionContext(1, prob, np.zeros(3))
    good, bad = make_model("oracle"), make_model("biased")
    for m in (good, bad):
        m.begin_round(ctx, np.random.default_rng(0))
    assert np.linalg.norm(bad.predict(np.zeros(3), ctx) - good.predict(np.zeros(3), ctx)) == pytest.approx(0.5)
