"""Policy optimization on a 5x5 gridworld.

Every round the learner plays a policy, observes a sampled gradient of the
policy-improvement loss (occupancy of the current policy times the advantage
of the previous one), and updates with AdaGrad on the product of simplices.
We report how many environment rounds each variant needs before its policy is
within 5% of the optimal cost.

A model that knows the dynamics lets PicCoLO move several steps' worth per
environment round, especially with the fixed-point prediction.  An
adversarial model slows PicCoLO down but cannot stop it.  Dyna, which also
updates on model gradients, can be held back indefinitely.

    python demos/02_gridworld_policy_optimization.py
"""
import numpy as np

from piccolo import AdaGrad, FixedPointConfig, WeightSchedule, make_model, run
from piccolo.problems import PolicyProblem, gridworld

mdp = gridworld(5, slip=0.1, gamma=0.9, start="corner")
problem = PolicyProblem(mdp, "rl", samples=100)
print(f"optimal cost J* = {problem.J_star:.4f}, uniform policy J = {problem.performance(problem.set.center()):.4f}")


def rounds_to_target(mode, model, seed, N, fixed_point=None):
    alg = AdaGrad(problem.set, eta=0.1, eps=0.01)
    res = run(problem, alg, mode, make_model(model), WeightSchedule(0), N, seed=seed, fixed_point=fixed_point)
    J = np.array([t.J for t in res.trace])
    hit = np.nonzero(J <= 1.05 * problem.J_star)[0]
    return int(hit[0]) + 1 if hit.size else np.inf


variants = [
    ("model-free", "model_free", "zero", None, 400),
    ("oracle, heuristic", "piccolo", "oracle", None, 400),
    ("oracle, 5-step fixed point", "piccolo", "oracle", FixedPointConfig(max_iters=5), 400),
    ("oracle, fixed point", "piccolo", "oracle", FixedPointConfig(), 400),
    ("adversarial", "piccolo", "adversarial", None, 2000),
    ("Dyna, adversarial", "dyna", "adversarial", None, 2000),
]
for label, mode, model, fp, N in variants:
    hits = [rounds_to_target(mode, model, s, N, fp) for s in range(8)]
    print(f"{label:28s} median rounds {np.median(hits):>6g}   per seed {[h if h == np.inf else int(h) for h in hits]}")
