"""Auditing the predictor-corrector regret bound on one run.

For learners whose update is an exact proximal step, the weighted regret
against any fixed decision is bounded by

    M  +  sum_n (w_n^2 / 2) ||e_n||_*^2  -  (1/2) sum_n ||pi_n - pi_hat_n||^2

where M measures how much the regularizer grew, e_n = g_n - g_hat_n is the
prediction error, and the last sum rewards predictions that moved the
decision.  The audit recomputes every norm from stored regularizer
snapshots, so a bug in the learner's own bookkeeping cannot hide.

    python demos/03_auditing_the_regret_bound.py
"""
import numpy as np

from piccolo import AdaGrad, L2Ball, WeightSchedule, audit_regret_bound, make_model, run
from piccolo.problems import NoiseSpec, SyntheticOCO

fset = L2Ball.origin(10)
problem = SyntheticOCO(fset, "linear", base=np.linspace(-1, 1, 10), amplitude=0.5, period=50, jitter=0.2,
                       noise=NoiseSpec(0.3, 0.1, 0.25), path_seed=3)

print(f"{'model':12s} {'regret':>9s} {'M':>9s} {'error':>9s} {'gap':>9s} {'slack':>9s}")
for model in ("zero", "oracle", "biased", "replay", "adversarial"):
    alg = AdaGrad(fset, eta=0.5)
    res = run(problem, alg, "piccolo", make_model(model), WeightSchedule(1), 200, seed=3)
    a = audit_regret_bound(res.trace, alg, res.H0, res.mode)
    print(f"{model:12s} {a.lhs:9.3f} {a.M:9.3f} {a.error_term:9.3f} {a.gap_term:9.3f} {a.slack:9.3f}")

print("\nBetter models shrink the error term; the gap term is what prediction buys back.")
