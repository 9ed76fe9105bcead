"""Self-consistent predictions.

The heuristic prediction evaluates the model at the last corrected decision
pi_hat.  The fixed-point prediction instead asks for a decision pi whose own
predicted gradient, fed through the prediction step, lands back on pi.  On a
quadratic loss with a Euclidean step of size eta the answer is known in
closed form, (eta w b + pi_hat) / (1 + eta w), and Picard iteration contracts
by a factor eta w per step.

    python demos/04_fixed_point_prediction.py
"""
import numpy as np

from piccolo import BasicMD, FixedPointConfig, SquaredEuclidean, fixed_point_predict, make_model
from piccolo.geometry import Box
from piccolo.models import PredictionContext
from piccolo.problems import SyntheticOCO

b = np.array([1.0, -2.0, 0.5])
problem = SyntheticOCO(Box.unconstrained(3), "quadratic", base=b)
pihat = np.zeros(3)
model = make_model("oracle")
ctx = PredictionContext(n=1, problem=problem, pi_prev=pihat)
model.begin_round(ctx, np.random.default_rng(0))

for eta in (0.1, 0.3, 0.6, 0.9):
    alg = BasicMD(problem.set, SquaredEuclidean(1.0), eta=eta, c=0.0)
    h, H = alg.init(pihat)
    exact = (eta * b + pihat) / (1 + eta)
    heuristic = pihat - eta * model.predict(pihat, ctx)
    for method in ("picard", "anderson"):
        res = fixed_point_predict(model, alg, h, H, 1.0, FixedPointConfig(max_iters=100, tol=1e-10, method=method), ctx)
        print(f"eta={eta:.1f} {method:8s} iterations {res.iters:3d}  residual {res.residual:.1e}  "
              f"error vs closed form {np.abs(res.pi - exact).max():.1e}")
    print(f"eta={eta:.1f} heuristic one-shot error {np.abs(heuristic - exact).max():.2e}\n")
