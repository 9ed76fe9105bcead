"""How the quality of the gradient model changes regret.

Drifting linear losses over the 10-simplex, AdaGrad as the base learner.  We
compare running without a model, PicCoLO with an exact oracle, with a biased
oracle, and with an adversarial model, against model-based and Dyna updates
that trust the same biased oracle.

PicCoLO only moves along the model's gradient in the prediction step and
then corrects with the observed error, so a bad model costs little.  Schemes
that replace or supplement real gradients with model gradients inherit the
model's bias and stop improving.

    python demos/01_models_on_synthetic_losses.py
"""
import numpy as np

from piccolo import AdaGrad, ProductSimplex, WeightSchedule, make_model, run
from piccolo.analysis import fit_rate, prefix_regret
from piccolo.problems import NoiseSpec, SyntheticOCO

D, N, SEEDS = 10, 2000, 4
NS = [250, 500, 1000, 2000]
fset = ProductSimplex(1, D)


def curve(mode, model, seed):
    prob = SyntheticOCO(fset, "linear", base=np.linspace(0, 0.9, D), amplitude=0.3, period=200, jitter=0.5,
                        noise=NoiseSpec(sigma_g=0.3, sigma_ghat=0.1, bias_sq=0.36), path_seed=seed,
                        bias_direction=np.eye(D)[0])
    res = run(prob, AdaGrad(fset, eta=0.5), mode, make_model(model), WeightSchedule(0), N, seed=seed)
    reg = prefix_regret(res.decisions, [t.round_loss for t in res.trace], fset)
    return np.array([reg[n - 1] / n for n in NS])


arms = [("model_free", "zero"), ("piccolo", "oracle"), ("piccolo", "biased"), ("piccolo", "adversarial"),
        ("model_based", "biased"), ("dyna", "biased"), ("dyna", "adversarial")]
print(f"{'mode':12s} {'model':12s} " + " ".join(f"N={n:<7d}" for n in NS) + " slope")
for mode, model in arms:
    med = np.median([curve(mode, model, s) for s in range(SEEDS)], axis=0)
    slope = fit_rate(NS, med).slope
    print(f"{mode:12s} {model:12s} " + " ".join(f"{v:+.5f}" for v in med) + f"  {slope:+.2f}")

print("\nAverage regret is measured on the expected losses; negative values mean the learner")
print("tracked the drifting optimum better than the best fixed decision.")
