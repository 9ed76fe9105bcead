"""Predictive models Φ_n that supply ĝ_n, and the fixed-point prediction solver."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .geometry import uniform_ball


@dataclass(frozen=True, eq=False)
class PredictionContext:
    """What a model may look at before round n is played."""

    n: int
    problem: object
    pi_prev: np.ndarray


@dataclass(frozen=True, eq=False)
class RoundData:
    n: int
    pi: np.ndarray
    g: np.ndarray
    ghat: np.ndarray
    sampled_loss: object = None
    ctx: PredictionContext | None = None


class PredictiveModel:
    kind = "base"

    def reset(self) -> None:
        """Forget all history (called at the start of every run)."""

    def begin_round(self, ctx: PredictionContext, rng: np.random.Generator) -> None:
        """Draw any per-round randomness; predictions within a round are then deterministic."""

    def predict(self, pi, ctx: PredictionContext) -> np.ndarray:
        raise NotImplementedError

    def update(self, data: RoundData) -> None:
        """Learn from the round that just finished."""

    def __repr__(self):
        return f"{type(self).__name__}()"


class ZeroModel(PredictiveModel):
    kind = "zero"

    def predict(self, pi, ctx):
        return np.zeros(np.shape(pi))


class ReplayAverage(PredictiveModel):
    """Mean of the last K sampled gradients, reevaluated at the query point
    when the problem allows it.  Predicts 0 before any data arrives."""

    kind = "replay"

    def __init__(self, K: int = 1, reevaluate: bool = True):
        if K < 1:
            raise StructuralError("buffer size must be at least 1")
        self.K = int(K)
        self.reevaluate = reevaluate
        self.reset()

    def reset(self):
        self.buffer = deque(maxlen=self.K)

    def predict(self, pi, ctx):
        if not self.buffer:
            return np.zeros(np.shape(pi))
        if self.reevaluate and getattr(ctx.problem, "supports_reevaluation", False):
            vals = [loss.grad(pi) if loss is not None else g for g, loss in self.buffer]
        else:
            vals = [g for g, _ in self.buffer]
        return np.mean(vals, axis=0)

    def update(self, data):
        self.buffer.append((np.array(data.g), data.sampled_loss))

    def __repr__(self):
        return f"ReplayAverage(K={self.K})"


class LastGradient(ReplayAverage):
    kind = "last"

    def __init__(self, reevaluate: bool = True):
        super().__init__(1, reevaluate)

    def __repr__(self):
        return "LastGradient()"


class OracleTrue(PredictiveModel):
    """Exact expected gradient of the coming round from the problem's simulator,
    plus model noise uniform in a ball of radius σ_ĝ drawn once per round."""

    kind = "oracle"
    biased = False

    def reset(self):
        self._noise = None

    def begin_round(self, ctx, rng):
        sigma = ctx.problem.noise.sigma_ghat
        self._noise = uniform_ball(rng, ctx.problem.dim, sigma) if sigma > 0 else None

    def predict(self, pi, ctx):
        g = np.asarray(ctx.problem.oracle_gradient(ctx.n, pi, ctx.pi_prev, biased=self.biased), dtype=float)
        return g if self._noise is None else g + self._noise


class BiasedOracle(OracleTrue):
    """Oracle of the perturbed problem (biased simulator or fixed offset)."""

    kind = "biased"
    biased = True


class Adversarial(PredictiveModel):
    """ĝ_{n+1} = -(max_{m<=n} ||g_m|| / ||g_n||) g_n, and 0 when g_n = 0."""

    kind = "adversarial"

    def reset(self):
        self.max_norm = 0.0
        self.last = None

    def predict(self, pi, ctx):
        if self.last is None:
            return np.zeros(np.shape(pi))
        big = np.abs(self.last).max()
        if big == 0.0:
            return np.zeros_like(self.last)
        u = self.last / big  # rescale first so tiny gradients keep full precision
        return -(self.max_norm / np.linalg.norm(u)) * u

    def update(self, data):
        self.last = np.array(data.g)
        self.max_norm = max(self.max_norm, float(np.linalg.norm(data.g)))


class LearnedLinear(PredictiveModel):
    """ĝ = W [π; g_prev], trained online by AdaGrad on 0.5 ||W φ_n - g_n||^2
    with φ_n the features of the decision where g_n was observed."""

    kind = "learned"

    def __init__(self, lr: float = 0.5, eps: float = 1e-8):
        if not lr > 0 or not eps > 0:
            raise StructuralError("need lr > 0 and eps > 0")
        self.lr, self.eps = float(lr), float(eps)
        self.reset()

    def reset(self):
        self.W = None
        self.acc = None
        self.g_prev = None

    def _features(self, pi):
        pi = np.asarray(pi, dtype=float)
        gp = np.zeros_like(pi) if self.g_prev is None else self.g_prev
        return np.concatenate([pi, gp])

    def _ensure(self, d):
        if self.W is None:
            self.W = np.zeros((d, 2 * d))
            self.acc = np.zeros((d, 2 * d))

    def predict(self, pi, ctx=None):
        self._ensure(np.size(pi))
        return self.W @ self._features(pi)

    def update(self, data):
        self._ensure(np.size(data.pi))
        phi = self._features(data.pi)
        grad = np.outer(self.W @ phi - data.g, phi)
        if grad.any():
            self.acc = self.acc + grad * grad
            self.W = self.W - self.lr * grad / (np.sqrt(self.acc) + self.eps)
        self.g_prev = np.array(data.g)


MODELS = {
    "zero": ZeroModel,
    "last": LastGradient,
    "replay": ReplayAverage,
    "oracle": OracleTrue,
    "biased": BiasedOracle,
    "adversarial": Adversarial,
    "learned": LearnedLinear,
}


def make_model(kind: str, **params) -> PredictiveModel:
    if kind not in MODELS:
        raise StructuralError(f"unknown model {kind!r}")
    return MODELS[kind](**params)


def predict(model: PredictiveModel, pihat, ctx: PredictionContext) -> np.ndarray:
    return model.predict(pihat, ctx)


def model_update(model: PredictiveModel, data: RoundData) -> PredictiveModel:
    model.update(data)
    return model


# ---------------------------------------------------------------------------
# Fixed-point prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointConfig:
    """Solve π = decode(update(ĥ_n, H_{n-1}, Φ_n(π), w_n)).

    method: ``"picard"`` iterates the map directly; ``"anderson"`` mixes the
    last ``memory`` iterates to accelerate it (projected back onto the set).
    """

    max_iters: int = 20
    tol: float = 1e-8
    method: str = "picard"
    memory: int = 5

    def __post_init__(self):
        if self.max_iters < 1:
            raise StructuralError("max_iters must be at least 1")
        if not self.tol > 0:
            raise StructuralError("tolerance must be positive")
        if self.method not in ("picard", "anderson"):
            raise StructuralError(f"unknown fixed-point method {self.method!r}")
        if self.memory < 1:
            raise StructuralError("memory must be at least 1")


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    pi: np.ndarray
    ghat: np.ndarray
    residual: float
    iters: int
    converged: bool = field(default=False)


def fixed_point_predict(model: PredictiveModel, alg, h_hat, H, w: float, cfg: FixedPointConfig,
                        ctx: PredictionContext, adam_m: str = "transient") -> FixedPointResult:
    """Self-consistent prediction.

    Starts from the heuristic point T(π̂_n), where T(π) decodes
    update(ĥ_n, H_{n-1}, Φ_n(π), w_n), and iterates until ||T(π) - π|| <= tol
    or max_iters evaluations.  Returns the iterate with the smallest residual
    ||π - T(π)|| and ĝ_n = Φ_n(π) at that iterate.
    """
    from .meta import prediction_step

    def T(pi):
        g = np.asarray(model.predict(pi, ctx), dtype=float)
        return alg.project(prediction_step(alg, h_hat, H, g, w, adam_m), H), g

    x, _ = T(alg.project(h_hat, H))
    best = None
    hist_x, hist_f, hist_t = [], [], []
    for k in range(1, cfg.max_iters + 1):
        tx, g = T(x)
        f = tx - x
        res = float(np.linalg.norm(f))
        if best is None or res < best[2]:
            best = (x, g, res, k)
        if res <= cfg.tol:
            return FixedPointResult(x, g, res, k, True)
        if cfg.method == "anderson":
            hist_x.append(x)
            hist_f.append(f)
            hist_t.append(tx)
            del hist_x[:-cfg.memory - 1], hist_f[:-cfg.memory - 1], hist_t[:-cfg.memory - 1]
            if len(hist_f) > 1:
                dF = np.diff(np.array(hist_f), axis=0).T
                dT = np.diff(np.array(hist_t), axis=0).T
                gamma = np.linalg.lstsq(dF, f, rcond=None)[0]
                tx = alg.set.project(tx - dT @ gamma)
        x = tx
    xb, gb, rb, kb = best
    return FixedPointResult(xb, gb, rb, cfg.max_iters, rb <= cfg.tol)
