"""Predictor-corrector recomposition of a base learner and the run loop.

Each round first takes a *prediction* step with a model gradient ĝ_n under the
frozen regularizer, plays the resulting decision, then *corrects*: the
regularizer adapts to the error e_n = g_n - ĝ_n and the learner steps along
e_n.  The baselines differ only in what enters the two steps:

=============  ===============  ======================
mode           prediction       correction
=============  ===============  ======================
piccolo        ĝ_n              e_n
model_free     (skipped)        g_n
model_based    ĝ_n              schedule advance only
dyna           ĝ_n              g_n
=============  ===============  ======================
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .base_alg import FTRL, Adam, BaseAlgorithm, BasicMD, LearnerState, RegularizerState
from .errors import NumericAbort, StructuralError
from .geometry import (
    BregmanGeometry,
    DiagonalQuadratic,
    FeasibleSet,
    L2Ball,
    NegativeEntropy,
    SquaredEuclidean,
    WeightSchedule,
)
from .seeding import stream


class Mode(str, enum.Enum):
    PICCOLO = "piccolo"
    MODEL_FREE = "model_free"
    MODEL_BASED = "model_based"
    DYNA = "dyna"


@dataclass(frozen=True)
class MetaMode:
    kind: Mode = Mode.PICCOLO
    shift_enabled: bool = False
    #: Adam only: whether the prediction step keeps its first-moment update
    adam_m_in_prediction: str = "transient"

    def __post_init__(self):
        object.__setattr__(self, "kind", Mode(self.kind))
        if self.adam_m_in_prediction not in ("shared", "transient"):
            raise StructuralError("adam_m_in_prediction must be 'shared' or 'transient'")


def shift(alg: BaseAlgorithm, h_hat: LearnerState, H: RegularizerState) -> RegularizerState:
    return alg.shift(h_hat, H)


def prediction_step(alg: BaseAlgorithm, h_hat: LearnerState, H: RegularizerState, ghat, w: float,
                    adam_m: str = "transient") -> LearnerState:
    """h_n = update(ĥ_n, H_{n-1}, ĝ_n, w_n); the regularizer is left untouched."""
    commit = not (isinstance(alg, Adam) and adam_m == "transient")
    return alg.update(h_hat, H, ghat, w, commit=commit)


def correction_step(alg: BaseAlgorithm, h: LearnerState, H: RegularizerState, e, w: float,
                    mode: Mode | MetaMode = Mode.PICCOLO, g=None) -> tuple[RegularizerState, LearnerState]:
    """(H_n, ĥ_{n+1}).  Dyna and model-free correct with ``g`` instead of ``e``."""
    kind = mode.kind if isinstance(mode, MetaMode) else Mode(mode)
    if kind is Mode.MODEL_BASED:
        return alg.advance(h, H, w), h
    if kind in (Mode.DYNA, Mode.MODEL_FREE):
        if g is None:
            raise StructuralError(f"{kind.value} correction needs the observed gradient")
        e = g
    H1 = alg.adapt(h, H, e, w)
    return H1, alg.update(h, H1, e, w)


@dataclass(eq=False)
class RoundTrace:
    n: int
    w: float
    wsum: float
    pihat: np.ndarray
    pi: np.ndarray
    ghat: np.ndarray
    g: np.ndarray
    e: np.ndarray
    e_dual: float
    pi_gap: float
    dM: float
    loss: float
    J: float | None = None
    fp_residual: float | None = None
    fp_iters: int = 0
    H_pred: RegularizerState | None = field(default=None, repr=False)
    H: RegularizerState | None = field(default=None, repr=False)
    round_loss: object = field(default=None, repr=False)


@dataclass(eq=False)
class RunResult:
    trace: list
    pibar: np.ndarray
    K: int
    H0: RegularizerState
    alg: BaseAlgorithm
    mode: MetaMode
    schedule: WeightSchedule

    @property
    def decisions(self) -> np.ndarray:
        return np.array([t.pi for t in self.trace])


def sample_K(weights: np.ndarray, rng: np.random.Generator) -> int:
    """K in 1..N with P(K = n) proportional to w_n, by inverse CDF."""
    cdf = np.cumsum(weights)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(weights) - 1)) + 1


def _check_finite(n, *arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NumericAbort(n)


def run(problem, alg: BaseAlgorithm, mode: MetaMode | Mode | str, model, schedule: WeightSchedule, N: int,
        seed: int = 0, seed_index: int = 0, fixed_point=None, pi1=None) -> RunResult:
    """Run N rounds and return the full trace and the sampled output decision.

    ``fixed_point`` (a models.FixedPointConfig) switches the prediction to the
    self-consistent solve; otherwise ĝ_n = model.predict(π̂_n).
    """
    from .models import PredictionContext, RoundData, fixed_point_predict

    if N < 1:
        raise StructuralError("N must be at least 1")
    if not isinstance(mode, MetaMode):
        mode = MetaMode(Mode(mode))
    env_rng = stream(seed, "env", seed_index)
    model_rng = stream(seed, "model", seed_index)
    k_rng = stream(seed, "sampler", seed_index)
    if pi1 is None:
        pi1 = problem.initial_decision(stream(seed, "init", seed_index))
    h_hat, H = alg.init(pi1)
    H0 = H
    model.reset()
    pi_prev = np.asarray(pi1, dtype=float)
    wsum = 0.0
    trace = []
    for n in range(1, N + 1):
        w = schedule.w(n)
        wsum += w
        pihat = alg.project(h_hat, H)
        H_pred = alg.shift(h_hat, H) if mode.shift_enabled else H
        ctx = PredictionContext(n=n, problem=problem, pi_prev=pi_prev)
        fp_res, fp_iters = None, 0
        if mode.kind is Mode.MODEL_FREE:
            ghat = np.zeros_like(pihat)
            h = h_hat
        else:
            model.begin_round(ctx, model_rng)
            if fixed_point is not None:
                fp = fixed_point_predict(model, alg, h_hat, H_pred, w, fixed_point, ctx,
                                         adam_m=mode.adam_m_in_prediction)
                ghat, fp_res, fp_iters = fp.ghat, fp.residual, fp.iters
            else:
                ghat = np.asarray(model.predict(pihat, ctx), dtype=float)
            _check_finite(n, ghat)
            h = prediction_step(alg, h_hat, H_pred, ghat, w, mode.adam_m_in_prediction)
        pi = alg.project(h, H_pred)
        _check_finite(n, pi)
        loss = problem.round_loss(n, pi, pi_prev)
        g, sampled = problem.sample_gradient(loss, pi, env_rng)
        _check_finite(n, g)
        e = g - ghat
        H_new, h_hat = correction_step(alg, h, H_pred, e, w, mode.kind, g=g)
        # M may legitimately be +inf (entropy regularizers have unbounded size); only NaN is a fault
        _check_finite(n, h_hat.x, H_new.acc, np.array([H_new.scalar, H_new.eta]))
        if np.isnan(H_new.M):
            raise NumericAbort(n)
        trace.append(RoundTrace(
            n=n, w=w, wsum=wsum, pihat=pihat, pi=pi, ghat=ghat, g=g, e=e,
            e_dual=float(np.sqrt(alg.dual_sq(H_new, e))),
            pi_gap=float(np.sqrt(alg.primal_sq(H_pred, pi - pihat))),
            dM=0.0 if H_new.M == H.M else H_new.M - H.M, loss=loss.value(pi), J=problem.performance(pi),
            fp_residual=fp_res, fp_iters=fp_iters, H_pred=H_pred, H=H_new, round_loss=loss,
        ))
        model.update(RoundData(n=n, pi=pi, g=g, ghat=ghat, sampled_loss=sampled, ctx=ctx))
        pi_prev = pi
        H = H_new
    K = sample_K(schedule.weights(N), k_rng)
    pibar = trace[0].pi if K == 1 else trace[K - 2].pi
    return RunResult(trace, pibar, K, H0, alg, mode, schedule)


# ---------------------------------------------------------------------------
# Reference recursions
# ---------------------------------------------------------------------------


def _reference_mirror_step(geometry: BregmanGeometry, x, g, step):
    """argmin <g, z> + B(z||x) / step written out per generator, unconstrained
    for quadratics and on the simplex for entropy."""
    if isinstance(geometry, SquaredEuclidean):
        return x - step * g / geometry.scale
    if isinstance(geometry, DiagonalQuadratic):
        return x - step * g / geometry.diag
    if isinstance(geometry, NegativeEntropy):
        k = geometry.block_dim or len(x)
        z = (x * np.exp(-step * g / geometry.scale)).reshape(-1, k)
        return (z / z.sum(axis=1, keepdims=True)).ravel()
    raise StructuralError(f"no reference step for {type(geometry).__name__}")


def equivalence_check_omd(geometry: BregmanGeometry, fset: FeasibleSet, x1, gs, ghats,
                          eta: float = 0.1, G: float = 1.0) -> float:
    """Largest gap between the predictor-corrector mirror descent and the
    optimistic mirror-descent recursion with the constant regularizer
    (G / eta) R, unit weights.

    Reference:  π_n = argmin <ĝ_n, π> + B(π||π̂_n);  π̂_{n+1} = argmin <g_n, π> + B(π||π̂_n).
    """
    alg = BasicMD(fset, geometry, eta=eta, c=0.0, G=G)
    h_hat, H = alg.init(x1)
    ref_hat = np.array(x1, dtype=float)
    step = eta / G
    dev = 0.0
    for g, ghat in zip(gs, ghats):
        g, ghat = np.asarray(g, float), np.asarray(ghat, float)
        h = prediction_step(alg, h_hat, H, ghat, 1.0)
        H, h_hat = correction_step(alg, h, H, g - ghat, 1.0, Mode.PICCOLO)
        ref_pi = _reference_mirror_step(geometry, ref_hat, ghat, step)
        ref_hat = _reference_mirror_step(geometry, ref_hat, g, step)
        dev = max(dev, float(np.max(np.abs(h.x - ref_pi))), float(np.max(np.abs(h_hat.x - ref_hat))))
    return dev


def _ball_argmin(fset: L2Ball, lin, coefs, centers, scale, tol=1e-13, max_iter=10_000):
    """argmin over the ball of <lin, z> + sum_m coefs_m * scale/2 ||z - centers_m||^2
    by projected gradient with half the Lipschitz step."""
    coefs = np.asarray(coefs)
    centers = np.asarray(centers)
    L = scale * coefs.sum()
    z = fset.center()
    for _ in range(max_iter):
        grad = lin + scale * (coefs.sum() * z - coefs @ centers)
        z_new = fset.project(z - 0.5 * grad / L)
        if np.max(np.abs(z_new - z)) <= tol:
            return z_new
        z = z_new
    return z


def equivalence_check_mobil(fset: L2Ball, x1, gs, ghats, eta: float = 0.1, c: float = 1.0, G: float = 1.0,
                            scale: float = 1.0, weights=None) -> float:
    """Largest gap between predictor-corrector FTRL and the direct two-argmin
    recursion

        π_n     = argmin <w_n ĝ_n, π> + sum_{m<n} [<w_m g_m, π> + B_{r_m}(π||π_m)]
        π̂_{n+1} = argmin sum_{m<=n} [<w_m g_m, π> + B_{r_m}(π||π_m)]

    with squared-Euclidean generator on a ball.  Both sides include the
    initial term r_0 = (G/eta) B_R(.||π_1).
    """
    if not isinstance(fset, L2Ball):
        raise StructuralError("the direct recursion is implemented on a ball")
    geometry = SquaredEuclidean(scale)
    alg = FTRL(fset, geometry, eta=eta, c=c, G=G)
    gs = [np.asarray(g, float) for g in gs]
    ghats = [np.asarray(g, float) for g in ghats]
    weights = np.ones(len(gs)) if weights is None else np.asarray(weights, float)
    h_hat, H = alg.init(x1)
    coefs, centers = [G / eta], [np.array(x1, dtype=float)]
    lin = np.zeros_like(centers[0])
    eta_prev, wsum = eta, 0.0
    dev = 0.0
    for n, (g, ghat, w) in enumerate(zip(gs, ghats, weights), start=1):
        h = prediction_step(alg, h_hat, H, ghat, w)
        pi = alg.project(h, H)
        H, h_hat = correction_step(alg, h, H, g - ghat, w, Mode.PICCOLO)
        pihat_next = alg.project(h_hat, H)

        ref_pi = _ball_argmin(fset, lin + w * ghat, coefs, centers, scale)
        wsum += w
        eta_n = eta / (1.0 + c * wsum / np.sqrt(n))
        cn = G * (1.0 / eta_n - 1.0 / eta_prev)
        eta_prev = eta_n
        if cn != 0.0:
            coefs.append(cn)
            centers.append(ref_pi)
        lin = lin + w * g
        ref_hat = _ball_argmin(fset, lin, coefs, centers, scale)
        dev = max(dev, float(np.max(np.abs(pi - ref_pi))), float(np.max(np.abs(pihat_next - ref_hat))))
    return dev
