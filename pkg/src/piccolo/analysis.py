"""Regret, comparators, the per-run regret-bound audit, and rate fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError, UnsupportedError
from .geometry import Box, FeasibleSet, L2Ball, ProductSimplex
from .problems.base import LinQuadLoss

COMPARATOR_TIE_BREAK = "lowest index"


def _as_linquad(losses) -> list[LinQuadLoss]:
    out = []
    for loss in losses:
        if not isinstance(loss, LinQuadLoss):
            raise UnsupportedError("comparators need linear or quadratic losses with known coefficients")
        out.append(loss)
    return out


def _aggregate(losses, weights):
    """Coefficients of sum_n w_n l_n(π) = (A/2)||π||^2 - <u, π> + const."""
    losses = _as_linquad(losses)
    weights = np.asarray(weights, dtype=float)
    A = float(sum(w * l.a for w, l in zip(weights, losses)))
    u = -sum(w * l.q for w, l in zip(weights, losses))
    for w, l in zip(weights, losses):
        if l.a:
            u = u + w * l.a * l.b
    return A, u


def _set_min_linear(fset: FeasibleSet, V: np.ndarray) -> np.ndarray:
    """min over the set of <v, π> for every row v of V."""
    if isinstance(fset, ProductSimplex):
        return V.reshape(V.shape[0], fset.num_blocks, fset.block_dim).min(axis=2).sum(axis=1)
    if isinstance(fset, L2Ball):
        return V @ fset.center_ - fset.radius * np.linalg.norm(V, axis=1)
    if isinstance(fset, Box):
        if not fset.bounded:
            raise UnsupportedError("linear losses have no minimum on an unbounded box")
        return np.minimum(V * fset.lower, V * fset.upper).sum(axis=1)
    raise UnsupportedError(f"unsupported set {type(fset).__name__}")


def comparator(losses, fset: FeasibleSet, weights=None, polish_steps: int = 100) -> np.ndarray:
    """argmin_{π in set} sum_n w_n l_n(π).

    Linear: the set's linear minimizer (simplex ties go to the lowest index).
    Quadratic: project the closed-form unconstrained minimizer, then run
    projected-gradient polishing steps.
    """
    losses = _as_linquad(losses)
    weights = np.ones(len(losses)) if weights is None else np.asarray(weights, dtype=float)
    A, u = _aggregate(losses, weights)
    if A == 0.0:
        return fset.linear_argmin(-u)
    z = fset.project(u / A)
    for _ in range(polish_steps):
        z = fset.project(z - (A * z - u) / A)
    return z


def _values(losses, decisions):
    return np.array([l.value(p) for l, p in zip(losses, decisions)])


def _round_minima(losses, fset):
    out = np.empty(len(losses))
    for i, l in enumerate(losses):
        if l.a:
            out[i] = l.value(comparator([l], fset, polish_steps=0))
        else:
            out[i] = _set_min_linear(fset, l.q[None, :])[0]
    return out


@dataclass
class RegretReport:
    static: float
    dynamic: float
    eps: float
    eps_dynamic: float
    average: float
    weight_total: float
    comparator: np.ndarray = field(repr=False)
    windows: dict = field(default_factory=dict)
    tie_break: str = COMPARATOR_TIE_BREAK


def regret(decisions, losses, fset: FeasibleSet, weights=None, windows=()) -> RegretReport:
    """Weighted static and dynamic regret of a decision sequence.

    eps is the weighted-average loss of the best fixed decision, eps_dynamic
    the weighted-average of the per-round minima.  ``windows`` is a list of
    (start, stop) round ranges, 1-based inclusive, each scored against its own
    best fixed decision.
    """
    losses = _as_linquad(losses)
    decisions = np.asarray(decisions, dtype=float)
    N = len(losses)
    if decisions.shape[0] != N:
        raise StructuralError("need one decision per loss")
    weights = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    wtot = float(weights.sum())
    played = float(weights @ _values(losses, decisions))
    pstar = comparator(losses, fset, weights)
    best = float(sum(w * l.value(pstar) for w, l in zip(weights, losses)))
    per_round = float(weights @ _round_minima(losses, fset))
    win = {}
    for a, b in windows:
        if not 1 <= a <= b <= N:
            raise StructuralError(f"window ({a}, {b}) outside 1..{N}")
        sl = slice(a - 1, b)
        win[(a, b)] = regret(decisions[sl], losses[sl], fset, weights[sl]).static
    return RegretReport(
        static=played - best,
        dynamic=played - per_round,
        eps=best / wtot,
        eps_dynamic=per_round / wtot,
        average=(played - best) / wtot,
        weight_total=wtot,
        comparator=pstar,
        windows=win,
    )


class _PrefixSums:
    """Running coefficients of f_{1:n}(π) = <Q_n, π> + (A_n/2)||π||^2 - <B_n, π> + C_n."""

    def __init__(self, losses, weights):
        a = np.array([l.a for l in losses])
        q = np.array([l.q for l in losses])
        b = np.array([l.b if l.a else np.zeros_like(l.q) for l in losses])
        self.Q = np.cumsum(weights[:, None] * q, axis=0)
        self.A = np.cumsum(weights * a)
        self.B = np.cumsum(weights[:, None] * a[:, None] * b, axis=0)
        self.C = np.cumsum(weights * 0.5 * a * np.einsum("nd,nd->n", b, b))
        self.linear = not a.any()

    def value(self, idx, P) -> np.ndarray:
        """f_{1:idx+1} evaluated at the rows of P (one row per index)."""
        P = np.asarray(P, dtype=float)
        return (np.einsum("nd,nd->n", self.Q[idx] - self.B[idx], P)
                + 0.5 * self.A[idx] * np.einsum("nd,nd->n", P, P) + self.C[idx])

    def minimum(self, fset) -> np.ndarray:
        """min over the set of f_{1:n} for every n, with the minimizers."""
        if self.linear:
            return _set_min_linear(fset, self.Q), None
        N = len(self.A)
        arg = np.empty_like(self.Q)
        for n in range(N):
            U = self.B[n] - self.Q[n]
            if self.A[n] == 0.0:
                arg[n] = fset.linear_argmin(-U)
            else:
                arg[n] = fset.project(U / self.A[n])
        return self.value(np.arange(N), arg), arg


def prefix_regret(decisions, losses, fset: FeasibleSet, weights=None) -> np.ndarray:
    """Static regret of every prefix 1..n, for n = 1..N.

    Each prefix comparator is exact: the set's linear minimizer, or the
    projection of the unconstrained minimizer when every loss shares the
    isotropic curvature form used here.
    """
    losses = _as_linquad(losses)
    decisions = np.asarray(decisions, dtype=float)
    N = len(losses)
    weights = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    played = np.cumsum(weights * _values(losses, decisions))
    best, _ = _PrefixSums(losses, weights).minimum(fset)
    return played - best


# ---------------------------------------------------------------------------
# Regret-bound audit
# ---------------------------------------------------------------------------


@dataclass
class BoundAudit:
    lhs: float
    rhs: float
    slack: float
    M: float
    error_term: float
    gap_term: float
    M_tracked: float
    comparator: np.ndarray = field(repr=False)

    def passed(self, tol: float = 1e-9) -> bool:
        return bool(np.isfinite(self.slack) and self.slack >= -tol * (1.0 + abs(self.lhs)))


def _bound_terms(trace, alg, H0):
    """Per-round (M increment, error term, gap term), recomputed from snapshots."""
    dM, err, gap = [], [], []
    H_prev = H0
    for t in trace:
        dM.append(alg.reg_change(H_prev, t.H_pred) + alg.reg_change(t.H_pred, t.H))
        err.append(0.5 * t.w**2 * alg.dual_sq(t.H, t.e))
        gap.append(0.5 * alg.primal_sq(t.H_pred, t.pi - t.pihat))
        H_prev = t.H
    return np.array(dM), np.array(err), np.array(gap)


def _check_auditable(alg, mode=None):
    if not getattr(alg, "auditable", False):
        raise UnsupportedError(f"{alg.name} is not covered by the regret-bound audit")
    if mode is not None and mode.kind.value not in ("piccolo", "model_free"):
        raise UnsupportedError(f"the bound does not apply to mode {mode.kind.value}")


def audit_regret_bound(trace, alg, H0, mode=None) -> BoundAudit:
    """Check sum w_n <g_n, π_n - π*> <= M + sum w_n^2/2 ||e_n||_{*,n}^2 - 1/2 sum ||π_n - π̂_n||_{n-1}^2.

    π* is the best fixed decision for the linear losses <g_n, .>, which makes
    the left side as large as possible.  All norms are recomputed from the
    regularizer snapshots stored in the trace.
    """
    _check_auditable(alg, mode)
    fset = alg.set
    w = np.array([t.w for t in trace])
    G = np.array([t.g for t in trace])
    P = np.array([t.pi for t in trace])
    V = (w[:, None] * G).sum(axis=0)
    pstar = fset.linear_argmin(V)
    lhs = float(np.sum(w * np.einsum("nd,nd->n", G, P)) - V @ pstar)
    dM, err, gap = _bound_terms(trace, alg, H0)
    M = alg.reg_size(H0) + float(dM.sum())
    rhs = M + float(err.sum()) - float(gap.sum())
    return BoundAudit(lhs, rhs, rhs - lhs, M, float(err.sum()), float(gap.sum()), trace[-1].H.M, pstar)


# name required by the published operation list
audit_theorem1 = audit_regret_bound


def prefix_bound(trace, alg, H0, mode=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lhs, rhs, slack) of the audit over every prefix of the run."""
    _check_auditable(alg, mode)
    w = np.array([t.w for t in trace])
    lhs = prefix_regret([t.pi for t in trace], [LinQuadLoss(t.g) for t in trace], alg.set, w)
    dM, err, gap = _bound_terms(trace, alg, H0)
    rhs = alg.reg_size(H0) + np.cumsum(dM) + np.cumsum(err) - np.cumsum(gap)
    return lhs, rhs, rhs - lhs


# ---------------------------------------------------------------------------
# Rates and bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    floored: bool


def fit_rate(Ns, values, floor: float = 1e-12) -> RateFit:
    """Least-squares slope of log(value) against log(N)."""
    Ns = np.asarray(Ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if Ns.shape != values.shape or Ns.size < 3:
        raise StructuralError("need at least three (N, value) pairs")
    floored = bool(np.any(values <= floor))
    slope, intercept = np.polyfit(np.log(Ns), np.log(np.maximum(values, floor)), 1)
    return RateFit(float(slope), float(intercept), floored)


@dataclass
class FTLReport:
    delta: np.ndarray
    gaps: np.ndarray
    regret: float

    @property
    def identity_lhs(self) -> float:
        """sum_n (gap_n - Δ_n), which equals the static regret."""
        return float(np.sum(self.gaps - self.delta))


def ftl_bookkeeping(decisions, losses, fset: FeasibleSet, weights=None) -> FTLReport:
    """Per-round quantities of the FTL lemmas for weighted losses f_n = w_n l_n.

    gap_n = f_{1:n}(π_n) - f_{1:n}(π*_n) and Δ_n = f_{1:n-1}(π_n) - f_{1:n-1}(π*_{n-1})
    (Δ_1 = 0), with π*_n the best decision for the first n losses.  Their
    difference summed over rounds telescopes to the static regret.
    """
    losses = _as_linquad(losses)
    decisions = np.asarray(decisions, dtype=float)
    N = len(losses)
    weights = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    sums = _PrefixSums(losses, weights)
    best, _ = sums.minimum(fset)
    idx = np.arange(N)
    gaps = sums.value(idx, decisions) - best
    delta = np.zeros(N)
    if N > 1:
        delta[1:] = sums.value(idx[:-1], decisions[1:]) - best[:-1]
    rep = regret(decisions, losses, fset, weights)
    return FTLReport(delta, gaps, rep.static)


def telescoping_residual(mdp, decisions, pi0) -> float:
    """max_n |l_n(π_n) - (J(π_n) - J(π_{n-1}))| for the improvement losses."""
    from .problems.mdp import performance, rl_round_loss

    worst, prev = 0.0, np.asarray(pi0, dtype=float)
    for pi in decisions:
        val, _ = rl_round_loss(mdp, pi, pi, prev)
        worst = max(worst, abs(val - (performance(mdp, pi) - performance(mdp, prev))))
        prev = pi
    return worst


@dataclass
class ImitationCheck:
    avg_J: float
    J_star: float
    C: float
    eps: float
    avg_regret: float

    @property
    def bound(self) -> float:
        return self.J_star + self.C * (self.eps + self.avg_regret)

    @property
    def holds(self) -> bool:
        return self.avg_J <= self.bound + 1e-12


def imitation_bound(problem, decisions, weights=None) -> ImitationCheck:
    """Weighted-average J along an imitation run against J(π*) + C (ε + regret/w_{1:N})."""
    from .problems.mdp import il_constant, il_round_loss, performance

    mdp = problem.mdp
    decisions = np.asarray(decisions, dtype=float)
    weights = np.ones(len(decisions)) if weights is None else np.asarray(weights, dtype=float)
    losses = [LinQuadLoss(il_round_loss(mdp, p, p, problem.pi_star)[1]) for p in decisions]
    rep = regret(decisions, losses, problem.set, weights)
    J = np.array([performance(mdp, p) for p in decisions])
    return ImitationCheck(float(weights @ J / weights.sum()), problem.J_star,
                          il_constant(mdp, problem.pi_star), rep.eps, rep.average)
