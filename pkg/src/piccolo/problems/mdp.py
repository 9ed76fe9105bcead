"""Exact tabular MDPs and the policy-optimization loss sequences built on them.

Costs are minimized.  With discount γ and initial distribution μ,

    d_π = (1 - γ) μ + γ P_π^T d_π            (normalized discounted occupancy)
    V_π = (I - γ P_π)^{-1} c_π,  Q_π = c + γ P V_π,  A_π = Q_π - V_π
    J(π) = E_{s~d_π} E_{a~π_s} c(s, a) = (1 - γ) μ^T V_π

and for any two policies J(π) - J(π') = E_{d_π} E_π [A_π'].  The policy
optimization losses l_n(π) = sum_s d_{π_n}(s) sum_a π(a|s) A_{π_{n-1}}(s, a)
are therefore linear in π and telescope: l_n(π_n) = J(π_n) - J(π_{n-1}).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from ..errors import ConfigError, NumericError, StructuralError
from ..geometry import Box, ProductSimplex
from .base import LinQuadLoss, NoiseSpec, Problem, RoundLoss

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True, eq=False)
class TabularMDP:
    P: np.ndarray  # (S, A, S)
    c: np.ndarray  # (S, A)
    gamma: float
    mu: np.ndarray  # (S,)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        c = np.array(self.c, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise StructuralError(f"P must have shape (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if c.shape != (S, A):
            raise StructuralError(f"c must have shape ({S}, {A}), got {c.shape}")
        if mu.shape != (S,):
            raise StructuralError(f"mu must have length {S}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise StructuralError("transition rows must be nonnegative and sum to 1")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise StructuralError("mu must be a probability vector")
        if not 0.0 < self.gamma < 1.0:
            raise StructuralError("gamma must lie in (0, 1)")
        if not np.all(np.isfinite(c)):
            raise StructuralError("costs must be finite")
        for name, arr in (("P", P), ("c", c), ("mu", mu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]

    def policy(self, pi) -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if pi.shape == (self.S * self.A,):
            pi = pi.reshape(self.S, self.A)
        if pi.shape != (self.S, self.A):
            raise StructuralError(f"policy must have shape ({self.S}, {self.A})")
        return pi

    def P_pi(self, pi) -> np.ndarray:
        return np.einsum("sa,sat->st", self.policy(pi), self.P)


def occupancy(mdp: TabularMDP, pi) -> np.ndarray:
    """Normalized discounted state occupancy d_π."""
    M = np.eye(mdp.S) - mdp.gamma * mdp.P_pi(pi).T
    d = np.linalg.solve(M, (1.0 - mdp.gamma) * mdp.mu)
    if not np.all(np.isfinite(d)):
        raise NumericError("occupancy solve failed")
    return d


def q_v_a(mdp: TabularMDP, pi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (Q_π, V_π, A_π)."""
    pi = mdp.policy(pi)
    c_pi = np.sum(pi * mdp.c, axis=1)
    V = np.linalg.solve(np.eye(mdp.S) - mdp.gamma * mdp.P_pi(pi), c_pi)
    Q = mdp.c + mdp.gamma * mdp.P @ V
    return Q, V, Q - V[:, None]


def performance(mdp: TabularMDP, pi) -> float:
    """J(π) = E_{d_π} E_π[c]."""
    pi = mdp.policy(pi)
    return float(occupancy(mdp, pi) @ np.sum(pi * mdp.c, axis=1))


def optimal_policy(mdp: TabularMDP, max_iter: int = 1000) -> np.ndarray:
    """Deterministic optimal policy by policy iteration (ties to the lowest action)."""
    pi = np.full((mdp.S, mdp.A), 1.0 / mdp.A)
    for _ in range(max_iter):
        Q, _, _ = q_v_a(mdp, pi)
        greedy = np.zeros_like(pi)
        best = np.argmin(Q, axis=1)
        # keep the current action when it is already greedy to avoid cycling on ties
        current = np.argmax(pi, axis=1)
        keep = np.isclose(Q[np.arange(mdp.S), current], Q[np.arange(mdp.S), best], rtol=0, atol=1e-13)
        best = np.where(keep & (pi.max(axis=1) == 1.0), current, best)
        greedy[np.arange(mdp.S), best] = 1.0
        if np.array_equal(greedy, pi):
            return pi
        pi = greedy
    raise NumericError("policy iteration did not converge")


def rl_round_loss(mdp: TabularMDP, pi, pi_n, pi_prev) -> tuple[float, np.ndarray]:
    """(l_n(π), ∇l_n) with l_n(π) = sum_s d_{π_n}(s) sum_a π(a|s) A_{π_{n-1}}(s, a)."""
    grad = occupancy(mdp, pi_n)[:, None] * q_v_a(mdp, pi_prev)[2]
    return float(np.sum(grad * mdp.policy(pi))), grad.ravel()


def il_round_loss(mdp: TabularMDP, pi, pi_n, pi_star) -> tuple[float, np.ndarray]:
    """(l_n(π), ∇l_n) with the expert advantage A_{π*} in place of A_{π_{n-1}}."""
    return rl_round_loss(mdp, pi, pi_n, pi_star)


def performance_difference_residual(mdp: TabularMDP, pi, pi_other) -> float:
    """|J(π) - J(π') - E_{d_π} E_π[A_π']|."""
    lhs = performance(mdp, pi) - performance(mdp, pi_other)
    rhs = float(np.sum(occupancy(mdp, pi)[:, None] * mdp.policy(pi) * q_v_a(mdp, pi_other)[2]))
    return abs(lhs - rhs)


def il_constant(mdp: TabularMDP, pi_star) -> float:
    """Conservative C = max |A_{π*}| / smallest positive A_{π*} gap."""
    A = q_v_a(mdp, pi_star)[2]
    pos = A[A > 1e-12]
    if pos.size == 0:
        return 1.0
    return float(max(1.0, np.abs(A).max() / pos.min()))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


def garnet(S: int = 10, A: int = 4, branching: int = 3, gamma: float = 0.9, rng=None) -> TabularMDP:
    """Random MDP where every (s, a) reaches ``branching`` distinct states."""
    rng = np.random.default_rng() if rng is None else rng
    if not 1 <= branching <= S:
        raise StructuralError("branching must lie in 1..S")
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            nxt = rng.choice(S, size=branching, replace=False)
            P[s, a, nxt] = rng.dirichlet(np.ones(branching))
    c = rng.random((S, A))
    mu = rng.dirichlet(np.ones(S))
    return TabularMDP(P, c, gamma, mu)


GRID_MOVES = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])  # up, down, left, right


def gridworld(size: int = 5, slip: float = 0.1, gamma: float = 0.9, start: str = "uniform") -> TabularMDP:
    """size x size grid, goal in the bottom-right corner.

    Every non-goal cell costs 1 per step and the goal is absorbing at cost 0.
    With probability ``slip`` the move is replaced by a uniformly random one;
    moves into the border leave the agent in place.  ``start`` is ``"uniform"``
    over non-goal cells or ``"corner"`` for the top-left cell.
    """
    S, A = size * size, 4
    goal = S - 1
    P = np.zeros((S, A, S))
    for s in range(S):
        r, col = divmod(s, size)
        for a in range(A):
            for b in range(A):
                prob = (1.0 - slip) * (a == b) + slip / A
                if prob == 0.0:
                    continue
                rr = min(max(r + GRID_MOVES[b, 0], 0), size - 1)
                cc = min(max(col + GRID_MOVES[b, 1], 0), size - 1)
                P[s, a, rr * size + cc] += prob
    P[goal] = 0.0
    P[goal, :, goal] = 1.0
    c = np.ones((S, A))
    c[goal] = 0.0
    if start == "uniform":
        mu = np.ones(S)
        mu[goal] = 0.0
    elif start == "corner":
        mu = np.zeros(S)
        mu[0] = 1.0
    else:
        raise StructuralError(f"unknown start {start!r}")
    return TabularMDP(P, c, gamma, mu / mu.sum())


def perturb(mdp: TabularMDP, beta: float, rng) -> TabularMDP:
    """Scale each transition probability by (1 ± beta), random signs, then renormalize."""
    if not 0 <= beta < 1:
        raise StructuralError("beta must lie in [0, 1)")
    sign = rng.choice([-1.0, 1.0], size=mdp.P.shape)
    P = mdp.P * (1.0 + beta * sign)
    return TabularMDP(P / P.sum(axis=2, keepdims=True), mdp.c, mdp.gamma, mdp.mu)


def rollout_states(mdp: TabularMDP, pi, M: int, rng) -> np.ndarray:
    """M states drawn from d_π by simulating trajectories from μ that stop
    with probability 1 - γ before each transition."""
    pi = mdp.policy(pi)
    pcum = np.cumsum(pi, axis=1)
    tcum = np.cumsum(mdp.P, axis=2)
    s = np.searchsorted(np.cumsum(mdp.mu), rng.random(M) * np.cumsum(mdp.mu)[-1], side="right")
    s = np.minimum(s, mdp.S - 1)
    out = np.empty(M, dtype=int)
    alive = np.arange(M)
    while alive.size:
        stop = rng.random(alive.size) >= mdp.gamma
        out[alive[stop]] = s[alive[stop]]
        alive = alive[~stop]
        if not alive.size:
            break
        cur = s[alive]
        a = (rng.random(alive.size)[:, None] < pcum[cur]).argmax(axis=1)
        s[alive] = (rng.random(alive.size)[:, None] < tcum[cur, a]).argmax(axis=1)
    return out


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def mdp_from_dict(data: dict) -> TabularMDP:
    required = ("S", "A", "P", "c", "gamma", "mu")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"MDP definition is missing field(s): {', '.join(missing)}")
    unknown = sorted(set(data) - set(required))
    if unknown:
        raise ConfigError(f"MDP definition has unknown field(s): {', '.join(unknown)}")
    S, A = data["S"], data["A"]
    if not (isinstance(S, int) and isinstance(A, int) and S > 0 and A > 0):
        raise ConfigError("S and A must be positive integers")
    P, c, mu = (np.asarray(data[k], dtype=float) for k in ("P", "c", "mu"))
    for name, arr, n in (("P", P, S * A * S), ("c", c, S * A), ("mu", mu, S)):
        if arr.shape != (n,):
            raise ConfigError(f"field {name} must be a flat list of {n} numbers, got {arr.size}")
    try:
        return TabularMDP(P.reshape(S, A, S), c.reshape(S, A), float(data["gamma"]), mu)
    except StructuralError as exc:
        raise ConfigError(f"invalid MDP: {exc}") from exc


def load_mdp(path) -> TabularMDP:
    """Read an MDP from a TOML file with fields S, A, P, c, gamma, mu.

    P is flattened row-major over (s, a, s') and c over (s, a).
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read MDP file {path}: {exc}") from exc
    return mdp_from_dict(data)


def mdp_to_dict(mdp: TabularMDP) -> dict:
    return {
        "S": mdp.S,
        "A": mdp.A,
        "gamma": mdp.gamma,
        "mu": mdp.mu.tolist(),
        "c": mdp.c.ravel().tolist(),
        "P": mdp.P.ravel().tolist(),
    }


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularLoss(LinQuadLoss):
    """Linear policy loss that remembers its occupancy and advantage factors."""

    d: np.ndarray | None = None
    adv: np.ndarray | None = None


class PolicyProblem(Problem):
    """Policy optimization on a tabular MDP with the direct parametrization.

    loss: ``"rl"`` uses A_{π_{n-1}} (the improvement loss), ``"il"`` uses the
    advantage of the optimal policy.  ``samples = 0`` gives exact gradients;
    otherwise the occupancy is replaced by the empirical distribution of
    ``samples`` rollout states and the advantage is evaluated exactly.
    ``model_mdp`` is the simulator used by the biased oracle.
    """

    def __init__(self, mdp: TabularMDP, loss: str = "rl", samples: int = 0, model_mdp: TabularMDP | None = None,
                 init: str = "uniform", noise: NoiseSpec = NoiseSpec()):
        if loss not in ("rl", "il"):
            raise StructuralError(f"unknown policy loss {loss!r}")
        if init not in ("uniform", "random"):
            raise StructuralError(f"unknown initialization {init!r}")
        if samples < 0:
            raise StructuralError("samples must be nonnegative")
        self.mdp = mdp
        self.loss_kind = loss
        self.samples = int(samples)
        self.model_mdp = model_mdp if model_mdp is not None else mdp
        self.init = init
        self.noise = noise
        self.set = ProductSimplex(mdp.S, mdp.A)
        self.pi_star = optimal_policy(mdp)
        self.J_star = performance(mdp, self.pi_star)
        self._adv_star = {id(self.mdp): q_v_a(self.mdp, self.pi_star)[2]}
        self._cache: dict = {}

    def initial_decision(self, rng):
        if self.init == "random":
            return rng.dirichlet(np.ones(self.mdp.A), size=self.mdp.S).ravel()
        return self.set.center()

    def _advantage(self, mdp: TabularMDP, pi_prev) -> np.ndarray:
        if self.loss_kind == "il":
            return self._adv_star[id(self.mdp)]
        key = (id(mdp), np.asarray(pi_prev, dtype=float).tobytes())
        adv = self._cache.get(key)
        if adv is None:
            adv = q_v_a(mdp, pi_prev)[2]
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[key] = adv
        return adv

    def round_loss(self, n, pi, pi_prev) -> TabularLoss:
        d = occupancy(self.mdp, pi)
        adv = self._advantage(self.mdp, pi_prev)
        return TabularLoss((d[:, None] * adv).ravel(), d=d, adv=adv)

    def sample_gradient(self, loss, pi, rng):
        if self.samples == 0:
            return loss.q.copy(), loss
        states = rollout_states(self.mdp, pi, self.samples, rng)
        d_hat = np.bincount(states, minlength=self.mdp.S) / self.samples
        g = (d_hat[:, None] * loss.adv).ravel()
        return g, LinQuadLoss(g)

    def oracle_gradient(self, n, pi, pi_prev, biased=False):
        mdp = self.model_mdp if biased else self.mdp
        d = occupancy(mdp, pi)
        return (d[:, None] * self._advantage(mdp, pi_prev)).ravel()

    def performance(self, pi):
        return performance(self.mdp, pi)


@dataclass(frozen=True, eq=False)
class SoftmaxLoss(RoundLoss):
    """l(θ) = sum_s d(s) sum_a softmax(θ_s)_a A(s, a) on raw logits θ."""

    d: np.ndarray
    adv: np.ndarray

    def _pi(self, theta):
        return softmax(np.asarray(theta, dtype=float).reshape(self.adv.shape), axis=1)

    def value(self, theta):
        return float(np.sum(self.d[:, None] * self._pi(theta) * self.adv))

    def grad(self, theta):
        pi = self._pi(theta)
        centered = self.adv - np.sum(pi * self.adv, axis=1, keepdims=True)
        return (self.d[:, None] * pi * centered).ravel()


class SoftmaxPolicyProblem(PolicyProblem):
    """The improvement loss under the softmax parametrization π = softmax(θ).

    Used with the natural-gradient learner; ``fisher`` gives its metric
    F(θ) = blockdiag_s d_π(s) (diag(π_s) - π_s π_s^T).
    """

    def __init__(self, mdp: TabularMDP, samples: int = 0, model_mdp: TabularMDP | None = None,
                 noise: NoiseSpec = NoiseSpec()):
        super().__init__(mdp, "rl", samples, model_mdp, "uniform", noise)
        self.set = Box.unconstrained(mdp.S * mdp.A)

    def policy(self, theta) -> np.ndarray:
        return softmax(np.asarray(theta, dtype=float).reshape(self.mdp.S, self.mdp.A), axis=1)

    def initial_decision(self, rng):
        return np.zeros(self.mdp.S * self.mdp.A)

    def round_loss(self, n, theta, theta_prev) -> SoftmaxLoss:
        d = occupancy(self.mdp, self.policy(theta))
        return SoftmaxLoss(d, self._advantage(self.mdp, self.policy(theta_prev)))

    def sample_gradient(self, loss, theta, rng):
        if self.samples == 0:
            return loss.grad(theta), loss
        states = rollout_states(self.mdp, self.policy(theta), self.samples, rng)
        sampled = SoftmaxLoss(np.bincount(states, minlength=self.mdp.S) / self.samples, loss.adv)
        return sampled.grad(theta), sampled

    def oracle_gradient(self, n, theta, theta_prev, biased=False):
        mdp = self.model_mdp if biased else self.mdp
        loss = SoftmaxLoss(occupancy(mdp, self.policy(theta)), self._advantage(mdp, self.policy(theta_prev)))
        return loss.grad(theta)

    def fisher(self, theta) -> np.ndarray:
        pi = self.policy(theta)
        d = occupancy(self.mdp, pi)
        S, A = pi.shape
        F = np.zeros((S * A, S * A))
        for s in range(S):
            blk = d[s] * (np.diag(pi[s]) - np.outer(pi[s], pi[s]))
            F[s * A:(s + 1) * A, s * A:(s + 1) * A] = blk
        return F

    def performance(self, theta):
        return performance(self.mdp, self.policy(theta))
