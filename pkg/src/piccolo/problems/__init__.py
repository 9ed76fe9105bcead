"""Loss-sequence providers: synthetic online convex problems and tabular MDPs."""
from .base import LinQuadLoss, NoiseSpec, Problem, RoundLoss
from .mdp import (
    PolicyProblem,
    SoftmaxPolicyProblem,
    TabularMDP,
    garnet,
    gridworld,
    il_constant,
    il_round_loss,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    occupancy,
    optimal_policy,
    performance,
    performance_difference_residual,
    perturb,
    q_v_a,
    rl_round_loss,
    rollout_states,
)
from .synthetic import SyntheticOCO


def sample_gradient(problem: Problem, pi, n: int, rng, pi_prev=None):
    """∇l̃_n(π) for round n; ``pi_prev`` defaults to π (tabular losses need it)."""
    loss = problem.round_loss(n, pi, pi if pi_prev is None else pi_prev)
    return problem.sample_gradient(loss, pi, rng)[0]


__all__ = [
    "LinQuadLoss", "NoiseSpec", "Problem", "RoundLoss", "PolicyProblem", "SoftmaxPolicyProblem",
    "TabularMDP", "SyntheticOCO", "garnet", "gridworld", "il_constant", "il_round_loss", "load_mdp",
    "mdp_from_dict", "mdp_to_dict", "occupancy", "optimal_policy", "performance",
    "performance_difference_residual", "perturb", "q_v_a", "rl_round_loss", "rollout_states",
    "sample_gradient",
]
