"""Synthetic predictable online convex optimization.

The expected loss of round n is linear, l_n(π) = <c_n, π>, or quadratic,
l_n(π) = (a/2) ||π - b_n||^2, where the path c_n (or b_n) is

    base + amplitude * sin(2π n / period) * v + jitter * u_n

with a fixed unit direction v and i.i.d. u_n uniform in the unit ball.  The
path is a deterministic function of ``path_seed`` and n, so an oracle model
can read round n's loss before the learner commits.  Observed gradients add
zero-mean noise uniform in a ball of radius sigma_g.
"""
from __future__ import annotations

import numpy as np

from ..errors import StructuralError
from ..geometry import FeasibleSet, uniform_ball
from ..seeding import stream
from .base import LinQuadLoss, NoiseSpec, Problem


class SyntheticOCO(Problem):
    def __init__(self, fset: FeasibleSet, family: str = "linear", base=None, amplitude: float = 0.0,
                 period: float = 100.0, jitter: float = 0.0, curvature: float = 1.0,
                 noise: NoiseSpec = NoiseSpec(), path_seed: int = 0, bias_direction=None):
        if family not in ("linear", "quadratic"):
            raise StructuralError(f"unknown loss family {family!r}")
        if amplitude < 0 or jitter < 0 or not period > 0 or not curvature > 0:
            raise StructuralError("need amplitude, jitter >= 0 and period, curvature > 0")
        self.set = fset
        self.family = family
        d = fset.dim
        self.base = np.zeros(d) if base is None else np.asarray(base, dtype=float)
        if self.base.shape != (d,):
            raise StructuralError(f"base vector must have length {d}")
        self.amplitude, self.period, self.jitter = float(amplitude), float(period), float(jitter)
        self.curvature = float(curvature)
        self.noise = noise
        self.path_seed = int(path_seed)
        rng = stream(self.path_seed, "path-direction")
        v = rng.standard_normal(d)
        self.direction = v / np.linalg.norm(v)
        if bias_direction is None:
            b = rng.standard_normal(d)
        else:
            b = np.asarray(bias_direction, dtype=float)
            if b.shape != (d,) or not np.linalg.norm(b) > 0:
                raise StructuralError("bias direction must be a nonzero vector of the problem dimension")
        self.bias = np.sqrt(noise.bias_sq) * b / np.linalg.norm(b)

    def path(self, n: int) -> np.ndarray:
        """c_n for linear losses, b_n for quadratic ones."""
        p = self.base + self.amplitude * np.sin(2.0 * np.pi * n / self.period) * self.direction
        if self.jitter:
            p = p + uniform_ball(stream(self.path_seed, "path", n), self.set.dim, self.jitter)
        return p

    def round_loss(self, n, pi=None, pi_prev=None) -> LinQuadLoss:
        p = self.path(n)
        if self.family == "linear":
            return LinQuadLoss(p)
        return LinQuadLoss(np.zeros_like(p), self.curvature, p)

    def sample_gradient(self, loss, pi, rng):
        xi = uniform_ball(rng, self.set.dim, self.noise.sigma_g)
        return loss.grad(pi) + xi, loss.shifted(xi)

    def oracle_gradient(self, n, pi, pi_prev=None, biased=False):
        g = self.round_loss(n).grad(pi)
        return g + self.bias if biased else g

    def gradient_bound(self) -> float:
        """Bound on ||E g_n|| over the feasible set (Euclidean)."""
        radius = np.linalg.norm(self.base) + self.amplitude + self.jitter
        if self.family == "linear":
            return float(radius)
        return float(self.curvature * (np.sqrt(self.set.sq_diameter()) + radius + np.linalg.norm(self.set.center())))
