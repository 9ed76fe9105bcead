"""Round losses and the interface every problem implements."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import StructuralError
from ..geometry import FeasibleSet


class RoundLoss:
    """A per-round loss with value and gradient at arbitrary decisions."""

    def value(self, pi) -> float:
        raise NotImplementedError

    def grad(self, pi) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinQuadLoss(RoundLoss):
    """l(π) = <q, π> + (a/2) ||π - b||^2.

    Linear losses have a = 0; the comparator in :mod:`piccolo.analysis` solves
    weighted sums of these in closed form.
    """

    q: np.ndarray
    a: float = 0.0
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.a < 0:
            raise StructuralError("curvature must be nonnegative")
        if self.a > 0 and self.b is None:
            raise StructuralError("quadratic loss needs a center")

    @property
    def is_linear(self) -> bool:
        return self.a == 0.0

    def value(self, pi) -> float:
        pi = np.asarray(pi, dtype=float)
        v = float(self.q @ pi)
        if self.a:
            d = pi - self.b
            v += 0.5 * self.a * float(d @ d)
        return v

    def grad(self, pi) -> np.ndarray:
        if not self.a:
            return self.q.copy()
        return self.q + self.a * (np.asarray(pi, dtype=float) - self.b)

    def shifted(self, xi) -> "LinQuadLoss":
        """The same loss plus the linear term <xi, π>."""
        return LinQuadLoss(self.q + xi, self.a, self.b)


@dataclass(frozen=True)
class NoiseSpec:
    """sigma_g: radius of the bounded gradient noise; sigma_ghat: radius of the
    model noise; bias_sq: squared norm E_Φ of the biased oracle's offset."""

    sigma_g: float = 0.0
    sigma_ghat: float = 0.0
    bias_sq: float = 0.0

    def __post_init__(self):
        if min(self.sigma_g, self.sigma_ghat, self.bias_sq) < 0:
            raise StructuralError("noise scales must be nonnegative")


class Problem:
    """Loss-sequence provider driven by :func:`piccolo.meta.run`.

    round_loss(n, π_n, π_{n-1}) is the expected loss revealed after π_n is
    played; sample_gradient draws ∇l̃_n(π_n) and returns the sampled loss so
    models can reevaluate it elsewhere; oracle_gradient(n, π, π_{n-1}) is the
    simulator-side estimate of ∇l_n(π) available before the round is played.
    """

    set: FeasibleSet
    noise: NoiseSpec = NoiseSpec()
    #: sampled losses can be reevaluated at new decisions
    supports_reevaluation: bool = True

    @property
    def dim(self) -> int:
        return self.set.dim

    def initial_decision(self, rng: np.random.Generator) -> np.ndarray:
        return self.set.center()

    def round_loss(self, n: int, pi, pi_prev) -> RoundLoss:
        raise NotImplementedError

    def sample_gradient(self, loss: RoundLoss, pi, rng: np.random.Generator) -> tuple[np.ndarray, RoundLoss]:
        raise NotImplementedError

    def oracle_gradient(self, n: int, pi, pi_prev, biased: bool = False) -> np.ndarray:
        raise NotImplementedError

    def performance(self, pi) -> float | None:
        return None
