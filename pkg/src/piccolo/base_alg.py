"""First-order online learners written as (update, adapt, project).

A learner keeps a decision representation ``h`` (a :class:`LearnerState`) and
an adaptive regularizer ``H`` (a :class:`RegularizerState`).  Mirror-descent
learners store the decision itself in ``h`` and take proximal steps; FTRL
stores the weighted gradient sum and defers the argmin to :meth:`project`.

Every regularizer also tracks ``M = ||H_0||_R + sum_n ||H_n - H_{n-1}||_R`` for
the regret audit.  The size norm ||.||_R of a regularizer is chosen per
learner so that B_{H_n}(z||x) - B_{H_{n-1}}(z||x) <= ||H_n - H_{n-1}||_R for
all z, x in the feasible set:

* BasicMD and FTRL: |coefficient change| times the Bregman diameter of the set;
* AdaGrad and Adam: the diameter of the set under the diagonal metric |D_n - D_{n-1}|;
* AdaNatGrad: spectral norm of the scaled Fisher metric change.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import NumericError, StructuralError, UnsupportedError
from .geometry import (
    BregmanGeometry,
    DiagonalQuadratic,
    FeasibleSet,
    FisherQuadratic,
    NegativeEntropy,
    ProductSimplex,
    SquaredEuclidean,
    diag_diameter,
)


@dataclass(frozen=True, eq=False)
class LearnerState:
    """Decision-side state h.

    x: decision vector (mirror descent) or accumulated weighted gradient (FTRL).
    m, k: Adam first moment and the number of moment updates folded into it.
    """

    x: np.ndarray
    m: np.ndarray | None = None
    k: int = 0


@dataclass(frozen=True, eq=False)
class RegularizerState:
    """Regularizer-side state H.

    Fields not used by a learner keep their defaults.

    n, wsum, eta: schedule counter, w_{1:n} and the current step multiplier.
    acc: AdaGrad accumulator G_n, Adam second moment v_n, FTRL sum of
        coefficient-weighted mirror points.
    scalar: AdaNatGrad moving average G_n, FTRL total regularizer coefficient.
    k: number of moving-average updates (Adam, AdaNatGrad).
    fisher, center: AdaNatGrad metric and the point it was computed at.
    M: running regularizer-change statistic.
    """

    n: int = 0
    wsum: float = 0.0
    eta: float = 1.0
    acc: np.ndarray | None = None
    scalar: float = 0.0
    k: int = 0
    fisher: np.ndarray | None = None
    center: np.ndarray | None = None
    M: float = 0.0

    def arrays(self) -> dict:
        """Flat dictionary for serialization; ``None`` fields are dropped."""
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    @classmethod
    def from_arrays(cls, data: dict) -> "RegularizerState":
        kw = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            val = np.asarray(data[f.name])
            if f.name in ("n", "k"):
                kw[f.name] = int(val)
            elif val.ndim == 0:
                kw[f.name] = float(val)
            else:
                kw[f.name] = np.array(val, dtype=float)
        return cls(**kw)

    def digest(self) -> bytes:
        parts = []
        for key, val in sorted(self.arrays().items()):
            parts.append(key.encode() + np.asarray(val, dtype=float).tobytes())
        return b"|".join(parts)


def _finite(g, name="gradient") -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite {name}")
    return g


def _sized(coef: float, diam: float) -> float:
    """coef * diameter, with no change counting as zero even on unbounded sets."""
    return 0.0 if coef == 0.0 else coef * diam


def step_schedule(eta: float, c: float, wsum: float, n: int) -> float:
    """eta_n = eta / (1 + c * w_{1:n} / sqrt(n)); eta_0 = eta."""
    if n == 0:
        return eta
    return eta / (1.0 + c * wsum / np.sqrt(n))


class BaseAlgorithm:
    """Common interface; subclasses fill in the three operations."""

    name = "base"
    #: whether audit_regret_bound covers this learner
    auditable = True

    def __init__(self, fset: FeasibleSet, geometry: BregmanGeometry | None = None):
        self.set = fset
        self.geometry = geometry if geometry is not None else SquaredEuclidean(1.0)
        if isinstance(self.geometry, NegativeEntropy) and isinstance(fset, ProductSimplex):
            if self.geometry.block_dim is None and fset.num_blocks > 1:
                self.geometry = NegativeEntropy(self.geometry.scale, fset.block_dim)

    # -- the three operations ------------------------------------------------
    def init(self, pi1) -> tuple[LearnerState, RegularizerState]:
        raise NotImplementedError

    def update(self, h: LearnerState, H: RegularizerState, g, w: float, commit: bool = True) -> LearnerState:
        raise NotImplementedError

    def adapt(self, h: LearnerState, H: RegularizerState, g, w: float) -> RegularizerState:
        raise NotImplementedError

    def project(self, h: LearnerState, H: RegularizerState) -> np.ndarray:
        return h.x

    def advance(self, h: LearnerState, H: RegularizerState, w: float) -> RegularizerState:
        """Advance the schedule counter without feeding any gradient."""
        raise NotImplementedError

    def shift(self, h: LearnerState, H: RegularizerState) -> RegularizerState:
        """Re-center the regularizer at the current decision; identity by default."""
        return H

    # -- norms used by the regret audit ---------------------------------------
    def local_geometry(self, H: RegularizerState) -> tuple[BregmanGeometry, float]:
        """(geometry, coefficient) such that H is coefficient * alpha strongly
        convex with respect to geometry.norm."""
        raise NotImplementedError

    def primal_sq(self, H: RegularizerState, x) -> float:
        geo, coef = self.local_geometry(H)
        return coef * geo.alpha * geo.norm(x) ** 2

    def dual_sq(self, H: RegularizerState, g) -> float:
        geo, coef = self.local_geometry(H)
        return geo.dual_norm(g) ** 2 / (coef * geo.alpha)

    def reg_size(self, H: RegularizerState) -> float:
        raise NotImplementedError

    def reg_change(self, H0: RegularizerState, H1: RegularizerState) -> float:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(set={self.set!r})"


class _Scheduled(BaseAlgorithm):
    """Shared η_n = η / (1 + c w_{1:n} / sqrt(n)) bookkeeping."""

    def __init__(self, fset, geometry=None, eta: float = 0.1, c: float = 1.0):
        super().__init__(fset, geometry)
        if not eta > 0 or c < 0:
            raise StructuralError("need eta > 0 and c >= 0")
        self.eta, self.c = float(eta), float(c)

    def _tick(self, H: RegularizerState, w: float) -> dict:
        n, wsum = H.n + 1, H.wsum + w
        return dict(n=n, wsum=wsum, eta=step_schedule(self.eta, self.c, wsum, n))


class BasicMD(_Scheduled):
    """Mirror descent with R_n = (G / eta_n) R."""

    name = "BasicMD"

    def __init__(self, fset, geometry=None, eta=0.1, c=1.0, G=1.0):
        super().__init__(fset, geometry, eta, c)
        if not G > 0:
            raise StructuralError("G must be positive")
        self.G = float(G)
        self._diam = self.geometry.diameter(fset)

    def init(self, pi1):
        pi1 = np.array(pi1, dtype=float)
        H = RegularizerState(eta=self.eta, M=_sized(self.G / self.eta, self._diam))
        return LearnerState(pi1), H

    def update(self, h, H, g, w, commit=True):
        g = _finite(g)
        if not g.any():
            return h
        return LearnerState(self.geometry.prox(self.set, h.x, w * g, H.eta / self.G))

    def adapt(self, h, H, g, w):
        _finite(g)
        return self.advance(h, H, w)

    def advance(self, h, H, w):
        tick = self._tick(H, w)
        dM = _sized(abs(self.G / tick["eta"] - self.G / H.eta), self._diam)
        return replace(H, M=H.M + dM, **tick)

    def local_geometry(self, H):
        return self.geometry, self.G / H.eta

    def reg_size(self, H):
        return _sized(self.G / H.eta, self._diam)

    def reg_change(self, H0, H1):
        return _sized(abs(self.G / H1.eta - self.G / H0.eta), self._diam)


class AdaGrad(BaseAlgorithm):
    """Diagonal AdaGrad: metric D_n = (sqrt(G_n) + eps) / eta, constant eta."""

    name = "AdaGrad"

    def __init__(self, fset, eta=0.1, eps=1e-8):
        super().__init__(fset, None)
        if not eta > 0 or not eps > 0:
            raise StructuralError("need eta > 0 and eps > 0")
        self.eta, self.eps = float(eta), float(eps)

    def metric(self, H) -> np.ndarray:
        return (np.sqrt(H.acc) + self.eps) / self.eta

    def init(self, pi1):
        pi1 = np.array(pi1, dtype=float)
        H = RegularizerState(eta=self.eta, acc=np.zeros_like(pi1))
        return LearnerState(pi1), replace(H, M=self.reg_size(H))

    def update(self, h, H, g, w, commit=True):
        g = _finite(g)
        if not g.any():
            return h
        return LearnerState(DiagonalQuadratic(self.metric(H)).prox(self.set, h.x, w * g, 1.0))

    def adapt(self, h, H, g, w):
        g = _finite(g)
        H1 = replace(H, n=H.n + 1, wsum=H.wsum + w, acc=H.acc + (w * g) ** 2)
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def advance(self, h, H, w):
        return replace(H, n=H.n + 1, wsum=H.wsum + w)

    def local_geometry(self, H):
        return DiagonalQuadratic(self.metric(H)), 1.0

    def reg_size(self, H):
        return diag_diameter(self.set, self.metric(H))

    def reg_change(self, H0, H1):
        return diag_diameter(self.set, np.abs(self.metric(H1) - self.metric(H0)))


class Adam(_Scheduled):
    """Adam as mirror descent with metric (sqrt(v_hat) + eps) / eta_n.

    ``update`` folds g into the first moment and steps along w * m_hat; with
    ``commit=False`` the moment is used for the step but not stored.
    """

    name = "Adam"

    def __init__(self, fset, eta=0.1, c=1.0, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(fset, None, eta, c)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1 and eps > 0):
            raise StructuralError("need 0 <= beta1, beta2 < 1 and eps > 0")
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)

    @property
    def auditable(self):
        return self.beta1 == 0.0

    def metric(self, H) -> np.ndarray:
        vhat = H.acc / (1.0 - self.beta2**H.k) if H.k > 0 else np.zeros_like(H.acc)
        return (np.sqrt(vhat) + self.eps) / H.eta

    def init(self, pi1):
        pi1 = np.array(pi1, dtype=float)
        H = RegularizerState(eta=self.eta, acc=np.zeros_like(pi1))
        return LearnerState(pi1, np.zeros_like(pi1), 0), replace(H, M=self.reg_size(H))

    def moment(self, h, g) -> tuple[np.ndarray, int, np.ndarray]:
        """(m, k, m_hat) after folding g into the first moment."""
        m = self.beta1 * h.m + (1.0 - self.beta1) * g
        k = h.k + 1
        return m, k, m / (1.0 - self.beta1**k)

    def update(self, h, H, g, w, commit=True):
        g = _finite(g)
        if not g.any() and not h.m.any():
            return h
        m, k, mhat = self.moment(h, g)
        x = DiagonalQuadratic(self.metric(H)).prox(self.set, h.x, w * mhat, 1.0)
        return LearnerState(x, m, k) if commit else LearnerState(x, h.m, h.k)

    def adapt(self, h, H, g, w):
        g = _finite(g)
        v = self.beta2 * H.acc + (1.0 - self.beta2) * g * g
        H1 = replace(H, acc=v, k=H.k + 1, **self._tick(H, w))
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def advance(self, h, H, w):
        H1 = replace(H, **self._tick(H, w))
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def local_geometry(self, H):
        return DiagonalQuadratic(self.metric(H)), 1.0

    def reg_size(self, H):
        return diag_diameter(self.set, self.metric(H))

    def reg_change(self, H0, H1):
        return diag_diameter(self.set, np.abs(self.metric(H1) - self.metric(H0)))


class AdaNatGrad(_Scheduled):
    """Adaptive natural gradient on an unconstrained parametrization.

    H_n(x) = sqrt(G_hat_n) / (2 eta_n) x^T F_n x where F_n is the Fisher matrix
    at the regularizer's center and G_n is a moving average of
    0.5 g^T F^{-1} g.  Before any gradient arrives G_hat is ``g_init``.
    """

    name = "AdaNatGrad"
    auditable = False

    def __init__(self, fset, fisher_fn, eta=0.1, c=1.0, beta2=0.999, floor=1e-6, g_init=1.0):
        super().__init__(fset, None, eta, c)
        if not (0 <= beta2 < 1 and floor > 0 and g_init > 0):
            raise StructuralError("need 0 <= beta2 < 1, floor > 0, g_init > 0")
        self.fisher_fn = fisher_fn
        self.beta2, self.floor, self.g_init = float(beta2), float(floor), float(g_init)

    def ghat(self, H) -> float:
        return H.scalar / (1.0 - self.beta2**H.k) if H.k > 0 else self.g_init

    def local_geometry(self, H):
        return FisherQuadratic(H.fisher, self.floor), np.sqrt(self.ghat(H)) / H.eta

    def init(self, pi1):
        x = np.array(pi1, dtype=float)
        H = RegularizerState(eta=self.eta, fisher=np.asarray(self.fisher_fn(x), dtype=float), center=x)
        return LearnerState(x), replace(H, M=self.reg_size(H))

    def update(self, h, H, g, w, commit=True):
        g = _finite(g)
        if not g.any():
            return h
        geo, coef = self.local_geometry(H)
        return LearnerState(geo.prox(self.set, h.x, w * g, 1.0 / coef))

    def adapt(self, h, H, g, w):
        g = _finite(g)
        F = np.asarray(self.fisher_fn(h.x), dtype=float)
        quad = 0.5 * float(g @ FisherQuadratic(F, self.floor).solve(g))
        H1 = replace(
            H,
            scalar=self.beta2 * H.scalar + (1.0 - self.beta2) * quad,
            k=H.k + 1,
            fisher=F,
            center=np.array(h.x),
            **self._tick(H, w),
        )
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def advance(self, h, H, w):
        H1 = replace(H, **self._tick(H, w))
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def shift(self, h, H):
        if H.center is not None and np.array_equal(H.center, h.x):
            return H
        H1 = replace(H, fisher=np.asarray(self.fisher_fn(h.x), dtype=float), center=np.array(h.x))
        return replace(H1, M=H.M + self.reg_change(H, H1))

    def _scaled(self, H):
        geo, coef = self.local_geometry(H)
        return coef * geo.metric

    def reg_size(self, H):
        return float(np.linalg.norm(self._scaled(H), 2))

    def reg_change(self, H0, H1):
        return float(np.linalg.norm(self._scaled(H1) - self._scaled(H0), 2))


class FTRL(_Scheduled):
    """FTRL with proximal regularizers r_n = G (1/eta_n - 1/eta_{n-1}) B_R(.||pi_n).

    An initial term (G / eta_0) B_R(.||pi_1) makes the first argmin well posed.
    Because sum_m c_m B_R(z||pi_m) = C R(z) - <S, z> + const with
    C = sum c_m and S = sum c_m grad R(pi_m), the regularizer is stored through
    (C, S) instead of the list of centers.
    """

    name = "FTRL"

    def __init__(self, fset, geometry=None, eta=0.1, c=1.0, G=1.0):
        super().__init__(fset, geometry, eta, c)
        if not G > 0:
            raise StructuralError("G must be positive")
        self.G = float(G)
        self._diam = self.geometry.diameter(fset)

    def init(self, pi1):
        pi1 = np.array(pi1, dtype=float)
        C = self.G / self.eta
        H = RegularizerState(eta=self.eta, scalar=C, acc=C * self.geometry.grad(pi1), M=_sized(C, self._diam))
        return LearnerState(np.zeros_like(pi1)), H

    def update(self, h, H, g, w, commit=True):
        g = _finite(g)
        if not g.any():
            return h
        return LearnerState(h.x + w * g)

    def project(self, h, H):
        return self.geometry.mirror_argmin(self.set, H.acc - h.x, H.scalar)

    def adapt(self, h, H, g, w):
        _finite(g)
        return self.advance(h, H, w)

    def advance(self, h, H, w):
        tick = self._tick(H, w)
        cn = self.G * (1.0 / tick["eta"] - 1.0 / H.eta)
        if cn == 0.0:
            return replace(H, **tick)
        pi = self.project(h, H)
        return replace(
            H,
            scalar=H.scalar + cn,
            acc=H.acc + cn * self.geometry.grad(pi),
            M=H.M + _sized(abs(cn), self._diam),
            **tick,
        )

    def local_geometry(self, H):
        return self.geometry, H.scalar

    def reg_size(self, H):
        return _sized(H.scalar, self._diam)

    def reg_change(self, H0, H1):
        return _sized(abs(H1.scalar - H0.scalar), self._diam)


ALGORITHMS = {cls.name: cls for cls in (BasicMD, AdaGrad, Adam, AdaNatGrad, FTRL)}


def update(alg: BaseAlgorithm, h, H, g, w) -> LearnerState:
    return alg.update(h, H, g, w)


def adapt(alg: BaseAlgorithm, h, H, g, w) -> RegularizerState:
    return alg.adapt(h, H, g, w)


def project_decision(alg: BaseAlgorithm, h, H) -> np.ndarray:
    return alg.project(h, H)


@dataclass(frozen=True)
class MirrorStepAudit:
    y: np.ndarray = field(repr=False)
    slack14: float
    slack15: float


def mirror_step_audit(geometry: BregmanGeometry, fset: FeasibleSet, x, g, eta: float,
                      zs=None, rng=None, n_samples: int = 100) -> MirrorStepAudit:
    """Check both three-point inequalities of a single mirror step.

    y = argmin <g, z> + B(z||x) / eta.  Returns the minimum over the probe points
    z of

        B(z||x) - B(z||y) - B(y||x) - eta <g, y - z>                (first)
        B(z||x) - B(z||y) + eta^2 ||g||_*^2 / (2 alpha) - eta <g, x - z>  (second)

    Probe points are ``zs`` if given, else ``n_samples`` draws from the set plus
    x and y themselves.
    """
    x, g = np.asarray(x, dtype=float), np.asarray(g, dtype=float)
    y = geometry.prox(fset, x, g, eta)
    if zs is None:
        if rng is None:
            raise StructuralError("need probe points or an rng")
        zs = [fset.sample(rng) for _ in range(n_samples)]
    zs = list(zs) + [x, y]
    bxy = geometry.bregman(y, x)
    gsq = geometry.dual_norm(g) ** 2 / geometry.alpha
    s14, s15 = np.inf, np.inf
    for z in zs:
        bzx, bzy = geometry.bregman(z, x), geometry.bregman(z, y)
        s14 = min(s14, bzx - bzy - bxy - eta * float(g @ (y - z)))
        s15 = min(s15, bzx - bzy + 0.5 * eta**2 * gsq - eta * float(g @ (x - z)))
    return MirrorStepAudit(y, float(s14), float(s15))


def make_algorithm(name: str, fset: FeasibleSet, geometry: BregmanGeometry | None = None, **params) -> BaseAlgorithm:
    """Construct a learner by name, rejecting parameters it does not take."""
    if name not in ALGORITHMS:
        raise UnsupportedError(f"unknown algorithm {name!r}")
    cls = ALGORITHMS[name]
    if cls in (BasicMD, FTRL):
        return cls(fset, geometry, **params)
    if geometry is not None and not isinstance(geometry, SquaredEuclidean):
        raise UnsupportedError(f"{name} builds its own metric; a geometry cannot be supplied")
    return cls(fset, **params)
