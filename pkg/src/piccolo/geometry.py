"""Feasible sets, Bregman generators, proximal maps and weight schedules.

Every learner in the package works on one of three compact convex sets
(a product of simplices, a Euclidean ball, or a box) and measures distances
with one of four Bregman generators.  The proximal map

    prox(x, g, eta) = argmin_{z in set} <g, z> + B_R(z || x) / eta

is the single primitive the base algorithms are built from.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import DomainError, NumericError, StructuralError, UnsupportedError

ENTROPY_FLOOR = 1e-30


def _as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise StructuralError(f"{name} must be a vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise StructuralError(f"{name} has dimension {x.shape[0]}, expected {dim}")
    if np.isnan(x).any():
        raise NumericError(f"{name} contains NaN")
    return x


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


class FeasibleSet:
    """Compact convex decision domain with Euclidean projection."""

    dim: int

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-12) -> bool:
        raise NotImplementedError

    def center(self) -> np.ndarray:
        """A canonical interior point used as default initial decision."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point."""
        raise NotImplementedError

    def linear_argmin(self, v) -> np.ndarray:
        """argmin over the set of <v, x>; ties resolved towards the lowest index."""
        raise NotImplementedError

    def sq_diameter(self) -> float:
        """sup ||x - y||^2 over the set."""
        raise NotImplementedError

    def coord_ranges(self) -> np.ndarray:
        """Per-coordinate spread sup |x_i - y_i|."""
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.sq_diameter()))


@dataclass(frozen=True)
class ProductSimplex(FeasibleSet):
    num_blocks: int
    block_dim: int

    def __post_init__(self):
        if self.num_blocks < 1 or self.block_dim < 1:
            raise StructuralError("ProductSimplex needs positive num_blocks and block_dim")

    @property
    def dim(self) -> int:
        return self.num_blocks * self.block_dim

    def blocks(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x).reshape(self.num_blocks, self.block_dim)

    def project(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        return _simplex_rows(self.blocks(x)).ravel()

    def weighted_project(self, y, d) -> np.ndarray:
        """argmin 0.5 * sum d_i (z_i - y_i)^2 over the set."""
        y = _as_vector(y, self.dim)
        d = np.broadcast_to(np.asarray(d, dtype=float), y.shape)
        return _weighted_simplex_rows(self.blocks(y), self.blocks(d)).ravel()

    def contains(self, x, tol: float = 1e-12) -> bool:
        b = self.blocks(np.asarray(x, dtype=float))
        return bool((b >= -tol).all() and np.all(np.abs(b.sum(axis=1) - 1.0) <= tol))

    def center(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.block_dim)

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.block_dim), size=self.num_blocks).ravel()

    def linear_argmin(self, v) -> np.ndarray:
        v = self.blocks(_as_vector(v, self.dim, "v"))
        out = np.zeros_like(v)
        out[np.arange(self.num_blocks), np.argmin(v, axis=1)] = 1.0
        return out.ravel()

    def sq_diameter(self) -> float:
        return 2.0 * self.num_blocks if self.block_dim > 1 else 0.0

    def coord_ranges(self) -> np.ndarray:
        return np.full(self.dim, 1.0 if self.block_dim > 1 else 0.0)


@dataclass(frozen=True, eq=False)
class L2Ball(FeasibleSet):
    center_: np.ndarray
    radius: float

    def __init__(self, center, radius: float):
        c = _frozen(center)
        if c.ndim != 1:
            raise StructuralError("ball center must be a vector")
        if not radius > 0:
            raise StructuralError("ball radius must be positive")
        object.__setattr__(self, "center_", c)
        object.__setattr__(self, "radius", float(radius))

    @classmethod
    def origin(cls, dim: int, radius: float = 1.0) -> "L2Ball":
        return cls(np.zeros(dim), radius)

    @property
    def dim(self) -> int:
        return self.center_.shape[0]

    def project(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        diff = x - self.center_
        nrm = np.linalg.norm(diff)
        if nrm <= self.radius:
            return x
        return self.center_ + diff * (self.radius / nrm)

    def metric_project(self, y, eigvals, eigvecs=None) -> np.ndarray:
        """argmin 0.5 (z - y)^T M (z - y) over the ball, M = V diag(eigvals) V^T.

        With ``eigvecs=None`` the metric is diagonal in the standard basis.
        """
        y = _as_vector(y, self.dim)
        lam = np.broadcast_to(np.asarray(eigvals, dtype=float), y.shape)
        diff = y - self.center_
        nrm = np.linalg.norm(diff)
        if nrm <= self.radius:
            return y
        if np.ptp(lam) <= 1e-15 * lam.max():
            return self.center_ + diff * (self.radius / nrm)
        u = diff if eigvecs is None else eigvecs.T @ diff
        r2 = self.radius**2

        def excess(t):
            return np.sum((lam * u / (lam + t)) ** 2) - r2

        hi = lam.max() * (nrm / self.radius)
        t = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        z = lam * u / (lam + t)
        z *= self.radius / max(np.linalg.norm(z), self.radius)
        return self.center_ + (z if eigvecs is None else eigvecs @ z)

    def contains(self, x, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(np.asarray(x, dtype=float) - self.center_) <= self.radius + tol)

    def center(self) -> np.ndarray:
        return self.center_.copy()

    def sample(self, rng):
        return self.center_ + uniform_ball(rng, self.dim, self.radius)

    def linear_argmin(self, v) -> np.ndarray:
        v = _as_vector(v, self.dim, "v")
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return self.center_.copy()
        return self.center_ - self.radius * v / nrm

    def sq_diameter(self) -> float:
        return 4.0 * self.radius**2

    def coord_ranges(self) -> np.ndarray:
        return np.full(self.dim, 2.0 * self.radius)


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo, hi = _frozen(lower), _frozen(upper)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise StructuralError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise StructuralError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unconstrained(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def is_unconstrained(self) -> bool:
        return bool(np.all(np.isinf(self.lower)) and np.all(np.isinf(self.upper)))

    def project(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def center(self) -> np.ndarray:
        mid = 0.5 * (self.lower + self.upper)
        mid = np.where(np.isfinite(mid), mid, 0.0)
        return np.clip(mid, self.lower, self.upper)

    def sample(self, rng):
        lo = np.where(np.isfinite(self.lower), self.lower, -1.0)
        hi = np.where(np.isfinite(self.upper), self.upper, 1.0)
        return rng.uniform(lo, hi)

    def linear_argmin(self, v) -> np.ndarray:
        v = _as_vector(v, self.dim, "v")
        out = np.where(v > 0, self.lower, np.where(v < 0, self.upper, self.center()))
        if not np.all(np.isfinite(out)):
            raise UnsupportedError("linear loss has no minimizer on an unbounded box")
        return out

    def sq_diameter(self) -> float:
        return float(np.sum((self.upper - self.lower) ** 2))

    def coord_ranges(self) -> np.ndarray:
        return self.upper - self.lower


def project(fset: FeasibleSet, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``fset``."""
    return fset.project(x)


def _simplex_rows(Y: np.ndarray) -> np.ndarray:
    """Sort-and-threshold projection of each row onto the probability simplex."""
    k = Y.shape[1]
    U = -np.sort(-Y, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = U - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(Y.shape[0]), rho] / (rho + 1)
    return np.maximum(Y - theta[:, None], 0.0)


def _weighted_simplex_rows(Y: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Per-row argmin 0.5 * sum d_i (z_i - y_i)^2 over the simplex.

    Stationarity gives z_i = max(y_i - tau / d_i, 0); coordinate i is active
    while tau < d_i y_i, so scanning the breakpoints in decreasing order finds
    tau exactly.
    """
    t = D * Y
    order = np.argsort(-t, axis=1, kind="stable")
    rows = np.arange(Y.shape[0])[:, None]
    ts, ys, inv = t[rows, order], Y[rows, order], 1.0 / D[rows, order]
    tau = (np.cumsum(ys, axis=1) - 1.0) / np.cumsum(inv, axis=1)
    cond = tau < ts
    rho = Y.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau_star = tau[np.arange(Y.shape[0]), rho]
    return np.maximum(Y - tau_star[:, None] / D, 0.0)


def uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """A point uniformly distributed in the centered ball of the given radius."""
    if radius == 0.0:
        return np.zeros(dim)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return radius * rng.random() ** (1.0 / dim) * v


# ---------------------------------------------------------------------------
# Bregman generators
# ---------------------------------------------------------------------------


class BregmanGeometry:
    """A strictly convex generator R with its norm pair.

    ``alpha`` is the strong-convexity modulus of R with respect to ``norm``:
    B_R(x || y) >= alpha / 2 * norm(x - y)^2.
    """

    alpha: float = 1.0

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def bregman(self, x, y) -> float:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return float(self.value(x) - self.value(y) - self.grad(y) @ (x - y))

    def norm(self, x) -> float:
        raise NotImplementedError

    def dual_norm(self, g) -> float:
        raise NotImplementedError

    def prox(self, fset: FeasibleSet, x, g, eta: float) -> np.ndarray:
        """argmin_{z in fset} <g, z> + B_R(z || x) / eta."""
        raise NotImplementedError

    def mirror_argmin(self, fset: FeasibleSet, theta, coef: float) -> np.ndarray:
        """argmin_{z in fset} coef * R(z) - <theta, z>."""
        raise NotImplementedError

    def diameter(self, fset: FeasibleSet) -> float:
        """sup_{x, y in fset} B_R(x || y)."""
        raise NotImplementedError


@dataclass(frozen=True)
class SquaredEuclidean(BregmanGeometry):
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise StructuralError("scale must be positive")

    @property
    def alpha(self) -> float:
        return self.scale

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.scale * float(x @ x)

    def grad(self, x):
        return self.scale * np.asarray(x, dtype=float)

    def bregman(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * self.scale * float(d @ d)

    def norm(self, x):
        return float(np.linalg.norm(x))

    def dual_norm(self, g):
        return float(np.linalg.norm(g))

    def prox(self, fset, x, g, eta):
        return fset.project(np.asarray(x, dtype=float) - (eta / self.scale) * np.asarray(g, dtype=float))

    def mirror_argmin(self, fset, theta, coef):
        return fset.project(np.asarray(theta, dtype=float) / (coef * self.scale))

    def diameter(self, fset):
        return 0.5 * self.scale * fset.sq_diameter()


@dataclass(frozen=True)
class NegativeEntropy(BregmanGeometry):
    """R(x) = scale * sum x log x on a product of simplices.

    The declared norm is the l2 norm of blockwise l1 norms, for which Pinsker's
    inequality gives modulus ``scale``; the dual is the l2 norm of blockwise
    max-norms.  ``block_dim=None`` treats the whole vector as one block.
    """

    scale: float = 1.0
    block_dim: int | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise StructuralError("scale must be positive")

    @property
    def alpha(self) -> float:
        return self.scale

    def _blocks(self, x):
        x = np.asarray(x, dtype=float)
        k = self.block_dim or x.shape[0]
        if x.shape[0] % k:
            raise StructuralError(f"dimension {x.shape[0]} is not a multiple of block size {k}")
        return x.reshape(-1, k)

    @staticmethod
    def _check(x, name="x"):
        x = np.asarray(x, dtype=float)
        if not np.all(x >= ENTROPY_FLOOR):
            raise DomainError(f"negative entropy needs coordinates >= {ENTROPY_FLOOR:g} in {name}")
        return x

    def value(self, x):
        x = self._check(x)
        return self.scale * float(np.sum(x * np.log(x)))

    def grad(self, x):
        x = self._check(x)
        return self.scale * (1.0 + np.log(x))

    def bregman(self, x, y):
        x, y = self._check(x), self._check(y, "y")
        return self.scale * float(np.sum(x * np.log(x / y) - x + y))

    def norm(self, x):
        return float(np.linalg.norm(np.abs(self._blocks(x)).sum(axis=1)))

    def dual_norm(self, g):
        return float(np.linalg.norm(np.abs(self._blocks(g)).max(axis=1)))

    def _require_simplex(self, fset):
        if not isinstance(fset, ProductSimplex):
            raise UnsupportedError("negative entropy is only supported on product simplices")
        if self.block_dim not in (None, fset.block_dim) or (self.block_dim is None and fset.num_blocks > 1):
            raise StructuralError("entropy block size does not match the simplex")
        return fset

    def prox(self, fset, x, g, eta):
        fset = self._require_simplex(fset)
        x = self._check(x)
        logits = fset.blocks(np.log(x) - (eta / self.scale) * np.asarray(g, dtype=float))
        return np.exp(logits - logsumexp(logits, axis=1, keepdims=True)).ravel()

    def mirror_argmin(self, fset, theta, coef):
        fset = self._require_simplex(fset)
        logits = fset.blocks(np.asarray(theta, dtype=float) / (coef * self.scale))
        return np.exp(logits - logsumexp(logits, axis=1, keepdims=True)).ravel()

    def diameter(self, fset):
        self._require_simplex(fset)
        return np.inf if fset.block_dim > 1 else 0.0


def entropy_for(fset: ProductSimplex, scale: float = 1.0) -> NegativeEntropy:
    """Negative entropy whose block structure matches ``fset``."""
    return NegativeEntropy(scale, fset.block_dim)


def diag_diameter(fset: FeasibleSet, d) -> float:
    """sup over the set of 0.5 * sum d_i (x_i - y_i)^2 for a nonnegative d."""
    d = np.asarray(d, dtype=float)
    if isinstance(fset, ProductSimplex):
        if fset.block_dim == 1:
            return 0.0
        top = -np.sort(-fset.blocks(d), axis=1)[:, :2]
        return 0.5 * float(top.sum())
    if isinstance(fset, L2Ball):
        return 2.0 * fset.radius**2 * float(d.max())
    r = fset.coord_ranges()
    pos = d > 0
    return 0.5 * float(np.sum(d[pos] * r[pos] ** 2))


@dataclass(frozen=True, eq=False)
class DiagonalQuadratic(BregmanGeometry):
    """R(x) = 0.5 * sum d_i x_i^2 with the d-weighted Euclidean norm."""

    diag: np.ndarray

    def __init__(self, diag):
        d = _frozen(diag)
        if d.ndim != 1 or not np.all(d > 0):
            raise StructuralError("diagonal metric must be a positive vector")
        object.__setattr__(self, "diag", d)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(np.sum(self.diag * x * x))

    def grad(self, x):
        return self.diag * np.asarray(x, dtype=float)

    def bregman(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * float(np.sum(self.diag * d * d))

    def norm(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(np.sum(self.diag * x * x)))

    def dual_norm(self, g):
        g = np.asarray(g, dtype=float)
        return float(np.sqrt(np.sum(g * g / self.diag)))

    def _wproject(self, fset, y, d):
        if isinstance(fset, ProductSimplex):
            return fset.weighted_project(y, d)
        if isinstance(fset, L2Ball):
            return fset.metric_project(y, d)
        return fset.project(y)

    def prox(self, fset, x, g, eta):
        d = self.diag / eta
        y = np.asarray(x, dtype=float) - np.asarray(g, dtype=float) / d
        return self._wproject(fset, y, d)

    def mirror_argmin(self, fset, theta, coef):
        d = coef * self.diag
        return self._wproject(fset, np.asarray(theta, dtype=float) / d, d)

    def diameter(self, fset):
        return diag_diameter(fset, self.diag)


@dataclass(frozen=True, eq=False)
class FisherQuadratic(BregmanGeometry):
    """R(x) = 0.5 * x^T (F + floor I) x for a PSD matrix F."""

    matrix: np.ndarray
    floor: float = 1e-6

    def __init__(self, matrix, floor: float = 1e-6):
        F = _frozen(matrix)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise StructuralError("Fisher matrix must be square")
        if not floor > 0:
            raise StructuralError("Fisher floor must be positive")
        object.__setattr__(self, "matrix", F)
        object.__setattr__(self, "floor", float(floor))
        M = 0.5 * (F + F.T) + floor * np.eye(F.shape[0])
        w, V = np.linalg.eigh(M)
        if w.min() <= 0:
            raise NumericError("Fisher metric is not positive definite")
        object.__setattr__(self, "_eig", (w, V))

    @property
    def metric(self) -> np.ndarray:
        w, V = self._eig
        return (V * w) @ V.T

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.metric @ x)

    def grad(self, x):
        return self.metric @ np.asarray(x, dtype=float)

    def bregman(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * float(d @ self.metric @ d)

    def norm(self, x):
        w, V = self._eig
        u = V.T @ np.asarray(x, dtype=float)
        return float(np.sqrt(np.sum(w * u * u)))

    def dual_norm(self, g):
        w, V = self._eig
        u = V.T @ np.asarray(g, dtype=float)
        return float(np.sqrt(np.sum(u * u / w)))

    def solve(self, g) -> np.ndarray:
        """(F + floor I)^{-1} g."""
        w, V = self._eig
        return V @ ((V.T @ np.asarray(g, dtype=float)) / w)

    def _mproject(self, fset, y, scale):
        if isinstance(fset, Box) and fset.is_unconstrained:
            return y
        if isinstance(fset, L2Ball):
            w, V = self._eig
            return fset.metric_project(y, scale * w, V)
        raise UnsupportedError("full-matrix proximal maps need an unconstrained box or a ball")

    def prox(self, fset, x, g, eta):
        y = np.asarray(x, dtype=float) - eta * self.solve(g)
        return self._mproject(fset, y, 1.0 / eta)

    def mirror_argmin(self, fset, theta, coef):
        return self._mproject(fset, self.solve(theta) / coef, coef)

    def diameter(self, fset):
        if isinstance(fset, L2Ball):
            return 2.0 * fset.radius**2 * float(self._eig[0].max())
        return np.inf


def bregman(geometry: BregmanGeometry, x, y) -> float:
    """B_R(x || y) = R(x) - R(y) - <grad R(y), x - y>."""
    return geometry.bregman(x, y)


# ---------------------------------------------------------------------------
# Weight schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSchedule:
    """Round weights w_n = n^p."""

    p: float = 0.0

    def __post_init__(self):
        if not self.p >= 0:
            raise StructuralError("weight exponent must be nonnegative")

    def w(self, n: int) -> float:
        if n < 1:
            raise StructuralError("rounds are numbered from 1")
        return float(n) ** self.p

    def weights(self, N: int) -> np.ndarray:
        return np.arange(1, N + 1, dtype=float) ** self.p

    def prefix(self, N: int) -> np.ndarray:
        """w_{1:n} for n = 1..N, accumulated in round order."""
        out = np.empty(N)
        acc = 0.0
        for i, wn in enumerate(self.weights(N)):
            acc += wn
            out[i] = acc
        return out


def weight(schedule: WeightSchedule, n: int) -> tuple[float, float]:
    """(w_n, w_{1:n})."""
    if n < 1:
        raise StructuralError("rounds are numbered from 1")
    return schedule.w(n), float(schedule.prefix(n)[-1])
