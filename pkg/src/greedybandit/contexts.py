"""Context distributions with analytic log-density gradients.

Six base families are supported: gaussian, laplace, uniform_ball,
exponential, student_t, cauchy.  Any of them can be truncated to an l2 ball
or a per-coordinate box; truncated specs sample by rejection.  Every family
carries a local anti-concentration (LAC) envelope, a non-decreasing function
L(r) = a1 + a2 * r**alpha with

    ||grad log f(x)||_inf <= L(||x||_inf)    on the support,

which `verify_lac` certifies numerically and `decay_rate_check` converts
into a two-sided density decay bound on bounded regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

KINDS = ("gaussian", "laplace", "uniform_ball", "exponential", "student_t", "cauchy")
ARM_COUPLINGS = ("independent_arms", "shared_gaussian_covariance")

# Kinds whose coordinates are independent, enabling exact per-coordinate
# rejection under box truncation.
_COORDWISE_KINDS = ("laplace", "exponential", "student_t", "cauchy", "gaussian")

MAX_REJECTION_ATTEMPTS = 10**6
MIN_REGION_MASS = 1e-3
KINK_TOL = 1e-8
_FEASIBILITY_PROBE = 2000


class OutOfSupportError(ValueError):
    """Point lies outside the support of the distribution."""


class DegenerateInputError(ValueError):
    """Density is not differentiable at the requested point."""


class InfeasibleTruncationError(ValueError):
    """Truncation region has near-zero mass or rejection exceeded its cap."""


# ---------------------------------------------------------------------------
# Truncation regions


@dataclass(frozen=True)
class Region:
    """Truncation region: an l2 ball around the origin, or a coordinate box.

    Box bounds are scalars (applied to every coordinate) or per-coordinate
    tuples; all bounds are finite so every region is bounded in sup norm.
    """

    kind: str
    radius: float | None = None
    lo: float | tuple[float, ...] | None = None
    hi: float | tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "ball":
            if self.radius is None or not np.isfinite(self.radius) or self.radius <= 0:
                raise ValueError("ball region needs a finite positive radius")
        elif self.kind == "box":
            for name in ("lo", "hi"):
                v = getattr(self, name)
                if np.ndim(v) > 0:
                    object.__setattr__(self, name, tuple(float(x) for x in np.asarray(v)))
                else:
                    object.__setattr__(self, name, float(v))
            lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
            hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("box bounds must have matching shapes")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError("box bounds must be finite")
            if not np.all(lo < hi):
                raise ValueError("box needs lo < hi in every coordinate")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    def _bounds(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (d,))
        hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (d,))
        return lo, hi

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        """Containment mask for points in the last axis of `x`, shrunk by margin."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.linalg.norm(x, axis=-1) <= self.radius - margin
        lo, hi = self._bounds(x.shape[-1])
        return np.all((x >= lo + margin) & (x <= hi - margin), axis=-1)

    def sup_norm_radius(self) -> float:
        if self.kind == "ball":
            return float(self.radius)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))

    def l2_radius(self, d: int) -> float:
        """Radius of the smallest origin-centered l2 ball containing the region."""
        if self.kind == "ball":
            return float(self.radius)
        lo, hi = self._bounds(d)
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

    def pinned_dim(self) -> int | None:
        if self.kind == "box" and np.ndim(self.lo) > 0:
            return len(self.lo)
        return None


def ball(radius: float) -> Region:
    return Region("ball", radius=float(radius))


def box(lo, hi) -> Region:
    if np.ndim(lo) > 0 or np.ndim(hi) > 0:
        lo_t = tuple(float(v) for v in np.atleast_1d(lo))
        hi_t = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo_t) == 1:
            lo_t = lo_t * len(hi_t)
        if len(hi_t) == 1:
            hi_t = hi_t * len(lo_t)
        return Region("box", lo=lo_t, hi=hi_t)
    return Region("box", lo=float(lo), hi=float(hi))


# ---------------------------------------------------------------------------
# Distribution specs


@dataclass(eq=False)
class DistributionSpec:
    """Closed description of one arm's context distribution.

    Parameters are kind-specific; scalars broadcast over coordinates, so a
    spec with scalar parameters works at any dimension, while vector/matrix
    parameters pin the dimension.  `rho` is an equicorrelation shortcut for
    gaussian specs with scalar `cov`: the covariance resolves to
    cov * ((1 - rho) I + rho * ones) at sampling time.

    Specs are immutable after construction and safe to share; every sampling
    call takes its own random generator.
    """

    kind: str
    mean: float | np.ndarray = 0.0      # gaussian
    cov: float | np.ndarray = 1.0       # gaussian: variance, diagonal, or matrix
    rho: float = 0.0                    # gaussian equicorrelation (scalar cov only)
    loc: float | np.ndarray = 0.0       # laplace / cauchy
    scale: float | np.ndarray = 1.0     # laplace / cauchy
    radius: float = 1.0                 # uniform_ball
    rate: float | np.ndarray = 1.0      # exponential
    df: float = 1.0                     # student_t
    truncation: Region | None = None
    arm_coupling: str = "independent_arms"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.arm_coupling not in ARM_COUPLINGS:
            raise ValueError(f"unknown arm coupling {self.arm_coupling!r}")
        if self.arm_coupling == "shared_gaussian_covariance" and self.kind != "gaussian":
            raise ValueError("shared_gaussian_covariance applies to gaussian specs only")
        for name in ("mean", "cov", "loc", "scale", "rate"):
            v = getattr(self, name)
            if np.ndim(v) > 0:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
            else:
                object.__setattr__(self, name, float(v))
        self.radius = float(self.radius)
        self.df = float(self.df)
        self.rho = float(self.rho)
        if self.kind == "uniform_ball" and self.radius <= 0:
            raise ValueError("uniform_ball radius must be positive")
        if self.kind == "student_t" and self.df <= 0:
            raise ValueError("student_t df must be positive")
        if self.kind in ("laplace", "cauchy") and np.any(np.asarray(self.scale) <= 0):
            raise ValueError("scale must be strictly positive")
        if self.kind == "exponential" and np.any(np.asarray(self.rate) <= 0):
            raise ValueError("rate must be strictly positive")
        if self.kind == "gaussian":
            self._validate_gaussian()
        if self.truncation is not None and not isinstance(self.truncation, Region):
            raise ValueError("truncation must be a Region")
        pinned_dim(self)  # raises on inconsistent parameter dimensions

    def _validate_gaussian(self):
        cov = self.cov
        if np.ndim(cov) == 0:
            if cov <= 0:
                raise ValueError("gaussian variance must be positive")
            if not -1.0 < self.rho < 1.0:
                raise ValueError("rho must lie in (-1, 1)")
        elif np.ndim(cov) == 1:
            if np.any(cov <= 0):
                raise ValueError("gaussian diagonal covariance must be positive")
            if self.rho != 0.0:
                raise ValueError("rho requires a scalar cov")
        else:
            if self.rho != 0.0:
                raise ValueError("rho requires a scalar cov")
            if cov.shape[0] != cov.shape[1]:
                raise ValueError("gaussian covariance must be square")
            if np.abs(cov - cov.T).max() > 1e-10 * max(1.0, np.abs(cov).max()):
                raise ValueError("gaussian covariance must be symmetric")
            if np.linalg.eigvalsh(cov)[0] <= 0:
                raise ValueError("gaussian covariance must be positive definite")


def gaussian_spec(mean=0.0, cov=1.0, rho=0.0, truncation=None,
                  arm_coupling="independent_arms") -> DistributionSpec:
    return DistributionSpec("gaussian", mean=mean, cov=cov, rho=rho,
                            truncation=truncation, arm_coupling=arm_coupling)


def laplace_spec(loc=0.0, scale=1.0, truncation=None) -> DistributionSpec:
    return DistributionSpec("laplace", loc=loc, scale=scale, truncation=truncation)


def uniform_ball_spec(radius=1.0, truncation=None) -> DistributionSpec:
    return DistributionSpec("uniform_ball", radius=radius, truncation=truncation)


def exponential_spec(rate=1.0, truncation=None) -> DistributionSpec:
    return DistributionSpec("exponential", rate=rate, truncation=truncation)


def student_t_spec(df, truncation=None) -> DistributionSpec:
    return DistributionSpec("student_t", df=df, truncation=truncation)


def cauchy_spec(loc=0.0, scale=1.0, truncation=None) -> DistributionSpec:
    return DistributionSpec("cauchy", loc=loc, scale=scale, truncation=truncation)


def pinned_dim(spec: DistributionSpec) -> int | None:
    """Dimension fixed by vector/matrix parameters, or None if d-agnostic."""
    dims = set()
    for name in ("mean", "loc", "scale", "rate"):
        v = getattr(spec, name)
        if np.ndim(v) > 0:
            dims.add(len(v))
    if np.ndim(spec.cov) == 1:
        dims.add(len(spec.cov))
    elif np.ndim(spec.cov) == 2:
        dims.add(spec.cov.shape[0])
    if spec.truncation is not None:
        rd = spec.truncation.pinned_dim()
        if rd is not None:
            dims.add(rd)
    if len(dims) > 1:
        raise ValueError(f"inconsistent parameter dimensions: {sorted(dims)}")
    return dims.pop() if dims else None


def resolve_dim(spec: DistributionSpec, d: int | None) -> int:
    pin = pinned_dim(spec)
    if d is None:
        if pin is None:
            raise ValueError("spec does not pin a dimension; pass d explicitly")
        return pin
    d = int(d)
    if d < 1:
        raise ValueError("d must be >= 1")
    if pin is not None and pin != d:
        raise ValueError(f"spec pins dimension {pin}, got d={d}")
    return d


def _vec(param, d: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(param, dtype=float), (d,))


@lru_cache(maxsize=512)
def _gauss_resolved(spec: DistributionSpec, d: int):
    """(mean, cov, cholesky, inverse, is_diagonal) for a gaussian spec at dim d."""
    mean = _vec(spec.mean, d).copy()
    cov = spec.cov
    if np.ndim(cov) == 0:
        if spec.rho != 0.0:
            if d > 1 and spec.rho <= -1.0 / (d - 1):
                raise ValueError(f"rho={spec.rho} is not positive definite at d={d}")
            C = cov * ((1.0 - spec.rho) * np.eye(d) + spec.rho * np.ones((d, d)))
            diagonal = False
        else:
            C = cov * np.eye(d)
            diagonal = True
    elif np.ndim(cov) == 1:
        C = np.diag(cov)
        diagonal = True
    else:
        C = np.asarray(cov, dtype=float)
        diagonal = bool(np.count_nonzero(C - np.diag(np.diagonal(C))) == 0)
    L = np.linalg.cholesky(C)
    Cinv = np.linalg.inv(C)
    Cinv = 0.5 * (Cinv + Cinv.T)
    return mean, C, L, Cinv, diagonal


# ---------------------------------------------------------------------------
# Sampling


@dataclass(eq=False)
class ContextSet:
    """K context vectors, one row per arm."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise ValueError("context set must be a K x d array")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("context vectors must be finite")

    @property
    def n_arms(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _sample_raw(spec: DistributionSpec, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "gaussian":
        mean, _, L, _, _ = _gauss_resolved(spec, d)
        return mean + rng.standard_normal((n, d)) @ L.T
    if spec.kind == "laplace":
        return rng.laplace(_vec(spec.loc, d), _vec(spec.scale, d), size=(n, d))
    if spec.kind == "uniform_ball":
        z = rng.standard_normal((n, d))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        r = spec.radius * rng.random(n) ** (1.0 / d)
        return z / norms * r[:, None]
    if spec.kind == "exponential":
        return rng.exponential(1.0 / _vec(spec.rate, d), size=(n, d))
    if spec.kind == "student_t":
        return rng.standard_t(spec.df, size=(n, d))
    return _vec(spec.loc, d) + _vec(spec.scale, d) * rng.standard_cauchy((n, d))


def _coordwise_box(spec: DistributionSpec, d: int) -> bool:
    """True when box truncation factorizes over independent coordinates."""
    if spec.truncation is None or spec.truncation.kind != "box":
        return False
    if spec.kind not in _COORDWISE_KINDS:
        return False
    if spec.kind == "gaussian":
        _, _, _, _, diagonal = _gauss_resolved(spec, d)
        return diagonal
    return True


def _draw_coord(spec: DistributionSpec, d: int, j: int, m: int,
                rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "gaussian":
        mean, C, _, _, _ = _gauss_resolved(spec, d)
        return mean[j] + math.sqrt(C[j, j]) * rng.standard_normal(m)
    if spec.kind == "laplace":
        return rng.laplace(_vec(spec.loc, d)[j], _vec(spec.scale, d)[j], size=m)
    if spec.kind == "exponential":
        return rng.exponential(1.0 / _vec(spec.rate, d)[j], size=m)
    if spec.kind == "student_t":
        return rng.standard_t(spec.df, size=m)
    return _vec(spec.loc, d)[j] + _vec(spec.scale, d)[j] * rng.standard_cauchy(m)


@lru_cache(maxsize=512)
def _check_feasible(spec: DistributionSpec, d: int) -> None:
    """Monte-Carlo probe that the truncation region has usable mass.

    Uses a fixed private generator so caller streams are untouched and
    results do not depend on whether the (cached) check already ran.
    The probe mirrors the rejection unit: per-coordinate acceptance for
    factorizing box truncations, per-vector acceptance otherwise.
    """
    region = spec.truncation
    if region is None:
        return
    probe = np.random.default_rng(181081)
    X = _sample_raw(spec, d, _FEASIBILITY_PROBE, probe)
    if _coordwise_box(spec, d):
        lo, hi = region._bounds(d)
        acc = np.mean((X >= lo) & (X <= hi), axis=0)
        if np.any(acc < MIN_REGION_MASS):
            j = int(np.argmin(acc))
            raise InfeasibleTruncationError(
                f"coordinate {j} acceptance {acc[j]:.2e} below {MIN_REGION_MASS:.0e}")
    else:
        acc = float(np.mean(region.contains(X)))
        if acc < MIN_REGION_MASS:
            raise InfeasibleTruncationError(
                f"region acceptance {acc:.2e} below {MIN_REGION_MASS:.0e}")


def _sample_box_coordwise(spec: DistributionSpec, d: int, n: int,
                          rng: np.random.Generator,
                          max_attempts: int = MAX_REJECTION_ATTEMPTS) -> np.ndarray:
    lo, hi = spec.truncation._bounds(d)
    X = _sample_raw(spec, d, n, rng)
    for j in range(d):
        bad = np.flatnonzero((X[:, j] < lo[j]) | (X[:, j] > hi[j]))
        attempts = 1
        while bad.size:
            attempts += 1
            if attempts > max_attempts:
                raise InfeasibleTruncationError(
                    f"rejection cap {max_attempts} exceeded on coordinate {j}")
            draw = _draw_coord(spec, d, j, bad.size, rng)
            X[bad, j] = draw
            bad = bad[(draw < lo[j]) | (draw > hi[j])]
    return X


def _sample_reject_vectors(spec: DistributionSpec, d: int, n: int,
                           rng: np.random.Generator,
                           max_attempts: int = MAX_REJECTION_ATTEMPTS) -> np.ndarray:
    region = spec.truncation
    out = np.empty((n, d))
    unfilled = np.arange(n)
    attempts = np.zeros(n)
    mult = 1
    while unfilled.size:
        cand = _sample_raw(spec, d, unfilled.size * mult, rng)
        good = cand[region.contains(cand)]
        k = min(good.shape[0], unfilled.size)
        out[unfilled[:k]] = good[:k]
        attempts[unfilled] += mult
        unfilled = unfilled[k:]
        if unfilled.size and attempts[unfilled].max() > max_attempts:
            raise InfeasibleTruncationError(f"rejection cap {max_attempts} exceeded")
        mult = min(mult * 2, 4096)
    return out


def _sample_matrix(spec: DistributionSpec, d: int, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """n vectors from the spec (rejection-corrected when truncated)."""
    if spec.truncation is None:
        return _sample_raw(spec, d, n, rng)
    _check_feasible(spec, d)
    if _coordwise_box(spec, d):
        return _sample_box_coordwise(spec, d, n, rng)
    return _sample_reject_vectors(spec, d, n, rng)


def sample_context_set(spec: DistributionSpec, d: int, K: int,
                       rng: np.random.Generator) -> ContextSet:
    """Draw the K per-arm context vectors for one round.

    Arms are always drawn independently; shared_gaussian_covariance means
    the correlation sits across coordinates within each arm's vector.
    """
    d = resolve_dim(spec, d)
    if K < 1:
        raise ValueError("K must be >= 1")
    return ContextSet(_sample_matrix(spec, d, int(K), rng))


# ---------------------------------------------------------------------------
# Log densities and gradients


def _log_density_batch(spec: DistributionSpec, X: np.ndarray) -> np.ndarray:
    """log f at each row of X, exact for the base density; truncation adds an
    unevaluated normalization constant (irrelevant to gradients and ratios)."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if spec.truncation is not None and not np.all(spec.truncation.contains(X)):
        raise OutOfSupportError("point outside the truncation region")
    if spec.kind == "gaussian":
        mean, C, L, Cinv, _ = _gauss_resolved(spec, d)
        delta = X - mean
        quad = np.einsum("ij,jk,ik->i", delta, Cinv, delta)
        logdet = 2.0 * np.sum(np.log(np.diagonal(L)))
        return -0.5 * (quad + d * math.log(2.0 * math.pi) + logdet)
    if spec.kind == "laplace":
        loc, scale = _vec(spec.loc, d), _vec(spec.scale, d)
        return -np.sum(np.abs(X - loc) / scale + np.log(2.0 * scale), axis=1)
    if spec.kind == "uniform_ball":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > spec.radius):
            raise OutOfSupportError("point outside the ball")
        log_vol = 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0) \
            + d * math.log(spec.radius)
        return np.full(n, -log_vol)
    if spec.kind == "exponential":
        if np.any(X < 0):
            raise OutOfSupportError("exponential support is the nonnegative orthant")
        rate = _vec(spec.rate, d)
        return float(np.sum(np.log(rate))) - X @ rate
    if spec.kind == "student_t":
        v = spec.df
        const = math.lgamma(0.5 * (v + 1.0)) - math.lgamma(0.5 * v) \
            - 0.5 * math.log(v * math.pi)
        return d * const - 0.5 * (v + 1.0) * np.sum(np.log1p(X * X / v), axis=1)
    loc, scale = _vec(spec.loc, d), _vec(spec.scale, d)
    z = (X - loc) / scale
    return -np.sum(np.log(math.pi * scale) + np.log1p(z * z), axis=1)


def log_density(spec: DistributionSpec, x) -> float:
    """log f(x), up to the normalization constant of any truncation."""
    x = np.asarray(x, dtype=float)
    return float(_log_density_batch(spec, x[None, :])[0])


def _grad_batch(spec: DistributionSpec, X: np.ndarray) -> np.ndarray:
    """Analytic gradient of log f at each row; rows must be interior points."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if spec.truncation is not None and not np.all(spec.truncation.contains(X)):
        raise OutOfSupportError("point outside the truncation region")
    if spec.kind == "gaussian":
        mean, _, _, Cinv, _ = _gauss_resolved(spec, d)
        return -(X - mean) @ Cinv
    if spec.kind == "laplace":
        loc, scale = _vec(spec.loc, d), _vec(spec.scale, d)
        delta = X - loc
        if np.any(np.abs(delta) < KINK_TOL):
            raise DegenerateInputError("laplace log density is not differentiable at its location")
        return -np.sign(delta) / scale
    if spec.kind == "uniform_ball":
        if np.any(np.linalg.norm(X, axis=1) >= spec.radius):
            raise OutOfSupportError("gradient defined on the open ball only")
        return np.zeros_like(X)
    if spec.kind == "exponential":
        if np.any(X <= 0):
            raise OutOfSupportError("gradient defined on the open positive orthant only")
        return np.broadcast_to(-_vec(spec.rate, d), X.shape).copy()
    if spec.kind == "student_t":
        v = spec.df
        return -(v + 1.0) * X / (v + X * X)
    loc, scale = _vec(spec.loc, d), _vec(spec.scale, d)
    delta = X - loc
    return -2.0 * delta / (scale * scale + delta * delta)


def grad_log_density(spec: DistributionSpec, x) -> np.ndarray:
    """Gradient of log f at an interior point; truncation leaves it unchanged."""
    x = np.asarray(x, dtype=float)
    return _grad_batch(spec, x[None, :])[0]


# ---------------------------------------------------------------------------
# LAC envelopes


@dataclass(frozen=True)
class LacFunction:
    """Non-decreasing gradient envelope L(r) = a1 + a2 * r**alpha."""

    a1: float
    a2: float
    alpha: float

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0 or self.alpha < 0:
            raise ValueError("envelope coefficients must be non-negative")

    def __call__(self, r):
        return self.a1 + self.a2 * np.asarray(r, dtype=float) ** self.alpha


def lac_function(spec: DistributionSpec, d: int | None = None) -> LacFunction:
    """Gradient envelope of the spec.

    Truncated specs get the constant envelope L(R_inf) evaluated at the sup
    norm radius of the region (the gradient inside the region is the base
    gradient).  Non-diagonal gaussians use the row-sum bound
    max_i ||Sigma^-1 row i||_1 in place of 4 / lambda_min(Sigma).
    """
    if spec.truncation is not None:
        base = lac_function(replace(spec, truncation=None), d)
        return LacFunction(float(base(spec.truncation.sup_norm_radius())), 0.0, 0.0)
    if spec.kind == "gaussian":
        if pinned_dim(spec) is not None or spec.rho != 0.0:
            dd = resolve_dim(spec, d)
        else:
            dd = 1  # fully scalar spec: envelope is dimension-free
        mean, C, _, Cinv, diagonal = _gauss_resolved(spec, dd)
        mu_inf = float(np.max(np.abs(mean)))
        if diagonal:
            m = 4.0 / float(np.min(np.diagonal(C)))
        else:
            m = float(np.max(np.sum(np.abs(Cinv), axis=1)))
        return LacFunction(m * mu_inf, m, 1.0)
    if spec.kind == "laplace":
        return LacFunction(float(np.max(1.0 / np.asarray(spec.scale))), 0.0, 0.0)
    if spec.kind == "uniform_ball":
        return LacFunction(1.0, 0.0, 0.0)
    if spec.kind == "exponential":
        return LacFunction(float(np.max(np.asarray(spec.rate))), 0.0, 0.0)
    if spec.kind == "student_t":
        return LacFunction((spec.df + 1.0) / (2.0 * math.sqrt(spec.df)), 0.0, 0.0)
    return LacFunction(float(np.max(1.0 / np.asarray(spec.scale))), 0.0, 0.0)


# ---------------------------------------------------------------------------
# Numerical certification


@dataclass
class LacCheckReport:
    """Outcome of verify_lac: envelope ratio and gradient cross-check.

    `passed` is the envelope inequality; `gradient_check_passed` flags the
    analytic-vs-finite-difference agreement separately, so an implementation
    defect is distinguishable from an envelope violation.
    """

    passed: bool
    max_ratio: float
    worst_point: np.ndarray | None
    gradient_check_passed: bool
    max_gradient_err: float
    n_points: int
    n_fd_points: int
    n_skipped: int
    lac: LacFunction


def _mode_center(spec: DistributionSpec, d: int) -> np.ndarray:
    if spec.kind == "gaussian":
        return _vec(spec.mean, d).copy()
    if spec.kind in ("laplace", "cauchy"):
        return _vec(spec.loc, d).copy()
    if spec.kind == "exponential":
        return np.full(d, 0.5)  # interior stand-in; the density mode sits on the boundary
    return np.zeros(d)


def _mode_grid(spec: DistributionSpec, d: int) -> np.ndarray:
    """Deterministic probe points near the density mode, filtered to the interior."""
    center = _mode_center(spec, d)
    dirs = []
    for j in range(min(d, 5)):
        e = np.zeros(d)
        e[j] = 1.0
        dirs.extend([e, -e])
    ones = np.ones(d) / math.sqrt(d)
    dirs.extend([ones, -ones])
    pts = [center + delta * u
           for delta in (1e-3, 1e-2, 1e-1, 0.5, 1.0)
           for u in dirs]
    pts.append(center)
    X = np.asarray(pts)
    keep = _interior_mask(spec, X, margin=0.0)
    return X[keep]


def _interior_mask(spec: DistributionSpec, X: np.ndarray, margin: float) -> np.ndarray:
    """Rows at which the gradient is defined, with `margin` slack to boundaries."""
    keep = np.ones(X.shape[0], dtype=bool)
    d = X.shape[1]
    if spec.kind == "laplace":
        keep &= np.all(np.abs(X - _vec(spec.loc, d)) > max(KINK_TOL, margin), axis=1)
    elif spec.kind == "exponential":
        keep &= np.all(X > max(KINK_TOL, margin), axis=1)
    elif spec.kind == "uniform_ball":
        keep &= np.linalg.norm(X, axis=1) < spec.radius - max(KINK_TOL, margin)
    if spec.truncation is not None:
        keep &= spec.truncation.contains(X, margin=margin)
    return keep


def verify_lac(spec: DistributionSpec, n_samples: int, tol: float,
               rng: np.random.Generator, d: int | None = None) -> LacCheckReport:
    """Sample points, check ||grad log f||_inf <= (1 + tol) * L(||x||_inf),
    and cross-check analytic gradients against central finite differences.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    d = resolve_dim(spec, d)
    X = np.vstack([_sample_matrix(spec, d, int(n_samples), rng), _mode_grid(spec, d)])
    n_total = X.shape[0]
    keep = _interior_mask(spec, X, margin=0.0)
    n_skipped = int(n_total - keep.sum())
    X = X[keep]

    lac = lac_function(spec, d)
    G = _grad_batch(spec, X)
    g_inf = np.abs(G).max(axis=1)
    envelope = np.asarray(lac(np.abs(X).max(axis=1)), dtype=float)
    ratio = np.zeros_like(g_inf)
    pos = envelope > 0
    ratio[pos] = g_inf[pos] / envelope[pos]
    ratio[~pos] = np.where(g_inf[~pos] <= 1e-12, 0.0, np.inf)
    worst = int(np.argmax(ratio))
    max_ratio = float(ratio[worst])

    h = 1e-5
    fd_keep = _interior_mask(spec, X, margin=10.0 * h)
    Xfd = X[fd_keep]
    fd = np.empty_like(Xfd)
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        fd[:, j] = (_log_density_batch(spec, Xfd + step)
                    - _log_density_batch(spec, Xfd - step)) / (2.0 * h)
    Gfd = G[fd_keep]
    denom = np.maximum(1.0, np.abs(Gfd).max(axis=1))
    errs = np.abs(Gfd - fd).max(axis=1) / denom
    max_err = float(errs.max()) if errs.size else 0.0

    return LacCheckReport(
        passed=bool(max_ratio <= 1.0 + tol),
        max_ratio=max_ratio,
        worst_point=X[worst].copy(),
        gradient_check_passed=bool(max_err <= 1e-4),
        max_gradient_err=max_err,
        n_points=int(X.shape[0]),
        n_fd_points=int(Xfd.shape[0]),
        n_skipped=n_skipped,
        lac=lac,
    )


def truncate(spec: DistributionSpec, region: Region) -> DistributionSpec:
    """Condition the spec on the region; the envelope collapses to L(R_inf)."""
    if not isinstance(region, Region):
        raise ValueError("region must be a Region")
    if spec.truncation is not None:
        raise ValueError("spec is already truncated")
    new = replace(spec, truncation=region)
    pin = pinned_dim(new)
    if pin is not None:
        _check_feasible(new, pin)  # eager feasibility probe when the dim is known
    return new


@dataclass
class DecayCheckReport:
    """Outcome of decay_rate_check: minimal observed log-slack over pairs."""

    passed: bool
    min_slack: float
    rate_bound: float
    n_pairs: int


def decay_rate_check(spec: DistributionSpec, region: Region | None,
                     n_pairs: int, rng: np.random.Generator,
                     d: int | None = None, tol: float = 1e-9) -> DecayCheckReport:
    """Check f(x1)/f(x2) >= exp(-M ||x1 - x2||_2) * (1 - tol) on region pairs,
    with M = sqrt(d) * L(R_inf).  Slack is measured in log space.
    """
    if region is None:
        region = spec.truncation
    if region is None:
        raise ValueError("a bounded region is required")
    if spec.truncation is None:
        sampler = truncate(spec, region)
    elif spec.truncation is region or spec.truncation == region:
        sampler = spec
    else:
        raise ValueError("spec truncation conflicts with the requested region")
    d = resolve_dim(sampler, d)
    n_pairs = int(n_pairs)
    X1 = _sample_matrix(sampler, d, n_pairs, rng)
    X2 = _sample_matrix(sampler, d, n_pairs, rng)
    ld1 = _log_density_batch(sampler, X1)
    ld2 = _log_density_batch(sampler, X2)
    lac = lac_function(sampler, d)
    M = math.sqrt(d) * float(lac(region.sup_norm_radius()))
    dist = np.linalg.norm(X1 - X2, axis=1)
    slack = M * dist - np.abs(ld1 - ld2)  # covers both orientations of each pair
    min_slack = float(slack.min())
    return DecayCheckReport(
        passed=bool(min_slack >= math.log1p(-tol)),
        min_slack=min_slack,
        rate_bound=M,
        n_pairs=n_pairs,
    )


# ---------------------------------------------------------------------------
# Config-block serialization


def _fmt_param(v) -> str:
    if np.ndim(v) == 0:
        return repr(float(v))
    return ",".join(repr(float(x)) for x in np.asarray(v).ravel())


def _parse_param(s: str):
    parts = [p for p in s.split(",") if p.strip()]
    if len(parts) == 1:
        return float(parts[0])
    return np.array([float(p) for p in parts])


def _fmt_region(region: Region) -> str:
    if region.kind == "ball":
        return f"ball:{region.radius!r}"
    return f"box:{_fmt_param(region.lo)}:{_fmt_param(region.hi)}"


def _parse_region(s: str) -> Region:
    parts = s.split(":")
    if parts[0] == "ball" and len(parts) == 2:
        return ball(float(parts[1]))
    if parts[0] == "box" and len(parts) == 3:
        return box(_parse_param(parts[1]), _parse_param(parts[2]))
    raise ValueError(f"unparseable region {s!r} (expected ball:R or box:lo:hi)")


def spec_to_config(spec: DistributionSpec) -> dict[str, str]:
    """Flat key-value block describing the spec (round-trips exactly)."""
    block = {"kind": spec.kind}
    if spec.kind == "gaussian":
        block["mean"] = _fmt_param(spec.mean)
        if np.ndim(spec.cov) == 2:
            block["cov_matrix"] = ";".join(_fmt_param(row) for row in spec.cov)
        elif np.ndim(spec.cov) == 1:
            block["cov_diag"] = _fmt_param(spec.cov)
        else:
            block["var"] = repr(float(spec.cov))
            if spec.rho != 0.0:
                block["rho"] = repr(float(spec.rho))
    elif spec.kind in ("laplace", "cauchy"):
        block["loc"] = _fmt_param(spec.loc)
        block["scale"] = _fmt_param(spec.scale)
    elif spec.kind == "uniform_ball":
        block["radius"] = repr(float(spec.radius))
    elif spec.kind == "exponential":
        block["rate"] = _fmt_param(spec.rate)
    else:
        block["df"] = repr(float(spec.df))
    if spec.truncation is not None:
        block["truncation"] = _fmt_region(spec.truncation)
    if spec.arm_coupling != "independent_arms":
        block["arm_coupling"] = spec.arm_coupling
    return block


def spec_from_config(block) -> DistributionSpec:
    """Inverse of spec_to_config; unknown keys raise."""
    block = dict(block)
    try:
        kind = block.pop("kind")
    except KeyError:
        raise ValueError("spec block needs a 'kind' key") from None
    trunc = block.pop("truncation", None)
    region = _parse_region(trunc) if trunc is not None else None
    coupling = block.pop("arm_coupling", "independent_arms")
    kwargs = {}
    if kind == "gaussian":
        kwargs["mean"] = _parse_param(block.pop("mean", "0.0"))
        if "cov_matrix" in block:
            rows = [np.atleast_1d(_parse_param(r)) for r in block.pop("cov_matrix").split(";")]
            kwargs["cov"] = np.vstack(rows)
        elif "cov_diag" in block:
            kwargs["cov"] = np.atleast_1d(_parse_param(block.pop("cov_diag")))
        else:
            kwargs["cov"] = float(block.pop("var", "1.0"))
            kwargs["rho"] = float(block.pop("rho", "0.0"))
    elif kind in ("laplace", "cauchy"):
        kwargs["loc"] = _parse_param(block.pop("loc", "0.0"))
        kwargs["scale"] = _parse_param(block.pop("scale", "1.0"))
    elif kind == "uniform_ball":
        kwargs["radius"] = float(block.pop("radius", "1.0"))
    elif kind == "exponential":
        kwargs["rate"] = _parse_param(block.pop("rate", "1.0"))
    elif kind == "student_t":
        kwargs["df"] = float(block.pop("df"))
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    if block:
        raise ValueError(f"unknown spec keys: {sorted(block)}")
    return DistributionSpec(kind, truncation=region, arm_coupling=coupling, **kwargs)
