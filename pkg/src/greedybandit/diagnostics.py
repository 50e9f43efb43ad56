"""Monte-Carlo estimators for the theory-side quantities.

Four constants are estimated from the context distribution alone (diversity
lambda_star, margin slope c_delta, bounded-context concentration pair
(c_star, p_star), and an empirical stand-in for the sup-norm scale), and two
checks run on recorded trajectories (sqrt(t)-consistency of the OLS error
and linear growth of the minimal Gram eigenvalue).  Every estimator reports
a Monte-Carlo standard error so thresholds can be stated in those units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contexts import DistributionSpec, _sample_matrix, resolve_dim
from .env import Trajectory

_N_BATCHES = 20


def _sample_pool(spec: DistributionSpec, d: int, K: int, n_mc: int,
                 rng: np.random.Generator) -> np.ndarray:
    """(n_mc, K, d) stack of context sets drawn in one vectorized pass."""
    flat = _sample_matrix(spec, d, int(n_mc) * int(K), rng)
    return flat.reshape(int(n_mc), int(K), d)


def _batch_se(values: np.ndarray, n_batches: int = _N_BATCHES) -> float:
    """Standard error of the mean of `values` via batch means."""
    n = values.shape[0]
    m = n - n % n_batches
    chunks = values[:m].reshape(n_batches, -1).mean(axis=1)
    return float(chunks.std(ddof=1) / math.sqrt(n_batches))


def _direction_set(d: int, n_dirs: int, rng: np.random.Generator) -> np.ndarray:
    """n_dirs unit sphere draws plus both signs of every coordinate axis,
    deduplicated (at d=1 all sphere draws collapse onto the two axes)."""
    dirs = rng.standard_normal((int(n_dirs), d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    stacked = np.vstack([dirs, axes])
    _, idx = np.unique(np.round(stacked, 12), axis=0, return_index=True)
    return stacked[np.sort(idx)]


# ---------------------------------------------------------------------------
# Diversity constant


@dataclass
class DiversityEstimate:
    """Sampled minimum over directions of lambda_min(E[x_a x_a^T])."""

    value: float
    std_error: float
    worst_direction: np.ndarray
    n_dirs_used: int
    n_mc: int

    def __float__(self) -> float:
        return self.value


def estimate_diversity_constant(spec: DistributionSpec, d: int, K: int,
                                n_mc: int, n_dirs: int,
                                rng: np.random.Generator) -> DiversityEstimate:
    """Estimate the worst-case second-moment floor of the greedily picked arm.

    For each scoring direction theta, the arm a = argmax_i x_i^T theta is
    selected in every Monte-Carlo context set and the minimal eigenvalue of
    the empirical second moment of x_a is computed; the estimate is the
    minimum over directions.  All directions share one context pool, so
    cross-direction comparisons are not washed out by sampling noise.  The
    standard error linearizes lambda_min at the bottom eigenvector v:
    batch means of (x_a^T v)^2.
    """
    if n_mc < 10**4:
        raise ValueError("n_mc must be >= 1e4")
    if n_dirs < 32:
        raise ValueError("n_dirs must be >= 32")
    d = resolve_dim(spec, d)
    pool = _sample_pool(spec, d, K, n_mc, rng)
    dirs = _direction_set(d, n_dirs, rng)
    n = pool.shape[0]
    rows = np.arange(n)

    best = None
    for theta in dirs:
        chosen = pool[rows, np.argmax(pool @ theta, axis=1)]
        M = chosen.T @ chosen / n
        eigvals, eigvecs = np.linalg.eigh(M)
        lam = float(eigvals[0])
        if best is None or lam < best[0]:
            v = eigvecs[:, 0]
            se = _batch_se((chosen @ v) ** 2)
            best = (lam, se, theta)
    lam, se, theta = best
    return DiversityEstimate(value=lam, std_error=se, worst_direction=theta,
                             n_dirs_used=dirs.shape[0], n_mc=n)


# ---------------------------------------------------------------------------
# Margin constant


@dataclass
class MarginEstimate:
    """Through-origin slope of P[gap <= eps] over the eps grid."""

    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    residual_rms: float
    degenerate: bool
    eps_grid: np.ndarray
    probs: np.ndarray

    def __float__(self) -> float:
        return self.slope


DEFAULT_EPS_GRID = tuple(np.round(np.linspace(0.01, 0.10, 10), 10))


def estimate_margin_constant(spec: DistributionSpec, theta_star, d: int, K: int,
                             n_mc: int, eps_grid=DEFAULT_EPS_GRID,
                             rng: np.random.Generator | None = None) -> MarginEstimate:
    """Estimate the small-gap slope of the best-vs-runner-up score gap.

    The gap of a context set is the difference between the two largest
    values of x_i^T theta_star.  P[gap <= eps] is estimated on a grid and a
    line through the origin is fitted; its slope is the margin constant.  A
    free (affine) fit provides the intercept, whose distance from zero is a
    sanity check for continuous densities.  Standard errors come from batch
    means over the Monte-Carlo pool.
    """
    if n_mc < 10**5:
        raise ValueError("n_mc must be >= 1e5")
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 2:
        raise ValueError("eps_grid needs at least two points")
    if np.any(eps <= 0.0) or np.any(eps >= 0.5):
        raise ValueError("eps_grid must lie in (0, 0.5)")
    if rng is None:
        rng = np.random.default_rng()
    theta_star = np.asarray(theta_star, dtype=float)
    d = resolve_dim(spec, d)
    if K < 2:
        raise ValueError("gap needs K >= 2")

    pool = _sample_pool(spec, d, K, n_mc, rng)
    scores = pool @ theta_star
    part = np.partition(scores, (K - 2, K - 1), axis=1)
    gaps = part[:, K - 1] - part[:, K - 2]

    indic = gaps[:, None] <= eps[None, :]          # (n, n_eps)
    probs = indic.mean(axis=0)
    degenerate = bool(np.all(probs == 0.0))

    sxx = float(eps @ eps)
    slope = float(eps @ probs) / sxx

    # Affine fit for the intercept check.
    A = np.vstack([eps, np.ones_like(eps)]).T
    coef, *_ = np.linalg.lstsq(A, probs, rcond=None)
    intercept = float(coef[1])

    # Batch-means errors: refit per Monte-Carlo chunk.
    n = gaps.shape[0]
    m = n - n % _N_BATCHES
    chunk_probs = indic[:m].reshape(_N_BATCHES, -1, eps.size).mean(axis=1)
    chunk_slopes = chunk_probs @ eps / sxx
    chunk_coefs = np.linalg.lstsq(A, chunk_probs.T, rcond=None)[0]
    slope_se = float(chunk_slopes.std(ddof=1) / math.sqrt(_N_BATCHES))
    intercept_se = float(chunk_coefs[1].std(ddof=1) / math.sqrt(_N_BATCHES))

    resid = probs - slope * eps
    return MarginEstimate(
        slope=slope,
        slope_se=slope_se,
        intercept=intercept,
        intercept_se=intercept_se,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        degenerate=degenerate,
        eps_grid=eps,
        probs=probs,
    )


# ---------------------------------------------------------------------------
# Concentration parameters for bounded contexts


class UnboundedSupportError(ValueError):
    """Concentration parameters require a bounded context distribution."""


@dataclass
class ConcentrationEstimate:
    """Worst-direction quantile of max_i x_i^T eta, scaled by the support radius."""

    c_star: float
    p_star: float
    radius: float
    raw_c_star: float
    quantile_se: float
    n_dirs_used: int
    n_mc: int

    def __iter__(self):
        return iter((self.c_star, self.p_star))


def support_radius(spec: DistributionSpec, d: int) -> float:
    """Radius of an origin-centered l2 ball certain to contain the support."""
    bounds = []
    if spec.kind == "uniform_ball":
        bounds.append(spec.radius)
    if spec.truncation is not None:
        bounds.append(spec.truncation.l2_radius(d))
    if not bounds:
        raise UnboundedSupportError(f"{spec.kind} spec has unbounded support")
    return float(min(bounds))


def estimate_concentration_params(spec: DistributionSpec, d: int, K: int,
                                  n_mc: int, n_dirs: int, target_p: float,
                                  rng: np.random.Generator | None = None,
                                  ) -> ConcentrationEstimate:
    """Estimate the (c_star, p_star) pair of a bounded context distribution.

    For each unit direction eta the empirical target_p-quantile of
    max_i x_i^T eta is computed; c_star is the worst quantile divided by the
    support radius (clipped into [0, 1]; the unclipped worst ratio is kept
    in raw_c_star).  p_star equals target_p by construction.  The quantile
    standard error is read off the order-statistic window of half-width
    sqrt(p(1-p)/n) around the target rank.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target_p must lie in (0, 1)")
    if n_mc < 1000:
        raise ValueError("n_mc must be >= 1000")
    if rng is None:
        rng = np.random.default_rng()
    d = resolve_dim(spec, d)
    R = support_radius(spec, d)
    pool = _sample_pool(spec, d, K, n_mc, rng)
    dirs = _direction_set(d, n_dirs, rng)

    n = pool.shape[0]
    half = math.sqrt(target_p * (1.0 - target_p) / n)
    worst_q, worst_se = -np.inf, 0.0
    for eta in dirs:
        m = np.sort(np.max(pool @ eta, axis=1))
        q = float(np.quantile(m, target_p))
        lo = float(np.quantile(m, max(target_p - half, 0.0)))
        hi = float(np.quantile(m, min(target_p + half, 1.0)))
        if q > worst_q:
            worst_q, worst_se = q, 0.5 * (hi - lo)
    raw = worst_q / R
    return ConcentrationEstimate(
        c_star=float(min(max(raw, 0.0), 1.0)),
        p_star=float(target_p),
        radius=R,
        raw_c_star=float(raw),
        quantile_se=worst_se / R,
        n_dirs_used=dirs.shape[0],
        n_mc=n,
    )


# ---------------------------------------------------------------------------
# Trajectory checks


def consistency_curve(trajectory: Trajectory, theta_star=None) -> list[tuple[int, float]]:
    """(t, sqrt(t) * ||theta_hat_t - theta_star||) for rounds with an estimate.

    The per-round error is read from the trajectory records; theta_star is
    accepted for interface symmetry with the estimators.
    """
    return [(r.t, math.sqrt(r.t) * r.est_error_l2)
            for r in trajectory.records if r.est_error_l2 is not None]


@dataclass
class ConsistencyReport:
    """Boundedness of sqrt(t) * error over a time window."""

    passed: bool
    max_over_median: float
    window: tuple[int, int]
    n_points: int


def consistency_check(trajectory: Trajectory, t_min: int = 100,
                      t_max: int = 1000, max_ratio: float = 5.0) -> ConsistencyReport:
    curve = [v for t, v in consistency_curve(trajectory) if t_min <= t <= t_max]
    if not curve:
        return ConsistencyReport(False, math.inf, (t_min, t_max), 0)
    arr = np.asarray(curve)
    med = float(np.median(arr))
    if arr.max() <= 1e-9:
        ratio = 1.0  # exact recovery: the whole curve is roundoff noise
    elif med == 0.0:
        ratio = math.inf
    else:
        ratio = float(arr.max() / med)
    return ConsistencyReport(passed=bool(ratio <= max_ratio),
                             max_over_median=ratio,
                             window=(t_min, t_max),
                             n_points=len(curve))


@dataclass
class GrowthReport:
    """Linear lower bound check on the minimal Gram eigenvalue."""

    passed: bool
    fraction: float
    threshold_slope: float
    t0: int
    n_checked: int
    last_violation: int | None


def gram_growth_check(trajectory: Trajectory, lambda_star_hat: float,
                      t0: int = 50, min_fraction: float = 0.95) -> GrowthReport:
    """Fraction of rounds t >= t0 with lambda_min(Sigma(t)) >= (lambda/4) t."""
    lam = float(lambda_star_hat)
    slope = lam / 4.0
    checked = [(r.t, r.gram_min_eig >= slope * r.t)
               for r in trajectory.records if r.t >= t0]
    if not checked:
        return GrowthReport(False, 0.0, slope, t0, 0, None)
    oks = np.array([ok for _, ok in checked])
    violations = [t for (t, ok) in checked if not ok]
    frac = float(oks.mean())
    return GrowthReport(passed=bool(frac >= min_fraction),
                        fraction=frac,
                        threshold_slope=slope,
                        t0=t0,
                        n_checked=len(checked),
                        last_violation=max(violations) if violations else None)


def empirical_x_max(spec: DistributionSpec, d: int, K: int, n_mc: int,
                    rng: np.random.Generator) -> float:
    """Empirical 1 - 1e-4 tail quantile of the round's largest arm norm.

    A stand-in for the sup-norm scale of the context distribution; heavy
    tailed families have no finite closed-form bound, so the report labels
    this value as an empirical quantile, not a guarantee.
    """
    d = resolve_dim(spec, d)
    pool = _sample_pool(spec, d, K, n_mc, rng)
    max_norms = np.linalg.norm(pool, axis=2).max(axis=1)
    return float(np.quantile(max_norms, 1.0 - 1e-4))


# ---------------------------------------------------------------------------
# Composite report


@dataclass
class DiagnosticsReport:
    """All estimated constants and trajectory checks for one experiment."""

    lambda_star_hat: float
    lambda_star_se: float
    c_delta_hat: float
    c_delta_se: float
    margin_intercept: float
    margin_intercept_se: float
    c_star_hat: float | None
    p_star_hat: float | None
    x_max_hat: float
    consistency_series: list[tuple[int, float]]
    growth_series: list[tuple[int, float]]
    growth: GrowthReport
    consistency: ConsistencyReport
    notes: list[str] = field(default_factory=list)


def run_diagnostics(spec: DistributionSpec, d: int, K: int, theta_star,
                    trajectory: Trajectory, rng: np.random.Generator,
                    n_mc_diversity: int = 10**4, n_mc_margin: int = 10**5,
                    n_dirs: int = 32, target_p: float = 0.9) -> DiagnosticsReport:
    """Estimate every constant for the spec and check the trajectory against
    the estimated diversity floor."""
    d = resolve_dim(spec, d)
    div = estimate_diversity_constant(spec, d, K, n_mc_diversity, n_dirs, rng)
    margin = estimate_margin_constant(spec, theta_star, d, K, n_mc_margin, rng=rng)
    notes = ["x_max_hat is the empirical 1-1e-4 tail quantile of the max arm "
             "norm, not a closed-form bound"]
    try:
        conc = estimate_concentration_params(spec, d, K, max(n_mc_diversity, 1000),
                                             n_dirs, target_p, rng=rng)
        c_star, p_star = conc.c_star, conc.p_star
    except UnboundedSupportError:
        c_star, p_star = None, None
        notes.append("concentration parameters undefined: unbounded support")
    x_max = empirical_x_max(spec, d, K, n_mc_diversity, rng)
    growth = gram_growth_check(trajectory, div.value)
    cons = consistency_check(trajectory, t_max=len(trajectory))
    return DiagnosticsReport(
        lambda_star_hat=div.value,
        lambda_star_se=div.std_error,
        c_delta_hat=margin.slope,
        c_delta_se=margin.slope_se,
        margin_intercept=margin.intercept,
        margin_intercept_se=margin.intercept_se,
        c_star_hat=c_star,
        p_star_hat=p_star,
        x_max_hat=x_max,
        consistency_series=consistency_curve(trajectory),
        growth_series=[(r.t, r.gram_min_eig / r.t) for r in trajectory.records],
        growth=growth,
        consistency=cons,
        notes=notes,
    )


def format_report(report: DiagnosticsReport) -> str:
    """Human-readable text block for the experiment's diagnostics sidecar."""
    lines = [
        "diagnostics",
        "===========",
        f"lambda_star_hat   {report.lambda_star_hat:.6f} (se {report.lambda_star_se:.2e})",
        f"c_delta_hat       {report.c_delta_hat:.6f} (se {report.c_delta_se:.2e})",
        f"margin_intercept  {report.margin_intercept:+.6f} (se {report.margin_intercept_se:.2e})",
    ]
    if report.c_star_hat is None:
        lines.append("c_star/p_star     undefined (unbounded support)")
    else:
        lines.append(f"c_star_hat        {report.c_star_hat:.6f}")
        lines.append(f"p_star_hat        {report.p_star_hat:.6f}")
    lines.append(f"x_max_hat         {report.x_max_hat:.6f} (empirical tail quantile)")
    g = report.growth
    lines.append(
        f"gram growth       {'pass' if g.passed else 'FAIL'}: fraction {g.fraction:.4f} "
        f"(need >= 0.95 of t >= {g.t0} above {g.threshold_slope:.6f}*t; "
        f"slack {g.fraction - 0.95:+.4f})")
    c = report.consistency
    lines.append(
        f"sqrt(t) error     {'pass' if c.passed else 'FAIL'}: max/median "
        f"{c.max_over_median:.3f} over t in {c.window} (need <= 5; "
        f"slack {5.0 - c.max_over_median:+.3f})")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"
