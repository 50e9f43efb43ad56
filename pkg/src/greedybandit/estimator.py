"""Incremental ordinary least squares over rank-one Gram updates.

GramState accumulates Sigma = sum x x^T and b = sum x y without any
regularization.  Until Sigma is invertible the estimate is undefined; once
the minimal eigenvalue clears a small numerical floor the state keeps both a
Sherman-Morrison running inverse (cheap per-round reads) and a fresh
Cholesky solve (authoritative for theta_hat).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

EPS_INV = 1e-9


class NotIdentifiedError(RuntimeError):
    """Gram matrix is singular; the least squares estimate does not exist."""


@dataclass
class GramState:
    """Running sufficient statistics of the regression.

    `theta_hat` is None until the Gram matrix becomes invertible;
    `invertible_since` records the update count at which that happened.
    """

    sigma: np.ndarray
    b: np.ndarray
    t: int = 0
    theta_hat: np.ndarray | None = None
    invertible_since: int | None = None
    sigma_inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


def init(d: int) -> GramState:
    d = int(d)
    if d < 1:
        raise ValueError("d must be >= 1")
    return GramState(sigma=np.zeros((d, d)), b=np.zeros(d))


def _is_invertible(sigma: np.ndarray) -> bool:
    eigs = np.linalg.eigvalsh(sigma)
    return bool(eigs[0] > EPS_INV * max(1.0, eigs[-1]))


def update(state: GramState, x, y: float) -> GramState:
    """Fold one observation (x, y) into the state in place."""
    x = np.asarray(x, dtype=float)
    if x.shape != (state.dim,):
        raise ValueError(f"expected context of shape ({state.dim},), got {x.shape}")
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ValueError("observation must be finite")

    if state.sigma_inv is not None:
        # Sherman-Morrison on the pre-update inverse.
        Av = state.sigma_inv @ x
        denom = 1.0 + float(x @ Av)
        state.sigma_inv = state.sigma_inv - np.outer(Av, Av) / denom

    state.sigma += np.outer(x, x)
    state.b += x * float(y)
    state.t += 1

    if state.invertible_since is None and _is_invertible(state.sigma):
        state.invertible_since = state.t
        state.sigma_inv = np.linalg.inv(state.sigma)
    if state.invertible_since is not None:
        state.theta_hat = solve(state)
    return state


def solve(state: GramState) -> np.ndarray:
    """Least squares estimate Sigma^-1 b via Cholesky (authoritative path)."""
    if state.invertible_since is None and not _is_invertible(state.sigma):
        raise NotIdentifiedError("Gram matrix is singular after "
                                 f"{state.t} updates")
    try:
        factor = cho_factor(state.sigma, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotIdentifiedError(str(exc)) from exc
    return cho_solve(factor, state.b, check_finite=False)


def incremental_estimate(state: GramState) -> np.ndarray:
    """Estimate from the Sherman-Morrison running inverse (cross-check path)."""
    if state.sigma_inv is None:
        raise NotIdentifiedError("Gram matrix is singular")
    return state.sigma_inv @ state.b


def min_eigenvalue(state: GramState) -> float:
    sigma = state.sigma
    asym = np.abs(sigma - sigma.T).max()
    if asym > 1e-8 * max(1.0, np.abs(sigma).max()):
        raise ValueError(f"Gram matrix asymmetric by {asym:.3e}")
    return float(np.linalg.eigvalsh(sigma)[0])


def weighted_norm(state: GramState, v) -> float:
    """sqrt(v^T Sigma v), clipped at zero against roundoff."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(float(v @ state.sigma @ v), 0.0)))
