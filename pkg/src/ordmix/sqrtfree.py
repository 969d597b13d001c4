"""Square-root-free Cholesky machinery for variance-restricted covariances.

A covariance Sigma factors uniquely as Sigma = B^{-1} Delta B^{-T} with B
unit lower triangular and Delta = diag(delta), delta > 0. The diagonal
entries are sequential conditional variances: if W ~ N(mu, Sigma) then
delta_i = Var(W_i | W_1, ..., W_{i-1}). Fixing the first r deltas pins the
scales of the first r coordinates, which is how binary latent dimensions
(whose cutoff spread carries no scale information) are identified; binary
dimensions must therefore occupy the first r coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import ValidationError


@dataclass
class SqrtFreeCholesky:
    """Factor pair (B, delta) with diag(B) = 1 and delta > 0."""

    B: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        d = self.delta.size
        if self.B.shape != (d, d):
            raise ValidationError("B and delta dimensions disagree")
        if not np.allclose(np.diag(self.B), 1.0):
            raise ValidationError("B must have a unit diagonal")
        if np.any(np.triu(self.B, 1) != 0.0):
            raise ValidationError("B must be lower triangular")
        if np.any(self.delta <= 0):
            raise ValidationError("delta entries must be positive")


def decompose(sigma) -> SqrtFreeCholesky:
    """Unique (B, delta) with sigma = B^{-1} diag(delta) B^{-T}."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    try:
        low = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("input is not positive definite") from None
    root = np.diag(low).copy()
    unit = low / root[None, :]  # unit lower triangular, equals B^{-1}
    b = solve_triangular(unit, np.eye(sigma.shape[0]), lower=True,
                         unit_diagonal=True)
    # exact unit diagonal regardless of roundoff in the solve
    np.fill_diagonal(b, 1.0)
    b[np.triu_indices_from(b, 1)] = 0.0
    return SqrtFreeCholesky(B=b, delta=root**2)


def recompose(chol: SqrtFreeCholesky) -> np.ndarray:
    """Inverse of decompose: rebuild the SPD matrix from (B, delta)."""
    d = chol.delta.size
    binv = solve_triangular(chol.B, np.eye(d), lower=True, unit_diagonal=True)
    sigma = (binv * chol.delta[None, :]) @ binv.T
    return 0.5 * (sigma + sigma.T)


@dataclass
class FreeSigmaPriors:
    """Priors on the free factor entries of a restricted covariance.

    Free strict-lower entries of B are iid N(b_mean, b_var); free deltas are
    iid inverse-gamma(delta_shape, delta_scale). Defaults are dispersed and
    proper: N(0, 10) and IG(2, 1).
    """

    d: int
    b_mean: float = 0.0
    b_var: float = 10.0
    delta_shape: float = 2.0
    delta_scale: float = 1.0


def _draw_inv_gamma(shape, scale, rng, size=None):
    return scale / rng.gamma(shape, size=size)


def sample_restricted_sigma(fixed_delta, free_priors: FreeSigmaPriors, rng) -> np.ndarray:
    """Covariance draw with the first r conditional variances clamped.

    fixed_delta holds the first r delta entries (positive); the remaining
    deltas and all strict-lower B entries are drawn from free_priors. The
    result is SPD by construction, with Var(W_1) = fixed_delta[0],
    Var(W_2 | W_1) = fixed_delta[1], and so on, exactly.
    """
    fixed = np.atleast_1d(np.asarray(fixed_delta, dtype=float))
    d = free_priors.d
    r = fixed.size
    if r > d:
        raise ValidationError(f"{r} fixed deltas exceed dimension {d}")
    if np.any(fixed <= 0):
        raise ValidationError("fixed delta entries must be positive")
    delta = np.empty(d)
    delta[:r] = fixed
    if r < d:
        delta[r:] = _draw_inv_gamma(
            free_priors.delta_shape, free_priors.delta_scale, rng, size=d - r
        )
    b = np.eye(d)
    if d > 1:
        idx = np.tril_indices(d, -1)
        b[idx] = free_priors.b_mean + np.sqrt(free_priors.b_var) * rng.standard_normal(
            idx[0].size
        )
    return recompose(SqrtFreeCholesky(B=b, delta=delta))


def update_restricted_sigma(resid, fixed_delta, free_priors: FreeSigmaPriors,
                            current_sigma, rng) -> np.ndarray:
    """Conjugate refresh of a restricted covariance given centered residuals.

    resid is the (M, d) matrix of cluster members minus the component mean.
    Each row j of B defines an ordinary regression of the j-th residual on
    the preceding ones with noise variance delta_j, so free B rows get
    conjugate normal draws and free deltas conjugate inverse-gamma draws;
    the first len(fixed_delta) deltas stay clamped. M = 0 falls back to a
    prior draw.
    """
    fixed = np.atleast_1d(np.asarray(fixed_delta, dtype=float))
    d = free_priors.d
    r = fixed.size
    resid = np.atleast_2d(np.asarray(resid, dtype=float))
    m_count = resid.shape[0]
    if m_count == 0:
        return sample_restricted_sigma(fixed, free_priors, rng)
    current = decompose(current_sigma)
    b = current.B.copy()
    delta = current.delta.copy()
    delta[:r] = fixed
    prior_prec = 1.0 / free_priors.b_var
    for j in range(d):
        yv = resid[:, j]
        if j > 0:
            xm = -resid[:, :j]
            prec = prior_prec * np.eye(j) + (xm.T @ xm) / delta[j]
            rhs = prior_prec * free_priors.b_mean * np.ones(j) + (xm.T @ yv) / delta[j]
            low = np.linalg.cholesky(prec)
            mean = np.linalg.solve(prec, rhs)
            row = mean + solve_triangular(
                low.T, rng.standard_normal(j), lower=False
            )
            b[j, :j] = row
            err = yv - xm @ row
        else:
            err = yv
        if j >= r:
            delta[j] = _draw_inv_gamma(
                free_priors.delta_shape + 0.5 * m_count,
                free_priors.delta_scale + 0.5 * float(err @ err),
                rng,
            )
    return recompose(SqrtFreeCholesky(B=b, delta=delta))
