"""Default hyperprior derivation from covariate centers/ranges and cutoffs.

The strategy moment-matches the limiting single-component model: with
(Z, X) ~ N(mu, Sigma), mu ~ N(m, V), V ~ IW(a_V, B_V), Sigma ~ IW(nu, S),
S ~ W(a_S, B_S), the marginal moments are E(Z, X) = a_m and
Cov(Z, X) = a_S B_S/(nu-d-1) + B_V/(a_V-d-1) + B_m. Each covariance term
receives an equal share s of a diagonal target D built from range proxies
(range/4 as a standard deviation proxy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .data import CutoffGrid, Hyperpriors, ValidationError

_ALLOWED_SPLITS = (1.0 / 3.0, 0.5)


@dataclass
class PriorInputs:
    """Inputs to the default hyperprior derivation.

    centers, ranges : approximate center and range per continuous covariate.
    cutoff_grid : fixed cutoffs; latent ranges come from the outermost
        finite cutoffs.
    variance_split : share of the marginal covariance assigned to each of
        the three terms; 1/3 (equal) or 1/2 (slightly inflated).
    alpha_prior : (shape, rate) of the gamma prior on the precision
        parameter. Use default_alpha_prior(n) when unsure.
    latent_ranges : optional per-dimension override of the latent range
        proxy; required for binary dimensions, whose cutoff spread is zero.
    """

    centers: np.ndarray
    ranges: np.ndarray
    cutoff_grid: CutoffGrid
    variance_split: float = 1.0 / 3.0
    alpha_prior: tuple[float, float] = None
    latent_ranges: np.ndarray = None

    def __post_init__(self):
        self.centers = np.atleast_1d(np.asarray(self.centers, dtype=float))
        self.ranges = np.atleast_1d(np.asarray(self.ranges, dtype=float))
        if self.centers.size != self.ranges.size:
            raise ValidationError("centers and ranges must have equal length")
        if np.any(self.ranges <= 0):
            raise ValidationError("covariate ranges must be strictly positive")
        if not any(abs(self.variance_split - s) < 1e-9 for s in _ALLOWED_SPLITS):
            raise ValidationError(
                "variance_split must be 1/3 or 1/2, got "
                f"{self.variance_split}"
            )
        if self.latent_ranges is not None:
            self.latent_ranges = np.atleast_1d(
                np.asarray(self.latent_ranges, dtype=float)
            )


def default_alpha_prior(n: int, target_clusters=None) -> tuple[float, float]:
    """Gamma(2, rate) prior for the precision parameter.

    The rate is set so the prior-mean precision a* gives an expected
    occupied-cluster count a* log(1 + n/a*) of about min(n/10, 15),
    favoring reasonably many clusters relative to the sample size.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    target = min(n / 10.0, 15.0) if target_clusters is None else float(target_clusters)
    target = min(max(target, 0.5), 0.95 * n) if n > 1 else 0.5
    g = lambda a: a * np.log1p(n / a) - target
    a_star = brentq(g, 1e-9, 1e9)
    return 2.0, 2.0 / a_star


def derive_hyperpriors(inputs: PriorInputs) -> Hyperpriors:
    """Derive the full hyperprior constants from PriorInputs.

    With s = variance_split and D the diagonal of squared range/4 proxies:
    a_m = (0, ..., 0, centers), B_m = s D, nu = a_V = a_S = d + 2,
    B_V = s D (a_V - d - 1), B_S = s D (nu - d - 1) / a_S, so each of the
    three covariance terms equals s D.
    """
    grid = inputs.cutoff_grid
    k = grid.k
    p = inputs.centers.size
    d = k + p
    r_z = grid.latent_ranges()
    if inputs.latent_ranges is not None:
        if inputs.latent_ranges.size != k:
            raise ValidationError("latent_ranges must have length k")
        override = np.isfinite(inputs.latent_ranges) & (inputs.latent_ranges > 0)
        r_z = np.where(override, inputs.latent_ranges, r_z)
    if np.any(r_z <= 0):
        j = int(np.argmin(r_z))
        raise ValidationError(
            f"latent range for dimension {j} is degenerate (binary cutoffs "
            "give zero spread); supply an explicit latent scale"
        )
    if inputs.alpha_prior is None:
        raise ValidationError(
            "alpha_prior is unset; pass one or use default_alpha_prior(n)"
        )
    a_alpha, b_alpha = inputs.alpha_prior
    s = inputs.variance_split
    a_m = np.concatenate([np.zeros(k), inputs.centers])
    diag = np.concatenate([(r_z / 4.0) ** 2, (inputs.ranges / 4.0) ** 2])
    D = np.diag(diag)
    nu = a_V = a_S = float(d + 2)
    B_m = s * D
    B_V = s * D * (a_V - d - 1.0)
    B_S = s * D * (nu - d - 1.0) / a_S
    return Hyperpriors(
        a_m=a_m,
        B_m=B_m,
        a_V=a_V,
        B_V=B_V,
        a_S=a_S,
        B_S=B_S,
        nu=nu,
        a_alpha=float(a_alpha),
        b_alpha=float(b_alpha),
    )
