"""Scikit-learn style estimator wrapping the mixture sampler.

OrdinalMixture composes with sklearn tooling (get_params/set_params,
clone) while exposing the full posterior-functional layer of the library
through methods on the fitted object.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array, check_random_state

from .data import Dataset, ValidationError, default_cutoffs, validate_dataset
from .functionals import (
    agreement_prob_curve,
    agreement_table,
    inverse_covariate_density,
    joint_cell_prob,
    latent_score_density,
    marginal_curve,
    ordinal_covariate_curve,
    polychoric_draws,
)
from .gibbs import ChainConfig, default_truncation, run_chain
from .priors import PriorInputs, default_alpha_prior, derive_hyperpriors


class OrdinalMixture(BaseEstimator):
    """Mixture-of-normals model for ordinal responses with random covariates.

    Parameters
    ----------
    category_counts : int, sequence, or None
        Categories per response column; inferred from the observed maxima
        when None.
    half_width : float or None
        Half-width of the default cutoff grid; None picks C_j / 2 per
        dimension. Cutoff placement does not affect regression inference.
    n_components : int or None
        Truncation level of the stick-breaking mixture; None picks
        min(50, n).
    n_iter, n_burn, thin : int
        Sweep count, burn-in, and thinning of the stored draws.
    variance_split : float
        Share (1/3 or 1/2) of the prior marginal covariance assigned to
        each hyperprior term.
    alpha_prior : (shape, rate) or None
        Gamma prior for the mixture precision; None derives a default from
        the sample size.
    ordinal_covariate_flags : sequence of bool or None
        Marks response columns that are ordinal-coded covariates.
    binary_dims : sequence of int
        Response columns with two categories, handled by the restricted
        covariance kernel; must be the leading columns.
    retain_latent : sequence of int
        Observation indices whose latent scores are stored for
        latent_score_density.
    random_state : int, Generator, or None
        Seed for the chain.
    """

    def __init__(self, category_counts=None, half_width=None, n_components=None,
                 n_iter=20000, n_burn=5000, thin=2, variance_split=1.0 / 3.0,
                 alpha_prior=None, ordinal_covariate_flags=None, binary_dims=(),
                 retain_latent=(), init_mode="prior-draw", random_state=None):
        self.category_counts = category_counts
        self.half_width = half_width
        self.n_components = n_components
        self.n_iter = n_iter
        self.n_burn = n_burn
        self.thin = thin
        self.variance_split = variance_split
        self.alpha_prior = alpha_prior
        self.ordinal_covariate_flags = ordinal_covariate_flags
        self.binary_dims = binary_dims
        self.retain_latent = retain_latent
        self.init_mode = init_mode
        self.random_state = random_state

    # -- fitting ------------------------------------------------------

    def fit(self, X, y):
        """Fit the mixture to covariates X (n, p) and ordinal codes y (n, k)."""
        y = np.asarray(y)
        y2 = y[:, None] if y.ndim == 1 else y
        if X is None or (hasattr(X, "shape") and 0 in np.shape(X)) or (
            isinstance(X, (list, tuple)) and len(X) == 0
        ):
            Xv = np.zeros((y2.shape[0], 0))
        else:
            Xv = check_array(X, dtype=np.float64, ensure_2d=False)
            if Xv.ndim == 1:
                Xv = Xv[:, None]
        counts = self.category_counts
        if counts is None:
            counts = y2.max(axis=0)
        elif np.isscalar(counts):
            counts = np.full(y2.shape[1], int(counts))
        dataset = validate_dataset(
            Dataset(
                y=y2, x=Xv, category_counts=counts,
                ordinal_covariate_flags=self.ordinal_covariate_flags,
            )
        )
        self.cutoffs_ = default_cutoffs(dataset.category_counts, self.half_width)
        if dataset.p:
            centers = 0.5 * (Xv.max(axis=0) + Xv.min(axis=0))
            ranges = Xv.max(axis=0) - Xv.min(axis=0)
            ranges[ranges <= 0] = 1.0
        else:
            centers = np.zeros(0)
            ranges = np.zeros(0)
        alpha_prior = self.alpha_prior or default_alpha_prior(dataset.n)
        latent_ranges = None
        if len(self.binary_dims):
            latent_ranges = self.cutoffs_.latent_ranges()
            latent_ranges[list(self.binary_dims)] = 4.0  # unit-variance probit scale
        self.hyperpriors_ = derive_hyperpriors(
            PriorInputs(
                centers=centers, ranges=ranges, cutoff_grid=self.cutoffs_,
                variance_split=self.variance_split, alpha_prior=alpha_prior,
                latent_ranges=latent_ranges,
            )
        )
        seed = self._seed()
        config = ChainConfig(
            n_components=self.n_components or default_truncation(dataset.n),
            n_iter=self.n_iter, n_burn=self.n_burn, thin=self.thin, seed=seed,
            init_mode=self.init_mode, retain_latent=tuple(self.retain_latent),
        )
        self.dataset_ = dataset
        self.draws_ = run_chain(
            dataset, self.cutoffs_, self.hyperpriors_, config,
            binary_dims=tuple(self.binary_dims),
        )
        return self

    def _seed(self) -> int:
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        rs = check_random_state(self.random_state)
        return int(rs.randint(0, 2**31 - 1))

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise ValidationError("estimator is not fitted; call fit first")

    # -- prediction ---------------------------------------------------

    def predict_proba(self, X, response: int = 0, max_draws: int = 500):
        """Posterior-mean category probabilities for response `response`
        at each covariate row; shape (n, C_j). At most max_draws evenly
        spaced posterior draws enter the average."""
        self._check_fitted()
        if self.dataset_.p == 0:
            raise ValidationError(
                "model was fit without covariates; evaluate joint_cell_prob "
                "on snapshots instead"
            )
        Xv = check_array(np.asarray(X, dtype=float), ensure_2d=False)
        if Xv.ndim == 1:
            Xv = Xv[:, None]
        if Xv.shape[1] != self.dataset_.p:
            raise ValidationError(
                f"X has {Xv.shape[1]} columns, model was fit with p="
                f"{self.dataset_.p}"
            )
        store = self.draws_.thin_view(max_draws)
        c_j = int(self.dataset_.category_counts[response])
        probs = np.empty((Xv.shape[0], c_j))
        for code in range(1, c_j + 1):
            curve = marginal_curve(store, response, code, Xv, covariate=None)
            probs[:, code - 1] = curve.mean
        return probs

    def predict(self, X, response: int = 0, max_draws: int = 500):
        """Most probable category (1-based) per covariate row."""
        return self.predict_proba(X, response=response, max_draws=max_draws).argmax(
            axis=1
        ) + 1

    # -- posterior functionals ----------------------------------------

    def marginal_curve(self, response, category, grid, covariate=0):
        self._check_fitted()
        return marginal_curve(self.draws_, response, category, grid, covariate)

    def inverse_covariate_density(self, y, grid, covariate=0, **kw):
        self._check_fitted()
        return inverse_covariate_density(self.draws_, y, grid, covariate, **kw)

    def ordinal_covariate_curve(self, response, category, covariate_dim,
                                levels=None):
        self._check_fitted()
        return ordinal_covariate_curve(
            self.draws_, response, category, covariate_dim, levels
        )

    def agreement_prob_curve(self, a, b, grid, covariate=0, mode="exact"):
        self._check_fitted()
        return agreement_prob_curve(self.draws_, a, b, grid, covariate, mode)

    def agreement_table(self, pairs, category_sets):
        self._check_fitted()
        return agreement_table(self.draws_, pairs, category_sets)

    def polychoric_draws(self, a, b, random_state=None):
        self._check_fitted()
        rng = np.random.default_rng(
            random_state if random_state is not None else self._seed()
        )
        return polychoric_draws(self.draws_, a, b, rng)

    def latent_score_density(self, i, j, bins=None):
        self._check_fitted()
        return latent_score_density(self.draws_, i, j, bins)
