"""Bayesian nonparametric multivariate ordinal regression.

Mixtures of multivariate normals over latent ordinal responses and
covariates, fit by a blocked Gibbs sampler over a truncated stick-breaking
prior, with exact posterior functionals for regression curves, inverse
inference, polychoric correlations, and rater agreement.
"""

from .data import (
    AtomPartition,
    CutoffGrid,
    Dataset,
    Hyperpriors,
    MixtureState,
    NormalMixture,
    ValidationError,
    default_cutoffs,
    stick_weights,
    validate_dataset,
)
from .distributions import (
    GaussianConditional,
    bvn_rect_prob,
    mvn_condition,
    mvn_logpdf,
    mvn_rect_prob,
    sample_inv_wishart,
    sample_truncated_normal,
    sample_wishart,
    truncated_normal,
)
from .estimator import OrdinalMixture
from .functionals import (
    AgreementTable,
    CurveEstimate,
    agreement_prob_curve,
    agreement_table,
    default_grid,
    inverse_covariate_density,
    joint_cell_prob,
    latent_score_density,
    marginal_curve,
    ordinal_covariate_curve,
    polychoric_draw,
    polychoric_draws,
)
from .gibbs import (
    ChainConfig,
    ChainError,
    DrawStore,
    default_truncation,
    run_chain,
)
from .priors import PriorInputs, default_alpha_prior, derive_hyperpriors
from .simulate import (
    GewekeConfig,
    TrueMixture,
    crossing_two_component,
    f0_construct,
    geweke_check,
    mc_cell_prob_oracle,
    random_mixture,
    simulate_dataset,
)
from .sqrtfree import (
    FreeSigmaPriors,
    SqrtFreeCholesky,
    decompose,
    recompose,
    sample_restricted_sigma,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementTable",
    "AtomPartition",
    "ChainConfig",
    "ChainError",
    "CurveEstimate",
    "CutoffGrid",
    "Dataset",
    "DrawStore",
    "FreeSigmaPriors",
    "GaussianConditional",
    "GewekeConfig",
    "Hyperpriors",
    "MixtureState",
    "NormalMixture",
    "OrdinalMixture",
    "PriorInputs",
    "SqrtFreeCholesky",
    "TrueMixture",
    "ValidationError",
    "agreement_prob_curve",
    "agreement_table",
    "bvn_rect_prob",
    "crossing_two_component",
    "decompose",
    "default_alpha_prior",
    "default_cutoffs",
    "default_grid",
    "default_truncation",
    "derive_hyperpriors",
    "f0_construct",
    "geweke_check",
    "inverse_covariate_density",
    "joint_cell_prob",
    "latent_score_density",
    "marginal_curve",
    "mc_cell_prob_oracle",
    "mvn_condition",
    "mvn_logpdf",
    "mvn_rect_prob",
    "ordinal_covariate_curve",
    "polychoric_draw",
    "polychoric_draws",
    "random_mixture",
    "recompose",
    "run_chain",
    "sample_inv_wishart",
    "sample_restricted_sigma",
    "sample_truncated_normal",
    "sample_wishart",
    "simulate_dataset",
    "stick_weights",
    "truncated_normal",
    "validate_dataset",
]
