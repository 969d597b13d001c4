import numpy as np
import pytest

from ordmix import ChainConfig, PriorInputs, derive_hyperpriors


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def quick_hyperpriors(cutoffs, centers, ranges, alpha=(2.0, 2.0), split=1.0 / 3.0,
                      latent_ranges=None):
    return derive_hyperpriors(
        PriorInputs(
            centers=centers, ranges=ranges, cutoff_grid=cutoffs,
            variance_split=split, alpha_prior=alpha,
            latent_ranges=latent_ranges,
        )
    )


def quick_chain_config(**kw):
    base = dict(n_components=10, n_iter=400, n_burn=100, thin=2, seed=7)
    base.update(kw)
    return ChainConfig(**base)
