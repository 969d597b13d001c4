import numpy as np
import pytest

from ordmix.data import CutoffGrid, ValidationError, default_cutoffs
from ordmix.distributions import sample_inv_wishart, sample_wishart
from ordmix.priors import PriorInputs, default_alpha_prior, derive_hyperpriors


def _grid_pm1():
    return CutoffGrid.from_interior([[-1.0, 1.0]])


class TestDeriveHyperpriors:
    def test_worked_example(self):
        # k=1, C=3, cutoffs (-1,1); p=1, center 10, range 8; split 1/3, d=2:
        # latent range proxy (2/4)^2 = 1/4, covariate proxy (8/4)^2 = 4,
        # nu = a_V = a_S = 4, and with nu-d-1 = 1 the three covariance terms
        # each equal D/3.
        hp = derive_hyperpriors(
            PriorInputs(
                centers=[10.0], ranges=[8.0], cutoff_grid=_grid_pm1(),
                variance_split=1.0 / 3.0, alpha_prior=(2.0, 1.0),
            )
        )
        np.testing.assert_allclose(hp.a_m, [0.0, 10.0])
        assert hp.nu == hp.a_V == hp.a_S == 4.0
        np.testing.assert_allclose(hp.B_m, np.diag([1 / 12, 4 / 3]), atol=1e-15)
        np.testing.assert_allclose(hp.B_V, np.diag([1 / 12, 4 / 3]), atol=1e-15)
        np.testing.assert_allclose(hp.B_S, np.diag([1 / 48, 1 / 3]), atol=1e-15)

    def test_half_split_scales_by_three_halves(self):
        third = derive_hyperpriors(
            PriorInputs(centers=[10.0], ranges=[8.0], cutoff_grid=_grid_pm1(),
                        variance_split=1.0 / 3.0, alpha_prior=(2.0, 1.0))
        )
        half = derive_hyperpriors(
            PriorInputs(centers=[10.0], ranges=[8.0], cutoff_grid=_grid_pm1(),
                        variance_split=0.5, alpha_prior=(2.0, 1.0))
        )
        np.testing.assert_allclose(half.B_m, 1.5 * third.B_m, atol=1e-15)
        np.testing.assert_allclose(half.B_V, 1.5 * third.B_V, atol=1e-15)
        np.testing.assert_allclose(half.B_S, 1.5 * third.B_S, atol=1e-15)

    def test_covariance_budget_identity(self, rng):
        # a_S B_S/(nu-d-1) + B_V/(a_V-d-1) + B_m = 3 s D, machine precision
        for _ in range(10):
            k = int(rng.integers(1, 4))
            p = int(rng.integers(1, 4))
            counts = [int(c) for c in rng.integers(3, 7, size=k)]
            grid = default_cutoffs(counts)
            ranges = rng.uniform(1, 9, p)
            split = (1.0 / 3.0, 0.5)[int(rng.integers(2))]
            hp = derive_hyperpriors(
                PriorInputs(
                    centers=rng.normal(size=p), ranges=ranges,
                    cutoff_grid=grid, variance_split=split,
                    alpha_prior=(2.0, 1.0),
                )
            )
            d = k + p
            diag = np.concatenate(
                [(grid.latent_ranges() / 4.0) ** 2, (ranges / 4.0) ** 2]
            )
            total = (
                hp.a_S * hp.B_S / (hp.nu - d - 1.0)
                + hp.B_V / (hp.a_V - d - 1.0)
                + hp.B_m
            )
            np.testing.assert_allclose(total, 3.0 * split * np.diag(diag),
                                       atol=1e-12)
            for mat in (hp.B_m, hp.B_V, hp.B_S):
                np.linalg.cholesky(mat)

    def test_binary_range_needs_override(self):
        grid = default_cutoffs([2])
        with pytest.raises(ValidationError, match="latent scale"):
            derive_hyperpriors(
                PriorInputs(centers=[0.0], ranges=[4.0], cutoff_grid=grid,
                            alpha_prior=(2.0, 1.0))
            )
        hp = derive_hyperpriors(
            PriorInputs(centers=[0.0], ranges=[4.0], cutoff_grid=grid,
                        alpha_prior=(2.0, 1.0), latent_ranges=[4.0])
        )
        assert hp.B_m[0, 0] == pytest.approx(1.0 / 3.0)

    def test_bad_split_rejected(self):
        with pytest.raises(ValidationError, match="variance_split"):
            PriorInputs(centers=[0.0], ranges=[1.0], cutoff_grid=_grid_pm1(),
                        variance_split=0.4, alpha_prior=(2.0, 1.0))

    def test_alpha_prior_required(self):
        with pytest.raises(ValidationError, match="alpha_prior"):
            derive_hyperpriors(
                PriorInputs(centers=[0.0], ranges=[1.0], cutoff_grid=_grid_pm1())
            )

    def test_prior_predictive_moments(self, rng):
        # single-component push-forward: E(Z,X) = a_m, Cov(Z,X) = 3 s D
        hp = derive_hyperpriors(
            PriorInputs(centers=[10.0], ranges=[8.0], cutoff_grid=_grid_pm1(),
                        variance_split=1.0 / 3.0, alpha_prior=(2.0, 1.0))
        )
        n = 100000
        chol_bm = np.linalg.cholesky(hp.B_m)
        draws = np.empty((n, 2))
        for i in range(n):
            m = hp.a_m + chol_bm @ rng.standard_normal(2)
            v = sample_inv_wishart(hp.a_V, hp.B_V, rng)
            s = sample_wishart(hp.a_S, hp.B_S, rng)
            mu = m + np.linalg.cholesky(v) @ rng.standard_normal(2)
            sig = sample_inv_wishart(hp.nu, s, rng)
            draws[i] = mu + np.linalg.cholesky(sig) @ rng.standard_normal(2)
        target_cov = 3.0 * (1.0 / 3.0) * np.diag([0.25, 4.0])
        np.testing.assert_allclose(draws.mean(axis=0), hp.a_m, atol=0.05)
        # heavy-tailed push-forward: 3% relative on the diagonal, small
        # absolute slack on the zero off-diagonal
        np.testing.assert_allclose(
            np.cov(draws.T), target_cov, rtol=0.03, atol=0.05
        )


class TestDefaultAlphaPrior:
    def test_escobar_west_target(self):
        for n in (40, 400, 5000):
            shape, rate = default_alpha_prior(n)
            assert shape == 2.0
            a_star = shape / rate
            target = min(n / 10.0, 15.0)
            assert a_star * np.log1p(n / a_star) == pytest.approx(target, rel=1e-6)

    def test_small_n_solvable(self):
        shape, rate = default_alpha_prior(8)
        assert shape > 0 and rate > 0

    def test_invalid_n(self):
        with pytest.raises(ValidationError):
            default_alpha_prior(0)
