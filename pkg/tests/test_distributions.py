import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr
from scipy.stats import invwishart, multivariate_normal, wishart

from ordmix.distributions import (
    bvn_rect_prob,
    bvn_rect_prob_std,
    bvn_upper,
    mvn_condition,
    mvn_logpdf,
    mvn_rect_prob,
    sample_inv_wishart,
    sample_truncated_normal,
    sample_wishart,
    truncated_normal,
)

# Independently computed with explicit 2x2 algebra (inverse and determinant
# written out by hand): log N((1,1); 0, [[1,.5],[.5,1]]).
LOGPDF_2D_RHO_HALF = -2.3607026968501215

# phi(10)/Phi(-10) evaluated at 50 digits: mean of a standard normal
# truncated to (10, inf).
TAIL_MEAN_AT_10 = 10.098093233962512


class TestMvnLogpdf:
    def test_standard_normal_origin(self):
        assert mvn_logpdf([0, 0], [0, 0], np.eye(2)) == pytest.approx(
            -np.log(2 * np.pi), abs=1e-14
        )

    def test_univariate_at_mean(self):
        assert mvn_logpdf([3.0], [3.0], [[4.0]]) == pytest.approx(
            -0.5 * np.log(2 * np.pi * 4.0), abs=1e-14
        )

    def test_correlated_frozen_value(self):
        got = mvn_logpdf([1, 1], [0, 0], [[1, 0.5], [0.5, 1]])
        assert got == pytest.approx(LOGPDF_2D_RHO_HALF, abs=1e-12)

    def test_non_spd_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            mvn_logpdf([0, 0], [0, 0], [[1, 2], [2, 1]])

    def test_finite_for_finite_inputs(self, rng):
        for _ in range(20):
            a = rng.normal(size=(3, 3))
            sigma = a @ a.T + 0.1 * np.eye(3)
            val = mvn_logpdf(rng.normal(size=3) * 50, rng.normal(size=3), sigma)
            assert np.isfinite(val)


class TestMvnCondition:
    def test_independence(self):
        cond = mvn_condition([1.0, 2.0, 3.0], np.eye(3), [2], [9.0])
        np.testing.assert_allclose(cond.cond_mean, [1.0, 2.0])
        np.testing.assert_allclose(cond.cond_cov, np.eye(2))

    def test_bivariate_textbook(self):
        rho, t = 0.6, 1.7
        cond = mvn_condition([0.5, -0.5], [[1, rho], [rho, 1]], [1], [t])
        assert cond.cond_mean[0] == pytest.approx(0.5 + rho * (t + 0.5), abs=1e-12)
        assert cond.cond_cov[0, 0] == pytest.approx(1 - rho**2, abs=1e-12)

    def test_scaling_invariance(self, rng):
        # scaling the conditioning block by c and the cross block by sqrt(c)
        # leaves the conditional law untouched when values rescale by sqrt(c)
        c = 3.7
        a = rng.normal(size=(4, 4))
        sigma = a @ a.T + np.eye(4)
        mu = rng.normal(size=4)
        given, t = [2, 3], rng.normal(size=2)
        base = mvn_condition(mu, sigma, given, t)
        scaled = sigma.copy()
        scaled[np.ix_(given, given)] *= c
        scaled[np.ix_([0, 1], given)] *= np.sqrt(c)
        scaled[np.ix_(given, [0, 1])] *= np.sqrt(c)
        mu2 = mu.copy()
        mu2[given] *= np.sqrt(c)
        other = mvn_condition(mu2, scaled, given, np.sqrt(c) * t)
        np.testing.assert_allclose(other.cond_mean, base.cond_mean, atol=1e-10)
        np.testing.assert_allclose(other.cond_cov, base.cond_cov, atol=1e-10)

    def test_total_variance_recovers_joint(self, rng):
        for _ in range(25):
            d = int(rng.integers(3, 6))
            a = rng.normal(size=(d, d))
            sigma = a @ a.T + np.eye(d)
            mu = rng.normal(size=d)
            given = sorted(rng.choice(d, size=int(rng.integers(1, d)), replace=False))
            free = [i for i in range(d) if i not in given]
            cond = mvn_condition(mu, sigma, given, mu[given])
            s_fg = sigma[np.ix_(free, given)]
            s_gg = sigma[np.ix_(given, given)]
            beta = s_fg @ np.linalg.inv(s_gg)
            recovered = cond.cond_cov + beta @ s_gg @ beta.T
            np.testing.assert_allclose(
                recovered, sigma[np.ix_(free, free)], atol=1e-10
            )

    def test_rejects_empty_and_full_conditioning(self):
        with pytest.raises(ValueError):
            mvn_condition([0, 0], np.eye(2), [], [])
        with pytest.raises(ValueError):
            mvn_condition([0, 0], np.eye(2), [0, 1], [0.0, 0.0])

    def test_singular_block_raises(self):
        sigma = np.eye(3)
        sigma[1, 1] = 0.0
        with pytest.raises(np.linalg.LinAlgError, match="singular"):
            mvn_condition([0, 0, 0], sigma, [1], [0.0])


class TestTruncatedNormal:
    def test_marginal_mean(self, rng):
        z = truncated_normal(0.0, 1.0, -np.inf, np.inf, rng, size=(100000,))
        assert abs(z.mean()) < 0.02

    def test_far_tail_inverse_mills(self, rng):
        z = truncated_normal(0.0, 1.0, 10.0, np.inf, rng, size=(100000,))
        assert np.all(z > 10.0)
        assert z.mean() == pytest.approx(TAIL_MEAN_AT_10, abs=0.01)

    def test_empty_interval_raises(self, rng):
        with pytest.raises(ValueError, match="empty"):
            sample_truncated_normal(0.0, 1.0, 2.0, 1.0, rng)

    def test_extreme_bounds_stay_finite_and_inside(self, rng):
        cases = [
            (0.0, 1.0, 38.0, 38.001),
            (0.0, 1.0, -np.inf, -38.0),
            (5.0, 0.04, -np.inf, 2.0),
            (0.0, 1.0, 6.5, 7.0),
            (-2.0, 9.0, -2.5, -1.5),
        ]
        for mu, var, lo, hi in cases:
            z = truncated_normal(mu, var, lo, hi, rng, size=(5000,))
            assert np.all(np.isfinite(z))
            assert np.all((z > lo) & (z <= hi)), (mu, var, lo, hi)

    def test_two_sided_mean(self, rng):
        z = truncated_normal(0.5, 4.0, -1.0, 1.0, rng, size=(400000,))
        a, b = (-1 - 0.5) / 2.0, (1 - 0.5) / 2.0
        phi = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)
        want = 0.5 + 2.0 * (phi(a) - phi(b)) / (ndtr(b) - ndtr(a))
        assert z.mean() == pytest.approx(want, abs=0.01)

    def test_seed_determinism(self):
        r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
        a = truncated_normal(0, 1, -2, 3, r1, size=(64,))
        b = truncated_normal(0, 1, -2, 3, r2, size=(64,))
        assert np.array_equal(a, b)


class TestBvnRect:
    def test_orthant_closed_form_grid(self):
        for rho in np.linspace(-0.99, 0.99, 67):
            got = bvn_rect_prob(
                -np.inf, 0.0, -np.inf, 0.0, np.zeros(2),
                np.array([[1.0, rho], [rho, 1.0]]),
            )
            want = 0.25 + np.arcsin(rho) / (2 * np.pi)
            assert got == pytest.approx(want, abs=1e-10), rho

    def test_rho_half_orthant_is_third(self):
        got = bvn_rect_prob(-np.inf, 0, -np.inf, 0, np.zeros(2),
                            np.array([[1, 0.5], [0.5, 1.0]]))
        assert got == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_full_plane_is_exactly_one(self):
        assert bvn_rect_prob(
            -np.inf, np.inf, -np.inf, np.inf, np.zeros(2), np.eye(2)
        ) == 1.0

    def test_monotone_in_correlation(self):
        vals = [
            bvn_rect_prob(-np.inf, 0.3, -np.inf, -0.4, np.zeros(2),
                          np.array([[1, r], [r, 1.0]]))
            for r in np.linspace(-0.99, 0.99, 199)
        ]
        assert np.all(np.diff(vals) >= 0)

    def test_comonotone_limit(self):
        got = bvn_rect_prob(-np.inf, 0, -np.inf, 0, np.zeros(2),
                            np.array([[1, 0.999999], [0.999999, 1.0]]))
        assert got == pytest.approx(0.5, abs=1e-3)

    def test_general_rectangles_vs_quadrature(self, rng):
        for rho in (0.97, -0.94, 0.4, -0.2):
            mu = rng.normal(size=2)
            s = rng.uniform(0.5, 1.5, size=2)
            sigma = np.array(
                [[s[0] ** 2, rho * s[0] * s[1]], [rho * s[0] * s[1], s[1] ** 2]]
            )
            a = np.sort(rng.normal(0, 1.5, 2))
            b = np.sort(rng.normal(0, 1.5, 2))
            got = bvn_rect_prob(a[0], a[1], b[0], b[1], mu, sigma)
            want, _ = integrate.dblquad(
                lambda yy, xx: multivariate_normal.pdf([xx, yy], mu, sigma),
                a[0], a[1], b[0], b[1], epsabs=1e-12,
            )
            assert got == pytest.approx(want, abs=1e-10)

    def test_degenerate_correlations_exact(self):
        assert bvn_upper(0.0, 0.0, 1.0)[0] == pytest.approx(0.5, abs=1e-15)
        assert bvn_upper(0.0, 0.0, -1.0)[0] == pytest.approx(0.0, abs=1e-15)

    def test_invalid_bounds_raise(self):
        with pytest.raises(ValueError):
            bvn_rect_prob(1.0, 0.0, -1.0, 1.0, np.zeros(2), np.eye(2))

    def test_vectorized_matches_scalar(self, rng):
        rhos = rng.uniform(-0.99, 0.99, 40)
        los = rng.normal(0, 1, 40)
        his = los + rng.uniform(0.1, 2.0, 40)
        vec = bvn_rect_prob_std(los, his, -1.0, 0.5, rhos)
        for i in range(40):
            one = bvn_rect_prob(
                los[i], his[i], -1.0, 0.5, np.zeros(2),
                np.array([[1, rhos[i]], [rhos[i], 1.0]]),
            )
            assert vec[i] == pytest.approx(one, abs=1e-13)


def _orthant_quadrature(sigma, lo=-9.0, n=241):
    """Simpson product-rule integral of the trivariate normal over
    (lo, 0]^3; accurate to ~1e-8 for well-scaled sigma."""
    xs = np.linspace(lo, 0.0, n)
    h = xs[1] - xs[0]
    w = np.ones(n)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= h / 3.0
    si = np.linalg.inv(sigma)
    det = np.linalg.det(sigma)
    grid = np.stack(np.meshgrid(xs, xs, xs, indexing="ij"), axis=-1)
    quad = np.einsum("...i,ij,...j->...", grid, si, grid)
    dens = np.exp(-0.5 * quad) / np.sqrt((2 * np.pi) ** 3 * det)
    return float(
        (dens * w[:, None, None] * w[None, :, None] * w[None, None, :]).sum()
    )


class TestMvnRect:
    def test_univariate_exact(self):
        p, se = mvn_rect_prob([-1.0], [1.0], [0.0], [[1.0]])
        assert se == 0.0
        assert p == pytest.approx(ndtr(1.0) - ndtr(-1.0), abs=1e-14)

    def test_bivariate_delegates_exact(self):
        p, se = mvn_rect_prob([-np.inf, -np.inf], [0, 0], np.zeros(2),
                              np.array([[1, 0.5], [0.5, 1.0]]))
        assert se == 0.0
        assert p == pytest.approx(1.0 / 3.0, abs=1e-10)

    def test_trivariate_independent_cube(self, rng):
        p, se = mvn_rect_prob(
            [-np.inf] * 3, [0.0] * 3, np.zeros(3), np.eye(3),
            n_samples=200000, rng=rng,
        )
        assert abs(p - 0.125) < 3 * se

    def test_trivariate_equicorrelated_vs_quadrature(self, rng):
        sigma = np.full((3, 3), 0.5)
        np.fill_diagonal(sigma, 1.0)
        want = _orthant_quadrature(sigma)
        assert want == pytest.approx(0.25, abs=1e-6)  # exchangeable closed form
        p, se = mvn_rect_prob(
            [-np.inf] * 3, [0.0] * 3, np.zeros(3), sigma,
            n_samples=400000, rng=rng,
        )
        assert abs(p - want) < 3 * se

    def test_zero_samples_rejected_for_high_dim(self, rng):
        with pytest.raises(ValueError, match="n_samples"):
            mvn_rect_prob([-1] * 3, [1] * 3, np.zeros(3), np.eye(3), n_samples=0,
                          rng=rng)


class TestWishartFamilies:
    def test_wishart_mean(self, rng):
        scale = np.array([[1.0, 0.3], [0.3, 2.0]])
        draws = np.mean([sample_wishart(5.0, scale, rng) for _ in range(20000)],
                        axis=0)
        np.testing.assert_allclose(draws, 5.0 * scale, rtol=0.02)

    def test_inv_wishart_mean(self, rng):
        # IW(6, I) in d=2 has mean I / (6 - 2 - 1) = I/3
        draws = np.mean(
            [sample_inv_wishart(6.0, np.eye(2), rng) for _ in range(40000)], axis=0
        )
        np.testing.assert_allclose(draws, np.eye(2) / 3.0, rtol=0.02, atol=0.005)

    def test_small_df_rejected(self, rng):
        with pytest.raises(ValueError, match="df"):
            sample_wishart(1.0, np.eye(2), rng)
        with pytest.raises(ValueError, match="df"):
            sample_inv_wishart(1.0, np.eye(2), rng)

    def test_matches_scipy_moments(self, rng):
        # cross-check parameterization against scipy's conventions
        scale = np.array([[2.0, -0.4], [-0.4, 1.0]])
        ours = np.mean([sample_wishart(7.5, scale, rng) for _ in range(8000)], axis=0)
        np.testing.assert_allclose(ours, wishart(7.5, scale).mean(), rtol=0.05)
        ours_iw = np.mean(
            [sample_inv_wishart(8.0, scale, rng) for _ in range(8000)], axis=0
        )
        np.testing.assert_allclose(
            ours_iw, invwishart(8.0, scale).mean(), rtol=0.05
        )

    def test_seed_determinism(self):
        a = sample_wishart(5.0, np.eye(3), np.random.default_rng(3))
        b = sample_wishart(5.0, np.eye(3), np.random.default_rng(3))
        assert np.array_equal(a, b)
