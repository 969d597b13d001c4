import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordmix.data import ValidationError
from ordmix.sqrtfree import (
    FreeSigmaPriors,
    SqrtFreeCholesky,
    decompose,
    recompose,
    sample_restricted_sigma,
    update_restricted_sigma,
)


def _random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.5 * np.eye(d)


class TestDecompose:
    def test_diagonal_input(self):
        out = decompose(np.diag([2.0, 5.0, 0.3]))
        np.testing.assert_allclose(out.B, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(out.delta, [2.0, 5.0, 0.3], atol=1e-15)

    def test_bivariate_closed_form(self):
        # delta = (1, 1 - rho^2); second row of B is (-rho, 1)
        rho = 0.62
        out = decompose([[1.0, rho], [rho, 1.0]])
        np.testing.assert_allclose(out.delta, [1.0, 1.0 - rho**2], atol=1e-14)
        np.testing.assert_allclose(out.B[1], [-rho, 1.0], atol=1e-14)

    def test_delta_is_sequential_conditional_variance(self, rng):
        # delta_i = Var(W_i | W_1..W_{i-1}) = Schur complement on the leading block
        sigma = _random_spd(rng, 4)
        out = decompose(sigma)
        for i in range(1, 4):
            lead = sigma[:i, :i]
            cross = sigma[i, :i]
            cond_var = sigma[i, i] - cross @ np.linalg.solve(lead, cross)
            assert out.delta[i] == pytest.approx(cond_var, rel=1e-10)
        assert out.delta[0] == pytest.approx(sigma[0, 0], rel=1e-14)

    @given(st.integers(min_value=1, max_value=6), st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip(self, d, seed):
        sigma = _random_spd(np.random.default_rng(seed), d)
        again = recompose(decompose(sigma))
        np.testing.assert_allclose(again, sigma, atol=1e-12 * max(1, sigma.max()))

    def test_factor_roundtrip_identity(self, rng):
        sigma = _random_spd(rng, 5)
        fac = decompose(sigma)
        fac2 = decompose(recompose(fac))
        np.testing.assert_allclose(fac2.B, fac.B, atol=1e-10)
        np.testing.assert_allclose(fac2.delta, fac.delta, rtol=1e-10)

    def test_non_spd_rejected(self):
        with pytest.raises(np.linalg.LinAlgError):
            decompose([[1.0, 2.0], [2.0, 1.0]])

    def test_factor_validation(self):
        with pytest.raises(ValidationError):
            SqrtFreeCholesky(B=np.array([[1.0, 0.5], [0.0, 1.0]]), delta=[1.0, 1.0])
        with pytest.raises(ValidationError):
            SqrtFreeCholesky(B=np.eye(2), delta=[1.0, -1.0])


class TestRestrictedSampling:
    def test_all_fixed_pins_every_scale(self, rng):
        priors = FreeSigmaPriors(d=3)
        for _ in range(200):
            sigma = sample_restricted_sigma([1.0, 1.0, 1.0], priors, rng)
            assert sigma[0, 0] == 1.0  # delta_1 = Var(W_1), held exactly
            fac = decompose(sigma)
            np.testing.assert_allclose(fac.delta, 1.0, atol=1e-9)

    def test_partial_restriction(self, rng):
        priors = FreeSigmaPriors(d=2)
        deltas = []
        for _ in range(3000):
            sigma = sample_restricted_sigma([1.0], priors, rng)
            fac = decompose(sigma)
            assert fac.delta[0] == pytest.approx(1.0, abs=1e-12)
            deltas.append(fac.delta[1])
        # free delta ~ IG(2, 1): mean 1
        assert np.mean(deltas) == pytest.approx(1.0, abs=0.1)

    def test_unrestricted_matches_priors(self, rng):
        priors = FreeSigmaPriors(d=2, b_var=10.0)
        bs = []
        for _ in range(4000):
            sigma = sample_restricted_sigma([], priors, rng)
            bs.append(decompose(sigma).B[1, 0])
        assert np.var(bs) == pytest.approx(10.0, rel=0.1)

    def test_nonpositive_fixed_rejected(self, rng):
        with pytest.raises(ValidationError):
            sample_restricted_sigma([0.0], FreeSigmaPriors(d=2), rng)

    def test_too_many_fixed_rejected(self, rng):
        with pytest.raises(ValidationError):
            sample_restricted_sigma([1.0] * 3, FreeSigmaPriors(d=2), rng)


class TestRestrictedUpdate:
    def test_posterior_concentrates_on_truth(self, rng):
        # large-sample conjugate refresh should land near the generating factor
        b_true = np.array([[1.0, 0.0], [-0.8, 1.0]])
        delta_true = np.array([1.0, 0.5])
        sigma_true = recompose(SqrtFreeCholesky(B=b_true, delta=delta_true))
        chol = np.linalg.cholesky(sigma_true)
        resid = rng.standard_normal((40000, 2)) @ chol.T
        priors = FreeSigmaPriors(d=2)
        draws = [
            update_restricted_sigma(resid, [1.0], priors, sigma_true, rng)
            for _ in range(30)
        ]
        fac = decompose(np.mean(draws, axis=0))
        assert fac.B[1, 0] == pytest.approx(-0.8, abs=0.03)
        assert fac.delta[1] == pytest.approx(0.5, abs=0.03)
        assert fac.delta[0] == pytest.approx(1.0, abs=1e-10)

    def test_empty_cluster_falls_back_to_prior(self, rng):
        priors = FreeSigmaPriors(d=2)
        sigma = update_restricted_sigma(
            np.empty((0, 2)), [1.0], priors, np.eye(2), rng
        )
        assert decompose(sigma).delta[0] == pytest.approx(1.0, abs=1e-12)

    def test_fixed_deltas_survive_update(self, rng):
        priors = FreeSigmaPriors(d=3)
        resid = rng.standard_normal((50, 3))
        sigma = np.eye(3)
        for _ in range(20):
            sigma = update_restricted_sigma(resid, [1.0, 2.0], priors, sigma, rng)
            fac = decompose(sigma)
            np.testing.assert_allclose(fac.delta[:2], [1.0, 2.0], rtol=1e-10)
