"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. Statistical checks use fixed seeds, so every run
is deterministic.
"""

import time
from contextlib import contextmanager

import numpy as np
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from ordmix.data import (
    CutoffGrid,
    Dataset,
    Hyperpriors,
    default_cutoffs,
)
from ordmix.distributions import bvn_rect_prob, truncated_normal
from ordmix.functionals import default_grid, joint_cell_prob, marginal_curve
from ordmix.gibbs import (
    ChainConfig,
    DrawStore,
    effective_sample_size,
    run_chain,
)
from ordmix.priors import PriorInputs, default_alpha_prior, derive_hyperpriors
from ordmix.simulate import (
    GewekeConfig,
    all_category_vectors,
    crossing_two_component,
    f0_construct,
    geweke_check,
    mc_cell_prob_oracle,
    random_mixture,
    simulate_dataset,
)


@contextmanager
def criterion(num, name, limit_seconds=None):
    t0 = time.time()
    try:
        yield
    except Exception:
        print(f"\nACCEPTANCE {num} {name}: FAIL ({time.time() - t0:.0f}s)")
        raise
    elapsed = time.time() - t0
    print(f"\nACCEPTANCE {num} {name}: PASS ({elapsed:.0f}s)")
    if limit_seconds is not None:
        assert elapsed < limit_seconds, (
            f"criterion {num} exceeded its {limit_seconds}s budget"
        )


def _store_of(mix):
    store = DrawStore.allocate(1, mix.N, mix.d, mix.k, mix.cutoffs)
    store.weights[0], store.mu[0], store.sigma[0] = mix.weights, mix.mu, mix.sigma
    store.m[0] = 0.0
    store.V[0] = np.eye(mix.d)
    store.S[0] = np.eye(mix.d)
    store.alpha[0] = 1.0
    store.n_occupied[0] = mix.N
    return store


def _one_observation(mix, x, seed):
    """Bin a single draw from the mixture at x, to pick a typical cell."""
    rng = np.random.default_rng(seed)
    k = mix.k
    dens = np.array(
        [
            multivariate_normal.pdf(x, mix.mu[r, k:], mix.sigma[r][k:, k:])
            for r in range(mix.N)
        ]
    )
    w = mix.weights * dens
    w /= w.sum()
    r = rng.choice(mix.N, p=w)
    sxx_inv = np.linalg.inv(mix.sigma[r][k:, k:])
    szx = mix.sigma[r][:k, k:]
    cm = mix.mu[r, :k] + szx @ sxx_inv @ (x - mix.mu[r, k:])
    cc = mix.sigma[r][:k, :k] - szx @ sxx_inv @ szx.T
    z = cm + np.linalg.cholesky(cc) @ rng.standard_normal(k)
    return [int(mix.cutoffs.discretize(j, z[j])) for j in range(k)]


CRITERION_1_SEED = 3016  # fixed master seed so the 3-se checks are deterministic


def test_criterion_1_functional_oracle_equivalence():
    """Analytic cell probabilities and marginal curves agree with the
    Monte Carlo oracle within 3 reported standard errors."""
    with criterion(1, "functional-oracle equivalence", limit_seconds=300):
        rng = np.random.default_rng(CRITERION_1_SEED)
        for i in range(50):
            k = 1 + (i % 2)
            p = 1 + ((i // 2) % 2)
            mix = random_mixture(rng, k, p, int(rng.integers(2, 6)))
            store = _store_of(mix)
            for _ in range(10):
                x = rng.normal(0, 1.2, p)
                l = _one_observation(mix, x, int(rng.integers(2**31)))
                got = joint_cell_prob(mix, l, x)
                est, se = mc_cell_prob_oracle(mix, l, x, n_samples=10**6,
                                              rng=rng)
                assert abs(got - est) <= 3 * se, (i, l, x, got, est, se)
                if p > 1:
                    gm = marginal_curve(
                        store, 0, l[0], x.reshape(1, -1), covariate=None
                    ).values[0, 0]
                else:
                    gm = marginal_curve(
                        store, 0, l[0], np.array([x[0]]), covariate=0
                    ).values[0, 0]
                est_m, se_m = mc_cell_prob_oracle(
                    mix, [l[0]], x, n_samples=10**6, rng=rng, dims=[0]
                )
                assert abs(gm - est_m) <= 3 * se_m, (i, l[0], x, gm, est_m, se_m)


def test_criterion_2_constructive_density_oracle():
    """Cell integrals of the constructive piecewise-constant density
    reproduce randomized cell masses to 1e-14."""
    with criterion(2, "constructive density cell integrals"):
        rng = np.random.default_rng(424242)
        for case in range(100):
            k = 1 + (case % 2)
            counts = [int(c) for c in rng.integers(2, 6, size=k)]
            grid = default_cutoffs(counts, half_width=float(rng.uniform(0.5, 4)))
            masses = rng.dirichlet(np.ones(int(np.prod(counts)))).reshape(counts)
            lo = [grid.interior(j)[0] - rng.uniform(0.3, 3) for j in range(k)]
            hi = [grid.interior(j)[-1] + rng.uniform(0.3, 3) for j in range(k)]
            f0 = f0_construct(masses, grid, lo, hi)
            for cell in all_category_vectors(counts):
                mids = [
                    0.5
                    * (f0.gamma_star[j][cell[j] - 1] + f0.gamma_star[j][cell[j]])
                    for j in range(k)
                ]
                integral = f0.pdf(mids) * f0.cell_volume(cell)
                want = masses[tuple(c - 1 for c in cell)]
                assert abs(integral - want) <= 1e-14


def test_criterion_3_cutoff_invariance():
    """Fits that differ only in cutoff placement produce posterior-mean
    regression curves within 0.05 sup-norm of each other."""
    with criterion(3, "cut-off invariance", limit_seconds=900):
        truth = crossing_two_component((3,))
        ds, _ = simulate_dataset(truth, 400, np.random.default_rng(314))
        grid = default_grid(ds.x[:, 0], 50)
        curves = []
        for interior in ([-20.0, 20.0], [-5.0, 5.0], [0.0, 0.1]):
            cut = CutoffGrid.from_interior([interior])
            hyper = derive_hyperpriors(
                PriorInputs(
                    centers=[0.5 * float(ds.x.max() + ds.x.min())],
                    ranges=[float(ds.x.max() - ds.x.min())],
                    cutoff_grid=cut,
                    alpha_prior=default_alpha_prior(ds.n),
                )
            )
            cfg = ChainConfig(n_components=50, n_iter=20000, n_burn=5000,
                              thin=2, seed=77)
            store = run_chain(ds, cut, hyper, cfg)
            curves.append(
                np.array(
                    [
                        marginal_curve(store, 0, l, grid, covariate=0).mean
                        for l in (1, 2, 3)
                    ]
                )
            )
        for i in range(3):
            for j in range(i + 1, 3):
                sup = float(np.max(np.abs(curves[i] - curves[j])))
                assert sup <= 0.05, (i, j, sup)


def test_criterion_4_geweke_validation():
    """Joint-distribution check of the sampler on the small configuration,
    plus a fault-injected negative control."""
    with criterion(4, "joint-distribution sampler validation",
                   limit_seconds=600):
        rep = geweke_check(GewekeConfig(n_cycles=100000, seed=2))
        assert len(rep.names) >= 20
        assert rep.passed(4.0), rep.summary()
        control = geweke_check(GewekeConfig(n_cycles=20000, seed=2),
                               corrupt="alpha_shape")
        assert np.any(np.abs(control.z) > 6.0), control.summary()


def test_criterion_5_single_component_conjugate():
    """A one-component fit on a near-continuous proxy recovers the
    closed-form conjugate posterior moments of the kernel parameters."""
    with criterion(5, "single-component conjugate posterior"):
        rng = np.random.default_rng(1001)
        mu_true = np.array([0.3, -0.2])
        sig_true = np.array([[1.0, 0.5], [0.5, 1.3]])
        n = 150
        w_star = mu_true + rng.standard_normal((n, 2)) @ np.linalg.cholesky(
            sig_true
        ).T
        assert np.all(np.abs(w_star[:, 0]) < 8.0)
        # cutoff cells of width 0.002 pin the latent responses at generation
        n_cats = 8002
        cut = default_cutoffs([n_cats], half_width=8.0)
        ds = Dataset(
            y=cut.discretize(0, w_star[:, 0]), x=w_star[:, 1],
            category_counts=[n_cats],
        )
        nu = 5.0
        s0 = np.array([[1.2, 0.1], [0.1, 0.9]])
        big = 1e8
        hyper = Hyperpriors(
            a_m=np.zeros(2), B_m=1e-8 * np.eye(2),
            a_V=big, B_V=(big - 3.0) * 1e6 * np.eye(2),  # V pinned flat
            a_S=big, B_S=s0 / big, nu=nu,  # S pinned at s0
            a_alpha=2.0, b_alpha=2.0,
        )
        cfg = ChainConfig(n_components=1, n_iter=12000, n_burn=2000, thin=2,
                          seed=5)
        store = run_chain(ds, cut, hyper, cfg)
        # flat-mean-prior conjugate oracle on the complete data
        wbar = w_star.mean(axis=0)
        dev = w_star - wbar
        e_sigma = (s0 + dev.T @ dev) / (nu + n - 1 - 2 - 1)
        mu_draws = store.mu[:, 0, :]
        sig_draws = store.sigma[:, 0, :, :]
        for j in range(2):
            ess = effective_sample_size(mu_draws[:, j])
            se = mu_draws[:, j].std() / np.sqrt(ess)
            assert abs(mu_draws[:, j].mean() - wbar[j]) <= 3 * se
        for a, b in ((0, 0), (0, 1), (1, 1)):
            s = sig_draws[:, a, b]
            se = s.std() / np.sqrt(effective_sample_size(s))
            assert abs(s.mean() - e_sigma[a, b]) <= 3 * se
        for j in range(2):
            sd_draws = mu_draws[:, j].std()
            sd_oracle = np.sqrt(e_sigma[j, j] / n)
            se_sd = sd_draws / np.sqrt(2 * effective_sample_size(mu_draws[:, j]))
            assert abs(sd_draws - sd_oracle) <= 3 * se_sd


def test_criterion_6_nonlinear_recovery():
    """Credible bands cover the true non-monotone curves, and tighten with
    more data."""
    with criterion(6, "nonlinear curve recovery"):
        truth = crossing_two_component((5,))

        def true_curve(x_grid, l):
            out = np.zeros_like(x_grid)
            wsum = np.zeros_like(x_grid)
            lo, hi = truth.cutoffs.cell_bounds(0, l)
            for r in range(truth.N):
                mz, mx = truth.mu[r]
                szz = truth.sigma[r][0, 0]
                sxx = truth.sigma[r][1, 1]
                szx = truth.sigma[r][0, 1]
                w = truth.weights[r] * np.exp(
                    -0.5 * (x_grid - mx) ** 2 / sxx
                ) / np.sqrt(2 * np.pi * sxx)
                cm = mz + szx / sxx * (x_grid - mx)
                cs = np.sqrt(szz - szx**2 / sxx)
                out += w * (ndtr((hi - cm) / cs) - ndtr((lo - cm) / cs))
                wsum += w
            return out / wsum

        results = {}
        grid = None
        for n in (200, 1000):
            ds, _ = simulate_dataset(truth, n, np.random.default_rng(606))
            cut = default_cutoffs([5])
            hyper = derive_hyperpriors(
                PriorInputs(
                    centers=[0.5 * float(ds.x.max() + ds.x.min())],
                    ranges=[float(ds.x.max() - ds.x.min())],
                    cutoff_grid=cut,
                    alpha_prior=default_alpha_prior(n),
                )
            )
            cfg = ChainConfig(n_components=50, n_iter=20000, n_burn=5000,
                              thin=2, seed=33)
            store = run_chain(ds, cut, hyper, cfg)
            if grid is None:
                grid = default_grid(ds.x[:, 0], 50)
            cover, widths = [], []
            for l in range(1, 6):
                c = marginal_curve(store, 0, l, grid, covariate=0)
                tv = true_curve(grid, l)
                cover.append((c.lower <= tv) & (tv <= c.upper))
                widths.append(c.upper - c.lower)
            results[n] = (np.array(cover), np.array(widths))
        assert results[200][0].mean() >= 0.85, results[200][0].mean()
        assert results[1000][0].mean() >= 0.85, results[1000][0].mean()
        shrink = (results[1000][1] < results[200][1]).mean()
        assert shrink >= 0.90, shrink


def test_criterion_7_distribution_primitives():
    """Rectangle probabilities match the closed form, are monotone in the
    correlation, and the tail sampler matches the inverse-Mills moment."""
    with criterion(7, "distribution primitives"):
        vals = []
        for rho in np.linspace(-0.99, 0.99, 67):
            got = bvn_rect_prob(
                -np.inf, 0.0, -np.inf, 0.0, np.zeros(2),
                np.array([[1.0, rho], [rho, 1.0]]),
            )
            want = 0.25 + np.arcsin(rho) / (2 * np.pi)
            assert abs(got - want) <= 1e-9
            vals.append(got)
        assert np.all(np.diff(vals) >= 0)
        rng = np.random.default_rng(7)
        draws = truncated_normal(0.0, 1.0, 10.0, np.inf, rng, size=(100000,))
        assert abs(draws.mean() - 10.098093233962512) <= 0.01


def test_criterion_8_multirater_table_waived(tmp_path):
    """The multirater essay dataset (3 raters, 10 levels, n=198) is not
    redistributable and cannot be sourced in this environment; the
    criterion is waived and the waiver is recorded in a run manifest."""
    with criterion(8, "multirater table reproduction (WAIVED: data unavailable)"):
        import csv
        import json

        from ordmix.runio import RunConfig, run

        ds, _ = simulate_dataset(
            crossing_two_component((3, 3)), 60, np.random.default_rng(12)
        )
        with open(tmp_path / "data.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r1", "r2", "x1"])
            for i in range(ds.n):
                writer.writerow(
                    [int(ds.y[i, 0]), int(ds.y[i, 1]), repr(float(ds.x[i, 0]))]
                )
        config = RunConfig.from_dict(
            {
                "data": str(tmp_path / "data.csv"),
                "responses": [
                    {"column": "r1", "categories": 3},
                    {"column": "r2", "categories": 3},
                ],
                "covariates": ["x1"],
                "chain": {"n_components": 10, "n_iter": 200, "n_burn": 80,
                          "thin": 2, "seed": 3},
                "functionals": {
                    "agreement_tables": [
                        {"pairs": [["r1", "r2"]], "sets": {"H": [3], "L": [1]}}
                    ]
                },
            }
        )
        note = (
            "criterion 8 waived: the multirater essay ratings (3 raters, "
            "10 levels, 2 covariates, n=198) could not be sourced offline"
        )
        out = run(config, tmp_path / "run", waived_notes=[note])
        manifest = json.loads((out / "draws" / "manifest.json").read_text())
        assert manifest["waived"] == [note]
        assert (out / "tables" / "agreement_table_0.csv").exists()
