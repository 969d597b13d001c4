"""Oracles and simulation harness: synthetic data generation, the
constructive piecewise-constant density inverse to discretization, a
Monte Carlo cell-probability oracle, and the joint-distribution
("getting it right") sampler validation.

Everything here is an independent check of the analytic machinery; the
oracle paths deliberately avoid the code they are checking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal

from .data import (
    CutoffGrid,
    Dataset,
    Hyperpriors,
    MixtureState,
    NormalMixture,
    ValidationError,
    default_cutoffs,
    sample_stick_betas,
    stick_weights_from_logs,
)
from .distributions import sample_inv_wishart, sample_wishart
from .gibbs import (
    update_allocations,
    update_alpha,
    update_atoms,
    update_hyper_m,
    update_hyper_S,
    update_hyper_V,
    update_latents,
    update_weights,
)

TrueMixture = NormalMixture


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def simulate_dataset(truth: NormalMixture, n: int, rng,
                     ordinal_covariate_flags=None):
    """Draw n observations from a known mixture; returns (Dataset, z_truth)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    labels = rng.choice(truth.N, size=n, p=truth.weights / truth.weights.sum())
    w = np.empty((n, truth.d))
    for r in np.unique(labels):
        idx = np.flatnonzero(labels == r)
        chol = np.linalg.cholesky(truth.sigma[r])
        w[idx] = truth.mu[r] + rng.standard_normal((idx.size, truth.d)) @ chol.T
    z = w[:, : truth.k]
    x = w[:, truth.k :]
    y = np.empty((n, truth.k), dtype=np.int64)
    for j in range(truth.k):
        y[:, j] = truth.cutoffs.discretize(j, z[:, j])
    flags = (
        ordinal_covariate_flags
        if ordinal_covariate_flags is not None
        else truth.ordinal_covariate_flags
    )
    ds = Dataset(
        y=y, x=x, category_counts=truth.category_counts,
        ordinal_covariate_flags=flags,
    )
    return ds, z


def crossing_two_component(category_counts=(5,), separation: float = 1.2,
                           slope: float = 0.75) -> NormalMixture:
    """Two-component truth with opposite-signed latent-covariate
    correlations, producing non-monotone ordinal regression curves."""
    counts = tuple(int(c) for c in category_counts)
    k = len(counts)
    cutoffs = default_cutoffs(counts)
    d = k + 1
    mu = np.zeros((2, d))
    mu[0, :k] = -0.6
    mu[1, :k] = 0.6
    mu[0, k] = -separation
    mu[1, k] = separation
    sig = np.zeros((2, d, d))
    for j in range(k):
        sig[:, j, j] = 1.0
        sig[0, j, k] = sig[0, k, j] = slope
        sig[1, j, k] = sig[1, k, j] = -slope
    if k == 2:
        sig[:, 0, 1] = sig[:, 1, 0] = 0.3
    sig[:, k, k] = 1.5
    return NormalMixture(
        weights=np.array([0.5, 0.5]), mu=mu, sigma=sig, cutoffs=cutoffs, k=k
    )


def random_mixture(rng, k: int, p: int, n_components: int,
                   category_counts=None) -> NormalMixture:
    """Randomized well-conditioned mixture for property tests."""
    d = k + p
    counts = (
        tuple(int(c) for c in category_counts)
        if category_counts is not None
        else tuple(rng.integers(3, 6) for _ in range(k))
    )
    weights = rng.dirichlet(np.full(n_components, 2.0))
    mu = rng.normal(0.0, 1.2, size=(n_components, d))
    sigma = np.empty((n_components, d, d))
    for r in range(n_components):
        a = rng.normal(0.0, 0.4, size=(d, d))
        sigma[r] = a @ a.T + np.diag(rng.uniform(0.4, 1.2, size=d))
    return NormalMixture(
        weights=weights, mu=mu, sigma=sigma, cutoffs=default_cutoffs(counts), k=k
    )


# ---------------------------------------------------------------------------
# Constructive density inverse to discretization
# ---------------------------------------------------------------------------


@dataclass
class ConstructiveDensity:
    """Piecewise-constant-in-z density whose cell integrals reproduce a
    given mixed ordinal-continuous law exactly.

    Support in z is the box formed by the truncated grids: the infinite
    outer cells are replaced by finite bounds (b_j, d_j), and each cell of
    codes y carries constant height p0(x, y) / volume(cell).
    """

    cell_masses: np.ndarray  # shape (C_1, ..., C_k)
    gamma_star: list  # per-dimension finite breakpoints, length C_j + 1
    x_density: object = None  # optional callable (x, y_tuple) -> density

    @property
    def k(self) -> int:
        return len(self.gamma_star)

    def cell_volume(self, y) -> float:
        vol = 1.0
        for j, code in enumerate(y):
            g = self.gamma_star[j]
            vol *= g[code] - g[code - 1]
        return float(vol)

    def cell_of(self, z) -> tuple:
        code = []
        for j, zj in enumerate(np.atleast_1d(z)):
            g = self.gamma_star[j]
            if not (g[0] < zj <= g[-1]):
                return None
            code.append(int(np.searchsorted(g[1:-1], zj, side="left")) + 1)
        return tuple(code)

    def pdf(self, z, x=None) -> float:
        cell = self.cell_of(z)
        if cell is None:
            return 0.0
        idx = tuple(c - 1 for c in cell)
        mass = float(self.cell_masses[idx])
        if self.x_density is not None:
            if x is None:
                raise ValidationError("this density requires a covariate value")
            mass *= float(self.x_density(x, cell))
        return mass / self.cell_volume(cell)

    __call__ = pdf


def f0_construct(cell_masses, cutoffs: CutoffGrid, lower_bounds, upper_bounds,
                 x_density=None) -> ConstructiveDensity:
    """Build the evaluable piecewise-constant density mapping a mixed
    ordinal(-continuous) law back to a latent continuous density.

    cell_masses has shape (C_1, ..., C_k) and must sum to 1 (each optional
    covariate factor must itself integrate to 1). lower_bounds[j] replaces
    the -inf endpoint and must sit below the first interior cutoff;
    upper_bounds[j] symmetric above the last.
    """
    masses = np.asarray(cell_masses, dtype=float)
    k = cutoffs.k
    counts = cutoffs.category_counts
    if masses.shape != tuple(counts):
        raise ValidationError(
            f"cell mass array shape {masses.shape} does not match category "
            f"counts {tuple(counts)}"
        )
    if np.any(masses < 0):
        raise ValidationError("cell masses must be nonnegative")
    if abs(masses.sum() - 1.0) > 1e-9:
        raise ValidationError("cell masses must sum to 1")
    lower = np.atleast_1d(np.asarray(lower_bounds, dtype=float))
    upper = np.atleast_1d(np.asarray(upper_bounds, dtype=float))
    gamma_star = []
    for j in range(k):
        interior = cutoffs.interior(j)
        if not (np.isfinite(lower[j]) and lower[j] < interior[0]):
            raise ValidationError(
                f"lower bound for dimension {j} must be finite and below the "
                "first interior cutoff"
            )
        if not (np.isfinite(upper[j]) and upper[j] > interior[-1]):
            raise ValidationError(
                f"upper bound for dimension {j} must be finite and above the "
                "last interior cutoff"
            )
        gamma_star.append(np.r_[lower[j], interior, upper[j]])
    return ConstructiveDensity(
        cell_masses=masses, gamma_star=gamma_star, x_density=x_density
    )


# ---------------------------------------------------------------------------
# Monte Carlo cell-probability oracle
# ---------------------------------------------------------------------------


def mc_cell_prob_oracle(mix: NormalMixture, l, x=None, n_samples: int = 10**6,
                        rng=None, dims=None):
    """Estimate Pr(Y_dims = l | x) by exact-weight mixture sampling.

    Draws components with the covariate-dependent weights, draws latent
    responses from the component conditionals, bins them through the
    cutoffs, and reports the binomial standard error (floored at 1/n, the
    rule-of-three resolution of a saturated frequency). Deliberately built
    on scipy/np.linalg primitives rather than the analytic functional path
    it is used to check.
    """
    if n_samples < 10**4:
        raise ValidationError("oracle needs at least 1e4 samples")
    rng = np.random.default_rng() if rng is None else rng
    dims = tuple(range(mix.k)) if dims is None else tuple(dims)
    l = np.atleast_1d(np.asarray(l, dtype=np.int64))
    if l.size != len(dims):
        raise ValidationError("codes and dims must have equal length")
    k, p = mix.k, mix.p
    if x is None or p == 0:
        w = mix.weights / mix.weights.sum()
        cond_mean = [mix.mu[r, :k] for r in range(mix.N)]
        cond_cov = [mix.sigma[r][:k, :k] for r in range(mix.N)]
    else:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        dens = np.array(
            [
                multivariate_normal.pdf(
                    xv, mean=mix.mu[r, k:], cov=mix.sigma[r][k:, k:],
                    allow_singular=False,
                )
                for r in range(mix.N)
            ]
        )
        w = mix.weights * dens
        w = w / w.sum()
        cond_mean, cond_cov = [], []
        for r in range(mix.N):
            sxx_inv = np.linalg.inv(mix.sigma[r][k:, k:])
            szx = mix.sigma[r][:k, k:]
            cond_mean.append(mix.mu[r, :k] + szx @ sxx_inv @ (xv - mix.mu[r, k:]))
            cond_cov.append(mix.sigma[r][:k, :k] - szx @ sxx_inv @ szx.T)
    counts = rng.multinomial(n_samples, w)
    hits = 0
    lo = np.array([mix.cutoffs.cell_bounds(j, int(c))[0] for j, c in zip(dims, l)])
    hi = np.array([mix.cutoffs.cell_bounds(j, int(c))[1] for j, c in zip(dims, l)])
    sel = np.asarray(dims, dtype=np.int64)
    for r in range(mix.N):
        if counts[r] == 0:
            continue
        chol = np.linalg.cholesky(cond_cov[r])
        z = cond_mean[r] + rng.standard_normal((counts[r], k)) @ chol.T
        zc = z[:, sel]
        hits += int(np.all((zc > lo) & (zc <= hi), axis=1).sum())
    est = hits / n_samples
    se = float(np.sqrt(max(est * (1.0 - est), 1.0 / n_samples) / n_samples))
    return est, se


# ---------------------------------------------------------------------------
# Joint-distribution sampler validation
# ---------------------------------------------------------------------------


@dataclass
class GewekeConfig:
    """Small model used by the joint-distribution check."""

    n: int = 8
    k: int = 1
    p: int = 1
    n_components: int = 3
    category_counts: tuple = (3,)
    n_cycles: int = 100000
    seed: int = 0

    def build(self):
        d = self.k + self.p
        cutoffs = default_cutoffs(self.category_counts)
        # dispersed but light-tailed constants so every monitored moment
        # is finite (inverse-Wishart variances need df > d + 3)
        diag = 0.5 * np.eye(d)
        hyper = Hyperpriors(
            a_m=np.zeros(d), B_m=diag, a_V=d + 6.0, B_V=diag * (d + 5.0),
            a_S=d + 6.0, B_S=diag / (d + 6.0), nu=d + 6.0,
            a_alpha=2.0, b_alpha=2.0,
        )
        return cutoffs, hyper


@dataclass
class GewekeReport:
    names: list
    z: np.ndarray
    mean_marginal: np.ndarray
    mean_successive: np.ndarray
    n_cycles: int
    corrupt: str = None

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def passed(self, threshold: float = 4.0) -> bool:
        return bool(np.all(np.abs(self.z) < threshold))

    def summary(self) -> str:
        lines = [
            f"{name}: z={zz:+.2f} (marginal {mm:.4f}, successive {ms:.4f})"
            for name, zz, mm, ms in zip(
                self.names, self.z, self.mean_marginal, self.mean_successive
            )
        ]
        return "\n".join(lines)


def _prior_joint_draw(hyper: Hyperpriors, cutoffs: CutoffGrid, n: int,
                      n_components: int, k: int, rng):
    d = hyper.d
    m = hyper.a_m + np.linalg.cholesky(hyper.B_m) @ rng.standard_normal(d)
    v = sample_inv_wishart(hyper.a_V, hyper.B_V, rng)
    s = sample_wishart(hyper.a_S, hyper.B_S, rng)
    alpha = rng.gamma(hyper.a_alpha, 1.0 / hyper.b_alpha)
    chol_v = np.linalg.cholesky(v)
    mu = m[None, :] + rng.standard_normal((n_components, d)) @ chol_v.T
    sigma = np.stack(
        [sample_inv_wishart(hyper.nu, s, rng) for _ in range(n_components)]
    )
    sticks, log_1mv = sample_stick_betas(
        np.ones(n_components - 1), np.full(n_components - 1, alpha), rng
    )
    weights = stick_weights_from_logs(sticks, log_1mv)
    state = MixtureState(
        sticks=sticks, weights=weights, mu=mu, sigma=sigma,
        alloc=np.zeros(n, dtype=np.int64), z=np.zeros((n, k)),
        m=m, V=v, S=s, alpha=alpha, log_stick_complements=log_1mv,
    )
    state.refresh_sigma_cache()
    dataset = Dataset(
        y=np.ones((n, k), dtype=np.int64), x=np.zeros((n, d - k)),
        category_counts=cutoffs.category_counts,
    )
    _regenerate_data(state, dataset, cutoffs, rng)
    return state, dataset


def _regenerate_data(state: MixtureState, dataset: Dataset, cutoffs: CutoffGrid,
                     rng):
    """Redraw (alloc, z, x, y) from the current parameters in place."""
    n, k = dataset.n, dataset.k
    p = state.weights / state.weights.sum()
    state.alloc = rng.choice(state.N, size=n, p=p)
    w = np.empty((n, state.d))
    for r in np.unique(state.alloc):
        idx = np.flatnonzero(state.alloc == r)
        chol = np.linalg.cholesky(state.sigma[r])
        w[idx] = state.mu[r] + rng.standard_normal((idx.size, state.d)) @ chol.T
    state.z = w[:, :k]
    dataset.x[:, :] = w[:, k:]
    for j in range(k):
        dataset.y[:, j] = cutoffs.discretize(j, state.z[:, j])


def _monitored(state: MixtureState, dataset: Dataset) -> dict:
    z = state.z
    x = dataset.x
    y = dataset.y
    w = state.weights
    ent = float(-(w * np.log(np.maximum(w, 1e-300))).sum())
    vals = {}
    for i, mi in enumerate(state.m):
        vals[f"m_{i}"] = float(mi)
    vals["tr_V"] = float(np.trace(state.V))
    vals["log_V00"] = float(np.log(state.V[0, 0]))
    vals["log_V11"] = float(np.log(state.V[1, 1]))
    vals["tr_S"] = float(np.trace(state.S))
    vals["log_S00"] = float(np.log(state.S[0, 0]))
    vals["log_S11"] = float(np.log(state.S[1, 1]))
    vals["alpha"] = float(state.alpha)
    vals["log_alpha"] = float(np.log(state.alpha))
    vals["stick_0"] = float(state.sticks[0])
    vals["weight_0"] = float(w[0])
    vals["weight_last"] = float(w[-1])
    vals["weight_entropy"] = ent
    vals["atom_mu_mean_0"] = float(state.mu[:, 0].mean())
    vals["atom_mu_mean_1"] = float(state.mu[:, 1].mean())
    vals["atom_logvar_z"] = float(np.log(state.sigma[:, 0, 0]).mean())
    vals["atom_logvar_x"] = float(np.log(state.sigma[:, 1, 1]).mean())
    vals["atom_cov_zx"] = float(state.sigma[:, 0, 1].mean())
    vals["z_mean"] = float(z.mean())
    vals["z_sq_mean"] = float((z**2).mean())
    vals["x_mean"] = float(x.mean())
    vals["x_sq_mean"] = float((x**2).mean())
    vals["zx_cross"] = float((z[:, 0] * x[:, 0]).mean())
    vals["y_mean"] = float(y.mean())
    vals["y_frac_low"] = float((y == 1).mean())
    vals["y_frac_high"] = float((y == dataset.category_counts[0]).mean())
    return vals


def _batch_se(x: np.ndarray, n_batches: int = 50) -> float:
    n = x.size
    b = max(n // n_batches, 1)
    used = (n // b) * b
    means = x[:used].reshape(-1, b).mean(axis=1)
    if means.size < 2:
        return float("inf")
    return float(means.std(ddof=1) / np.sqrt(means.size))


def _update_alpha_corrupted(state, hyper, rng):
    # deliberate off-by-one in the gamma shape (negative control)
    pn = max(float(state.weights[-1]), np.finfo(float).tiny)
    rate = hyper.b_alpha - np.log(pn)
    state.alpha = rng.gamma(hyper.a_alpha + state.N, 1.0 / rate)
    return state


def geweke_check(config: GewekeConfig = None, corrupt: str = None) -> GewekeReport:
    """Compare marginal-conditional and successive-conditional simulation of
    the joint (parameters, data) law; matching means per monitored
    functional validate every full-conditional update.

    corrupt="alpha_shape" injects a known bug as a negative control.
    """
    config = config or GewekeConfig()
    cutoffs, hyper = config.build()
    rng = np.random.default_rng(config.seed)
    alpha_update = update_alpha
    if corrupt == "alpha_shape":
        alpha_update = _update_alpha_corrupted
    elif corrupt is not None:
        raise ValidationError(f"unknown corruption {corrupt!r}")

    # marginal-conditional side: iid draws from the joint law
    mc_rows = []
    for _ in range(config.n_cycles):
        state, dataset = _prior_joint_draw(
            hyper, cutoffs, config.n, config.n_components, config.k, rng
        )
        mc_rows.append(_monitored(state, dataset))

    # successive-conditional side: Gibbs sweep then data regeneration
    state, dataset = _prior_joint_draw(
        hyper, cutoffs, config.n, config.n_components, config.k, rng
    )
    sc_rows = []
    for _ in range(config.n_cycles):
        update_latents(state, dataset, cutoffs, rng)
        update_allocations(state, dataset, rng)
        update_atoms(state, dataset, hyper, rng)
        update_weights(state, rng)
        update_hyper_m(state, hyper, rng)
        update_hyper_V(state, hyper, rng)
        update_hyper_S(state, hyper, rng)
        alpha_update(state, hyper, rng)
        _regenerate_data(state, dataset, cutoffs, rng)
        sc_rows.append(_monitored(state, dataset))

    names = list(mc_rows[0].keys())
    z = np.empty(len(names))
    mean_mc = np.empty(len(names))
    mean_sc = np.empty(len(names))
    for i, name in enumerate(names):
        a = np.array([row[name] for row in mc_rows])
        b = np.array([row[name] for row in sc_rows])
        se = np.sqrt(_batch_se(a) ** 2 + _batch_se(b) ** 2)
        mean_mc[i] = a.mean()
        mean_sc[i] = b.mean()
        z[i] = (mean_mc[i] - mean_sc[i]) / se if se > 0 else 0.0
    return GewekeReport(
        names=names, z=z, mean_marginal=mean_mc, mean_successive=mean_sc,
        n_cycles=config.n_cycles, corrupt=corrupt,
    )


def all_category_vectors(category_counts):
    """Iterate every 1-based category vector of the outcome space."""
    ranges = [range(1, int(c) + 1) for c in category_counts]
    return itertools.product(*ranges)
