"""Posterior functionals computed from stored mixture draws: regression
curves, joint cell probabilities, inverse covariate densities, polychoric
correlation draws, and rater agreement summaries.

Probabilities for one or two ordinal dimensions are exact (normal CDF and
bivariate rectangle evaluations); three or more fall back to Monte Carlo.
Covariate-dependent weights are normalized over the truncated component
set at each covariate value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import NormalMixture, ValidationError
from .distributions import bvn_rect_prob_std, mvn_rect_prob

_FLAG_FLOOR = 1e-300


def default_grid(values, n_points: int = 50, pad: float = 0.05) -> np.ndarray:
    """Evaluation grid spanning the observed range, extended 5% each side."""
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo or 1.0
    return np.linspace(lo - pad * span, hi + pad * span, n_points)


@dataclass
class CurveEstimate:
    """Per-draw functional values over a grid with pointwise summaries."""

    grid: np.ndarray
    values: np.ndarray  # (n_draws, n_grid); NaN marks flagged draws
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_flagged: np.ndarray

    @classmethod
    def from_draws(cls, grid, values, level: float = 0.95) -> "CurveEstimate":
        values = np.asarray(values, dtype=float)
        tail = 0.5 * (1.0 - level)
        flagged = np.isnan(values)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            mean = np.nanmean(values, axis=0)
            lower = np.nanquantile(values, tail, axis=0)
            upper = np.nanquantile(values, 1.0 - tail, axis=0)
        return cls(
            grid=np.asarray(grid),
            values=values,
            mean=mean,
            lower=lower,
            upper=upper,
            n_flagged=flagged.sum(axis=0),
        )


@dataclass
class TableCell:
    target_dim: int
    target_set: str
    given_dim: int
    given_set: str
    mean: float
    lower: float
    upper: float
    n_flagged: int


@dataclass
class AgreementTable:
    """Conditional probabilities Pr(Y_a in A | Y_b in B) over draws."""

    cells: list
    values: dict  # (target_dim, target_set, given_dim, given_set) -> (T,)


# ---------------------------------------------------------------------------
# Component geometry helpers
# ---------------------------------------------------------------------------


def _x_indices(k: int, p: int, covariate) -> np.ndarray:
    if covariate is None:
        return k + np.arange(p)
    cov = np.atleast_1d(np.asarray(covariate, dtype=np.int64))
    if np.any(cov < 0) or np.any(cov >= p):
        raise ValidationError(f"covariate index out of range 0..{p - 1}")
    return k + cov


def _log_weights(log_p, mu, sigma, x_idx, xs):
    """Log of p_r times the component marginal density of the selected
    covariates at each row of xs; shape (N, G)."""
    n_comp = mu.shape[0]
    g = xs.shape[0]
    out = np.empty((n_comp, g))
    q = x_idx.size
    mu_x = mu[:, x_idx]
    if q == 1:
        sxx = sigma[:, x_idx[0], x_idx[0]]
        z2 = (xs[None, :, 0] - mu_x) ** 2 / sxx[:, None]
        out = -0.5 * (np.log(2.0 * np.pi * sxx)[:, None] + z2)
    else:
        for r in range(n_comp):
            sxx = sigma[r][np.ix_(x_idx, x_idx)]
            low = np.linalg.cholesky(sxx)
            dev = np.linalg.solve(low, (xs - mu_x[r]).T)
            out[r] = -0.5 * (
                q * np.log(2.0 * np.pi)
                + 2.0 * np.log(np.diag(low)).sum()
                + (dev**2).sum(axis=0)
            )
    return out + log_p[:, None]


def _normalize_weights(logw):
    peak = logw.max(axis=0, keepdims=True)
    w = np.exp(logw - peak)
    return w / w.sum(axis=0, keepdims=True)


def _conditional_blocks(mu, sigma, z_idx, x_idx):
    """Per-component regression pieces of the z_idx block on the x_idx block.

    Returns (mu_z, mu_x, beta, cond_cov) with shapes (N, z), (N, q),
    (N, z, q), (N, z, z)."""
    z_idx = np.atleast_1d(z_idx)
    mu_z = mu[:, z_idx]
    mu_x = mu[:, x_idx]
    szx = sigma[:, z_idx[:, None], x_idx[None, :]]
    sxx = sigma[:, x_idx[:, None], x_idx[None, :]]
    szz = sigma[:, z_idx[:, None], z_idx[None, :]]
    beta = np.linalg.solve(sxx, np.transpose(szx, (0, 2, 1)))
    beta = np.transpose(beta, (0, 2, 1))
    cond = szz - beta @ np.transpose(szx, (0, 2, 1))
    return mu_z, mu_x, beta, 0.5 * (cond + np.transpose(cond, (0, 2, 1)))


def _mixture_logp(weights):
    with np.errstate(divide="ignore"):
        return np.log(weights)


# ---------------------------------------------------------------------------
# Cell probabilities
# ---------------------------------------------------------------------------


def _component_rect_probs(mix: NormalMixture, l, means, cond_cov, n_samples, rng):
    """Rectangle probability of the cell of codes l under each component
    conditional N(means[r], cond_cov[r]); means has shape (N, k)."""
    k = mix.k
    lo = np.empty(k)
    hi = np.empty(k)
    for j in range(k):
        lo[j], hi[j] = mix.cutoffs.cell_bounds(j, int(l[j]))
    if k == 1:
        sd = np.sqrt(cond_cov[:, 0, 0])
        return ndtr((hi[0] - means[:, 0]) / sd) - ndtr((lo[0] - means[:, 0]) / sd)
    if k == 2:
        sa = np.sqrt(cond_cov[:, 0, 0])
        sb = np.sqrt(cond_cov[:, 1, 1])
        rho = cond_cov[:, 0, 1] / (sa * sb)
        return bvn_rect_prob_std(
            (lo[0] - means[:, 0]) / sa,
            (hi[0] - means[:, 0]) / sa,
            (lo[1] - means[:, 1]) / sb,
            (hi[1] - means[:, 1]) / sb,
            rho,
        )
    out = np.empty(means.shape[0])
    for r in range(means.shape[0]):
        out[r], _ = mvn_rect_prob(lo, hi, means[r], cond_cov[r],
                                  n_samples=n_samples, rng=rng)
    return out


def joint_cell_prob(mix: NormalMixture, l, x=None, n_samples: int = 20000,
                    rng=None) -> float:
    """Pr(Y = l | x) under one mixture draw: covariate-dependent weights
    times component rectangle probabilities.

    x = None (or p = 0) marginalizes all covariates exactly, reducing the
    weights to the mixture weights.
    """
    l = np.atleast_1d(np.asarray(l, dtype=np.int64))
    if l.size != mix.k:
        raise ValidationError(f"category vector must have length k={mix.k}")
    counts = mix.category_counts
    if np.any(l < 1) or np.any(l > counts):
        raise ValidationError("category code out of range")
    z_idx = np.arange(mix.k)
    log_p = _mixture_logp(mix.weights)
    if x is None or mix.p == 0:
        w = _normalize_weights(log_p[:, None])[:, 0]
        means = mix.mu[:, z_idx]
        cov = mix.sigma[:, z_idx[:, None], z_idx[None, :]]
    else:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        if xv.size != mix.p:
            raise ValidationError(f"x must have length p={mix.p}")
        x_idx = _x_indices(mix.k, mix.p, None)
        logw = _log_weights(log_p, mix.mu, mix.sigma, x_idx, xv[None, :])
        w = _normalize_weights(logw)[:, 0]
        mu_z, mu_x, beta, cond = _conditional_blocks(mix.mu, mix.sigma, z_idx, x_idx)
        means = mu_z + (beta @ (xv[None, :, None] - mu_x[:, :, None]))[:, :, 0]
        cov = cond
    probs = _component_rect_probs(mix, l, means, cov, n_samples, rng)
    return float(w @ probs)


# ---------------------------------------------------------------------------
# Marginal regression curves
# ---------------------------------------------------------------------------


def _curve_values_one_draw(weights, mu, sigma, cutoffs, k, j, l, xs, x_idx):
    log_p = _mixture_logp(weights)
    logw = _log_weights(log_p, mu, sigma, x_idx, xs)
    w = _normalize_weights(logw)
    mu_z, mu_x, beta, cond = _conditional_blocks(mu, sigma, np.array([j]), x_idx)
    dev = xs[None, :, :] - mu_x[:, None, :]
    means = mu_z[:, 0][:, None] + np.einsum("rzq,rgq->rg", beta, dev)
    sd = np.sqrt(cond[:, 0, 0])[:, None]
    lo, hi = cutoffs.cell_bounds(j, int(l))
    vals = ndtr((hi - means) / sd) - ndtr((lo - means) / sd)
    return (w * vals).sum(axis=0)


def marginal_curve(store, j: int, l: int, grid=None, covariate=0) -> CurveEstimate:
    """Posterior curve Pr(Y_j = l | x) over a covariate grid.

    With a single selected covariate the remaining ones are integrated out
    exactly through the component covariate marginals (both in the weights
    and in the conditioning). Pass covariate=None with a (G, p) grid to
    condition on full covariate vectors.
    """
    k, p = store.k, store.p
    if not 0 <= j < k:
        raise ValidationError(f"response index must lie in 0..{k - 1}")
    counts = store.cutoffs.category_counts
    if not 1 <= l <= counts[j]:
        raise ValidationError(f"category {l} out of range for dimension {j}")
    if p == 0:
        raise ValidationError("no covariates to form a regression curve over")
    x_idx = _x_indices(k, p, covariate)
    xs = np.asarray(grid, dtype=float)
    xs = xs[:, None] if xs.ndim == 1 else xs
    if xs.shape[1] != x_idx.size:
        raise ValidationError("grid width does not match selected covariates")
    n_draws = store.n_draws
    values = np.empty((n_draws, xs.shape[0]))
    for t in range(n_draws):
        values[t] = _curve_values_one_draw(
            store.weights[t], store.mu[t], store.sigma[t], store.cutoffs,
            k, j, l, xs, x_idx,
        )
    return CurveEstimate.from_draws(xs[:, 0] if xs.shape[1] == 1 else xs, values)


# ---------------------------------------------------------------------------
# Inverse relationships
# ---------------------------------------------------------------------------


def inverse_covariate_density(store, y, grid, covariate=0, n_samples: int = 20000,
                              rng=None) -> CurveEstimate:
    """Posterior draws of the covariate density given a full response
    configuration, f(x | Y = y), on a covariate grid.

    Draws whose response-configuration probability underflows are flagged
    (NaN) as unsupported rather than divided out.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    k, p = store.k, store.p
    if y.size != k:
        raise ValidationError(f"response configuration must have length k={k}")
    x_idx = _x_indices(k, p, covariate)
    if x_idx.size != 1:
        raise ValidationError("inverse densities are computed per covariate")
    xs = np.asarray(grid, dtype=float)[:, None]
    z_idx = np.arange(k)
    values = np.empty((store.n_draws, xs.shape[0]))
    for t in range(store.n_draws):
        mix = store.snapshot(t)
        log_p = _mixture_logp(mix.weights)
        dens = np.exp(_log_weights(np.zeros(mix.N), mix.mu, mix.sigma, x_idx, xs))
        mu_z, mu_x, beta, cond = _conditional_blocks(mix.mu, mix.sigma, z_idx, x_idx)
        dev = xs[None, :, :] - mu_x[:, None, :]
        means = mu_z[:, :, None] + np.einsum("rzq,rgq->rzg", beta, dev)
        rect_given_x = np.empty((mix.N, xs.shape[0]))
        for g in range(xs.shape[0]):
            rect_given_x[:, g] = _component_rect_probs(
                mix, y, means[:, :, g], cond, n_samples, rng
            )
        marg_means = mix.mu[:, z_idx]
        marg_cov = mix.sigma[:, z_idx[:, None], z_idx[None, :]]
        rect_marg = _component_rect_probs(mix, y, marg_means, marg_cov,
                                          n_samples, rng)
        denom = float(mix.weights @ rect_marg)
        if denom < _FLAG_FLOOR:
            values[t] = np.nan  # unsupported response configuration
            continue
        numer = (np.exp(log_p)[:, None] * dens * rect_given_x).sum(axis=0)
        values[t] = numer / denom
    return CurveEstimate.from_draws(xs[:, 0], values)


def ordinal_covariate_curve(store, j: int, l: int, covariate_dim: int,
                            levels=None) -> CurveEstimate:
    """Pr(Y_j = l | W = w) over levels of an ordinal covariate dimension.

    covariate_dim indexes the flagged latent dimension carrying the
    ordinal covariate; the joint cell probability in the numerator is an
    exact bivariate rectangle evaluation per component.
    """
    k = store.k
    if covariate_dim == j:
        raise ValidationError("covariate dimension must differ from response")
    if store.ordinal_covariate_flags is not None and not bool(
        np.asarray(store.ordinal_covariate_flags)[covariate_dim]
    ):
        raise ValidationError(
            f"dimension {covariate_dim} is not flagged as an ordinal covariate"
        )
    counts = store.cutoffs.category_counts
    if levels is None:
        levels = np.arange(1, counts[covariate_dim] + 1)
    levels = np.atleast_1d(np.asarray(levels, dtype=np.int64))
    lo_j, hi_j = store.cutoffs.cell_bounds(j, int(l))
    lo_w, hi_w = store.cutoffs.cell_bounds(covariate_dim, levels)
    values = np.empty((store.n_draws, levels.size))
    for t in range(store.n_draws):
        wts = store.weights[t]
        mu = store.mu[t]
        sig = store.sigma[t]
        sj = np.sqrt(sig[:, j, j])
        sw = np.sqrt(sig[:, covariate_dim, covariate_dim])
        rho = sig[:, j, covariate_dim] / (sj * sw)
        joint = bvn_rect_prob_std(
            (lo_j - mu[:, j, None]) / sj[:, None],
            (hi_j - mu[:, j, None]) / sj[:, None],
            (lo_w[None, :] - mu[:, covariate_dim, None]) / sw[:, None],
            (hi_w[None, :] - mu[:, covariate_dim, None]) / sw[:, None],
            rho[:, None],
        ).reshape(wts.size, levels.size)
        marg = ndtr((hi_w[None, :] - mu[:, covariate_dim, None]) / sw[:, None]) - ndtr(
            (lo_w[None, :] - mu[:, covariate_dim, None]) / sw[:, None]
        )
        num = wts @ joint
        den = wts @ marg
        bad = den < _FLAG_FLOOR
        den[bad] = 1.0
        vals = num / den
        vals[bad] = np.nan
        values[t] = vals
    return CurveEstimate.from_draws(levels.astype(float), values)


# ---------------------------------------------------------------------------
# Association and agreement
# ---------------------------------------------------------------------------


def polychoric_draw(mix: NormalMixture, a: int, b: int, rng) -> float:
    """One draw of corr(Z_a, Z_b): sample a component by weight and read
    its latent correlation."""
    if mix.k < 2:
        raise ValidationError("polychoric correlations need k >= 2")
    r = rng.choice(mix.N, p=mix.weights / mix.weights.sum())
    sig = mix.sigma[r]
    return float(sig[a, b] / np.sqrt(sig[a, a] * sig[b, b]))


def polychoric_draws(store, a: int, b: int, rng) -> np.ndarray:
    """One posterior-predictive correlation draw per stored snapshot."""
    out = np.empty(store.n_draws)
    for t in range(store.n_draws):
        out[t] = polychoric_draw(store.snapshot(t), a, b, rng)
    return out


def _band_cells(c_a: int, c_b: int, mode: str):
    if mode == "exact":
        top = min(c_a, c_b)
        return [(c, c) for c in range(1, top + 1)]
    if mode == "within-1":
        return [
            (ca, cb)
            for ca in range(1, c_a + 1)
            for cb in range(1, c_b + 1)
            if abs(ca - cb) <= 1
        ]
    raise ValidationError(f"unknown agreement mode {mode!r}")


def agreement_prob_curve(store, a: int, b: int, grid, covariate=0,
                         mode: str = "exact") -> CurveEstimate:
    """Pr(Y_a = Y_b | x) (or within one level) over a covariate grid,
    using exact bivariate rectangle probabilities per component."""
    k, p = store.k, store.p
    counts = store.cutoffs.category_counts
    cells = _band_cells(counts[a], counts[b], mode)
    x_idx = _x_indices(k, p, covariate)
    xs = np.asarray(grid, dtype=float)
    xs = xs[:, None] if xs.ndim == 1 else xs
    z_idx = np.array([a, b])
    lo_a = np.array([store.cutoffs.cell_bounds(a, ca)[0] for ca, _ in cells])
    hi_a = np.array([store.cutoffs.cell_bounds(a, ca)[1] for ca, _ in cells])
    lo_b = np.array([store.cutoffs.cell_bounds(b, cb)[0] for _, cb in cells])
    hi_b = np.array([store.cutoffs.cell_bounds(b, cb)[1] for _, cb in cells])
    values = np.empty((store.n_draws, xs.shape[0]))
    for t in range(store.n_draws):
        wts, mu, sig = store.weights[t], store.mu[t], store.sigma[t]
        logw = _log_weights(_mixture_logp(wts), mu, sig, x_idx, xs)
        w = _normalize_weights(logw)  # (N, G)
        mu_z, mu_x, beta, cond = _conditional_blocks(mu, sig, z_idx, x_idx)
        dev = xs[None, :, :] - mu_x[:, None, :]
        means = mu_z[:, :, None] + np.einsum("rzq,rgq->rzg", beta, dev)
        sa = np.sqrt(cond[:, 0, 0])[:, None, None]
        sb = np.sqrt(cond[:, 1, 1])[:, None, None]
        rho = (cond[:, 0, 1][:, None, None] / (sa * sb))
        ma = means[:, 0, :][:, :, None]
        mb = means[:, 1, :][:, :, None]
        rect = bvn_rect_prob_std(
            (lo_a[None, None, :] - ma) / sa,
            (hi_a[None, None, :] - ma) / sa,
            (lo_b[None, None, :] - mb) / sb,
            (hi_b[None, None, :] - mb) / sb,
            np.broadcast_to(rho, ma.shape),
        ).reshape(wts.size, xs.shape[0], len(cells))
        values[t] = (w * rect.sum(axis=2)).sum(axis=0)
    return CurveEstimate.from_draws(xs[:, 0] if xs.shape[1] == 1 else xs, values)


def _contiguous_runs(codes):
    codes = sorted(int(c) for c in codes)
    runs = []
    start = prev = codes[0]
    for c in codes[1:]:
        if c == prev + 1:
            prev = c
        else:
            runs.append((start, prev))
            start = prev = c
    runs.append((start, prev))
    return runs


def agreement_table(store, pairs, category_sets) -> AgreementTable:
    """Posterior table of Pr(Y_a in A | Y_b in B) for each ordered pair of
    dimensions in `pairs` and each pair of configured category sets.

    Covariates integrate out exactly because the component covariate
    marginals integrate to one, so only the (z_a, z_b) marginals enter.
    Conditioning events whose probability underflows are flagged.
    """
    counts = store.cutoffs.category_counts
    set_runs = {
        name: _contiguous_runs(codes) for name, codes in category_sets.items()
    }
    t_total = store.n_draws
    values = {}
    cells = []
    ordered = []
    for a, b in pairs:
        ordered.extend([(a, b), (b, a)])
    for tgt, giv in ordered:
        for tname, truns in set_runs.items():
            for gname, gruns in set_runs.items():
                vals = np.empty(t_total)
                for t in range(t_total):
                    wts, mu, sig = store.weights[t], store.mu[t], store.sigma[t]
                    st = np.sqrt(sig[:, tgt, tgt])
                    sg = np.sqrt(sig[:, giv, giv])
                    rho = sig[:, tgt, giv] / (st * sg)
                    joint = np.zeros(wts.size)
                    for t0, t1 in truns:
                        tlo = store.cutoffs.cell_bounds(tgt, t0)[0]
                        thi = store.cutoffs.cell_bounds(tgt, t1)[1]
                        for g0, g1 in gruns:
                            glo = store.cutoffs.cell_bounds(giv, g0)[0]
                            ghi = store.cutoffs.cell_bounds(giv, g1)[1]
                            joint += bvn_rect_prob_std(
                                (tlo - mu[:, tgt]) / st,
                                (thi - mu[:, tgt]) / st,
                                (glo - mu[:, giv]) / sg,
                                (ghi - mu[:, giv]) / sg,
                                rho,
                            )
                    marg = np.zeros(wts.size)
                    for g0, g1 in gruns:
                        glo = store.cutoffs.cell_bounds(giv, g0)[0]
                        ghi = store.cutoffs.cell_bounds(giv, g1)[1]
                        marg += ndtr((ghi - mu[:, giv]) / sg) - ndtr(
                            (glo - mu[:, giv]) / sg
                        )
                    den = float(wts @ marg)
                    vals[t] = (wts @ joint) / den if den >= _FLAG_FLOOR else np.nan
                key = (tgt, tname, giv, gname)
                values[key] = vals
                with np.errstate(all="ignore"):
                    cells.append(
                        TableCell(
                            target_dim=tgt, target_set=tname,
                            given_dim=giv, given_set=gname,
                            mean=float(np.nanmean(vals)),
                            lower=float(np.nanquantile(vals, 0.025)),
                            upper=float(np.nanquantile(vals, 0.975)),
                            n_flagged=int(np.isnan(vals).sum()),
                        )
                    )
    return AgreementTable(cells=cells, values=values)


# ---------------------------------------------------------------------------
# Latent score densities
# ---------------------------------------------------------------------------


@dataclass
class LatentDensity:
    """Histogram density of retained latent draws for one observation."""

    bin_edges: np.ndarray
    bin_centers: np.ndarray
    density: np.ndarray
    cutoffs: np.ndarray
    observation: int
    dim: int
    draws: np.ndarray


def latent_score_density(store, i: int, j: int, bins=None) -> LatentDensity:
    """Empirical (histogram) density of the stored latent scores z_ij,
    with the cutoff positions attached for plotting."""
    if store.z_retained is None or i not in store.retained_indices:
        raise ValidationError(
            f"latent draws for observation {i} were not retained; set "
            "retain_latent in the chain configuration"
        )
    pos = store.retained_indices.index(i)
    draws = store.z_retained[:, pos, j]
    if bins is None:
        bins = 50
    density, edges = np.histogram(draws, bins=bins, density=True)
    return LatentDensity(
        bin_edges=edges,
        bin_centers=0.5 * (edges[:-1] + edges[1:]),
        density=density,
        cutoffs=store.cutoffs.interior(j).copy(),
        observation=i,
        dim=j,
        draws=draws.copy(),
    )
