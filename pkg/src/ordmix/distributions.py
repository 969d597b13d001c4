"""Probability primitives: multivariate normal density, conditioning and
rectangle probabilities, truncated normal sampling, Wishart families.

All samplers are pure functions of the supplied numpy Generator, so runs
are reproducible from the seed and safe to parallelize with independent
rng streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtr, ndtri

LOG_2PI = np.log(2.0 * np.pi)

# Standardized bound beyond which truncated-normal sampling switches from
# CDF inversion to tail rejection.
_TAIL_CUT = 6.0


# ---------------------------------------------------------------------------
# Multivariate normal density and conditioning
# ---------------------------------------------------------------------------


def mvn_logpdf(w, mu, sigma) -> float:
    """Exact log density of N(mu, sigma) at w via Cholesky factorization.

    Raises numpy.linalg.LinAlgError when sigma is not positive definite.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    if w.size != d or sigma.shape != (d, d):
        raise ValueError("dimension mismatch between w, mu, sigma")
    chol = np.linalg.cholesky(sigma)
    u = solve_triangular(chol, w - mu, lower=True)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (d * LOG_2PI + logdet + u @ u))


@dataclass
class GaussianConditional:
    """Law of the free block of a multivariate normal given the other block."""

    cond_mean: np.ndarray
    cond_cov: np.ndarray


def schur_condition(mu, sigma, given_indices):
    """Schur-complement pieces for conditioning on a block.

    Returns (free_idx, mu_free, mu_given, beta, cond_cov) where the
    conditional mean at observed g is mu_free + beta @ (g - mu_given) and
    cond_cov = sigma_ff - beta @ sigma_gf.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    given = np.atleast_1d(np.asarray(given_indices, dtype=np.int64))
    if given.size == 0:
        raise ValueError("given_indices must be nonempty")
    if np.unique(given).size != given.size:
        raise ValueError("given_indices contains duplicates")
    if np.any(given < 0) or np.any(given >= d):
        raise ValueError("given_indices out of range")
    if given.size == d:
        raise ValueError("cannot condition on every dimension")
    mask = np.ones(d, dtype=bool)
    mask[given] = False
    free = np.flatnonzero(mask)
    s_gg = sigma[np.ix_(given, given)]
    s_fg = sigma[np.ix_(free, given)]
    s_ff = sigma[np.ix_(free, free)]
    try:
        factor = cho_factor(s_gg, lower=True)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("conditioning block is singular") from None
    beta = cho_solve(factor, s_fg.T).T
    cond_cov = s_ff - beta @ s_fg.T
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    return free, mu[free], mu[given], beta, cond_cov


def mvn_condition(mu, sigma, given_indices, given_values) -> GaussianConditional:
    """Conditional law of the free block given values of the other block."""
    _, mu_f, mu_g, beta, cond_cov = schur_condition(mu, sigma, given_indices)
    g = np.atleast_1d(np.asarray(given_values, dtype=float))
    if g.size != mu_g.size:
        raise ValueError("given_values has wrong length")
    return GaussianConditional(cond_mean=mu_f + beta @ (g - mu_g), cond_cov=cond_cov)


# ---------------------------------------------------------------------------
# Truncated normal sampling
# ---------------------------------------------------------------------------


def _tail_reject(lo, hi, rng):
    """Draws standard normals conditioned to (lo, hi] with lo >= _TAIL_CUT.

    Exponential rejection for wide intervals, uniform rejection for narrow
    ones; lo/hi are 1-D arrays.
    """
    out = np.empty(lo.shape)
    lam = 0.5 * (lo + np.sqrt(lo * lo + 4.0))
    narrow = (hi - lo) * lam < 0.35
    for mask, use_uniform in ((narrow, True), (~narrow, False)):
        idx = np.flatnonzero(mask)
        while idx.size:
            if use_uniform:
                z = rng.uniform(lo[idx], hi[idx])
                logacc = 0.5 * (lo[idx] ** 2 - z * z)
            else:
                z = lo[idx] + rng.exponential(1.0, idx.size) / lam[idx]
                logacc = -0.5 * (z - lam[idx]) ** 2
                logacc[z > hi[idx]] = -np.inf
            accept = np.log(rng.random(idx.size)) < logacc
            out[idx[accept]] = z[accept]
            idx = idx[~accept]
    return out


def truncated_normal(mu, var, lo, hi, rng, size=None) -> np.ndarray:
    """Vectorized draws from N(mu, var) conditioned to (lo, hi].

    Bounds may be infinite; standardized bounds out to about 38 are safe.
    CDF inversion covers the body, with exponential/uniform rejection
    beyond standardized bound 6.
    """
    mu, var, lo, hi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (mu, var, lo, hi))
    )
    if size is not None and np.shape(mu) != tuple(np.atleast_1d(size)):
        mu, var, lo, hi = (np.broadcast_to(a, size) for a in (mu, var, lo, hi))
    shape = mu.shape
    mu, var, lo, hi = (np.ravel(a) for a in (mu, var, lo, hi))
    if np.any(var <= 0):
        raise ValueError("variance must be positive")
    if np.any(~(lo < hi)):
        raise ValueError("empty truncation interval (lo >= hi)")
    sd = np.sqrt(var)
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    # mirror so the interval mass sits in the left half; sample there
    flip = a > -b
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    z = np.empty(a2.shape)
    tail = b2 <= -_TAIL_CUT
    if np.any(tail):
        z[tail] = -_tail_reject(-b2[tail], -a2[tail], rng)
    body = ~tail
    if np.any(body):
        pa = ndtr(a2[body])
        pb = ndtr(b2[body])
        u = pa + rng.random(pa.shape) * (pb - pa)
        zb = ndtri(u)
        bad = ~np.isfinite(zb)
        if np.any(bad):  # interval narrower than CDF resolution
            zb[bad] = 0.5 * (a2[body][bad] + b2[body][bad])
        z[body] = np.clip(zb, a2[body], b2[body])
    z = np.where(flip, -z, z)
    return (mu + sd * z).reshape(shape)


def sample_truncated_normal(mu: float, var: float, lo: float, hi: float, rng) -> float:
    """One draw from N(mu, var) conditioned to (lo, hi]."""
    return float(truncated_normal(mu, var, lo, hi, rng, size=(1,))[0])


# ---------------------------------------------------------------------------
# Bivariate normal rectangle probabilities (Drezner-Wesolowsky/Genz scheme)
# ---------------------------------------------------------------------------

# 20-point Gauss-Legendre rule on (0, 1), mirrored to (1 -/+ x) form
_GL_X = np.array(
    [
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
        0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
        0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
        0.07652652113349733,
    ]
)
_GL_W = np.array(
    [
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]
)
_GL_NODES = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_GL_WEIGHTS = np.concatenate([_GL_W, _GL_W])


def _bvnu_finite(h, k, r):
    """P(X > h, Y > k) for standard bivariate normals, finite h, k, |r| < 1.

    Fixed-order Gauss-Legendre quadrature after Drezner-Wesolowsky, with
    the Genz reformulation for |r| > 0.925; absolute accuracy ~1e-14.
    """
    out = np.empty(h.shape)
    mod = np.abs(r) <= 0.925
    if np.any(mod):
        hm, km, rm = h[mod], k[mod], r[mod]
        hk = hm * km
        hs = 0.5 * (hm * hm + km * km)
        asr = 0.5 * np.arcsin(rm)
        sn = np.sin(asr[:, None] * _GL_NODES)
        f = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
        out[mod] = f @ _GL_WEIGHTS * asr / (2.0 * np.pi) + ndtr(-hm) * ndtr(-km)
    ext = ~mod
    if np.any(ext):
        he, ke, re = h[ext].copy(), k[ext].copy(), r[ext]
        neg = re < 0
        ke[neg] = -ke[neg]
        hk = he * ke
        bvn = np.zeros(he.shape)
        ass = (1.0 - re) * (1.0 + re)
        aa = np.sqrt(ass)
        bs = (he - ke) ** 2
        c = (4.0 - hk) / 8.0
        dd = (12.0 - hk) / 16.0
        asr = -0.5 * (bs / ass + hk)
        w1 = asr > -100.0
        bvn[w1] = (
            aa[w1]
            * np.exp(asr[w1])
            * (
                1.0
                - c[w1] * (bs[w1] - ass[w1]) * (1.0 - dd[w1] * bs[w1] / 5.0) / 3.0
                + c[w1] * dd[w1] * ass[w1] ** 2 / 5.0
            )
        )
        w2 = hk > -100.0
        if np.any(w2):
            b = np.sqrt(bs[w2])
            sp = np.sqrt(2.0 * np.pi) * ndtr(-b / aa[w2])
            bvn[w2] -= (
                np.exp(-0.5 * hk[w2])
                * sp
                * b
                * (1.0 - c[w2] * bs[w2] * (1.0 - dd[w2] * bs[w2] / 5.0) / 3.0)
            )
        a2 = 0.5 * aa
        xs = (a2[:, None] * _GL_NODES) ** 2
        rs = np.sqrt(1.0 - xs)
        asr2 = -0.5 * (bs[:, None] / xs + hk[:, None])
        sp2 = 1.0 + c[:, None] * xs * (1.0 + dd[:, None] * xs)
        ep = np.exp(-0.5 * hk[:, None] * xs / (1.0 + rs) ** 2) / rs
        terms = np.where(asr2 > -100.0, np.exp(asr2) * (ep - sp2), 0.0)
        bvn += a2 * (terms @ _GL_WEIGHTS)
        bvn = -bvn / (2.0 * np.pi)
        pos = re > 0
        bvn[pos] += ndtr(-np.maximum(he[pos], ke[pos]))
        negmask = ~pos
        hige = he >= ke
        bvn[negmask & hige] = -bvn[negmask & hige]
        rest = negmask & ~hige
        if np.any(rest):
            lo_side = he[rest] < 0
            L = np.where(
                lo_side,
                ndtr(ke[rest]) - ndtr(he[rest]),
                ndtr(-he[rest]) - ndtr(-ke[rest]),
            )
            bvn[rest] = L - bvn[rest]
        out[ext] = bvn
    return np.clip(out, 0.0, 1.0)


def bvn_upper(h, k, r) -> np.ndarray:
    """P(X > h, Y > k) under a standard bivariate normal with correlation r.

    Fully vectorized; h and k may be +/-inf, and r may include +/-1.
    """
    h, k, r = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (h, k, r))
    )
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel()
    out = np.empty(h.shape)
    done = np.zeros(h.shape, dtype=bool)

    zero = np.isposinf(h) | np.isposinf(k)
    out[zero] = 0.0
    done |= zero
    h_ninf = np.isneginf(h) & ~done
    both = h_ninf & np.isneginf(k)
    out[both] = 1.0
    done |= both
    h_only = h_ninf & ~done
    out[h_only] = ndtr(-k[h_only])
    done |= h_only
    k_only = np.isneginf(k) & ~done
    out[k_only] = ndtr(-h[k_only])
    done |= k_only

    como = (r == 1.0) & ~done
    out[como] = ndtr(-np.maximum(h[como], k[como]))
    done |= como
    anti = (r == -1.0) & ~done
    out[anti] = np.maximum(0.0, ndtr(-h[anti]) - ndtr(k[anti]))
    done |= anti

    rest = ~done
    if np.any(rest):
        out[rest] = _bvnu_finite(h[rest], k[rest], r[rest])
    return out


def bvn_rect_prob_std(a_lo, a_hi, b_lo, b_hi, rho) -> np.ndarray:
    """Standardized rectangle probability P(a_lo < X <= a_hi, b_lo < Y <= b_hi).

    Inclusion-exclusion over four upper-orthant evaluations; vectorized.
    """
    p = (
        bvn_upper(a_lo, b_lo, rho)
        - bvn_upper(a_hi, b_lo, rho)
        - bvn_upper(a_lo, b_hi, rho)
        + bvn_upper(a_hi, b_hi, rho)
    )
    return np.clip(p, 0.0, 1.0)


def bvn_rect_prob(a_lo, a_hi, b_lo, b_hi, mu, sigma) -> float:
    """P((Z1, Z2) in a rectangle) under N(mu, sigma), sigma SPD 2x2."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (a_lo < a_hi and b_lo < b_hi):
        raise ValueError("rectangle bounds must satisfy lo < hi")
    s1, s2 = np.sqrt(sigma[0, 0]), np.sqrt(sigma[1, 1])
    if not (s1 > 0 and s2 > 0):
        raise np.linalg.LinAlgError("sigma is not positive definite")
    rho = sigma[0, 1] / (s1 * s2)
    if not np.abs(rho) <= 1.0:
        raise np.linalg.LinAlgError("sigma is not positive definite")
    res = bvn_rect_prob_std(
        (a_lo - mu[0]) / s1,
        (a_hi - mu[0]) / s1,
        (b_lo - mu[1]) / s2,
        (b_hi - mu[1]) / s2,
        rho,
    )
    return float(res[0] if res.shape else res)


def mvn_rect_prob(lo, hi, mu, sigma, n_samples=0, rng=None):
    """Rectangle probability for N(mu, sigma); exact for d <= 2, Monte Carlo
    with antithetic pairs for d >= 3.

    Returns (estimate, std_error); std_error is 0.0 on the exact paths.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    if np.any(~(lo < hi)):
        raise ValueError("rectangle bounds must satisfy lo < hi componentwise")
    if d == 1:
        sd = np.sqrt(sigma[0, 0])
        p = ndtr((hi[0] - mu[0]) / sd) - ndtr((lo[0] - mu[0]) / sd)
        return float(max(p, 0.0)), 0.0
    if d == 2:
        return bvn_rect_prob(lo[0], hi[0], lo[1], hi[1], mu, sigma), 0.0
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2 for dimension >= 3")
    half = (int(n_samples) + 1) // 2
    chol = np.linalg.cholesky(sigma)
    u = rng.standard_normal((half, d))
    shift = u @ chol.T
    inside_pos = np.all((mu + shift > lo) & (mu + shift <= hi), axis=1)
    inside_neg = np.all((mu - shift > lo) & (mu - shift <= hi), axis=1)
    pairs = 0.5 * (inside_pos + inside_neg)
    est = float(pairs.mean())
    se = float(pairs.std(ddof=1) / np.sqrt(half)) if half > 1 else float("nan")
    return est, se


# ---------------------------------------------------------------------------
# Wishart / inverse-Wishart sampling (Bartlett construction)
# ---------------------------------------------------------------------------


def _bartlett_factor(df: float, d: int, rng) -> np.ndarray:
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    if d > 1:
        a[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    return a


def _chol_or_raise(mat, what: str):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(f"{what} is not positive definite") from None


def sample_wishart(df: float, scale, rng) -> np.ndarray:
    """Wishart draw with mean df * scale; requires df > d - 1."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise ValueError(f"wishart df must exceed d-1={d - 1}, got {df}")
    chol = _chol_or_raise(scale, "scale")
    la = chol @ _bartlett_factor(df, d, rng)
    return la @ la.T


def sample_inv_wishart(df: float, scale, rng) -> np.ndarray:
    """Inverse-Wishart draw with mean scale / (df - d - 1).

    IW(df, scale) is the law of the inverse of a Wishart(df, scale^{-1})
    draw; df > d - 1 is required to sample.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise ValueError(f"inverse-wishart df must exceed d-1={d - 1}, got {df}")
    chol = _chol_or_raise(scale, "scale")
    inv_scale = cho_solve((chol, True), np.eye(d))
    w = sample_wishart(df, inv_scale, rng)
    out = cho_solve((_chol_or_raise(w, "wishart draw"), True), np.eye(d))
    return 0.5 * (out + out.T)
