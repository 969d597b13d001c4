"""Core data model: ordinal datasets, cutoff grids, hyperpriors, sampler state.

Ordinal codes are 1-based everywhere at the API surface: response j with C_j
categories takes values in {1, ..., C_j}. Internal arrays may be 0-based but
never leak that convention.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """Raised when user-supplied data or configuration violates a contract."""


def _as_2d(a, dtype) -> np.ndarray:
    out = np.asarray(a, dtype=dtype)
    if out.ndim == 1:
        out = out[:, None]
    return out


@dataclass
class Dataset:
    """Observed ordinal responses and continuous covariates.

    y : (n, k) integer matrix of 1-based ordinal codes.
    x : (n, p) real matrix of continuous covariates (p may be 0).
    category_counts : length-k vector, C_j per ordinal dimension.
    ordinal_covariate_flags : length-k booleans marking latent dimensions
        that are covariates recorded on an ordinal scale rather than
        responses. The sampler treats them identically; only the
        functional layer distinguishes them.
    """

    y: np.ndarray
    x: np.ndarray
    category_counts: np.ndarray
    ordinal_covariate_flags: np.ndarray = None

    def __post_init__(self):
        self.y = _as_2d(self.y, np.int64)
        if self.x is None:
            self.x = np.zeros((self.y.shape[0], 0))
        else:
            x = np.asarray(self.x, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None] if x.size else np.zeros((self.y.shape[0], 0))
            self.x = x
        self.category_counts = np.atleast_1d(
            np.asarray(self.category_counts, dtype=np.int64)
        )
        if self.ordinal_covariate_flags is None:
            self.ordinal_covariate_flags = np.zeros(self.y.shape[1], dtype=bool)
        else:
            self.ordinal_covariate_flags = np.atleast_1d(
                np.asarray(self.ordinal_covariate_flags, dtype=bool)
            )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.k + self.p


def dataset_hash(dataset: Dataset) -> str:
    """Content hash of a dataset, recorded in run metadata."""
    h = hashlib.sha256()
    h.update(dataset.y.astype("<i8").tobytes())
    h.update(dataset.x.astype("<f8").tobytes())
    h.update(dataset.category_counts.astype("<i8").tobytes())
    h.update(dataset.ordinal_covariate_flags.astype(np.uint8).tobytes())
    return h.hexdigest()


def validate_dataset(raw: Dataset) -> Dataset:
    """Validate all Dataset invariants, returning the dataset unchanged.

    Raises ValidationError naming the offending row/column on the first
    violation found.
    """
    if not isinstance(raw, Dataset):
        raw = Dataset(*raw) if isinstance(raw, tuple) else Dataset(**raw)
    y, x, counts = raw.y, raw.x, raw.category_counts
    n, k = y.shape
    if n < 1:
        raise ValidationError("dataset must contain at least one observation")
    if k < 1:
        raise ValidationError("dataset must contain at least one ordinal column")
    if counts.shape != (k,):
        raise ValidationError(
            f"category_counts has length {counts.size}, expected k={k}"
        )
    if raw.ordinal_covariate_flags.shape != (k,):
        raise ValidationError(
            f"ordinal_covariate_flags has length "
            f"{raw.ordinal_covariate_flags.size}, expected k={k}"
        )
    if np.any(counts < 2):
        j = int(np.argmin(counts))
        raise ValidationError(
            f"category count {counts[j]} at column {j} is below 2"
        )
    if x.shape[0] != n:
        raise ValidationError(
            f"covariate matrix has {x.shape[0]} rows, responses have {n}"
        )
    if x.size and not np.all(np.isfinite(x)):
        i, j = np.argwhere(~np.isfinite(x))[0]
        raise ValidationError(f"non-finite covariate at row {i}, column {j}")
    low = np.argwhere(y < 1)
    if low.size:
        i, j = low[0]
        raise ValidationError(f"ordinal code below 1 at row {i}, column {j}")
    high = np.argwhere(y > counts[None, :])
    if high.size:
        i, j = high[0]
        raise ValidationError(
            f"ordinal code {y[i, j]} exceeds C_j={counts[j]} at row {i}, "
            f"column {j}"
        )
    return raw


class CutoffGrid:
    """Fixed, strictly increasing thresholds mapping latent reals to codes.

    Each ordinal dimension j holds a vector (g_0, ..., g_{C_j}) with
    g_0 = -inf and g_{C_j} = +inf; interior values are finite. The grid is
    never sampled: it is fixed for the life of a model fit.
    """

    def __init__(self, cutoffs):
        self.cutoffs = [np.asarray(c, dtype=np.float64) for c in cutoffs]
        for j, c in enumerate(self.cutoffs):
            if c.ndim != 1 or c.size < 3:
                raise ValidationError(
                    f"cutoff vector for dimension {j} must have length >= 3"
                )
            if not (np.isneginf(c[0]) and np.isposinf(c[-1])):
                raise ValidationError(
                    f"cutoff vector for dimension {j} must start at -inf and "
                    f"end at +inf"
                )
            if not np.all(np.isfinite(c[1:-1])):
                raise ValidationError(
                    f"interior cutoffs for dimension {j} must be finite"
                )
            if not np.all(np.diff(c) > 0):
                raise ValidationError(
                    f"cutoffs for dimension {j} are not strictly increasing"
                )

    @classmethod
    def from_interior(cls, interiors) -> "CutoffGrid":
        """Build a grid from finite interior cutoffs only."""
        return cls(
            [np.r_[-np.inf, np.asarray(c, dtype=float), np.inf] for c in interiors]
        )

    @property
    def k(self) -> int:
        return len(self.cutoffs)

    @property
    def category_counts(self) -> np.ndarray:
        return np.array([c.size - 1 for c in self.cutoffs], dtype=np.int64)

    def interior(self, j: int) -> np.ndarray:
        return self.cutoffs[j][1:-1]

    def cell_bounds(self, j: int, code) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper latent bounds of 1-based code(s) in dimension j."""
        code = np.asarray(code, dtype=np.int64)
        c = self.cutoffs[j]
        return c[code - 1], c[code]

    def discretize(self, j: int, z) -> np.ndarray:
        """Map latent values to 1-based codes: code l iff g_{l-1} < z <= g_l."""
        return np.searchsorted(self.interior(j), z, side="left") + 1

    def latent_ranges(self) -> np.ndarray:
        """Spread g_{C_j-1} - g_{1} per dimension (0.0 when C_j = 2)."""
        return np.array([c[-2] - c[1] for c in self.cutoffs])


def default_cutoffs(category_counts, half_width=None) -> CutoffGrid:
    """Equally spaced interior cutoffs, symmetric about zero.

    Dimension j gets C_j - 1 interior cutoffs spanning
    [-half_width, half_width]; C_j = 2 yields the single cutoff 0. When
    half_width is None it defaults to C_j / 2 per dimension, a numerically
    benign scale (the choice does not affect regression inference).
    """
    counts = np.atleast_1d(np.asarray(category_counts, dtype=np.int64))
    if np.any(counts < 2):
        raise ValidationError("every category count must be >= 2")
    interiors = []
    for c in counts:
        w = c / 2.0 if half_width is None else float(half_width)
        if w <= 0:
            raise ValidationError(f"half_width must be positive, got {w}")
        if c == 2:
            interiors.append(np.array([0.0]))
        else:
            interiors.append(np.linspace(-w, w, int(c) - 1))
    return CutoffGrid.from_interior(interiors)


@dataclass
class Hyperpriors:
    """Fixed constants of the base-measure hyperpriors.

    m ~ N(a_m, B_m); V ~ IW(a_V, B_V); S ~ W(a_S, B_S); atom covariances
    IW(nu, S); alpha ~ gamma(a_alpha, rate b_alpha). IW(df, scale) is
    parameterized so its mean is scale / (df - d - 1), and W(df, scale) has
    mean df * scale.
    """

    a_m: np.ndarray
    B_m: np.ndarray
    a_V: float
    B_V: np.ndarray
    a_S: float
    B_S: np.ndarray
    nu: float
    a_alpha: float
    b_alpha: float

    def __post_init__(self):
        self.a_m = np.atleast_1d(np.asarray(self.a_m, dtype=np.float64))
        self.B_m = np.asarray(self.B_m, dtype=np.float64)
        self.B_V = np.asarray(self.B_V, dtype=np.float64)
        self.B_S = np.asarray(self.B_S, dtype=np.float64)
        d = self.a_m.size
        for name, mat in (("B_m", self.B_m), ("B_V", self.B_V), ("B_S", self.B_S)):
            if mat.shape != (d, d):
                raise ValidationError(f"{name} must be {d}x{d}")
            if not np.allclose(mat, mat.T):
                raise ValidationError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise ValidationError(f"{name} is not positive definite") from None
        if not self.a_V > d + 1:
            raise ValidationError(f"a_V must exceed d+1={d + 1}")
        if not self.nu > d + 1:
            raise ValidationError(f"nu must exceed d+1={d + 1}")
        if self.a_S <= d - 1:
            raise ValidationError(f"a_S must exceed d-1={d - 1}")
        if self.a_alpha <= 0 or self.b_alpha <= 0:
            raise ValidationError("alpha prior parameters must be positive")

    @property
    def d(self) -> int:
        return self.a_m.size


def stick_weights(sticks: np.ndarray) -> np.ndarray:
    """Map stick fractions in (0,1)^{N-1} to an N-simplex weight vector.

    p_1 = v_1, p_l = v_l * prod_{r<l} (1 - v_r), p_N = 1 - sum_{l<N} p_l.
    """
    v = np.asarray(sticks, dtype=np.float64)
    one_minus = np.cumprod(1.0 - v)
    p = np.empty(v.size + 1)
    p[0] = v[0] if v.size else 1.0
    if v.size > 1:
        p[1:-1] = v[1:] * one_minus[:-1]
    p[-1] = 1.0 - p[:-1].sum()
    if p[-1] < 0.0:  # roundoff only; the analytic remainder is >= 0
        p[-1] = 0.0
    return p


def stick_weights_from_logs(sticks: np.ndarray, log_complements: np.ndarray) -> np.ndarray:
    """Stick-to-weight map using exact log(1 - v_l) values.

    Immune to the float saturation of v near 1: the last weight is
    exp(sum log(1 - v_l)) rather than a subtraction.
    """
    v = np.asarray(sticks, dtype=np.float64)
    logc = np.asarray(log_complements, dtype=np.float64)
    log_prefix = np.concatenate([[0.0], np.cumsum(logc)])
    p = np.empty(v.size + 1)
    p[:-1] = v * np.exp(log_prefix[:-1])
    p[-1] = np.exp(log_prefix[-1])
    return p


def sample_stick_betas(a, b, rng):
    """Beta(a, b) draws as (v, log(1 - v)) with the log part exact.

    Built from the gamma-ratio representation; the small-shape gamma uses
    the boost G(b) = G(b + 1) U^{1/b}, which stays finite in log space for
    arbitrarily small b. Needed because direct Beta(1, b) draws saturate to
    exactly 1.0 in double precision once b is small.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    g1 = rng.gamma(np.maximum(a, 1e-12))
    u = 1.0 - rng.random(b.shape)  # in (0, 1]
    log_g2 = np.log(rng.gamma(b + 1.0)) + np.log(u) / b
    log_1mv = log_g2 - np.logaddexp(np.log(g1), log_g2)
    log_1mv = np.minimum(log_1mv, -1e-300)  # keep v strictly positive
    v = -np.expm1(log_1mv)
    v = np.clip(v, np.finfo(float).tiny, 1.0 - 1e-16)
    return v, log_1mv


@dataclass
class MixtureState:
    """Full MCMC state owned by exactly one chain at a time."""

    sticks: np.ndarray  # (N-1,) in (0,1)
    weights: np.ndarray  # (N,) simplex
    mu: np.ndarray  # (N, d) atom means
    sigma: np.ndarray  # (N, d, d) atom covariances, SPD
    alloc: np.ndarray  # (n,) 0-based component labels (internal convention)
    z: np.ndarray  # (n, k) latent responses
    m: np.ndarray  # (d,)
    V: np.ndarray  # (d, d) SPD
    S: np.ndarray  # (d, d) SPD
    alpha: float
    # exact log(1 - v_l), kept alongside sticks to avoid saturation at 1
    log_stick_complements: np.ndarray = None
    # caches derived from sigma, refreshed by whoever rewrites sigma
    sigma_inv: np.ndarray = None
    sigma_logdet: np.ndarray = None
    pn_clamps: int = 0

    def __post_init__(self):
        if self.log_stick_complements is None and self.sticks is not None:
            self.log_stick_complements = np.log1p(-np.asarray(self.sticks))

    @property
    def N(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    def refresh_sigma_cache(self):
        try:
            chol = np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "an atom covariance is not positive definite"
            ) from None
        ci = np.linalg.inv(chol)
        self.sigma_inv = np.einsum("nji,njk->nik", ci, ci)
        diag = np.diagonal(chol, axis1=1, axis2=2)
        self.sigma_logdet = 2.0 * np.log(diag).sum(axis=1)


@dataclass
class AtomPartition:
    """Block views of one atom's (mu, sigma) split into z- and x-blocks."""

    mu_z: np.ndarray
    mu_x: np.ndarray
    sigma_zz: np.ndarray
    sigma_xx: np.ndarray
    sigma_zx: np.ndarray
    sigma_xz: np.ndarray

    @classmethod
    def split(cls, mu: np.ndarray, sigma: np.ndarray, k: int) -> "AtomPartition":
        return cls(
            mu_z=mu[:k].copy(),
            mu_x=mu[k:].copy(),
            sigma_zz=sigma[:k, :k].copy(),
            sigma_xx=sigma[k:, k:].copy(),
            sigma_zx=sigma[:k, k:].copy(),
            sigma_xz=sigma[k:, :k].copy(),
        )

    def reassemble(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact (bitwise) reconstruction of the original (mu, sigma)."""
        mu = np.concatenate([self.mu_z, self.mu_x])
        k = self.mu_z.size
        d = mu.size
        sigma = np.empty((d, d))
        sigma[:k, :k] = self.sigma_zz
        sigma[k:, k:] = self.sigma_xx
        sigma[:k, k:] = self.sigma_zx
        sigma[k:, :k] = self.sigma_xz
        return mu, sigma


@dataclass
class NormalMixture:
    """A concrete finite normal mixture over (z, x) with its cutoff grid.

    Serves both as a posterior snapshot (one MCMC draw of the truncated
    mixing distribution) and as a known ground-truth generator for
    simulation studies.
    """

    weights: np.ndarray  # (N,)
    mu: np.ndarray  # (N, d)
    sigma: np.ndarray  # (N, d, d)
    cutoffs: CutoffGrid
    k: int
    ordinal_covariate_flags: np.ndarray = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.ordinal_covariate_flags is None:
            self.ordinal_covariate_flags = np.zeros(self.k, dtype=bool)

    @property
    def N(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    @property
    def p(self) -> int:
        return self.d - self.k

    @property
    def category_counts(self) -> np.ndarray:
        return self.cutoffs.category_counts
