"""Blocked Gibbs sampler for the truncated stick-breaking normal mixture.

One sweep updates, in order: latent responses, allocations, atoms, weights,
the base-measure hyperparameters (m, V, S), and the precision alpha. The
truncation replaces the countable mixture with N components; empty
components are refreshed from the base measure every sweep, which is what
makes the blocked scheme valid.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .data import (
    CutoffGrid,
    Dataset,
    Hyperpriors,
    MixtureState,
    NormalMixture,
    ValidationError,
    dataset_hash,
    sample_stick_betas,
    stick_weights,
    stick_weights_from_logs,
    validate_dataset,
)
from .distributions import truncated_normal
from .sqrtfree import (
    FreeSigmaPriors,
    sample_restricted_sigma,
    update_restricted_sigma,
)

LOG_2PI = np.log(2.0 * np.pi)


class ChainError(RuntimeError):
    """Pathological sampler state (underflow or factorization failure)."""


@dataclass
class ChainConfig:
    """Run-length and reproducibility settings for one chain."""

    n_components: int = 50
    n_iter: int = 20000
    n_burn: int = 5000
    thin: int = 2
    seed: int = 0
    init_mode: str = "prior-draw"
    retain_latent: tuple = ()
    debug_checks: bool = False

    def __post_init__(self):
        # n_components = 1 degenerates to the single-component parametric
        # model, which is a supported special case
        if self.n_components < 1:
            raise ValidationError("truncation level must be >= 1")
        if not self.n_iter > self.n_burn >= 0:
            raise ValidationError("need n_iter > n_burn >= 0")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if self.init_mode not in ("prior-draw", "single-cluster"):
            raise ValidationError(f"unknown init_mode {self.init_mode!r}")
        self.retain_latent = tuple(int(i) for i in self.retain_latent)

    @property
    def N(self) -> int:
        return self.n_components

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.n_burn + self.thin - 1) // self.thin


def default_truncation(n: int) -> int:
    """Default truncation level min(50, n), floored at 2."""
    return max(2, min(50, n))


@dataclass
class DrawStore:
    """Append-only store of post-burn-in state snapshots.

    Snapshots are deep copies, safe to read concurrently; all posterior
    functionals are computed from these.
    """

    weights: np.ndarray  # (T, N)
    mu: np.ndarray  # (T, N, d)
    sigma: np.ndarray  # (T, N, d, d)
    m: np.ndarray  # (T, d)
    V: np.ndarray  # (T, d, d)
    S: np.ndarray  # (T, d, d)
    alpha: np.ndarray  # (T,)
    n_occupied: np.ndarray  # (T,)
    cutoffs: CutoffGrid
    k: int
    retained_indices: tuple = ()
    z_retained: np.ndarray = None  # (T, n_retained, k)
    ordinal_covariate_flags: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, n_draws, n_components, d, k, cutoffs, retained_indices=(),
                 ordinal_covariate_flags=None, meta=None):
        t, n, = n_draws, n_components
        zr = (
            np.empty((t, len(retained_indices), k))
            if retained_indices
            else None
        )
        return cls(
            weights=np.empty((t, n)),
            mu=np.empty((t, n, d)),
            sigma=np.empty((t, n, d, d)),
            m=np.empty((t, d)),
            V=np.empty((t, d, d)),
            S=np.empty((t, d, d)),
            alpha=np.empty(t),
            n_occupied=np.empty(t, dtype=np.int64),
            cutoffs=cutoffs,
            k=k,
            retained_indices=tuple(retained_indices),
            z_retained=zr,
            ordinal_covariate_flags=ordinal_covariate_flags,
            meta=dict(meta or {}),
        )

    @property
    def n_draws(self) -> int:
        return self.alpha.size

    @property
    def d(self) -> int:
        return self.mu.shape[2]

    @property
    def p(self) -> int:
        return self.d - self.k

    def record(self, t: int, state: MixtureState):
        self.weights[t] = state.weights
        self.mu[t] = state.mu
        self.sigma[t] = state.sigma
        self.m[t] = state.m
        self.V[t] = state.V
        self.S[t] = state.S
        self.alpha[t] = state.alpha
        self.n_occupied[t] = np.unique(state.alloc).size
        if self.z_retained is not None:
            self.z_retained[t] = state.z[list(self.retained_indices)]

    def snapshot(self, t: int) -> NormalMixture:
        return NormalMixture(
            weights=self.weights[t],
            mu=self.mu[t],
            sigma=self.sigma[t],
            cutoffs=self.cutoffs,
            k=self.k,
            ordinal_covariate_flags=self.ordinal_covariate_flags,
        )

    def snapshots(self):
        for t in range(self.n_draws):
            yield self.snapshot(t)

    def thin_view(self, max_draws: int) -> "DrawStore":
        """Array-view store keeping roughly max_draws evenly spaced draws."""
        step = max(1, self.n_draws // max(int(max_draws), 1))
        if step == 1:
            return self
        sl = slice(None, None, step)
        return DrawStore(
            weights=self.weights[sl], mu=self.mu[sl], sigma=self.sigma[sl],
            m=self.m[sl], V=self.V[sl], S=self.S[sl], alpha=self.alpha[sl],
            n_occupied=self.n_occupied[sl], cutoffs=self.cutoffs, k=self.k,
            retained_indices=self.retained_indices,
            z_retained=(
                self.z_retained[sl] if self.z_retained is not None else None
            ),
            ordinal_covariate_flags=self.ordinal_covariate_flags,
            meta=self.meta,
        )

    @classmethod
    def concat(cls, stores) -> "DrawStore":
        """Concatenate stores from chains run on identical models."""
        stores = list(stores)
        first = stores[0]
        for s in stores[1:]:
            if s.k != first.k or s.d != first.d:
                raise ValidationError("cannot concatenate stores of unequal dims")
        cat = lambda n: np.concatenate([getattr(s, n) for s in stores], axis=0)
        zr = (
            cat("z_retained")
            if first.z_retained is not None
            else None
        )
        out = cls(
            weights=cat("weights"), mu=cat("mu"), sigma=cat("sigma"),
            m=cat("m"), V=cat("V"), S=cat("S"), alpha=cat("alpha"),
            n_occupied=cat("n_occupied"), cutoffs=first.cutoffs, k=first.k,
            retained_indices=first.retained_indices, z_retained=zr,
            ordinal_covariate_flags=first.ordinal_covariate_flags,
            meta=copy.deepcopy(first.meta),
        )
        out.meta["n_chains_merged"] = len(stores)
        return out


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


@dataclass
class RestrictedKernel:
    """Feature flag bundle replacing the inverse-Wishart atom prior with
    the (B, delta) factor prior, clamping the first r conditional
    variances (binary latent scales)."""

    fixed_delta: np.ndarray
    priors: FreeSigmaPriors

    @classmethod
    def for_binary_dims(cls, n_binary: int, d: int, fixed_value: float = 1.0,
                        priors: FreeSigmaPriors = None) -> "RestrictedKernel":
        return cls(
            fixed_delta=np.full(n_binary, float(fixed_value)),
            priors=priors or FreeSigmaPriors(d=d),
        )


def _draw_atom_cov_prior(hyper, chol_s_inv, restricted, rng):
    if restricted is not None:
        return sample_restricted_sigma(restricted.fixed_delta, restricted.priors, rng)
    d = hyper.d
    a = _bartlett(hyper.nu, d, rng)
    la = chol_s_inv @ a
    w = la @ la.T
    out = cho_solve((np.linalg.cholesky(w), True), np.eye(d))
    return 0.5 * (out + out.T)


def _bartlett(df, d, rng):
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    if d > 1:
        a[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    return a


def _spd_inv_chol(mat, what):
    try:
        low = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ChainError(f"{what} is not positive definite") from None
    inv = cho_solve((low, True), np.eye(mat.shape[0]))
    return low, 0.5 * (inv + inv.T)


def init_state(dataset: Dataset, cutoffs: CutoffGrid, hyper: Hyperpriors,
               config: ChainConfig, rng, restricted=None) -> MixtureState:
    """Initial state: hyperparameters at prior means, atoms from the base
    measure, latents inside their cutoff cells."""
    n, k, d = dataset.n, dataset.k, hyper.d
    nn = config.n_components
    m = hyper.a_m.copy()
    v = hyper.B_V / (hyper.a_V - d - 1.0)
    s = hyper.a_S * hyper.B_S
    alpha = hyper.a_alpha / hyper.b_alpha
    _, s_inv = _spd_inv_chol(s, "initial S")
    chol_s_inv = np.linalg.cholesky(s_inv)
    chol_v = np.linalg.cholesky(v)
    mu = m[None, :] + rng.standard_normal((nn, d)) @ chol_v.T
    sigma = np.stack(
        [_draw_atom_cov_prior(hyper, chol_s_inv, restricted, rng) for _ in range(nn)]
    )
    sticks, log_1mv = sample_stick_betas(
        np.ones(nn - 1), np.full(nn - 1, alpha), rng
    )
    weights = stick_weights_from_logs(sticks, log_1mv)
    if config.init_mode == "single-cluster" or n == 0:
        alloc = np.zeros(n, dtype=np.int64)
    else:
        alloc = rng.choice(nn, size=n, p=weights / weights.sum())
    z = np.empty((n, k))
    for j in range(k):
        lo, hi = cutoffs.cell_bounds(j, dataset.y[:, j]) if n else ((), ())
        if n:
            z[:, j] = truncated_normal(
                mu[alloc, j], np.maximum(sigma[alloc, j, j], 1e-12), lo, hi, rng
            )
    state = MixtureState(
        sticks=sticks, weights=weights, mu=mu, sigma=sigma, alloc=alloc,
        z=z, m=m, V=v, S=s, alpha=alpha, log_stick_complements=log_1mv,
    )
    state.refresh_sigma_cache()
    return state


# ---------------------------------------------------------------------------
# Full-conditional updates
# ---------------------------------------------------------------------------


def update_latents(state: MixtureState, dataset: Dataset, cutoffs: CutoffGrid,
                   rng) -> MixtureState:
    """Resample each latent z_ij from its truncated normal full conditional.

    The conditional is of coordinate j given the remaining coordinates of
    (z_i, x_i) under atom alloc_i, truncated to the cutoff cell of y_ij;
    coordinates are swept in order so later ones see the updated values.
    """
    n, k = dataset.n, dataset.k
    if n == 0:
        return state
    w = np.concatenate([state.z, dataset.x], axis=1)
    omega = state.sigma_inv[state.alloc]  # (n, d, d)
    mu = state.mu[state.alloc]
    dw = w - mu
    for j in range(k):
        ojj = omega[:, j, j]
        cvar = 1.0 / ojj
        t = np.einsum("nd,nd->n", dw, omega[:, :, j]) - ojj * dw[:, j]
        cmean = mu[:, j] - cvar * t
        lo, hi = cutoffs.cell_bounds(j, dataset.y[:, j])
        znew = truncated_normal(cmean, cvar, lo, hi, rng)
        dw[:, j] = znew - mu[:, j]
        w[:, j] = znew
    state.z = w[:, :k].copy()
    return state


def update_allocations(state: MixtureState, dataset: Dataset, rng) -> MixtureState:
    """Draw allocations from the categorical law with mass proportional to
    weight times atom density, computed in log space with max-subtraction."""
    n = dataset.n
    if n == 0:
        return state
    w = np.concatenate([state.z, dataset.x], axis=1)
    dw = w[None, :, :] - state.mu[:, None, :]
    quad = np.einsum("lnd,lde,lne->ln", dw, state.sigma_inv, dw)
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    logits = logw[:, None] - 0.5 * (
        quad + state.sigma_logdet[:, None] + state.d * LOG_2PI
    )
    logits = logits.T  # (n, N)
    peak = logits.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise ChainError(
            "allocation masses vanished for some observation (all component "
            "densities underflowed)"
        )
    prob = np.exp(logits - peak)
    cum = np.cumsum(prob, axis=1)
    u = rng.random(n) * cum[:, -1]
    state.alloc = (u[:, None] > cum[:, :-1]).sum(axis=1).astype(np.int64)
    return state


def update_weights(state: MixtureState, rng) -> MixtureState:
    """Stick updates v_l ~ Beta(1 + M_l, alpha + sum_{s>l} M_s)."""
    nn = state.N
    counts = np.bincount(state.alloc, minlength=nn).astype(float)
    tail = counts.sum() - np.cumsum(counts)
    v, log_1mv = sample_stick_betas(
        1.0 + counts[:-1], state.alpha + tail[:-1], rng
    )
    state.sticks = v
    state.log_stick_complements = log_1mv
    state.weights = stick_weights_from_logs(v, log_1mv)
    return state


def _bartlett_batch(df, d, rng):
    """Stacked Bartlett factors with per-row degrees of freedom."""
    df = np.asarray(df, dtype=float)
    count = df.size
    a = np.zeros((count, d, d))
    ii = np.arange(d)
    a[:, ii, ii] = np.sqrt(rng.chisquare(df[:, None] - ii[None, :]))
    if d > 1:
        rows, cols = np.tril_indices(d, -1)
        a[:, rows, cols] = rng.standard_normal((count, rows.size))
    return a


def update_atoms(state: MixtureState, dataset: Dataset, hyper: Hyperpriors,
                 rng, restricted=None) -> MixtureState:
    """Conjugate refresh of every atom: mu_l | Sigma_l is normal, then
    Sigma_l | mu_l inverse-Wishart (or the restricted factor draw when the
    binary kernel is active). Empty components reduce to exact base-measure
    draws because their counts and scatters vanish."""
    n, d, nn = dataset.n, state.d, state.N
    w = np.concatenate([state.z, dataset.x], axis=1) if n else np.empty((0, d))
    alloc = state.alloc
    counts = np.bincount(alloc, minlength=nn) if n else np.zeros(nn, dtype=int)
    _, v_inv = _spd_inv_chol(state.V, "hyperparameter V")

    sums = np.zeros((nn, d))
    for a in range(d):
        if n:
            sums[:, a] = np.bincount(alloc, weights=w[:, a], minlength=nn)
    prec = v_inv[None, :, :] + counts[:, None, None] * state.sigma_inv
    rhs = (v_inv @ state.m)[None, :] + np.einsum("nij,nj->ni", state.sigma_inv, sums)
    try:
        chol_prec = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise ChainError("atom mean-precision factorization failed") from None
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    noise = np.linalg.solve(
        np.transpose(chol_prec, (0, 2, 1)), rng.standard_normal((nn, d, 1))
    )[..., 0]
    state.mu = mean + noise

    if restricted is None:
        scatter = np.zeros((nn, d, d))
        if n:
            dwa = w - state.mu[alloc]
            for a in range(d):
                for b in range(a, d):
                    sab = np.bincount(
                        alloc, weights=dwa[:, a] * dwa[:, b], minlength=nn
                    )
                    scatter[:, a, b] = sab
                    scatter[:, b, a] = sab
        scale = state.S[None, :, :] + scatter
        try:
            scale_inv = np.linalg.inv(scale)
            scale_inv = 0.5 * (scale_inv + np.transpose(scale_inv, (0, 2, 1)))
            chol_si = np.linalg.cholesky(scale_inv)
        except np.linalg.LinAlgError:
            raise ChainError("atom covariance factorization failed") from None
        factors = _bartlett_batch(hyper.nu + counts, d, rng)
        la = chol_si @ factors
        wish = la @ np.transpose(la, (0, 2, 1))
        try:
            sig = np.linalg.inv(wish)
        except np.linalg.LinAlgError:
            raise ChainError("atom covariance factorization failed") from None
        state.sigma = 0.5 * (sig + np.transpose(sig, (0, 2, 1)))
    else:
        for l in range(nn):
            resid = (
                w[alloc == l] - state.mu[l][None, :]
                if counts[l]
                else np.empty((0, d))
            )
            state.sigma[l] = update_restricted_sigma(
                resid, restricted.fixed_delta, restricted.priors,
                state.sigma[l], rng,
            )
    state.refresh_sigma_cache()
    return state


def update_hyper_m(state: MixtureState, hyper: Hyperpriors, rng) -> MixtureState:
    """m ~ N((B_m^-1 + N V^-1)^-1 (B_m^-1 a_m + V^-1 sum mu_l), same inverse)."""
    d, nn = state.d, state.N
    _, bm_inv = _spd_inv_chol(hyper.B_m, "B_m")
    _, v_inv = _spd_inv_chol(state.V, "hyperparameter V")
    prec = bm_inv + nn * v_inv
    low = np.linalg.cholesky(prec)
    rhs = bm_inv @ hyper.a_m + v_inv @ state.mu.sum(axis=0)
    mean = cho_solve((low, True), rhs)
    state.m = mean + solve_triangular(low.T, rng.standard_normal(d), lower=False)
    return state


def update_hyper_V(state: MixtureState, hyper: Hyperpriors, rng) -> MixtureState:
    """V ~ IW(a_V + N, B_V + scatter of atom means about m)."""
    dev = state.mu - state.m[None, :]
    scale = hyper.B_V + dev.T @ dev
    _, scale_inv = _spd_inv_chol(scale, "V update scale")
    a = _bartlett(hyper.a_V + state.N, state.d, rng)
    la = np.linalg.cholesky(scale_inv) @ a
    w = la @ la.T
    v = cho_solve((np.linalg.cholesky(w), True), np.eye(state.d))
    state.V = 0.5 * (v + v.T)
    return state


def update_hyper_S(state: MixtureState, hyper: Hyperpriors, rng) -> MixtureState:
    """S ~ W(a_S + N nu, (B_S^-1 + sum_l Sigma_l^-1)^-1)."""
    _, bs_inv = _spd_inv_chol(hyper.B_S, "B_S")
    prec = bs_inv + state.sigma_inv.sum(axis=0)
    _, scale = _spd_inv_chol(prec, "S update scale")
    a = _bartlett(hyper.a_S + state.N * hyper.nu, state.d, rng)
    la = np.linalg.cholesky(scale) @ a
    state.S = la @ la.T
    return state


def update_alpha(state: MixtureState, hyper: Hyperpriors, rng) -> MixtureState:
    """alpha ~ gamma(a_alpha + N - 1, rate b_alpha - log p_N).

    log p_N = sum_l log(1 - v_l) is taken from the exact stick logs; when
    p_N underflows in linear space it is clamped to the smallest positive
    weight and counted as a diagnostic.
    """
    if state.log_stick_complements is not None:
        log_pn = float(state.log_stick_complements.sum())
    else:
        log_pn = float(np.log(max(state.weights[-1], np.finfo(float).tiny)))
    if state.weights[-1] <= 0.0:
        state.weights[-1] = np.finfo(float).tiny
        state.pn_clamps += 1
    rate = hyper.b_alpha - log_pn
    state.alpha = rng.gamma(hyper.a_alpha + state.N - 1.0, 1.0 / rate)
    return state


def gibbs_sweep(state, dataset, cutoffs, hyper, rng, restricted=None):
    """One full sweep in the fixed order latents, allocations, atoms,
    weights, m, V, S, alpha."""
    update_latents(state, dataset, cutoffs, rng)
    update_allocations(state, dataset, rng)
    update_atoms(state, dataset, hyper, rng, restricted=restricted)
    update_weights(state, rng)
    update_hyper_m(state, hyper, rng)
    update_hyper_V(state, hyper, rng)
    if restricted is None:
        update_hyper_S(state, hyper, rng)
    update_alpha(state, hyper, rng)
    return state


# ---------------------------------------------------------------------------
# State invariants
# ---------------------------------------------------------------------------


def check_state(state: MixtureState, dataset: Dataset, cutoffs: CutoffGrid,
                atol: float = 1e-8):
    """Raise ChainError if any MixtureState invariant is violated."""
    if np.any(state.sticks <= 0) or np.any(state.sticks >= 1):
        raise ChainError("stick fractions left (0, 1)")
    if abs(state.weights.sum() - 1.0) > atol or np.any(state.weights < 0):
        raise ChainError("weights are not a simplex")
    if not np.allclose(state.weights[:-1], stick_weights(state.sticks)[:-1],
                       atol=atol):
        raise ChainError("weights inconsistent with sticks")
    if state.alpha <= 0:
        raise ChainError("alpha must be positive")
    for l in range(state.N):
        try:
            np.linalg.cholesky(state.sigma[l])
        except np.linalg.LinAlgError:
            raise ChainError(f"atom {l} covariance not SPD") from None
    for j in range(dataset.k if dataset.n else 0):
        lo, hi = cutoffs.cell_bounds(j, dataset.y[:, j])
        if np.any(state.z[:, j] <= lo) or np.any(state.z[:, j] > hi):
            raise ChainError(f"latent column {j} escaped its cutoff cell")
    if dataset.n and (np.any(state.alloc < 0) or np.any(state.alloc >= state.N)):
        raise ChainError("allocation label out of range")


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------


def run_chain(dataset: Dataset, cutoffs: CutoffGrid, hyperpriors: Hyperpriors,
              config: ChainConfig, binary_dims=(), restricted_priors=None,
              meta=None) -> DrawStore:
    """Run one chain and return the thinned post-burn-in draw store.

    binary_dims lists latent response columns with two categories; when
    nonempty the restricted covariance kernel replaces the inverse-Wishart
    component of the base measure, clamping those latent variances to 1.
    Binary columns must occupy the leading coordinates.
    """
    if dataset.n > 0:
        validate_dataset(dataset)
    if cutoffs.k != dataset.k:
        raise ValidationError("cutoff grid and dataset disagree on k")
    if dataset.n and np.any(cutoffs.category_counts != dataset.category_counts):
        raise ValidationError("cutoff grid and dataset disagree on categories")
    if hyperpriors.d != dataset.d:
        raise ValidationError("hyperpriors dimension does not match dataset")
    restricted = None
    if len(binary_dims):
        bins = sorted(int(b) for b in binary_dims)
        if bins != list(range(len(bins))):
            raise ValidationError(
                "binary dimensions must occupy the first coordinates of the "
                f"latent block, got {bins}"
            )
        if np.any(dataset.category_counts[bins] != 2):
            raise ValidationError("binary_dims must reference 2-category columns")
        restricted = RestrictedKernel.for_binary_dims(
            len(bins), dataset.d, priors=restricted_priors
        )
    rng = np.random.default_rng(config.seed)
    state = init_state(dataset, cutoffs, hyperpriors, config, rng, restricted)
    store = DrawStore.allocate(
        config.n_draws, config.n_components, dataset.d, dataset.k, cutoffs,
        retained_indices=config.retain_latent,
        ordinal_covariate_flags=dataset.ordinal_covariate_flags,
        meta=meta,
    )
    t = 0
    for it in range(config.n_iter):
        gibbs_sweep(state, dataset, cutoffs, hyperpriors, rng, restricted)
        if config.debug_checks:
            check_state(state, dataset, cutoffs)
        if it >= config.n_burn and (it - config.n_burn) % config.thin == 0:
            store.record(t, state)
            t += 1
    check_state(state, dataset, cutoffs)
    mean_alpha = float(store.alpha.mean())
    store.meta.update(
        {
            "seed": config.seed,
            "dataset_sha256": dataset_hash(dataset),
            "n_components": config.n_components,
            "n_iter": config.n_iter,
            "n_burn": config.n_burn,
            "thin": config.thin,
            "init_mode": config.init_mode,
            "binary_dims": [int(b) for b in binary_dims],
            "pn_clamps": state.pn_clamps,
            "invariant_checks_passed": True,
            "mean_alpha": mean_alpha,
            # finite-truncation tail bound ~ 4 n exp(-(N-1)/alpha)
            "truncation_error_bound": float(
                4.0 * dataset.n * np.exp(-(config.n_components - 1) / mean_alpha)
            )
            if dataset.n
            else 0.0,
        }
    )
    return store


# ---------------------------------------------------------------------------
# Chain summaries used by diagnostics
# ---------------------------------------------------------------------------


def effective_sample_size(x) -> float:
    """ESS through the initial-positive-sequence autocorrelation estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    xc = x - x.mean()
    acov = np.correlate(xc, xc, mode="full")[n - 1 :] / n
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    # sum consecutive pairs while they stay positive
    total = 0.0
    for t in range(1, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        total += pair
    ess = n / (1.0 + 2.0 * total)
    return float(min(max(ess, 1.0), n))


def geweke_z(x, first: float = 0.1, last: float = 0.5) -> float:
    """Within-chain location z-score comparing early and late segments."""
    x = np.asarray(x, dtype=float)
    n = x.size
    a = x[: max(int(first * n), 2)]
    b = x[-max(int(last * n), 2) :]
    var = a.var(ddof=1) / effective_sample_size(a) + b.var(ddof=1) / (
        effective_sample_size(b)
    )
    if var <= 0:
        return 0.0
    return float((a.mean() - b.mean()) / np.sqrt(var))
