"""Run management: JSON configuration, CSV ingestion, draw persistence,
and plot-ready CSV/JSON outputs.

Draw stores persist in a compact column-wise binary layout:

    magic   4 bytes  b"DPMO"
    version u32      1
    T, N, d, k, n_retained   u64 each
    retained_indices         n_retained x i64
    flags                    k x u8 (ordinal-covariate markers)
    cutoffs                  per dimension: u64 length then that many f64
    weights  T*N f64         mu     T*N*d f64      sigma  T*N*d*d f64
    m        T*d f64         V      T*d*d f64      S      T*d*d f64
    alpha    T f64           n_occupied  T i64
    z_retained  T*n_retained*k f64

All integers and floats are little-endian; a JSON manifest rides alongside.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    CutoffGrid,
    Dataset,
    ValidationError,
    dataset_hash,
    default_cutoffs,
    validate_dataset,
)
from .functionals import (
    agreement_prob_curve,
    agreement_table,
    default_grid,
    inverse_covariate_density,
    marginal_curve,
    ordinal_covariate_curve,
    polychoric_draws,
)
from .gibbs import (
    ChainConfig,
    DrawStore,
    default_truncation,
    effective_sample_size,
    geweke_z,
    run_chain,
)
from .priors import PriorInputs, default_alpha_prior, derive_hyperpriors

_MAGIC = b"DPMO"
_VERSION = 1


# ---------------------------------------------------------------------------
# Binary draw persistence
# ---------------------------------------------------------------------------


def save_draw_store(store: DrawStore, path):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        t, nn, d = store.n_draws, store.weights.shape[1], store.d
        k = store.k
        nret = len(store.retained_indices)
        fh.write(struct.pack("<5Q", t, nn, d, k, nret))
        np.asarray(store.retained_indices, dtype="<i8").tofile(fh)
        flags = (
            store.ordinal_covariate_flags
            if store.ordinal_covariate_flags is not None
            else np.zeros(k, dtype=bool)
        )
        np.asarray(flags, dtype=np.uint8).tofile(fh)
        for j in range(k):
            c = store.cutoffs.cutoffs[j]
            fh.write(struct.pack("<Q", c.size))
            c.astype("<f8").tofile(fh)
        for name in ("weights", "mu", "sigma", "m", "V", "S", "alpha"):
            getattr(store, name).astype("<f8").tofile(fh)
        store.n_occupied.astype("<i8").tofile(fh)
        if nret:
            store.z_retained.astype("<f8").tofile(fh)
    return path


def load_draw_store(path, meta=None) -> DrawStore:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValidationError(f"{path} is not a draw store (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValidationError(f"unsupported draw store version {version}")
        t, nn, d, k, nret = struct.unpack("<5Q", fh.read(40))
        retained = np.fromfile(fh, dtype="<i8", count=nret)
        flags = np.fromfile(fh, dtype=np.uint8, count=k).astype(bool)
        cut = []
        for _ in range(k):
            (size,) = struct.unpack("<Q", fh.read(8))
            cut.append(np.fromfile(fh, dtype="<f8", count=size))
        read = lambda count: np.fromfile(fh, dtype="<f8", count=count)
        weights = read(t * nn).reshape(t, nn)
        mu = read(t * nn * d).reshape(t, nn, d)
        sigma = read(t * nn * d * d).reshape(t, nn, d, d)
        m = read(t * d).reshape(t, d)
        v = read(t * d * d).reshape(t, d, d)
        s = read(t * d * d).reshape(t, d, d)
        alpha = read(t)
        nocc = np.fromfile(fh, dtype="<i8", count=t)
        zret = read(t * nret * k).reshape(t, nret, k) if nret else None
    return DrawStore(
        weights=weights, mu=mu, sigma=sigma, m=m, V=v, S=s, alpha=alpha,
        n_occupied=nocc, cutoffs=CutoffGrid(cut), k=int(k),
        retained_indices=tuple(int(i) for i in retained), z_retained=zret,
        ordinal_covariate_flags=flags, meta=dict(meta or {}),
    )


def export_draws_csv(store: DrawStore, path):
    """Flat CSV export of the draw store (one row per stored draw)."""
    nn, d = store.weights.shape[1], store.d
    cols = ["draw", "alpha", "n_occupied"]
    cols += [f"w_{r}" for r in range(nn)]
    cols += [f"mu_{r}_{a}" for r in range(nn) for a in range(d)]
    cols += [f"sigma_{r}_{a}_{b}" for r in range(nn) for a in range(d) for b in range(d)]
    cols += [f"m_{a}" for a in range(d)]
    cols += [f"V_{a}_{b}" for a in range(d) for b in range(d)]
    cols += [f"S_{a}_{b}" for a in range(d) for b in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for t in range(store.n_draws):
            row = [t, repr(float(store.alpha[t])), int(store.n_occupied[t])]
            row += [repr(float(x)) for x in store.weights[t]]
            row += [repr(float(x)) for x in store.mu[t].ravel()]
            row += [repr(float(x)) for x in store.sigma[t].ravel()]
            row += [repr(float(x)) for x in store.m[t]]
            row += [repr(float(x)) for x in store.V[t].ravel()]
            row += [repr(float(x)) for x in store.S[t].ravel()]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Validated run configuration; see from_dict for the JSON schema."""

    data_path: str
    response_columns: list  # (name, categories)
    covariate_columns: list
    ordinal_covariate_columns: list  # (name, categories)
    binary_columns: list
    cutoff_half_width: float = None
    cutoff_explicit: dict = field(default_factory=dict)
    variance_split: float = 1.0 / 3.0
    alpha_shape: float = None
    alpha_rate: float = None
    prior_centers: dict = field(default_factory=dict)
    prior_ranges: dict = field(default_factory=dict)
    n_components: int = None
    n_iter: int = 20000
    n_burn: int = 5000
    thin: int = 2
    seed: int = 0
    n_chains: int = 1
    init_mode: str = "prior-draw"
    retain_latent: tuple = ()
    functionals: dict = field(default_factory=dict)
    export_csv: bool = False
    raw: dict = field(default_factory=dict)

    @property
    def z_columns(self) -> list:
        """Latent dimensions in order: responses then ordinal covariates."""
        return [name for name, _ in self.response_columns] + [
            name for name, _ in self.ordinal_covariate_columns
        ]

    @property
    def category_counts(self) -> list:
        return [c for _, c in self.response_columns] + [
            c for _, c in self.ordinal_covariate_columns
        ]

    def z_index(self, name: str) -> int:
        try:
            return self.z_columns.index(name)
        except ValueError:
            raise ValidationError(f"unknown ordinal column {name!r}") from None

    def x_index(self, name: str) -> int:
        try:
            return self.covariate_columns.index(name)
        except ValueError:
            raise ValidationError(f"unknown covariate column {name!r}") from None

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        def cols(entries, what):
            out = []
            for e in entries:
                if not isinstance(e, dict) or "column" not in e or "categories" not in e:
                    raise ValidationError(
                        f"each {what} entry needs 'column' and 'categories'"
                    )
                out.append((str(e["column"]), int(e["categories"])))
            return out

        if "data" not in cfg:
            raise ValidationError("config is missing 'data'")
        if not cfg.get("responses"):
            raise ValidationError("config must list at least one response")
        responses = cols(cfg["responses"], "response")
        ordcov = cols(cfg.get("ordinal_covariates", []), "ordinal covariate")
        covariates = [str(c) for c in cfg.get("covariates", [])]
        binary = [str(c) for c in cfg.get("binary_dims", [])]
        rnames = [n for n, _ in responses]
        for b in binary:
            if b not in rnames:
                raise ValidationError(f"binary_dims column {b!r} is not a response")
        cut = cfg.get("cutoffs", {}) or {}
        prior = cfg.get("prior", {}) or {}
        chain = cfg.get("chain", {}) or {}
        rc = cls(
            data_path=str(cfg["data"]),
            response_columns=responses,
            covariate_columns=covariates,
            ordinal_covariate_columns=ordcov,
            binary_columns=binary,
            cutoff_half_width=cut.get("half_width"),
            cutoff_explicit={str(k): list(v) for k, v in (cut.get("explicit") or {}).items()},
            variance_split=float(prior.get("variance_split", 1.0 / 3.0)),
            alpha_shape=prior.get("alpha_shape"),
            alpha_rate=prior.get("alpha_rate"),
            prior_centers={str(k): float(v) for k, v in (prior.get("centers") or {}).items()},
            prior_ranges={str(k): float(v) for k, v in (prior.get("ranges") or {}).items()},
            n_components=chain.get("n_components"),
            n_iter=int(chain.get("n_iter", 20000)),
            n_burn=int(chain.get("n_burn", 5000)),
            thin=int(chain.get("thin", 2)),
            seed=int(chain.get("seed", 0)),
            n_chains=int(chain.get("n_chains", 1)),
            init_mode=str(chain.get("init_mode", "prior-draw")),
            retain_latent=tuple(int(i) for i in chain.get("retain_latent", [])),
            functionals=dict(cfg.get("functionals", {}) or {}),
            export_csv=bool(cfg.get("export_csv", False)),
            raw=cfg,
        )
        rc._validate_requests()
        return rc

    def _validate_requests(self):
        k = len(self.z_columns)
        for name, cats in self.response_columns + self.ordinal_covariate_columns:
            if cats < 2:
                raise ValidationError(f"column {name!r} needs >= 2 categories")
        for b in self.binary_columns:
            j = self.z_index(b)
            if self.category_counts[j] != 2:
                raise ValidationError(f"binary column {b!r} must have 2 categories")
        bidx = sorted(self.z_index(b) for b in self.binary_columns)
        if bidx != list(range(len(bidx))):
            raise ValidationError(
                "binary responses must be listed first among the responses"
            )
        fn = self.functionals
        for cur in fn.get("curves", []):
            self.z_index(str(cur["response"]))
            self.x_index(str(cur["covariate"]))
        for inv in fn.get("inverse_densities", []):
            for name in inv.get("y", {}):
                self.z_index(str(name))
            self.x_index(str(inv["covariate"]))
        for occ in fn.get("ordinal_covariate_curves", []):
            self.z_index(str(occ["response"]))
            j = self.z_index(str(occ["covariate"]))
            if j < len(self.response_columns):
                raise ValidationError(
                    f"{occ['covariate']!r} is not an ordinal covariate"
                )
        for ac in fn.get("agreement_curves", []):
            self.z_index(str(ac["a"]))
            self.z_index(str(ac["b"]))
            self.x_index(str(ac["covariate"]))
            if k < 2:
                raise ValidationError("agreement requests need at least 2 responses")
        for at in fn.get("agreement_tables", []):
            for a, b in at.get("pairs", []):
                self.z_index(str(a))
                self.z_index(str(b))
            if k < 2:
                raise ValidationError("agreement requests need at least 2 responses")
        for a, b in fn.get("polychoric_pairs", []):
            self.z_index(str(a))
            self.z_index(str(b))
            if k < 2:
                raise ValidationError("polychoric requests need at least 2 responses")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(cfg)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass
class LoadedData:
    dataset: Dataset
    centers: np.ndarray
    ranges: np.ndarray


def load_csv(path, config: RunConfig) -> LoadedData:
    """Read and validate the configured columns from a headered CSV.

    Ordinal cells must be integers; covariates decimals. Missing values are
    rejected and every parse error names its row and column. Covariate
    centers and ranges (midrange and spread) feed the prior derivation
    unless overridden in the config.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"data file {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        colpos = {}
        for name in config.z_columns + config.covariate_columns:
            if name not in header:
                raise ValidationError(f"column {name!r} not found in {path}")
            colpos[name] = header.index(name)
        zcols = config.z_columns
        xcols = config.covariate_columns
        y_rows, x_rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yrow, xrow = [], []
            for name in zcols:
                cell = row[colpos[name]].strip() if colpos[name] < len(row) else ""
                if not cell:
                    raise ValidationError(
                        f"missing value at line {lineno}, column {name!r}"
                    )
                try:
                    yrow.append(int(cell))
                except ValueError:
                    raise ValidationError(
                        f"cannot parse ordinal cell {cell!r} at line {lineno}, "
                        f"column {name!r}"
                    ) from None
            for name in xcols:
                cell = row[colpos[name]].strip() if colpos[name] < len(row) else ""
                if not cell:
                    raise ValidationError(
                        f"missing value at line {lineno}, column {name!r}"
                    )
                try:
                    xrow.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"cannot parse covariate cell {cell!r} at line {lineno}, "
                        f"column {name!r}"
                    ) from None
            y_rows.append(yrow)
            x_rows.append(xrow)
    if not y_rows:
        raise ValidationError(f"{path} contains no data rows")
    y = np.array(y_rows, dtype=np.int64)
    x = np.array(x_rows, dtype=np.float64) if xcols else np.zeros((len(y_rows), 0))
    flags = np.zeros(len(zcols), dtype=bool)
    flags[len(config.response_columns):] = True
    dataset = validate_dataset(
        Dataset(y=y, x=x, category_counts=config.category_counts,
                ordinal_covariate_flags=flags)
    )
    if xcols:
        hi = x.max(axis=0)
        lo = x.min(axis=0)
        centers = 0.5 * (hi + lo)
        ranges = hi - lo
        ranges[ranges <= 0] = 1.0
        for i, name in enumerate(xcols):
            if name in config.prior_centers:
                centers[i] = config.prior_centers[name]
            if name in config.prior_ranges:
                ranges[i] = config.prior_ranges[name]
    else:
        centers = np.zeros(0)
        ranges = np.zeros(0)
    return LoadedData(dataset=dataset, centers=centers, ranges=ranges)


def build_cutoffs(config: RunConfig) -> CutoffGrid:
    counts = config.category_counts
    if config.cutoff_explicit:
        interiors = []
        for j, name in enumerate(config.z_columns):
            if name in config.cutoff_explicit:
                interior = config.cutoff_explicit[name]
                if len(interior) != counts[j] - 1:
                    raise ValidationError(
                        f"column {name!r} needs {counts[j] - 1} interior "
                        f"cutoffs, got {len(interior)}"
                    )
                interiors.append(interior)
            else:
                interiors.append(
                    default_cutoffs([counts[j]], config.cutoff_half_width).interior(0)
                )
        return CutoffGrid.from_interior(interiors)
    return default_cutoffs(counts, config.cutoff_half_width)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(json.dumps(config.raw, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------


def _write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid_value", "mean", "lo95", "hi95"])
        grid = np.atleast_1d(curve.grid)
        for g in range(len(curve.mean)):
            if grid.ndim == 1:
                gv = repr(float(grid[g]))
            else:
                gv = "|".join(repr(float(v)) for v in grid[g])
            writer.writerow(
                [
                    gv,
                    repr(float(curve.mean[g])),
                    repr(float(curve.lower[g])),
                    repr(float(curve.upper[g])),
                ]
            )


def _write_table_csv(path, table, names):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["target", "target_set", "given", "given_set", "mean", "lo95",
             "hi95", "n_flagged"]
        )
        for cell in table.cells:
            writer.writerow(
                [
                    names[cell.target_dim], cell.target_set,
                    names[cell.given_dim], cell.given_set,
                    repr(cell.mean), repr(cell.lower), repr(cell.upper),
                    cell.n_flagged,
                ]
            )


def compute_functionals(store: DrawStore, config: RunConfig, out_dir,
                        x_data=None):
    """Evaluate all requested functionals and write plot-ready CSVs.

    Deterministic given the store and config, so re-running from persisted
    draws reproduces the files bitwise.
    """
    out_dir = Path(out_dir)
    curves_dir = out_dir / "curves"
    tables_dir = out_dir / "tables"
    fn = config.functionals
    written = []

    def grid_for(covariate_name, points):
        xi = config.x_index(covariate_name)
        if x_data is not None and x_data.shape[1] > xi:
            return default_grid(x_data[:, xi], points)
        return np.linspace(-3.0, 3.0, points)

    if any(
        fn.get(key)
        for key in ("curves", "inverse_densities", "ordinal_covariate_curves",
                    "agreement_curves")
    ):
        curves_dir.mkdir(parents=True, exist_ok=True)
    if fn.get("agreement_tables") or fn.get("polychoric_pairs"):
        tables_dir.mkdir(parents=True, exist_ok=True)

    for cur in fn.get("curves", []):
        j = config.z_index(str(cur["response"]))
        xi = config.x_index(str(cur["covariate"]))
        grid = grid_for(str(cur["covariate"]), int(cur.get("grid_points", 50)))
        cats = cur.get("category")
        cats = range(1, config.category_counts[j] + 1) if cats is None else [int(cats)]
        for l in cats:
            curve = marginal_curve(store, j, l, grid, covariate=xi)
            name = f"curve_{cur['response']}_cat{l}_over_{cur['covariate']}.csv"
            _write_curve_csv(curves_dir / name, curve)
            written.append(curves_dir / name)

    for inv in fn.get("inverse_densities", []):
        yspec = inv.get("y", {})
        yvec = []
        for name in config.z_columns:
            if name not in yspec:
                raise ValidationError(
                    "inverse density request must fix every ordinal column; "
                    f"missing {name!r}"
                )
            yvec.append(int(yspec[name]))
        xi = config.x_index(str(inv["covariate"]))
        grid = grid_for(str(inv["covariate"]), int(inv.get("grid_points", 50)))
        rng = np.random.default_rng(int(config_hash(config)[:8], 16) ^ config.seed)
        curve = inverse_covariate_density(store, yvec, grid, covariate=xi, rng=rng)
        ylab = "_".join(str(v) for v in yvec)
        name = f"inverse_{inv['covariate']}_given_y{ylab}.csv"
        _write_curve_csv(curves_dir / name, curve)
        written.append(curves_dir / name)

    for occ in fn.get("ordinal_covariate_curves", []):
        j = config.z_index(str(occ["response"]))
        wdim = config.z_index(str(occ["covariate"]))
        l = int(occ["category"])
        curve = ordinal_covariate_curve(store, j, l, wdim)
        name = f"curve_{occ['response']}_cat{l}_over_{occ['covariate']}.csv"
        _write_curve_csv(curves_dir / name, curve)
        written.append(curves_dir / name)

    for ac in fn.get("agreement_curves", []):
        a = config.z_index(str(ac["a"]))
        b = config.z_index(str(ac["b"]))
        xi = config.x_index(str(ac["covariate"]))
        grid = grid_for(str(ac["covariate"]), int(ac.get("grid_points", 50)))
        curve = agreement_prob_curve(
            store, a, b, grid, covariate=xi, mode=str(ac.get("mode", "exact"))
        )
        name = f"agreement_{ac['a']}_{ac['b']}_over_{ac['covariate']}.csv"
        _write_curve_csv(curves_dir / name, curve)
        written.append(curves_dir / name)

    for i, at in enumerate(fn.get("agreement_tables", [])):
        pairs = [
            (config.z_index(str(a)), config.z_index(str(b)))
            for a, b in at.get("pairs", [])
        ]
        sets = {str(key): [int(c) for c in v] for key, v in at.get("sets", {}).items()}
        table = agreement_table(store, pairs, sets)
        name = f"agreement_table_{i}.csv"
        _write_table_csv(tables_dir / name, table, config.z_columns)
        written.append(tables_dir / name)

    for a, b in fn.get("polychoric_pairs", []):
        ai = config.z_index(str(a))
        bi = config.z_index(str(b))
        rng = np.random.default_rng(
            (int(config_hash(config)[:8], 16) ^ config.seed) + 1000 + ai * 97 + bi
        )
        draws = polychoric_draws(store, ai, bi, rng)
        name = tables_dir / f"polychoric_{a}_{b}.csv"
        with open(name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["draw", "correlation"])
            for t, val in enumerate(draws):
                writer.writerow([t, repr(float(val))])
        written.append(name)
    return written


def _diagnostics(store: DrawStore) -> dict:
    diag = {
        "pn_clamps": store.meta.get("pn_clamps", 0),
        "occupied_cluster_trace": [int(v) for v in store.n_occupied],
        "effective_draws": {},
        "geweke_z": {},
    }
    series = {"alpha": store.alpha}
    for a in range(store.d):
        series[f"m_{a}"] = store.m[:, a]
    series["tr_V"] = np.trace(store.V, axis1=1, axis2=2)
    series["tr_S"] = np.trace(store.S, axis1=1, axis2=2)
    series["n_occupied"] = store.n_occupied.astype(float)
    for name, x in series.items():
        diag["effective_draws"][name] = effective_sample_size(x)
        diag["geweke_z"][name] = geweke_z(x)
    return diag


def run(config: RunConfig, out_dir, waived_notes=None) -> Path:
    """Execute a full run: chains, merged draw store, functionals,
    diagnostics. Partial outputs are removed on failure."""
    out_dir = Path(out_dir)
    created_root = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    created = []
    try:
        loaded = load_csv(config.data_path, config)
        dataset = loaded.dataset
        cutoffs = build_cutoffs(config)
        latent_ranges = None
        if config.binary_columns:
            latent_ranges = cutoffs.latent_ranges()
            for b in config.binary_columns:
                latent_ranges[config.z_index(b)] = 4.0
        if config.alpha_shape is not None and config.alpha_rate is not None:
            alpha_prior = (config.alpha_shape, config.alpha_rate)
        else:
            alpha_prior = default_alpha_prior(dataset.n)
        hyper = derive_hyperpriors(
            PriorInputs(
                centers=loaded.centers, ranges=loaded.ranges,
                cutoff_grid=cutoffs, variance_split=config.variance_split,
                alpha_prior=alpha_prior, latent_ranges=latent_ranges,
            )
        )
        draws_dir = out_dir / "draws"
        draws_dir.mkdir(exist_ok=True)
        created.append(draws_dir)
        seeds = [
            int(s.generate_state(1)[0] % (2**31))
            for s in np.random.SeedSequence(config.seed).spawn(config.n_chains)
        ]
        binary_dims = tuple(config.z_index(b) for b in config.binary_columns)
        stores = []
        for c, seed in enumerate(seeds):
            chain_dir = draws_dir / f"chain_{c:02d}"
            chain_dir.mkdir(exist_ok=True)
            cfg = ChainConfig(
                n_components=config.n_components or default_truncation(dataset.n),
                n_iter=config.n_iter, n_burn=config.n_burn, thin=config.thin,
                seed=seed, init_mode=config.init_mode,
                retain_latent=config.retain_latent,
            )
            store = run_chain(dataset, cutoffs, hyper, cfg, binary_dims=binary_dims)
            created.append(save_draw_store(store, chain_dir / "store.bin"))
            stores.append(store)
        merged = DrawStore.concat(stores) if len(stores) > 1 else stores[0]
        created.append(save_draw_store(merged, draws_dir / "store.bin"))
        if config.export_csv:
            export_draws_csv(merged, draws_dir / "draws.csv")
            created.append(draws_dir / "draws.csv")
        manifest = {
            "config": config.raw,
            "config_sha256": config_hash(config),
            "dataset_sha256": dataset_hash(dataset),
            "seeds": seeds,
            "n_chains": config.n_chains,
            "cutoffs": [list(map(float, c)) for c in cutoffs.cutoffs],
            "column_order": config.z_columns + config.covariate_columns,
            "truncation_error_bound": max(
                s.meta.get("truncation_error_bound", 0.0) for s in stores
            ),
            "invariant_checks_passed": all(
                s.meta.get("invariant_checks_passed", False) for s in stores
            ),
            "pn_clamps": sum(s.meta.get("pn_clamps", 0) for s in stores),
            "waived": list(waived_notes or []),
        }
        with open(draws_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        created.append(draws_dir / "manifest.json")
        created.extend(compute_functionals(merged, config, out_dir, x_data=dataset.x))
        merged.meta.setdefault("pn_clamps", manifest["pn_clamps"])
        with open(out_dir / "diagnostics.json", "w") as fh:
            json.dump(_diagnostics(merged), fh, indent=2, sort_keys=True)
        created.append(out_dir / "diagnostics.json")
        return out_dir
    except Exception:
        if created_root:
            shutil.rmtree(out_dir, ignore_errors=True)
        else:
            for p in reversed(created):
                p = Path(p)
                if p.is_file():
                    p.unlink(missing_ok=True)
                elif p.is_dir():
                    shutil.rmtree(p, ignore_errors=True)
        raise
