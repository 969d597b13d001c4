"""Command-line interface.

Subcommands:
    fit          run chains and functionals from a JSON config
    functionals  recompute functionals from persisted draws
    simulate     generate synthetic ordinal data from a built-in truth
    selftest     run the invariant, oracle, and sampler-validation suites

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .data import ValidationError, default_cutoffs
from .gibbs import ChainError
from .runio import RunConfig, compute_functionals, load_draw_store, run
from .simulate import (
    GewekeConfig,
    crossing_two_component,
    f0_construct,
    geweke_check,
    mc_cell_prob_oracle,
    random_mixture,
    simulate_dataset,
)

_PRESETS = {
    "crossing3": lambda: crossing_two_component((3,)),
    "crossing5": lambda: crossing_two_component((5,)),
    "bivariate": lambda: crossing_two_component((4, 4)),
}


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1 rather than argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    ap = _Parser(prog="ordmix", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="run chains and functionals from a config")
    fit.add_argument("--config", required=True, help="path to JSON config")
    fit.add_argument("--seed", type=int, default=None, help="override chain seed")
    fit.add_argument("--out", default=None, help="output directory")

    fun = sub.add_parser("functionals",
                         help="recompute functionals from existing draws")
    fun.add_argument("--config", required=True, help="path to JSON config")
    fun.add_argument("--draws", required=True, help="draws directory of a run")
    fun.add_argument("--out", default=None, help="output directory")

    sim = sub.add_parser("simulate", help="generate synthetic ordinal data")
    sim.add_argument("--preset", choices=sorted(_PRESETS), default="crossing5")
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="CSV output path")

    st = sub.add_parser("selftest", help="run property and oracle suites")
    st.add_argument("--quick", action="store_true",
                    help="smaller suites (seconds instead of minutes)")
    return ap


def _cmd_fit(args) -> int:
    config = RunConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = int(args.seed)
        config.raw.setdefault("chain", {})["seed"] = int(args.seed)
    out = args.out or config.raw.get("out")
    if not out:
        raise ValidationError("no output directory: pass --out or set 'out'")
    run(config, out)
    print(f"run complete: {out}")
    return 0


def _cmd_functionals(args) -> int:
    from .runio import load_csv

    config = RunConfig.from_json(args.config)
    draws_dir = Path(args.draws)
    store_path = draws_dir / "store.bin"
    if not store_path.exists():
        raise ValidationError(f"no draw store found at {store_path}")
    manifest_path = draws_dir / "manifest.json"
    meta = {}
    if manifest_path.exists():
        with open(manifest_path) as fh:
            meta = json.load(fh)
    store = load_draw_store(store_path, meta=meta)
    # reload the data so grid construction matches the original run
    x_data = load_csv(config.data_path, config).dataset.x
    out = Path(args.out or draws_dir.parent)
    out.mkdir(parents=True, exist_ok=True)
    written = compute_functionals(store, config, out, x_data=x_data)
    print(f"wrote {len(written)} functional files under {out}")
    return 0


def _cmd_simulate(args) -> int:
    truth = _PRESETS[args.preset]()
    rng = np.random.default_rng(args.seed)
    dataset, _ = simulate_dataset(truth, args.n, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        ycols = [f"y{j + 1}" for j in range(dataset.k)]
        xcols = [f"x{a + 1}" for a in range(dataset.p)]
        writer.writerow(ycols + xcols)
        for i in range(dataset.n):
            row = [int(v) for v in dataset.y[i]]
            row += [repr(float(v)) for v in dataset.x[i]]
            writer.writerow(row)
    truth_path = out.with_suffix(".truth.json")
    with open(truth_path, "w") as fh:
        json.dump(
            {
                "preset": args.preset,
                "seed": args.seed,
                "weights": truth.weights.tolist(),
                "mu": truth.mu.tolist(),
                "sigma": truth.sigma.tolist(),
                "interior_cutoffs": [truth.cutoffs.interior(j).tolist()
                                     for j in range(truth.k)],
            },
            fh, indent=2,
        )
    print(f"wrote {dataset.n} rows to {out} (truth in {truth_path})")
    return 0


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------


def _suite_cutoff_roundtrip(rng, quick):
    grid = default_cutoffs([3, 5, 2])
    for j in range(3):
        z = rng.normal(0, 3, size=2000)
        codes = grid.discretize(j, z)
        lo, hi = grid.cell_bounds(j, codes)
        assert np.all((z > lo) & (z <= hi))
    return "cutoff discretization round-trip"


def _suite_bvn(rng, quick):
    from .distributions import bvn_rect_prob

    for rho in np.linspace(-0.99, 0.99, 23):
        got = bvn_rect_prob(-np.inf, 0, -np.inf, 0, np.zeros(2),
                            np.array([[1, rho], [rho, 1]]))
        want = 0.25 + np.arcsin(rho) / (2 * np.pi)
        assert abs(got - want) < 1e-9, (rho, got, want)
    return "bivariate rectangle vs closed form"


def _suite_tail_sampler(rng, quick):
    from .distributions import truncated_normal

    n = 20000 if quick else 100000
    draws = truncated_normal(0.0, 1.0, 10.0, np.inf, rng, size=(n,))
    assert np.all(draws > 10.0)
    assert abs(draws.mean() - 10.09809) < (0.02 if quick else 0.01)
    return "truncated-normal tail sampler"


def _suite_sticks(rng, quick):
    from .data import sample_stick_betas, stick_weights_from_logs

    v, logs = sample_stick_betas(np.ones(25), rng.uniform(0.05, 5.0, 25), rng)
    w = stick_weights_from_logs(v, logs)
    assert np.all(w >= 0) and abs(w.sum() - 1.0) < 1e-12
    return "stick-breaking simplex"


def _suite_sqrtfree(rng, quick):
    from .sqrtfree import decompose, recompose

    for _ in range(20):
        a = rng.normal(size=(3, 3))
        sig = a @ a.T + 0.5 * np.eye(3)
        again = recompose(decompose(sig))
        assert np.allclose(again, sig, atol=1e-10)
    return "square-root-free factor round-trip"


def _suite_f0(rng, quick):
    cases = 5 if quick else 20
    for _ in range(cases):
        counts = [int(rng.integers(2, 5))]
        grid = default_cutoffs(counts)
        masses = rng.dirichlet(np.ones(counts[0]))
        f0 = f0_construct(masses, grid, [-counts[0]], [counts[0]])
        for code in range(1, counts[0] + 1):
            g = f0.gamma_star[0]
            mid = 0.5 * (g[code - 1] + g[code])
            integral = f0.pdf([mid]) * (g[code] - g[code - 1])
            assert abs(integral - masses[code - 1]) < 1e-14
    return "constructive density cell integrals"


def _suite_oracle(rng, quick):
    n_mix = 3 if quick else 5
    n_samp = 10**5
    for _ in range(n_mix):
        k = int(rng.integers(1, 3))
        mix = random_mixture(rng, k, 1, 3)
        x = rng.normal(0, 1.0, 1)
        from .functionals import joint_cell_prob

        l = [int(rng.integers(1, c + 1)) for c in mix.category_counts]
        got = joint_cell_prob(mix, l, x)
        est, se = mc_cell_prob_oracle(mix, l, x, n_samples=n_samp, rng=rng)
        assert abs(got - est) < 4.0 * max(se, 1e-4), (got, est, se)
    return "analytic vs Monte Carlo cell probability"


def _suite_geweke(rng, quick):
    cycles = 1500 if quick else 6000
    rep = geweke_check(GewekeConfig(n_cycles=cycles, seed=11))
    assert rep.passed(5.0), f"max |z| = {rep.max_abs_z():.2f}"
    return f"sampler joint-distribution check ({cycles} cycles)"


def _cmd_selftest(args) -> int:
    rng = np.random.default_rng(2024)
    suites = [
        _suite_cutoff_roundtrip,
        _suite_bvn,
        _suite_tail_sampler,
        _suite_sticks,
        _suite_sqrtfree,
        _suite_f0,
        _suite_oracle,
        _suite_geweke,
    ]
    failures = 0
    for suite in suites:
        t0 = time.time()
        try:
            label = suite(rng, args.quick)
            print(f"PASS  {label} ({time.time() - t0:.1f}s)")
        except AssertionError as exc:
            failures += 1
            print(f"FAIL  {suite.__name__}: {exc}")
    if failures:
        print(f"{failures} suite(s) failed")
        return 2
    print("all selftest suites passed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        if args.cmd == "fit":
            return _cmd_fit(args)
        if args.cmd == "functionals":
            return _cmd_functionals(args)
        if args.cmd == "simulate":
            return _cmd_simulate(args)
        if args.cmd == "selftest":
            return _cmd_selftest(args)
        parser.print_usage(sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except (ChainError, OSError, np.linalg.LinAlgError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
