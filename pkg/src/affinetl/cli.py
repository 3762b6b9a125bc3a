"""Command-line front end: fit, benchmark, spectral, calibrate, synth.

Every run is seeded and every output is CSV (or JSON on stdout for ``fit``),
formatted at full float precision so identical runs produce byte-identical
files.  Benchmark settings can come from a JSON config file mirroring
BenchmarkConfig field names; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .affine import FitConfig, fit, predict
from .benchmark import PROCEDURES, BenchmarkConfig, child_seed, run_benchmark
from .calibration import (
    default_layout,
    fit_calibration,
    fit_log_difference,
    fit_olr,
    predict_calibration,
)
from .data import (
    SYNTH_KINDS,
    Dataset,
    load_calibration_csv,
    load_csv,
    load_sarcos,
    save_calibration_csv,
    save_csv,
    synth_dataset,
)
from .kernels import KernelSpec
from .model_selection import CALIBRATION_GRID, grid_search_cv, rmse
from .spectral import OverlapExperimentConfig, run_overlap_experiment

__all__ = ["main", "run_spectral_sweep", "run_calibration_experiment"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_kernel(text: str, length_scale: float) -> KernelSpec:
    """Parse 'rbf', 'linear', or 'matern:<nu>' (nu in {0.5, 1.5, 2.5, inf})."""
    fam, _, nu = text.partition(":")
    if fam == "matern":
        return KernelSpec(fam, length_scale, nu=float(nu) if nu else 1.5)
    if nu:
        raise ValueError(f"kernel {fam!r} takes no parameter")
    return KernelSpec(fam, length_scale)


def _load_dataset(args) -> Dataset:
    if getattr(args, "synth", None):
        return synth_dataset(args.synth, args.n, args.dims, args.noise_sd, args.seed)
    if not args.data:
        raise ValueError("provide --data PATH or --synth KIND")
    if args.format == "sarcos":
        return load_sarcos(args.data, args.target_joint)
    return load_csv(args.data)


def _add_dataset_args(sub, with_synth: bool = True) -> None:
    sub.add_argument("--data", help="input data file")
    sub.add_argument("--format", choices=("csv", "sarcos"), default="csv",
                     help="input file format (default csv)")
    sub.add_argument("--target-joint", type=int, default=1,
                     help="torque column to predict for sarcos format (1..7)")
    if with_synth:
        sub.add_argument("--synth", choices=SYNTH_KINDS, help="generate data instead of loading")
        sub.add_argument("--n", type=int, default=200, help="synthetic sample count")
        sub.add_argument("--dims", type=int, default=3, help="synthetic input dimension")
        sub.add_argument("--noise-sd", type=float, default=0.1, help="synthetic noise level")


def run_spectral_sweep(ambient_dim, n_bases, n_samples, repeats, spec2, spec3, seed):
    """Overlap experiment swept over d = 0..n_bases; rows ordered by (d, repeat)."""
    rows = []
    for d in range(n_bases + 1):
        cfg = OverlapExperimentConfig(
            d=d, ambient_dim=ambient_dim, n_bases=n_bases, n_samples=n_samples,
            repeats=repeats, spec2=spec2, spec3=spec3, seed=seed,
        )
        for row in run_overlap_experiment(cfg):
            rows.append((row.d, row.repeat, row.s2, row.s3, row.s_hadamard))
    return rows


def run_calibration_experiment(ds: Dataset, seed: int, splits: int = 20,
                               train_size: int = 60, test_size: int = 10,
                               l_beta: float = 1.0, grid=CALIBRATION_GRID,
                               cv_folds: int = 5, full_cv: bool = False):
    """Fit the three calibration models over seeded train/test splits.

    Returns (rmse_rows, gamma_rows): per-split RMSE for the line fit, the
    residual ridge model, and the full model, plus the across-split mean of
    the full model's gamma, one row per (block, index).

    The fused penalty weights are cross-validated on the residual model's
    predictions each split; the full model reuses that choice unless
    ``full_cv`` asks for its own (much slower) search.  Weights are quoted
    in the residual model's unnormalized-loss scale; the full model's
    objective divides the loss by n, so the weights it receives are divided
    by the training size to mean the same amount of shrinkage.
    """
    layout = ds.metadata.get("layout", default_layout())
    if ds.Fs.shape[1] != 1:
        raise ValueError("calibration data needs a single fs column")
    if ds.n < train_size + 1:
        raise ValueError(f"need more than {train_size} rows, have {ds.n}")
    rows = []
    gammas = []
    for split in range(splits):
        rng = np.random.default_rng(child_seed(seed, "calibration", split))
        perm = rng.permutation(ds.n)
        tr = perm[:train_size]
        te = perm[train_size : train_size + test_size]
        train, test = ds.subset(tr), ds.subset(te)
        fs_tr, fs_te = train.Fs[:, 0], test.Fs[:, 0]

        a0, a1 = fit_olr(fs_tr, train.y)
        rows.append(("olr", split, rmse(a0 + a1 * fs_te, test.y)))

        def diff_fitter(params, X, Fs, y):
            gamma = fit_log_difference(X, Fs[:, 0], y, params["l1"], params["l2"], layout)
            return lambda Xt, Ft: Ft[:, 0] + Xt @ gamma

        cv = grid_search_cv(diff_fitter, grid, train.X, train.Fs, train.y,
                            k=cv_folds, seed=child_seed(seed, "calibration-cv", split))
        l1, l2 = cv.best_params["l1"], cv.best_params["l2"]
        gamma_diff = fit_log_difference(train.X, fs_tr, train.y, l1, l2, layout)
        rows.append(("log_difference", split, rmse(fs_te + test.X @ gamma_diff, test.y)))

        if full_cv:
            def full_fitter(params, X, Fs, y):
                n_fold = len(y)
                model, _ = fit_calibration(X, Fs[:, 0], y, params["l1"] / n_fold,
                                           params["l2"] / n_fold,
                                           l_beta=l_beta, layout=layout)
                return lambda Xt, Ft: predict_calibration(model, Xt, Ft[:, 0])

            cv = grid_search_cv(full_fitter, grid, train.X, train.Fs, train.y,
                                k=cv_folds, seed=child_seed(seed, "calibration-cv-full", split))
            l1, l2 = cv.best_params["l1"], cv.best_params["l2"]
        model, _ = fit_calibration(train.X, fs_tr, train.y, l1 / train.n, l2 / train.n,
                                   l_beta=l_beta, layout=layout)
        rows.append(("full", split, rmse(predict_calibration(model, test.X, fs_te), test.y)))
        gammas.append(model.gamma)

    gamma_mean = np.mean(gammas, axis=0)
    gamma_rows = []
    pos = 0
    for name, size in layout.blocks:
        for j in range(size):
            gamma_rows.append((name, j + 1, float(gamma_mean[pos])))
            pos += 1
    return rows, gamma_rows


def _cmd_synth(args) -> int:
    ds = synth_dataset(args.kind, args.n, args.dims, args.noise_sd, args.seed)
    if args.kind == "calibration":
        save_calibration_csv(ds, args.out)
    else:
        save_csv(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    ds = _load_dataset(args)
    dim_x, dim_fs = ds.X.shape[1], ds.Fs.shape[1]
    ell3 = math.sqrt(dim_x + dim_fs) if args.length_scale_rule == "sarcos_appendix" \
        else math.sqrt(dim_x)
    specs = (
        KernelSpec(args.kernel, math.sqrt(dim_fs)),
        KernelSpec(args.kernel, math.sqrt(dim_fs)),
        KernelSpec(args.kernel, ell3),
    )
    config = FitConfig(
        lambda1=args.lambda1, lambda2=args.lambda2, lambda3=args.lambda3,
        variant=args.variant, tol=args.tol, max_iter=args.max_iter,
        seed=args.seed, scale_convention=args.scale_convention,
    )
    model, trace = fit(config, ds.X, ds.Fs, ds.y, specs)
    train_rmse = rmse(predict(model, ds.X, ds.Fs), ds.y)
    if args.coeffs_out:
        rows = [(i, model.a[i], model.b[i], model.c[i]) for i in range(len(model.a))]
        _write_csv(args.coeffs_out, ["row", "a", "b", "c"], rows)
    print(json.dumps({
        "variant": config.variant,
        "n": ds.n,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "final_objective": trace.objectives[-1],
        "final_update_ratio": trace.final_update_ratio,
        "intercept": model.d,
        "train_rmse": train_rmse,
    }, indent=2))
    return 0


def _merge_benchmark_config(args) -> BenchmarkConfig:
    settings: dict = {}
    if args.config:
        with open(args.config) as fh:
            file_conf = json.load(fh)
        unknown = set(file_conf) - set(BenchmarkConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(file_conf)
    for key, flag in [
        ("seed", args.seed), ("repeats", args.repeats), ("cv_folds", args.cv_folds),
        ("test_cap", args.test_cap), ("length_scale_rule", args.length_scale_rule),
        ("scale_convention", args.scale_convention),
    ]:
        if flag is not None:
            settings[key] = flag
    if args.procedures is not None:
        settings["procedures"] = tuple(args.procedures.split(","))
    if args.sizes is not None:
        settings["sizes"] = args.sizes  # normalized below
    if "sizes" in settings:
        raw = settings.pop("sizes")
        if isinstance(raw, str):
            raw = raw.split(",")
        settings["train_sizes"] = tuple(int(v) for v in raw)
    if isinstance(settings.get("procedures"), list):
        settings["procedures"] = tuple(settings["procedures"])
    if isinstance(settings.get("train_sizes"), list):
        settings["train_sizes"] = tuple(settings["train_sizes"])
    if settings.get("seed") is None:
        raise ValueError("benchmark requires an explicit --seed (or a seed in --config)")
    return BenchmarkConfig(**settings)


def _cmd_benchmark(args) -> int:
    config = _merge_benchmark_config(args)
    args.seed = config.seed  # synth data, if any, derives from the run seed
    ds = _load_dataset(args)
    test_ds = None
    if args.test_data:
        test_ds = load_sarcos(args.test_data, args.target_joint) \
            if args.format == "sarcos" else load_csv(args.test_data)
    report = run_benchmark(ds, config, test_dataset=test_ds)
    out_dir = Path(args.out_dir)
    _write_csv(out_dir / "results.csv", ["procedure", "n", "repeat", "rmse"], report.rows)
    _write_csv(out_dir / "aggregate.csv", ["procedure", "n", "mean", "sd"], report.aggregate)
    print(f"wrote {len(report.rows)} cells to {out_dir} ({report.failures} failed)")
    return 2 if report.failures else 0


def _cmd_spectral(args) -> int:
    ell = args.length_scale if args.length_scale else math.sqrt(10.0)
    rows = run_spectral_sweep(
        args.ambient_dim, args.n_bases, args.n_samples, args.repeats,
        _parse_kernel(args.kernel2, ell), _parse_kernel(args.kernel3, ell), args.seed,
    )
    _write_csv(args.out, ["d", "repeat", "s2", "s3", "s_hadamard"], rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    if args.synth_n:
        ds = synth_dataset("calibration", args.synth_n, args.dims, args.noise_sd, args.seed)
    elif args.data:
        ds = load_calibration_csv(args.data)
    else:
        raise ValueError("provide --data PATH or --synth-n N")
    rows, gamma_rows = run_calibration_experiment(
        ds, seed=args.seed, splits=args.splits, train_size=args.train_size,
        test_size=args.test_size, l_beta=args.l_beta, full_cv=args.full_cv,
    )
    out_dir = Path(args.out_dir)
    _write_csv(out_dir / "calibration.csv", ["model", "split", "rmse"], rows)
    _write_csv(out_dir / "gamma.csv", ["block", "index", "value"], gamma_rows)
    print(f"wrote {len(rows)} model/split rows to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affinetl",
                                     description="Affine model transfer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--kind", choices=SYNTH_KINDS, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit one affine transfer model")
    _add_dataset_args(p)
    p.add_argument("--variant", choices=("full", "full_with_intercept", "constrained"),
                   default="full_with_intercept")
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda2", type=float, default=0.1)
    p.add_argument("--lambda3", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", default="rbf")
    p.add_argument("--scale-convention", choices=("eqn3", "appendix"), default="eqn3")
    p.add_argument("--length-scale-rule", choices=("sqrt_dim", "sarcos_appendix"),
                   default="sqrt_dim")
    p.add_argument("--coeffs-out", help="write dual coefficients to this CSV")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("benchmark", help="run the train-size sweep over procedures")
    _add_dataset_args(p)
    p.add_argument("--test-data", help="separate test file (same format as --data)")
    p.add_argument("--config", help="JSON config mirroring BenchmarkConfig fields")
    p.add_argument("--seed", type=int, help="master seed (required here or in --config)")
    p.add_argument("--procedures", help=f"comma list from {','.join(PROCEDURES)}")
    p.add_argument("--sizes", help="comma list of training sizes")
    p.add_argument("--repeats", type=int)
    p.add_argument("--cv-folds", type=int)
    p.add_argument("--test-cap", type=int)
    p.add_argument("--length-scale-rule", choices=("sqrt_dim", "sarcos_appendix"))
    p.add_argument("--scale-convention", choices=("eqn3", "appendix"))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("spectral", help="Hadamard-product eigenvalue decay experiment")
    p.add_argument("--ambient-dim", type=int, default=100)
    p.add_argument("--n-bases", type=int, default=10)
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--kernel2", default="rbf", help="kernel for fs (rbf|linear|matern:<nu>)")
    p.add_argument("--kernel3", default="rbf", help="kernel for x")
    p.add_argument("--length-scale", type=float, help="shared length-scale (default sqrt(10))")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_spectral)

    p = sub.add_parser("calibrate", help="three-model calibration comparison")
    p.add_argument("--data", help="calibration CSV with block-named descriptor columns")
    p.add_argument("--synth-n", type=int, help="generate a synthetic calibration set instead")
    p.add_argument("--dims", type=int, default=190)
    p.add_argument("--noise-sd", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--train-size", type=int, default=60)
    p.add_argument("--test-size", type=int, default=10)
    p.add_argument("--l-beta", type=float, default=1.0)
    p.add_argument("--full-cv", action="store_true",
                   help="cross-validate the full model separately (slow)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"affinetl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
