"""Seeded benchmark runner: the transfer procedures over train-size sweeps.

Each cell of the sweep is (procedure, train size, repeat).  The data split
for a cell depends only on (train size, repeat), so every procedure sees the
same training subsets; procedure-specific randomness (affine initialization,
CV folds) is keyed by the full cell, so adding or removing procedures never
shifts the others' draws.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .affine import FitConfig, fit, predict
from .baselines import fit_baseline, predict_baseline
from .data import Dataset
from .kernels import KernelSpec
from .model_selection import (
    AFFINE_CONSTRAINED_GRID,
    AFFINE_FULL_GRID,
    KRR_SHRINK_GRID,
    grid_search_cv,
    rmse,
)

__all__ = [
    "PROCEDURES",
    "BenchmarkConfig",
    "BenchmarkReport",
    "child_seed",
    "run_benchmark",
    "aggregate_rows",
]

PROCEDURES = (
    "direct",
    "only_source",
    "augmented",
    "htl_offset",
    "htl_scale",
    "affine_full",
    "affine_const",
)

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(master: int, *parts) -> int:
    """Derive a child seed from a master seed and a cell key.

    String parts are folded in bytewise (FNV-1a), integer parts directly;
    each part is followed by a splitmix64 round, so the derivation depends
    on part order and content but never on how many other cells exist.
    """
    z = _splitmix64(int(master) & _MASK64)
    for part in parts:
        if isinstance(part, str):
            h = 0xCBF29CE484222325
            for byte in part.encode():
                h = ((h ^ byte) * 0x100000001B3) & _MASK64
            z ^= h
        else:
            z ^= int(part) & _MASK64
        z = _splitmix64(z)
    return z


@dataclass(frozen=True)
class BenchmarkConfig:
    """Protocol settings for :func:`run_benchmark`."""

    seed: int
    procedures: tuple[str, ...] = PROCEDURES
    train_sizes: tuple[int, ...] = (5, 10, 15, 20, 30, 40, 50)
    repeats: int = 20
    cv_folds: int = 5
    test_cap: int = 2000
    length_scale_rule: str = "sqrt_dim"
    scale_convention: str = "appendix"
    kernel_family: str = "rbf"

    def __post_init__(self):
        unknown = [p for p in self.procedures if p not in PROCEDURES]
        if unknown:
            raise ValueError(f"unknown procedures {unknown}; expected subset of {PROCEDURES}")
        if self.length_scale_rule not in ("sqrt_dim", "sarcos_appendix"):
            raise ValueError(f"unknown length_scale_rule {self.length_scale_rule!r}")
        if self.repeats < 1 or self.cv_folds < 2:
            raise ValueError("need repeats >= 1 and cv_folds >= 2")


@dataclass
class BenchmarkReport:
    rows: list[tuple[str, int, int, float]] = field(default_factory=list)
    aggregate: list[tuple[str, int, float, float]] = field(default_factory=list)
    failures: int = 0


def _length_scales(rule: str, dim_x: int, dim_fs: int) -> dict[str, float]:
    """Length-scales per kernel role.

    ``sqrt_dim`` uses the square root of each kernel's own input dimension.
    ``sarcos_appendix`` keeps that rule for inputs and source features but
    widens the affine g3 kernel to sqrt(dim_x + dim_fs), matching the
    torque-benchmark settings (sqrt(21), sqrt(6), sqrt(27)).
    """
    ell_x = math.sqrt(dim_x)
    ell_fs = math.sqrt(dim_fs)
    ell_aug = math.sqrt(dim_x + dim_fs)
    ell_g3 = ell_aug if rule == "sarcos_appendix" else ell_x
    return {"x": ell_x, "fs": ell_fs, "aug": ell_aug, "g3": ell_g3}


def _cv_krr(kind, train: Dataset, folds, seed, spec, stage2_spec, config) -> float:
    """CV the single shrink of a one-stage baseline; returns best shrink."""

    def fitter(params, X, Fs, y):
        model = fit_baseline(kind, X, Fs, y, spec, params["shrink"],
                             stage2_spec=stage2_spec, stage2_shrink=params.get("shrink2"))
        return lambda Xt, Ft: predict_baseline(model, Xt, Ft)

    res = grid_search_cv(fitter, KRR_SHRINK_GRID, train.X, train.Fs, train.y,
                         k=folds, seed=seed)
    return res.best_params["shrink"]


def _fit_two_stage(kind, train: Dataset, folds, seed, spec_fs, spec_x, config):
    """Stage-wise CV for the offset/scale procedures.

    Stage 1 picks its shrink by CV of the fs -> y regression alone; stage 2
    then CVs the x -> transformed-target regression built on a stage-1 model
    refit per fold.
    """
    shrink1 = _cv_krr("only_source", train, folds, child_seed(seed, "stage1"),
                      spec_fs, None, config)

    def fitter(params, X, Fs, y):
        model = fit_baseline(kind, X, Fs, y, spec_fs, shrink1,
                             stage2_spec=spec_x, stage2_shrink=params["shrink"])
        return lambda Xt, Ft: predict_baseline(model, Xt, Ft)

    res = grid_search_cv(fitter, KRR_SHRINK_GRID, train.X, train.Fs, train.y,
                         k=folds, seed=child_seed(seed, "stage2"))
    return fit_baseline(kind, train.X, train.Fs, train.y, spec_fs, shrink1,
                        stage2_spec=spec_x, stage2_shrink=res.best_params["shrink"])


def _fit_affine(variant, train: Dataset, folds, seed, specs, config):
    grid = AFFINE_CONSTRAINED_GRID if variant == "constrained" else AFFINE_FULL_GRID

    def make_config(params):
        return FitConfig(
            lambda1=params["lambda1"],
            lambda2=params.get("lambda2", 1.0),
            lambda3=params["lambda3"],
            variant=variant,
            seed=child_seed(seed, "init"),
            scale_convention=config.scale_convention,
        )

    def fitter(params, X, Fs, y):
        model, _ = fit(make_config(params), X, Fs, y, specs)
        return lambda Xt, Ft: predict(model, Xt, Ft)

    res = grid_search_cv(fitter, grid, train.X, train.Fs, train.y,
                         k=folds, seed=child_seed(seed, "cv"))
    model, _ = fit(make_config(res.best_params), train.X, train.Fs, train.y, specs)
    return model


def _run_cell(dataset: Dataset, test_pool: Dataset | None, proc: str, n: int,
              repeat: int, config: BenchmarkConfig) -> float:
    split_rng = np.random.default_rng(child_seed(config.seed, "split", n, repeat))
    if n >= dataset.n:
        raise ValueError(f"train size {n} needs more than the {dataset.n} available rows")
    train_idx = split_rng.choice(dataset.n, size=n, replace=False)
    train = dataset.subset(train_idx)
    if test_pool is None:
        rest = np.setdiff1d(np.arange(dataset.n), train_idx)
        test = dataset.subset(rest)
    else:
        test = test_pool
    if test.n > config.test_cap:
        test = test.subset(split_rng.choice(test.n, size=config.test_cap, replace=False))
    if test.n == 0:
        raise ValueError("no rows left for the test set")

    ells = _length_scales(config.length_scale_rule, dataset.X.shape[1], dataset.Fs.shape[1])
    fam = config.kernel_family
    spec_x = KernelSpec(fam, ells["x"])
    spec_fs = KernelSpec(fam, ells["fs"])
    spec_aug = KernelSpec(fam, ells["aug"])
    folds = min(config.cv_folds, n)
    seed = child_seed(config.seed, proc, n, repeat)

    if proc in ("direct", "only_source", "augmented"):
        spec = {"direct": spec_x, "only_source": spec_fs, "augmented": spec_aug}[proc]
        shrink = _cv_krr(proc, train, folds, child_seed(seed, "cv"), spec, None, config)
        model = fit_baseline(proc, train.X, train.Fs, train.y, spec, shrink)
        yhat = predict_baseline(model, test.X, test.Fs)
    elif proc in ("htl_offset", "htl_scale"):
        model = _fit_two_stage(proc, train, folds, seed, spec_fs, spec_x, config)
        yhat = predict_baseline(model, test.X, test.Fs)
    else:
        variant = "constrained" if proc == "affine_const" else "full_with_intercept"
        specs = (spec_fs, spec_fs, KernelSpec(fam, ells["g3"]))
        model = _fit_affine(variant, train, folds, seed, specs, config)
        yhat = predict(model, test.X, test.Fs)
    return rmse(yhat, test.y)


def aggregate_rows(rows) -> list[tuple[str, int, float, float]]:
    """Mean and sample standard deviation per (procedure, n), repeat order kept."""
    groups: dict[tuple[str, int], list[float]] = {}
    order = []
    for proc, n, _, value in rows:
        key = (proc, n)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(value)
    out = []
    for proc, n in order:
        vals = np.asarray(groups[(proc, n)])
        sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out.append((proc, n, float(np.mean(vals)), sd))
    return out


def _worker_count() -> int:
    raw = os.environ.get("AFFINETL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_benchmark(dataset: Dataset, config: BenchmarkConfig,
                  test_dataset: Dataset | None = None) -> BenchmarkReport:
    """Run the full (procedure, size, repeat) sweep.

    A failing cell is recorded as NaN with a log line on stderr; the sweep
    always completes.  Cells are independent, so AFFINETL_THREADS > 1 runs
    them in a thread pool; results are merged in cell order regardless.
    """
    cells = [
        (proc, n, rep)
        for proc in config.procedures
        for n in config.train_sizes
        for rep in range(config.repeats)
    ]

    def compute(cell):
        proc, n, rep = cell
        try:
            return _run_cell(dataset, test_dataset, proc, n, rep, config)
        except Exception as exc:
            print(f"affinetl: cell {cell} failed: {exc}", file=sys.stderr)
            return float("nan")

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(compute, cells))
    else:
        values = [compute(cell) for cell in cells]

    report = BenchmarkReport()
    for (proc, n, rep), value in zip(cells, values):
        report.rows.append((proc, n, rep, value))
        if math.isnan(value):
            report.failures += 1
    report.aggregate = aggregate_rows(report.rows)
    return report
