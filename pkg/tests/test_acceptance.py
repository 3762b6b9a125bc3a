"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines for
passing criteria too.  The torque-benchmark criterion needs real data and
skips itself when the AFFINETL_SARCOS environment variable is unset.
"""

import functools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from affinetl.affine import FitConfig, fit, fit_constrained, objective, predict, update_block
from affinetl.baselines import fit_baseline, predict_baseline
from affinetl.benchmark import BenchmarkConfig, run_benchmark
from affinetl.calibration import (
    BlockLayout,
    build_fused_penalty,
    calibration_objective,
    update_calibration_block,
)
from affinetl.cli import main
from affinetl.data import load_sarcos, synth_dataset
from affinetl.kernels import KernelSpec, gram
from affinetl.model_selection import rmse
from affinetl.solvers import penalized_ls, ridge_solve
from affinetl.spectral import OverlapExperimentConfig, decay_rate, eigvals_desc, run_overlap_experiment

from conftest import fd_gradient, numeric_quadratic_argmin


def criterion(number, label):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except Exception:
                print(f"CRITERION {number} FAIL: {label}")
                raise
            print(f"CRITERION {number} PASS: {label}")
        return run
    return wrap


def make_problem(rng, n):
    X = rng.normal(size=(n, 3))
    Fs = rng.normal(size=(n, 2))
    y = rng.normal(size=n)
    specs = (KernelSpec("rbf", 1.2), KernelSpec("rbf", 1.2), KernelSpec("rbf", 1.5))
    K1 = gram(specs[0], Fs).values
    K2 = gram(specs[1], Fs).values
    K3 = gram(specs[2], X).values
    return X, Fs, y, K1, K2, K3, specs


@criterion(1, "descent + stationarity on 100 seeded problems")
def test_criterion_1_descent_and_stationarity():
    started = time.monotonic()
    rng = np.random.default_rng(1001)
    converged_count = 0
    for trial in range(100):
        n = int(rng.integers(4, 31))
        X, Fs, y, K1, K2, K3, specs = make_problem(rng, n)
        variant = "full" if trial % 2 == 0 else "full_with_intercept"
        cfg = FitConfig(*rng.uniform(0.02, 1.0, size=3), variant=variant,
                        tol=1e-7, max_iter=3000, seed=trial,
                        scale_convention="eqn3")
        model, trace = fit(cfg, X, Fs, y, specs)
        obj = np.asarray(trace.objectives)
        assert np.all(np.diff(obj) <= 1e-9 * (1 + np.abs(obj[:-1]))), \
            f"objective increased on trial {trial}"
        if not trace.converged:
            continue
        converged_count += 1
        tol = 1e-5 * (1 + np.max(np.abs(y)))
        state = [model.a, model.b, model.c, model.d]
        blocks = ["a", "b", "c"] + (["d"] if variant != "full" else [])
        for which in blocks:
            slot = {"a": 0, "b": 1, "c": 2, "d": 3}[which]

            def f(v):
                s = list(state)
                s[slot] = float(v[0]) if which == "d" else v
                return objective(*s, K1, K2, K3, y, cfg)

            x = np.atleast_1d(np.asarray(state[slot], dtype=float))
            g = np.max(np.abs(fd_gradient(f, x)))
            assert g <= tol, f"trial {trial} block {which}: gradient {g:.2e} > {tol:.2e}"
    assert converged_count >= 50, f"only {converged_count}/100 runs converged"
    elapsed = time.monotonic() - started
    assert elapsed <= 60.0, f"suite took {elapsed:.1f}s > 60s"


@criterion(2, "closed forms match numeric-minimizer oracles (<= 1e-5)")
def test_criterion_2_closed_form_exactness():
    rng = np.random.default_rng(2002)
    layout = BlockLayout((("b0", 3), ("b1", 3)))

    # affine block updates, both variants
    for variant in ("full", "full_with_intercept"):
        blocks = ["a", "b", "c"] + (["d"] if variant != "full" else [])
        for trial in range(20):
            n = 6
            _, _, y, K1, K2, K3, _ = make_problem(rng, n)
            cfg = FitConfig(*rng.uniform(0.05, 0.8, size=3), variant=variant,
                            scale_convention="eqn3")
            d0 = 0.0 if variant == "full" else float(rng.normal())
            state = (rng.normal(size=n), rng.normal(size=n), rng.normal(size=n), d0)
            for which in blocks:
                slot = {"a": 0, "b": 1, "c": 2, "d": 3}[which]
                closed = update_block(which, state, K1, K2, K3, y, cfg)

                def f(v):
                    s = list(state)
                    s[slot] = float(v[0]) if which == "d" else v
                    return objective(*s, K1, K2, K3, y, cfg)

                dim = 1 if which == "d" else n
                oracle = numeric_quadratic_argmin(f, dim)
                got = np.atleast_1d(np.asarray(closed, dtype=float))
                assert np.max(np.abs(got - oracle)) <= 1e-5, (variant, which, trial)

    # constrained joint closed form
    for trial in range(20):
        n = 6
        _, _, y, K1, _, K3, _ = make_problem(rng, n)
        lam1, lam3 = rng.uniform(0.05, 1.0, size=2)
        a, c, d = fit_constrained(K1, K3, y, lam1, lam3)

        def f_con(theta):
            aa, cc, dd = theta[:n], theta[n : 2 * n], theta[2 * n]
            r = y - K1 @ aa - K3 @ cc - dd
            return r @ r + lam1 * aa @ K1 @ aa + lam3 * cc @ K3 @ cc

        oracle = numeric_quadratic_argmin(f_con, 2 * n + 1)
        got = np.concatenate([a, c, [d]])
        assert np.max(np.abs(got - oracle)) <= 1e-5, ("constrained", trial)

    # penalized least squares
    for trial in range(20):
        X = rng.normal(size=(15, 5))
        y = rng.normal(size=15)
        A = rng.normal(size=(5, 5))
        lam = A @ A.T + 0.1 * np.eye(5)
        w = penalized_ls(X, y, lam)

        def f_ls(v):
            r = y - X @ v
            return r @ r + v @ lam @ v

        oracle = numeric_quadratic_argmin(f_ls, 5)
        assert np.max(np.abs(w - oracle)) <= 1e-5, ("penalized_ls", trial)

    # calibration block updates
    for trial in range(20):
        n, p = 18, 6
        X = rng.normal(size=(n, p))
        fs = rng.normal(5.0, 1.0, size=n)
        y = fs - X @ (0.2 * rng.normal(size=p)) + 0.05 * rng.standard_normal(n)
        l_beta, l1, l2 = 1.0, 0.4, 1.5
        state = (float(rng.normal()), 1.0 + 0.1 * float(rng.normal()),
                 0.1 * float(rng.normal()), 0.2 * rng.normal(size=p))
        for which, dim in (("alpha", 2), ("beta", 1), ("gamma", p)):
            new = update_calibration_block(which, state, X, fs, y,
                                           l_beta, l1, l2, layout)

            def f_cal(v):
                if which == "alpha":
                    s = (v[0], v[1], state[2], state[3])
                elif which == "beta":
                    s = (state[0], state[1], float(v[0]), state[3])
                else:
                    s = (state[0], state[1], state[2], v)
                return calibration_objective(*s, X, fs, y, l_beta, l1, l2, layout)

            oracle = numeric_quadratic_argmin(f_cal, dim)
            got = np.atleast_1d(np.asarray(new, dtype=float))
            assert np.max(np.abs(got - oracle)) <= 1e-5, ("calibration", which, trial)


@criterion(3, "reduction identities hold to 1e-10")
def test_criterion_3_reduction_identities():
    rng = np.random.default_rng(3003)

    # (i) c-update with a = 0, b = 0, d = 0 is kernel ridge regression on k3
    for _ in range(10):
        n = int(rng.integers(5, 15))
        _, _, y, K1, K2, K3, _ = make_problem(rng, n)
        lam3 = float(rng.uniform(0.05, 1.0))
        cfg = FitConfig(0.1, 0.1, lam3, variant="full_with_intercept",
                        scale_convention="appendix")
        z = np.zeros(n)
        c = update_block("c", (z, z, z, 0.0), K1, K2, K3, y, cfg)
        assert np.max(np.abs(c - ridge_solve(K3, y, lam3))) <= 1e-10

    # (ii) the offset procedure's stage 2 is that same update on residuals
    spec_x, spec_fs = KernelSpec("rbf", 1.5), KernelSpec("rbf", 1.2)
    for _ in range(10):
        n = 12
        X = rng.normal(size=(n, 3))
        Fs = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        model = fit_baseline("htl_offset", X, Fs, y, spec_fs, 0.2,
                             stage2_spec=spec_x, stage2_shrink=0.3)
        resid = y - model.stage1.predict(Fs)
        K3 = gram(spec_x, X).values
        want = ridge_solve(K3, resid, 0.3)
        assert np.max(np.abs(model.stage2.coef - want)) <= 1e-10

    # (iii) fused penalty quadratic form equals the summed regularizer
    layouts = [
        BlockLayout((("a", 3),)),
        BlockLayout((("a", 4), ("b", 2), ("c", 5))),
        BlockLayout((("mass", 10),) + tuple((f"t{i}", 20) for i in range(9))),
    ]
    for trial in range(100):
        layout = layouts[trial % 3]
        l1, l2 = rng.uniform(0.0, 5.0, size=2)
        gamma = rng.normal(size=layout.total)
        lam = np.asarray(build_fused_penalty(layout, l1, l2))
        direct = l1 * float(gamma @ gamma)
        pos = 0
        for _, size in layout.blocks:
            direct += l2 * float(np.sum(np.diff(gamma[pos : pos + size]) ** 2))
            pos += size
        got = float(gamma @ lam @ gamma)
        assert abs(got - direct) <= 1e-10 * (1 + abs(direct))


@criterion(4, "decay-rate estimator: exactness, tight inequality, scale invariance")
def test_criterion_4_decay_rate():
    for n in (2, 10, 100):
        est = decay_rate(np.eye(n))
        assert est.s == 1.0, f"I_{n} gave {est.s}"

    rng = np.random.default_rng(4004)
    matrices = [np.eye(10), np.diag(0.6 ** np.arange(12))]
    for ell in (0.8, 1.5, 3.0):
        matrices.append(gram(KernelSpec("rbf", ell), rng.normal(size=(20, 4))).values)
        matrices.append(gram(KernelSpec("matern", ell, nu=1.5),
                             rng.normal(size=(15, 3))).values)
        matrices.append(gram(KernelSpec("linear", ell),
                             rng.normal(size=(12, 3))).values)

    for K in matrices:
        est = decay_rate(K)
        A = K / np.max(np.diagonal(K))
        lam = eigvals_desc(A)
        fro2 = float(np.sum(A * A))
        idx = np.arange(1, lam.size + 1)
        assert np.all(lam <= fro2 * idx ** (-1.0 / est.s) * (1 + 1e-9))
        if not est.floor_applied and est.s > 1e-3:
            smaller = est.s - 1e-3
            assert np.any(lam > fro2 * idx ** (-1.0 / smaller)), "s is not minimal"
        for c in (0.5, 2.0, 10.0):
            assert abs(decay_rate(c * K).s - est.s) <= 1e-9


@criterion(5, "Hadamard decay rate falls as subspace overlap grows")
def test_criterion_5_overlap_trend():
    started = time.monotonic()
    for family in ("linear", "rbf"):
        spec = KernelSpec(family, math.sqrt(10.0))
        means = []
        for d in range(0, 11):
            cfg = OverlapExperimentConfig(
                d=d, ambient_dim=40, n_bases=10, n_samples=40, repeats=20,
                spec2=spec, spec3=spec, seed=123,
            )
            rows = run_overlap_experiment(cfg)
            means.append(float(np.mean([r.s_hadamard for r in rows])))
        inversions = int(np.sum(np.diff(means) > 0))
        assert inversions <= 1, f"{family}: {inversions} adjacent inversions ({means})"
        gap = means[0] - means[-1]
        assert gap >= 0.02, f"{family}: gap {gap:.4f} < 0.02"
    elapsed = time.monotonic() - started
    assert elapsed <= 300.0, f"took {elapsed:.0f}s > 5 min"


@criterion(6, "synthetic offset-transfer recovery separates the procedures")
def test_criterion_6_transfer_recovery():
    started = time.monotonic()
    noise_sd = 0.01
    ds = synth_dataset("offset_transfer", n=650, dims=2, noise_sd=noise_sd, seed=42)
    split = np.random.default_rng(0).permutation(ds.n)
    train, test = ds.subset(split[:50]), ds.subset(split[50:])
    spec_x = KernelSpec("rbf", math.sqrt(2))
    spec_fs = KernelSpec("rbf", math.sqrt(2))

    results = {}
    m = fit_baseline("only_source", train.X, train.Fs, train.y, spec_fs, 1e-3)
    results["only_source"] = rmse(predict_baseline(m, test.X, test.Fs), test.y)
    m = fit_baseline("htl_offset", train.X, train.Fs, train.y, spec_fs, 1e-4,
                     stage2_spec=spec_x, stage2_shrink=1e-5)
    results["htl_offset"] = rmse(predict_baseline(m, test.X, test.Fs), test.y)
    for variant in ("constrained", "full_with_intercept"):
        cfg = FitConfig(1e-5, 1e-5, 1e-5, variant=variant,
                        scale_convention="appendix", seed=1)
        model, _ = fit(cfg, train.X, train.Fs, train.y, (spec_fs, spec_fs, spec_x))
        results[variant] = rmse(predict(model, test.X, test.Fs), test.y)

    bound = 3 * noise_sd
    for name in ("htl_offset", "constrained", "full_with_intercept"):
        assert results[name] <= bound, f"{name}: {results[name]:.4f} > {bound}"
    assert results["only_source"] >= 5 * bound, \
        f"only_source too accurate: {results['only_source']:.4f}"
    elapsed = time.monotonic() - started
    assert elapsed <= 120.0, f"took {elapsed:.0f}s > 2 min"


@criterion(7, "torque benchmark reproduces the qualitative orderings")
def test_criterion_7_sarcos_conditional():
    data_dir = os.environ.get("AFFINETL_SARCOS")
    if not data_dir:
        pytest.skip("AFFINETL_SARCOS not set; torque data absent")
    train_path = Path(data_dir) / "sarcos_train.csv"
    test_path = Path(data_dir) / "sarcos_test.csv"
    if not train_path.exists() or not test_path.exists():
        pytest.skip(f"torque files not found under {data_dir}")

    checks = {}
    for joint in (1, 7):
        ds = load_sarcos(train_path, target_joint=joint)
        test_ds = load_sarcos(test_path, target_joint=joint)
        config = BenchmarkConfig(
            seed=20260808,
            procedures=("direct", "only_source", "affine_const"),
            train_sizes=(5, 50), repeats=20,
            length_scale_rule="sarcos_appendix",
        )
        report = run_benchmark(ds, config, test_dataset=test_ds)
        by_cell = {}
        for proc, n, rep, value in report.rows:
            by_cell.setdefault((proc, n), []).append(value)
        checks[joint] = by_cell

    only7 = np.asarray(checks[7][("only_source", 50)])
    direct7 = np.asarray(checks[7][("direct", 50)])
    assert np.sum(only7 < direct7) >= 15, "Torque 7: only_source should beat direct"
    const7 = float(np.mean(checks[7][("affine_const", 50)]))
    assert abs(const7 - 0.885) <= 0.15 * 0.885, f"affine_const mean {const7:.3f}"
    only1 = np.asarray(checks[1][("only_source", 50)])
    direct1 = np.asarray(checks[1][("direct", 50)])
    assert np.sum(direct1 < only1) >= 15, "Torque 1: direct should beat only_source"


@criterion(8, "reruns with one seed emit byte-identical CSVs")
def test_criterion_8_determinism(tmp_path):
    def run_twice(args_fn, *files):
        outs = []
        for tag in ("one", "two"):
            root = tmp_path / tag
            root.mkdir(exist_ok=True)
            assert args_fn(root) == 0
            outs.append([(root / f).read_bytes() for f in files])
        assert outs[0] == outs[1]

    data = tmp_path / "ds.csv"
    assert main(["synth", "--kind", "offset_transfer", "--n", "70", "--dims", "2",
                 "--noise-sd", "0.05", "--seed", "5", "--out", str(data)]) == 0

    run_twice(lambda root: main([
        "synth", "--kind", "calibration", "--n", "20", "--dims", "24",
        "--noise-sd", "0.02", "--seed", "9", "--out", str(root / "cal.csv")]),
        "cal.csv")
    run_twice(lambda root: main([
        "benchmark", "--data", str(data), "--seed", "31",
        "--procedures", "direct,htl_offset", "--sizes", "8", "--repeats", "2",
        "--cv-folds", "3", "--test-cap", "30", "--out-dir", str(root / "bench")]),
        "bench/results.csv", "bench/aggregate.csv")
    run_twice(lambda root: main([
        "spectral", "--ambient-dim", "20", "--n-bases", "4", "--n-samples", "10",
        "--repeats", "2", "--seed", "17", "--out", str(root / "spec.csv")]),
        "spec.csv")
    run_twice(lambda root: main([
        "calibrate", "--synth-n", "40", "--dims", "24", "--noise-sd", "0.02",
        "--seed", "23", "--splits", "2", "--train-size", "30", "--test-size", "8",
        "--out-dir", str(root / "cal")]),
        "cal/calibration.csv", "cal/gamma.csv")
