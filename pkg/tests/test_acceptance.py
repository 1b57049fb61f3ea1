"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The UCR reproduction
is marked ``slow`` (several minutes on one core); deselect it with
``-m "not slow"``.
"""
import json
import time

import numpy as np
import pytest

from infa import cli
from infa.classify import NnModel, dual_objective, loo_error, poly_kernel, smo
from infa.dataset import Dataset, load_ucr, make_synthetic_figure1
from infa.factorization import (
    Hyperparams,
    fit,
    objective,
    rebuild_residuals,
    update_membership_pair,
    update_pattern_point,
)
from infa.representation import FeatureMatrix, invariant_representation, read_features
from infa.segmentation import segment_series

from conftest import ucr_pair
from oracles import (
    bounded_pair,
    golden_pattern_point,
    random_instance,
    svm_dual_enumeration,
    svm_dual_grid,
)

FIG1 = dict(base_L=20, K=2, scales=1, delta=20, all_windows=True)
FIG1_FLAGS = ["--K", "2", "--L", "20", "--delta", "20", "--scales", "1", "--all-windows"]
FIG1_TARGET = np.array([[1.9, 1.1], [1.7, 1.3], [1.3, 1.7], [1.1, 1.9]])


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_synthetic_loo(verdict):
    t0 = time.perf_counter()
    d = make_synthetic_figure1(0)
    raw_euclid = loo_error(d.series, d.labels, "euclidean")
    raw_dtw = loo_error(d.series, d.labels, "dtw")
    F, _ = invariant_representation(d, seed=0, **FIG1)
    feat = loo_error(F.values, d.labels)
    elapsed = time.perf_counter() - t0
    ok = raw_euclid == 1.0 and raw_dtw == 1.0 and feat == 0.0 and elapsed < 10.0
    verdict(1, "synthetic 1-NN leave-one-out", ok,
            f"raw euclidean {raw_euclid}, raw dtw {raw_dtw}, features {feat}, {elapsed:.2f}s")


def test_criterion_2_synthetic_feature_values(verdict):
    aligned = []
    for seed in range(5):
        d = make_synthetic_figure1(seed)
        F = invariant_representation(d, seed=seed, **FIG1)[0].values
        # order columns so the first is the single-peak pattern
        aligned.append(F if np.abs(F - FIG1_TARGET).max() <= np.abs(F[:, ::-1] - FIG1_TARGET).max()
                       else F[:, ::-1])
    mean = np.mean(aligned, axis=0)
    worst = float(np.max(np.abs(mean - FIG1_TARGET)))
    verdict(2, "synthetic feature totals", worst <= 0.15,
            f"mean F {np.round(mean, 3).tolist()}, max deviation {worst:.3f}")


UCR_CASES = [("Coffee", 0.10), ("Gun_Point", 0.06), ("ECGFiveDays", 0.05)]


@pytest.mark.slow
@pytest.mark.parametrize("name,threshold", UCR_CASES, ids=[c[0] for c in UCR_CASES])
def test_criterion_3_ucr_reproduction(name, threshold, tmp_path, verdict):
    train, test = ucr_pair(name)
    errors, times = [], []
    for seed in range(3):
        t0 = time.perf_counter()
        rc = cli.main(["evaluate", "--train", str(train), "--test", str(test),
                       "--seed", str(seed), "--out", str(tmp_path / f"s{seed}")])
        times.append(time.perf_counter() - t0)
        assert rc == 0
        errors.append(json.loads((tmp_path / f"s{seed}" / "report.json").read_text())["error_rate"])
    mean = float(np.mean(errors))
    ok = mean <= threshold and max(times) < 30 * 60
    verdict(3, f"{name} desk-scale error", ok,
            f"errors {np.round(errors, 4).tolist()}, mean {mean:.4f} <= {threshold}, "
            f"slowest run {max(times):.0f}s")


def test_criterion_4_optimization_properties(verdict):
    rng = np.random.default_rng(4)
    worst_increase, worst_sum, min_entry, worst_oracle, worst_drift = 0.0, 0.0, 0.0, 0.0, 0.0
    for _ in range(200):
        S, m = random_instance(rng, fittable=True)
        N, M, K = m.memberships.shape
        L = m.hyper.L
        # (c) closed forms against 1-D numerical minimizers
        k, l = rng.integers(K), rng.integers(L)
        if m.hyper.lambda_p > 0 or np.any(m.memberships[..., k]):
            target = golden_pattern_point(S, m, k, l)
            update_pattern_point(m, k, l)
            worst_oracle = max(worst_oracle, abs(m.patterns[k, l] - target))
        i, j = rng.integers(N), rng.integers(M)
        k, w = rng.choice(K, size=2, replace=False)
        target = bounded_pair(S, m, i, j, k, w)
        update_membership_pair(m, i, j, k, w)
        worst_oracle = max(worst_oracle, abs(m.memberships[i, j, k] - target))
        # (a), (b) over a random sequence of coordinate updates
        obj = objective(S, m)
        for _ in range(30):
            if rng.random() < 0.5:
                i, j = rng.integers(N), rng.integers(M)
                k, w = rng.choice(K, size=2, replace=False)
                update_membership_pair(m, i, j, k, w)
            else:
                update_pattern_point(m, rng.integers(K), rng.integers(L))
            new = objective(S, m)
            worst_increase = max(worst_increase, new - obj)
            obj = new
            min_entry = min(min_entry, float(m.memberships.min()))
            worst_sum = max(worst_sum, float(np.abs(m.memberships.sum(axis=2) - 1).max()))
        # (d) drift after a full fit
        fitted = fit(S, Hyperparams(K=K, L=L, delta=1, lambda_p=m.hyper.lambda_p,
                                    seed=int(rng.integers(2**31))))
        worst_drift = max(worst_drift, rebuild_residuals(S, fitted)[1])
        min_entry = min(min_entry, float(fitted.memberships.min()))
        worst_sum = max(worst_sum, float(np.abs(fitted.memberships.sum(axis=2) - 1).max()))
    ok = (worst_increase <= 1e-9 and min_entry >= 0.0 and worst_sum <= 1e-9
          and worst_oracle <= 1e-6 and worst_drift < 1e-6)
    verdict(4, "optimization properties on 200 instances", ok,
            f"max increase {worst_increase:.2e}, min membership {min_entry}, "
            f"max |sum-1| {worst_sum:.2e}, max oracle gap {worst_oracle:.2e}, "
            f"max drift {worst_drift:.2e}")


def _block_sums_ok(csv_path):
    values, _, side = read_features(csv_path)
    worst = 0.0
    for rec in side["scale_layout"]:
        a, b = rec["columns"]
        worst = max(worst, float(np.abs(values[:, a:b].sum(axis=1) - rec["segments"]).max()))
    return worst


def test_criterion_5_mass_conservation(tmp_path, monkeypatch, verdict):
    syn = tmp_path / "syn.csv"
    cli.main(["synth", "--out", str(syn)])
    rng = np.random.default_rng(5)
    walk = tmp_path / "walk.csv"
    rows = rng.normal(size=(9, 64)).cumsum(axis=1)
    walk.write_text("".join(f"{c % 3 + 1}," + ",".join(repr(float(v)) for v in r) + "\n"
                            for c, r in enumerate(rows)))
    worst = 0.0
    runs = [(syn, FIG1_FLAGS), (walk, ["--L", "8", "--K", "5", "--scales", "4", "--iters", "4"])]
    for data, flags in runs:
        for mode in ("joint", "foldin"):
            out = tmp_path / f"{data.stem}-{mode}"
            assert cli.main(["evaluate", "--train", str(data), "--test", str(data),
                             "--mode", mode, "--out", str(out), *flags]) == 0
            report = json.loads((out / "report.json").read_text())
            worst = max(worst, report["runs"][0]["mass_conservation_max_deviation"],
                        _block_sums_ok(out / "features_train.csv"),
                        _block_sums_ok(out / "features_test.csv"))
    # the automatic check aborts a run whose features break the bound
    monkeypatch.setattr(FeatureMatrix, "mass_deviation", lambda self: 2e-9)
    guarded = cli.main(["evaluate", "--train", str(syn), "--test", str(syn),
                        "--out", str(tmp_path / "guard"), *FIG1_FLAGS]) == 4
    verdict(5, "per-scale mass conservation", worst <= 1e-9 and guarded,
            f"max deviation {worst:.2e} over 4 runs, violation aborts run: {guarded}")


def test_criterion_6_svm_correctness(verdict):
    rng = np.random.default_rng(6)
    worst_gap, worst_eq, box_ok = 0.0, 0.0, True
    for t in range(50):
        n = int(rng.integers(2, 9)) if t >= 10 else 3
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        K = poly_kernel(X, X, 3)
        res = smo(K, y, 1.0)
        got = dual_objective(res.alpha, y, K)
        best, _ = svm_dual_enumeration(K, y, 1.0)
        if n == 3:
            best = max(best, svm_dual_grid(K, y, 1.0))
        worst_gap = max(worst_gap, abs(best - got))
        worst_eq = max(worst_eq, abs(res.alpha @ y))
        box_ok &= bool(np.all((res.alpha >= 0) & (res.alpha <= 1.0)))
    ok = worst_gap <= 1e-4 and worst_eq <= 1e-6 and box_ok
    verdict(6, "SMO against brute-force dual on 50 problems", ok,
            f"max objective gap {worst_gap:.2e}, max |sum a*y| {worst_eq:.2e}, box ok {box_ok}")


def test_criterion_7_determinism(tmp_path, verdict):
    syn = tmp_path / "syn.csv"
    cli.main(["synth", "--out", str(syn), "--seed", "1"])
    train, test = ucr_pair("Coffee")
    cases = [("syn", [str(syn), str(syn)], FIG1_FLAGS + ["--mode", "foldin"]),
             ("coffee", [str(train), str(test)], ["--scales", "2", "--iters", "5"])]
    same = True
    compared = 0
    for tag, (tr, te), flags in cases:
        outs = []
        for rep in range(2):
            out = tmp_path / f"{tag}{rep}"
            assert cli.main(["evaluate", "--train", tr, "--test", te, "--seed", "7",
                             "--out", str(out), *flags]) == 0
            outs.append(out)
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                       if p.is_file() and p.name != "report.json")
        for rel in files:
            same &= (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
            compared += 1
    verdict(7, "bit-identical evaluate artifacts", same and compared >= 10,
            f"{compared} feature/model/prediction files compared")


def test_criterion_8_linear_scaling(verdict):
    rng = np.random.default_rng(8)
    Ns = [100, 200, 400]
    base = rng.normal(size=(max(Ns), 100)).cumsum(axis=1)
    h = Hyperparams(K=10, L=20, delta=2, iterations=5, seed=0)
    times = []
    for N in Ns:
        S = segment_series(base[:N], 20, 2)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            fit(S, h)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    slope, icpt = np.polyfit(Ns, times, 1)
    pred = slope * np.array(Ns) + icpt
    r2 = 1 - np.sum((np.array(times) - pred) ** 2) / np.sum((times - np.mean(times)) ** 2)
    verdict(8, "fit time linear in N", r2 >= 0.95,
            f"N={Ns}, seconds {np.round(times, 4).tolist()}, R^2 {r2:.4f}")
