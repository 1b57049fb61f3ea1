"""Command line: datasets -> factorization -> features -> SVM -> report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import backend_name, get_backend
from .classify import load_svm, save_svm, svm_predict, svm_train
from .dataset import Dataset, load_ucr, make_synthetic_figure1, save_ucr, znormalize_series
from .errors import ComputeError, ConfigError, DimensionError, InfaError
from .factorization import load_model, save_model
from .representation import (
    invariant_representation,
    read_features,
    round_half_up,
    scale_plan,
    transform_foldin,
    write_features,
)
from .segmentation import segment_count, segment_series

log = logging.getLogger("infa")

MASS_TOL = 1e-9
# names of RunConfig fields a user may override
OVERRIDABLE = ("L", "K", "delta", "lambda_p", "iterations", "scales", "mode", "seed",
               "threads", "all_windows", "pair_multiplier", "svm_scale")


@dataclass
class RunConfig:
    series_length: int
    L: int
    K: int
    delta: int
    delta_frac: float
    delta_mode: str  # "fraction": per-scale round(delta_frac * L'); "fixed": delta everywhere
    scales: int
    lambda_p: float
    iterations: int
    seed: int
    mode: str = "joint"
    large: bool = False
    threads: int = 1
    all_windows: bool = False
    pair_multiplier: int = 1
    znorm: bool = False
    svm_degree: int = 3
    svm_C: float = 1.0
    svm_scale: bool = False
    train: str | None = None
    test: str | None = None
    overrides: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_defaults(Q: int, overrides: dict | None = None, large: bool = False) -> RunConfig:
    """Derive hyper-parameters from the series length, then apply overrides.

    Percentages round half up and are clamped to the module minimums.
    """
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    unknown = set(ov) - set(OVERRIDABLE) - {"train", "test", "znorm", "svm_degree", "svm_C"}
    if unknown:
        raise ConfigError(f"unknown overrides {sorted(unknown)}")
    L = int(ov.get("L", max(2, round_half_up(0.20 * Q))))
    K = max(2, round_half_up((0.10 if large else 0.50) * Q))
    delta_frac = 0.20 if large else 0.05
    K = int(ov.get("K", K))
    if "delta" in ov:
        delta, mode_delta = int(ov["delta"]), "fixed"
    else:
        delta, mode_delta = max(1, round_half_up(delta_frac * L)), "fraction"
    cfg = RunConfig(
        series_length=Q, L=L, K=K, delta=delta, delta_frac=delta_frac, delta_mode=mode_delta,
        scales=int(ov.get("scales", 4)), lambda_p=float(ov.get("lambda_p", 1.0)),
        iterations=int(ov.get("iterations", 15)), seed=int(ov.get("seed", 0)),
        mode=ov.get("mode", "joint"), large=large, threads=int(ov.get("threads", 1)),
        all_windows=bool(ov.get("all_windows", False)),
        pair_multiplier=int(ov.get("pair_multiplier", 1)), znorm=bool(ov.get("znorm", False)),
        svm_degree=int(ov.get("svm_degree", 3)), svm_C=float(ov.get("svm_C", 1.0)),
        svm_scale=bool(ov.get("svm_scale", False)),
        train=ov.get("train"), test=ov.get("test"),
        overrides={k: v for k, v in ov.items() if k not in ("train", "test")},
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    Q = cfg.series_length
    if cfg.mode not in ("joint", "foldin"):
        raise ConfigError(f"mode must be joint or foldin, got {cfg.mode!r}")
    if cfg.K < 2:
        raise ConfigError(f"K must be >= 2, got {cfg.K}")
    if cfg.lambda_p < 0:
        raise ConfigError("lambda_p must be >= 0")
    if cfg.iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if cfg.scales < 1:
        raise ConfigError("scales must be >= 1")
    if cfg.threads < 1 or cfg.pair_multiplier < 1:
        raise ConfigError("threads and pair_multiplier must be >= 1")
    if not 1 <= cfg.L < Q:
        raise ConfigError(f"L must satisfy 1 <= L < Q={Q}, got {cfg.L}")
    if not 1 <= cfg.delta <= cfg.L:
        raise ConfigError(f"delta must satisfy 1 <= delta <= L={cfg.L}, got {cfg.delta}")
    if segment_count(Q, cfg.L, cfg.delta, cfg.all_windows) < 1:
        raise ConfigError(f"no segments for Q={Q}, L={cfg.L}, delta={cfg.delta}")
    if cfg.svm_degree < 1 or cfg.svm_C <= 0:
        raise ConfigError("SVM degree must be >= 1 and C > 0")


@contextlib.contextmanager
def stage(name: str, timings: dict | None = None):
    """Tag errors with the pipeline stage and record wall-clock time."""
    t0 = time.perf_counter()
    try:
        yield
    except InfaError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc
    except Exception as exc:  # noqa: BLE001
        raise ComputeError(f"[{name}] {type(exc).__name__}: {exc}") from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@contextlib.contextmanager
def staged_output(out: Path):
    """Write into a scratch directory; move into ``out`` only on success."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".infa-partial-", dir=out.parent))
    try:
        yield scratch
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    out.mkdir(parents=True, exist_ok=True)
    for item in scratch.iterdir():
        target = out / item.name
        if target.is_dir():
            shutil.rmtree(target)
        elif target.exists():
            target.unlink()
        shutil.move(str(item), str(target))
    scratch.rmdir()


def _load(path, znorm=False) -> Dataset:
    d = load_ucr(path)
    return znormalize_series(d) if znorm else d


def _represent(cfg: RunConfig, d: Dataset, seed: int, backend=None):
    return invariant_representation(
        d, cfg.L, cfg.K, lambda_p=cfg.lambda_p, iterations=cfg.iterations, scales=cfg.scales,
        seed=seed, delta_frac=cfg.delta_frac,
        delta=cfg.delta if cfg.delta_mode == "fixed" else None,
        all_windows=cfg.all_windows, pair_multiplier=cfg.pair_multiplier,
        threads=cfg.threads, backend=backend,
    )


def _check_mass(F, label: str) -> float:
    dev = F.mass_deviation()
    if not dev <= MASS_TOL:
        raise ComputeError(f"{label}: per-scale feature sums deviate from M_s by {dev:.3g}")
    return dev


def _write_predictions(path: Path, true, pred, names, meta):
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "true", "predicted"])
        for i, (t, p) in enumerate(zip(true, pred)):
            wr.writerow([i, names[t], names[p]])
    path.with_suffix(".json").write_text(json.dumps({"config": meta}, indent=2))


def run_once(cfg: RunConfig, train: Dataset, test: Dataset, seed: int, out: Path,
             backend=None) -> dict:
    """One seeded pass of the pipeline; artifacts go to ``out``."""
    timings: dict[str, float] = {}
    meta = dict(cfg.to_dict(), seed=seed)
    models_dir = out / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    n_train = train.n_series

    if cfg.mode == "joint":
        with stage("factorize", timings):
            both = Dataset(np.vstack([train.series, test.series]),
                           np.concatenate([train.labels, test.labels]),
                           train.class_count, train.name, train.label_names)
            F, models = _represent(cfg, both, seed, backend)
            mass = _check_mass(F, "joint features")
            F_train, F_test = F.values[:n_train], F.values[n_train:]
    else:
        with stage("factorize", timings):
            F, models = _represent(cfg, train, seed, backend)
            mass = _check_mass(F, "train features")
            F_train = F.values
        with stage("transform", timings):
            G = transform_foldin(test, models, backend)
            mass = max(mass, _check_mass(G, "fold-in features"))
            F_test = G.values

    with stage("write-features", timings):
        for name, rows, d in (("features_train.csv", F_train, train),
                              ("features_test.csv", F_test, test)):
            part = type(F)(rows, F.layout, F.K, F.warnings)
            write_features(out / name, part, [d.label_names[c] for c in d.labels], meta)
        for m in models:
            save_model(m, models_dir / f"scale_{m.scale}.json", meta)

    with stage("train-svm", timings):
        svm = svm_train(F_train, train.labels, cfg.svm_degree, cfg.svm_C, scale=cfg.svm_scale)
        save_svm(svm, out / "svm.json", dict(meta, features="features_train.csv"))
    with stage("predict", timings):
        pred = svm_predict(svm, F_test)
        _write_predictions(out / "predictions.csv", test.labels, pred, train.label_names, meta)

    C = train.class_count
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (test.labels, pred), 1)
    return {
        "dataset": train.name,
        "seed": seed,
        "error_rate": float(np.mean(pred != test.labels)),
        "n_train": n_train,
        "n_test": test.n_series,
        "class_names": list(train.label_names),
        "confusion": confusion.tolist(),
        "mass_conservation_max_deviation": mass,
        "scale_layout": [asdict(r) for r in F.layout],
        "warnings": F.warnings,
        "predictions": pred.tolist(),
        "timings_seconds": timings,
        "config": meta,
    }


def cmd_evaluate(cfg: RunConfig, out, n_seeds: int = 1, backend=None,
                 train: Dataset | None = None, test: Dataset | None = None) -> dict:
    """Full pipeline over ``n_seeds`` consecutive seeds; returns the report."""
    timings: dict[str, float] = {}
    with stage("load", timings):
        train = train if train is not None else _load(cfg.train, cfg.znorm)
        test = test if test is not None else _load(cfg.test, cfg.znorm)
        if test.length != train.length:
            raise DimensionError(f"test length {test.length} != train length {train.length}")
        if test.class_count > train.class_count:
            raise DimensionError("test set has classes unseen in training")
    seeds = [cfg.seed + i for i in range(n_seeds)]
    with staged_output(Path(out)) as scratch:
        runs = []
        for s in seeds:
            target = scratch if n_seeds == 1 else scratch / f"seed_{s}"
            target.mkdir(parents=True, exist_ok=True)
            runs.append(run_once(cfg, train, test, s, target, backend))
        errors = [r["error_rate"] for r in runs]
        report = {
            "version": __version__,
            "backend": backend_name(get_backend(backend)),
            "dataset": train.name,
            "config": cfg.to_dict(),
            "seeds": seeds,
            "error_rate": float(np.mean(errors)),
            "error_mean": float(np.mean(errors)),
            "error_min": float(np.min(errors)),
            "error_max": float(np.max(errors)),
            "runs": runs,
            "timings_seconds": dict(timings, total=sum(
                sum(r["timings_seconds"].values()) for r in runs) + sum(timings.values())),
        }
        (scratch / "report.json").write_text(json.dumps(report, indent=2))
    return report


# argument parsing ------------------------------------------------------------

def _hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--L", type=int, help="base window length (default 20%% of Q)")
    p.add_argument("--K", type=int, help="patterns per scale (default 50%% of Q)")
    p.add_argument("--delta", type=int, help="fixed window offset for every scale "
                   "(default: 5%% of each scale's window)")
    p.add_argument("--lambda-p", dest="lambda_p", type=float, help="pattern ridge weight (1)")
    p.add_argument("--iters", dest="iterations", type=int, help="iterations (15)")
    p.add_argument("--scales", type=int, help="window scales (4)")
    p.add_argument("--mode", choices=("joint", "foldin"), help="joint (default) or foldin")
    p.add_argument("--seed", type=int, help="random seed (env INFA_SEED, else 0)")
    p.add_argument("--large", action="store_true", help="K = 10%% of Q, delta = 20%% of L")
    p.add_argument("--threads", type=int, help="scales fitted in parallel (1)")
    p.add_argument("--all-windows", dest="all_windows", action="store_true", default=None,
                   help="also keep the last window when it fits exactly")
    p.add_argument("--pair-multiplier", dest="pair_multiplier", type=int,
                   help="membership pairs per segment, in multiples of K (1)")
    p.add_argument("--znorm", action="store_true", default=None,
                   help="z-normalize whole series before segmenting")
    p.add_argument("--backend", choices=("auto", "compiled", "pure"), default="auto")


def _overrides(args) -> dict:
    ov = {k: getattr(args, k, None) for k in OVERRIDABLE + ("znorm",)}
    if ov.get("seed") is None and os.environ.get("INFA_SEED"):
        try:
            ov["seed"] = int(os.environ["INFA_SEED"])
        except ValueError:
            raise ConfigError(f"INFA_SEED must be an integer, got {os.environ['INFA_SEED']!r}")
    for k in ("svm_degree", "svm_C"):
        if getattr(args, k, None) is not None:
            ov[k] = getattr(args, k)
    return ov


def _config_for(args, Q: int) -> RunConfig:
    ov = _overrides(args)
    ov["train"] = getattr(args, "train", None)
    ov["test"] = getattr(args, "test", None)
    return resolve_defaults(Q, ov, large=args.large)


def _cmd_synth(args) -> int:
    save_ucr(make_synthetic_figure1(args.seed if args.seed is not None else 0), args.out)
    return 0


def _cmd_segment(args) -> int:
    d = _load(args.data, args.znorm)
    cfg = _config_for(args, d.length)
    S = segment_series(d, cfg.L, cfg.delta, cfg.all_windows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, values=S.values, window_length=S.window_length, offset=S.offset,
             segments_per_series=S.segments_per_series, config=json.dumps(cfg.to_dict()))
    print(f"{d.n_series} series x {S.segments_per_series} segments x {S.window_length} points")
    return 0


def _cmd_factorize(args) -> int:
    train = _load(args.train, args.znorm)
    cfg = _config_for(args, train.length)
    test = _load(args.test, args.znorm) if args.test and cfg.mode == "joint" else None
    data = train
    if test is not None:
        data = Dataset(np.vstack([train.series, test.series]),
                       np.concatenate([train.labels, test.labels]),
                       max(train.class_count, test.class_count), train.name, train.label_names)
    with staged_output(Path(args.out)) as scratch:
        with stage("factorize"):
            F, models = _represent(cfg, data, cfg.seed, args.backend)
            _check_mass(F, "features")
        meta = dict(cfg.to_dict(), seed=cfg.seed)
        (scratch / "models").mkdir()
        for m in models:
            save_model(m, scratch / "models" / f"scale_{m.scale}.json", meta)
        n = train.n_series
        write_features(scratch / "features_train.csv", type(F)(F.values[:n], F.layout, F.K, F.warnings),
                       [train.label_names[c] for c in train.labels], meta)
        if test is not None:
            write_features(scratch / "features_test.csv",
                           type(F)(F.values[n:], F.layout, F.K, F.warnings),
                           [test.label_names[c] for c in test.labels], meta)
    return 0


def _cmd_transform(args) -> int:
    d = _load(args.data, args.znorm)
    paths = sorted(Path(args.models).glob("scale_*.json"),
                   key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise ConfigError(f"no scale_*.json models in {args.models}")
    models = [load_model(p) for p in paths]
    with stage("transform"):
        F = transform_foldin(d, models, args.backend)
        _check_mass(F, "fold-in features")
    meta = json.loads(paths[0].read_text()).get("meta", {})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features(out, F, [d.label_names[c] for c in d.labels], dict(meta, mode="foldin"))
    return 0


def _labels_from_tokens(tokens, names=None):
    names = names or sorted(set(tokens), key=lambda t: float(t) if _num(t) else t)
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[t] for t in tokens], dtype=np.int64), names


def _num(t):
    try:
        float(t)
    except ValueError:
        return False
    return True


def _cmd_train_svm(args) -> int:
    X, tokens, side = read_features(args.features)
    y, names = _labels_from_tokens(tokens)
    with stage("train-svm"):
        m = svm_train(X, y, args.svm_degree or 3, args.svm_C or 1.0, scale=args.scale)
    save_svm(m, args.out, {"features": str(args.features), "class_names": names,
                           "config": side.get("hyper", {})})
    return 0


def _cmd_predict(args) -> int:
    Xtr, tr_tokens, _ = read_features(args.train_features)
    doc = json.loads(Path(args.svm).read_text())
    names = doc.get("meta", {}).get("class_names") or _labels_from_tokens(tr_tokens)[1]
    m = load_svm(args.svm, Xtr)
    X, tokens, side = read_features(args.features)
    pred = svm_predict(m, X)
    known = [t in names for t in tokens]
    true = [names.index(t) if k else -1 for t, k in zip(tokens, known)]
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "true", "predicted"])
        for i, (t, p) in enumerate(zip(tokens, pred)):
            wr.writerow([i, t, names[p]])
    out.with_suffix(".json").write_text(json.dumps({"config": side.get("hyper", {})}, indent=2))
    if all(known):
        print(f"error rate {np.mean(np.array(true) != pred):.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    train = _load(args.train, args.znorm)
    cfg = _config_for(args, train.length)
    report = cmd_evaluate(cfg, args.out, n_seeds=args.seeds, backend=args.backend, train=train)
    if args.seeds > 1:
        print(f"{report['dataset']}: error mean {report['error_mean']:.4f} "
              f"min {report['error_min']:.4f} max {report['error_max']:.4f} "
              f"over seeds {report['seeds']}")
    else:
        print(f"{report['dataset']}: error {report['error_rate']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write the two-pattern toy dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("segment", help="segment a dataset into normalized windows (.npz)")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    _hyper_flags(s)
    s.set_defaults(func=_cmd_segment)

    s = sub.add_parser("factorize", help="fit per-scale models and write features")
    s.add_argument("--train", required=True)
    s.add_argument("--test", help="also factorized in joint mode")
    s.add_argument("--out", required=True)
    _hyper_flags(s)
    s.set_defaults(func=_cmd_factorize)

    s = sub.add_parser("transform", help="fold-in features for new series")
    s.add_argument("--models", required=True, help="directory with scale_*.json")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--znorm", action="store_true")
    s.add_argument("--backend", choices=("auto", "compiled", "pure"), default="auto")
    s.set_defaults(func=_cmd_transform)

    s = sub.add_parser("train-svm", help="train the polynomial SVM on a feature CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--degree", dest="svm_degree", type=int)
    s.add_argument("--C", dest="svm_C", type=float)
    s.add_argument("--scale", action="store_true", help="max-abs column scaling")
    s.set_defaults(func=_cmd_train_svm)

    s = sub.add_parser("predict", help="apply a trained SVM to a feature CSV")
    s.add_argument("--svm", required=True)
    s.add_argument("--train-features", required=True, help="features the SVM was trained on")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_predict)

    s = sub.add_parser("evaluate", help="full train/test run with a JSON report")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", type=int, default=1, help="repeat over consecutive seeds")
    s.add_argument("--degree", dest="svm_degree", type=int)
    s.add_argument("--C", dest="svm_C", type=float)
    s.add_argument("--scale", dest="svm_scale", action="store_true", default=None,
                   help="max-abs column scaling before the SVM")
    _hyper_flags(s)
    s.set_defaults(func=_cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfaError as exc:
        print(f"infa: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
