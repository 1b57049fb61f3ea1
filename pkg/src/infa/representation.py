"""Multi-scale bag-of-patterns features: summed memberships per pattern."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import get_backend
from .dataset import Dataset
from .errors import DimensionError, RepresentationInfeasibleError
from .factorization import FactorModel, Hyperparams, fit, nearest_pattern, one_hot
from .segmentation import segment_count, segment_series

log = logging.getLogger(__name__)

FOLDIN_STREAM = 7919


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ScaleRecord:
    scale: int
    window_length: int
    offset: int
    segments: int
    columns: tuple[int, int]  # [start, stop)


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (N, K * n_scales)
    layout: list[ScaleRecord]
    K: int
    warnings: list[str] = field(default_factory=list)

    @property
    def n_scales(self) -> int:
        return len(self.layout)

    def column_names(self) -> list[str]:
        return [f"s{r.scale}_p{k + 1}" for r in self.layout for k in range(self.K)]

    def mass_deviation(self) -> float:
        """Largest |row sum over a scale's block - segments| over rows and scales."""
        worst = 0.0
        for r in self.layout:
            block = self.values[:, r.columns[0]:r.columns[1]].sum(axis=1)
            worst = max(worst, float(np.max(np.abs(block - r.segments), initial=0.0)))
        return worst


def scale_plan(Q: int, base_L: int, scales: int, delta_frac: float = 0.05,
               delta: int | None = None, all_windows: bool = False):
    """(scale, L', delta, M) for feasible scales plus warnings for skipped ones."""
    plan, notes = [], []
    for s in range(1, scales + 1):
        Ls = base_L * s
        ds = delta if delta is not None else max(1, round_half_up(delta_frac * Ls))
        if Ls >= Q:
            notes.append(f"scale {s} skipped: window {Ls} >= series length {Q}")
            continue
        if ds > Ls:
            notes.append(f"scale {s} skipped: offset {ds} > window {Ls}")
            continue
        M = segment_count(Q, Ls, ds, all_windows)
        if M < 1:
            notes.append(f"scale {s} skipped: no segments (L'={Ls}, delta={ds})")
            continue
        plan.append((s, Ls, ds, M))
    return plan, notes


def invariant_representation(d: Dataset, base_L: int, K: int, lambda_p: float = 1.0,
                             iterations: int = 15, scales: int = 4, seed: int = 0,
                             delta_frac: float = 0.05, delta: int | None = None,
                             all_windows: bool = False, pair_multiplier: int = 1,
                             threads: int = 1, backend=None):
    """Fit one factorization per window scale ``base_L * s`` and concatenate
    the per-pattern membership sums.

    ``delta`` fixes the offset for every scale; otherwise each scale uses
    ``max(1, round(delta_frac * L'))``. Scale ``s`` is seeded with
    ``seed + s``. Returns ``(FeatureMatrix, models)``.
    """
    plan, notes = scale_plan(d.length, base_L, scales, delta_frac, delta, all_windows)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if not plan:
        raise RepresentationInfeasibleError(
            f"no feasible scale for Q={d.length}, L={base_L}, scales={scales}"
        )
    kernels = get_backend(backend) if not hasattr(backend, "membership_sweep") else backend

    def run(item):
        s, Ls, ds, _ = item
        S = segment_series(d, Ls, ds, all_windows)
        h = Hyperparams(K=K, L=Ls, delta=ds, lambda_p=lambda_p, iterations=iterations,
                        seed=seed + s, pair_multiplier=pair_multiplier, all_windows=all_windows)
        m = fit(S, h, backend=kernels)
        m.series_length = d.length
        m.scale = s
        log.info("scale %d: L=%d delta=%d M=%d objective %.6g -> %.6g",
                 s, Ls, ds, S.segments_per_series, m.history[0], m.history[-1])
        return m

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(run, plan))
    else:
        models = [run(item) for item in plan]

    blocks, layout = [], []
    for idx, ((s, Ls, ds, M), m) in enumerate(zip(plan, models)):
        blocks.append(m.memberships.sum(axis=1))
        layout.append(ScaleRecord(s, Ls, ds, M, (idx * K, (idx + 1) * K)))
    return FeatureMatrix(np.hstack(blocks), layout, K, notes), models


def foldin_memberships(series: np.ndarray, m: FactorModel, backend=None) -> np.ndarray:
    """Memberships of new series against the fixed patterns of ``m``.

    Every series gets the same random stream, so a row's result does not
    depend on which other rows are transformed with it.
    """
    kernels = get_backend(backend) if not hasattr(backend, "membership_sweep") else backend
    h = m.hyper
    S = segment_series(series, h.L, h.delta, h.all_windows)
    N, M, L = S.values.shape
    X = S.values.reshape(N * M, L)
    P = np.ascontiguousarray(m.patterns, dtype=np.float64)
    assign = nearest_pattern(X, P)
    D = one_hot(assign, h.K)
    xi = np.ascontiguousarray(X - P[assign])
    # flat segments carry no shape; they keep their initial assignment
    live = np.any(X != 0.0, axis=1).reshape(N, M)
    rng = np.random.default_rng([h.seed, FOLDIN_STREAM])
    n_draws = h.K * h.pair_multiplier
    for _ in range(h.iterations):
        local = rng.permutation(M).astype(np.int64)
        rand = rng.random((M, n_draws))
        for i in range(N):
            keep = live[i, local]
            kernels.membership_sweep(xi, D, P, i * M + local[keep], rand[keep])
    return D.reshape(N, M, h.K)


def transform_foldin(d_new: Dataset | np.ndarray, models: list[FactorModel],
                     backend=None) -> FeatureMatrix:
    """Features for unseen series with every scale's patterns held fixed."""
    T = d_new.series if isinstance(d_new, Dataset) else np.atleast_2d(np.asarray(d_new, float))
    Q = T.shape[1]
    blocks, layout = [], []
    K = models[0].K
    for idx, m in enumerate(models):
        if m.series_length is not None and m.series_length != Q:
            raise DimensionError(
                f"series length {Q} differs from training length {m.series_length}")
        if m.hyper.L >= Q:
            raise DimensionError(f"window {m.hyper.L} does not fit series of length {Q}")
        D = foldin_memberships(T, m, backend)
        blocks.append(D.sum(axis=1))
        layout.append(ScaleRecord(m.scale, m.hyper.L, m.hyper.delta, D.shape[1],
                                  (idx * K, (idx + 1) * K)))
    return FeatureMatrix(np.hstack(blocks), layout, K)


def write_features(path, F: FeatureMatrix, labels: list[str], meta: dict | None = None) -> None:
    """CSV ``label,s1_p1,...`` plus a JSON sidecar with the scale layout."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["label"] + F.column_names())
        for lab, row in zip(labels, F.values):
            wr.writerow([lab] + [repr(float(v)) for v in row])
    side = {
        "K": F.K,
        "scale_layout": [asdict(r) for r in F.layout],
        "warnings": F.warnings,
        "hyper": meta or {},
    }
    path.with_suffix(".json").write_text(json.dumps(side, indent=2))


def read_features(path):
    """Return ``(values, label_tokens, sidecar)``; sidecar is {} if absent."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "label":
        raise DimensionError(f"{path}: missing feature header")
    labels = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    side_path = path.with_suffix(".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    return values.reshape(len(labels), len(rows[0]) - 1), labels, side
