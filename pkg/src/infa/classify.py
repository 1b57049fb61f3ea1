"""Polynomial-kernel SVM trained by SMO (one-vs-one) and 1-NN baselines."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import get_backend
from .errors import DegenerateTrainingError, DimensionError, EmptyDatasetError

log = logging.getLogger(__name__)

TAU = 1e-12


def poly_kernel(A: np.ndarray, B: np.ndarray, degree: int = 3) -> np.ndarray:
    return (np.atleast_2d(A) @ np.atleast_2d(B).T + 1.0) ** degree


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """Soft-margin dual, to be maximized: sum(a) - 1/2 sum a_i a_j y_i y_j K_ij."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def smo(K: np.ndarray, y: np.ndarray, C: float = 1.0, tol: float = 1e-3,
        max_iter: int = 1_000_000) -> SmoResult:
    """Solve the binary dual with maximal-violating-pair working sets.

    ``y`` is +1/-1. Stops when the KKT gap ``max_up - min_low`` drops below
    ``tol``. Ties in pair selection go to the lowest index.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    converged = False
    it = 0
    for it in range(max_iter):
        v = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gap = v[i] - v[j]
        if gap < tol:
            converged = True
            break
        curv = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if curv <= 0:
            curv = TAU
        t = gap / curv
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t, room_i, room_j)
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = old_i + y[i] * t
        alpha[j] = old_j - y[j] * t
        # a step that used up the room lands exactly on the bound
        if t == room_i:
            alpha[i] = C if y[i] > 0 else 0.0
        if t == room_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tol=%g", max_iter, tol)

    v = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(v[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = v[up].max() if up.any() else v[low].min()
        lo = v[low].min() if low.any() else v[up].max()
        bias = float(0.5 * (hi + lo))
    return SmoResult(alpha, bias, it, converged)


@dataclass
class BinaryMachine:
    positive: int  # lower class id; wins when the decision is >= 0
    negative: int
    support: np.ndarray  # indices into the training rows
    coef: np.ndarray  # alpha_i * y_i for the support rows
    bias: float


@dataclass
class SvmModel:
    machines: list[BinaryMachine]
    train_rows: np.ndarray
    degree: int
    C: float
    class_count: int
    scale: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.train_rows.shape[1]

    def decision(self, machine: BinaryMachine, X: np.ndarray) -> np.ndarray:
        sv = self.train_rows[machine.support]
        return poly_kernel(X, sv, self.degree) @ machine.coef + machine.bias

    def to_dict(self) -> dict:
        return {
            "kernel": "(x.y + 1)^degree",
            "degree": self.degree,
            "C": self.C,
            "class_count": self.class_count,
            "scale": None if self.scale is None else self.scale.tolist(),
            "machines": [
                {"positive": m.positive, "negative": m.negative,
                 "support": m.support.tolist(), "coef": m.coef.tolist(), "bias": m.bias}
                for m in self.machines
            ],
        }


def max_abs_scale(X: np.ndarray) -> np.ndarray:
    s = np.max(np.abs(X), axis=0)
    return np.where(s > 0, s, 1.0)


def svm_train(X: np.ndarray, labels: np.ndarray, degree: int = 3, C: float = 1.0,
              tol: float = 1e-3, scale: bool = False) -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != labels.shape[0]:
        raise DimensionError("one feature row per label required")
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise DegenerateTrainingError("SVM training needs at least two classes")
    factors = max_abs_scale(X) if scale else None
    Z = X / factors if scale else X
    class_count = int(labels.max()) + 1
    machines = []
    for ai, a in enumerate(classes):
        for b in classes[ai + 1:]:
            rows = np.flatnonzero((labels == a) | (labels == b))
            y = np.where(labels[rows] == a, 1.0, -1.0)
            K = poly_kernel(Z[rows], Z[rows], degree)
            res = smo(K, y, C, tol)
            keep = res.alpha > 0
            machines.append(BinaryMachine(int(a), int(b), rows[keep],
                                          (res.alpha * y)[keep], res.bias))
    return SvmModel(machines, Z, degree, C, class_count, factors)


def svm_predict(m: SvmModel, X: np.ndarray) -> np.ndarray:
    """One-vs-one majority vote; a zero decision and vote ties go to the
    lower class id."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != m.n_features:
        raise DimensionError(f"expected {m.n_features} features, got {X.shape[1]}")
    if m.scale is not None:
        X = X / m.scale
    votes = np.zeros((X.shape[0], m.class_count), dtype=np.int64)
    for mach in m.machines:
        dec = m.decision(mach, X)
        winner = np.where(dec >= 0.0, mach.positive, mach.negative)
        votes[np.arange(X.shape[0]), winner] += 1
    return np.argmax(votes, axis=1)


def save_svm(m: SvmModel, path, meta: dict | None = None) -> None:
    doc = m.to_dict()
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc))


def load_svm(path, train_rows: np.ndarray) -> SvmModel:
    """Rebuild a model; ``train_rows`` are the (unscaled) rows of the feature
    file the support indices point into."""
    doc = json.loads(Path(path).read_text())
    scale = None if doc["scale"] is None else np.array(doc["scale"])
    rows = np.asarray(train_rows, dtype=np.float64)
    if scale is not None:
        rows = rows / scale
    machines = [BinaryMachine(d["positive"], d["negative"], np.array(d["support"], dtype=np.int64),
                              np.array(d["coef"], dtype=np.float64), d["bias"])
                for d in doc["machines"]]
    return SvmModel(machines, rows, doc["degree"], doc["C"], doc["class_count"], scale)


# nearest neighbour ---------------------------------------------------------

def euclidean(x, y) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.sqrt(d @ d))


def dtw_distance(x, y, backend=None) -> float:
    """Cumulative squared cost of the best unconstrained warping path."""
    return float(get_backend(backend).dtw(x, y))


@dataclass
class NnModel:
    rows: np.ndarray
    labels: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.shape[0] == 0:
            raise EmptyDatasetError("1-NN needs at least one training row")
        if self.metric not in ("euclidean", "dtw"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def distances(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.metric == "euclidean":
            if x.shape[0] != self.rows.shape[1]:
                raise DimensionError("row length differs from training rows")
            diff = self.rows - x
            return np.sqrt(np.einsum("nq,nq->n", diff, diff))
        dtw = get_backend().dtw
        return np.array([dtw(r, x) for r in self.rows])


def nn_neighbor(m: NnModel, x, exclude: int | None = None) -> tuple[int, float]:
    """Index and distance of the nearest training row (ties: lowest index)."""
    d = m.distances(x)
    if exclude is not None:
        d[exclude] = np.inf
    i = int(np.argmin(d))
    return i, float(d[i])


def nn_classify(m: NnModel, x, exclude: int | None = None) -> int:
    return int(m.labels[nn_neighbor(m, x, exclude)[0]])


def loo_error(X: np.ndarray, labels: np.ndarray, metric: str = "euclidean") -> float:
    """Leave-one-out 1-NN error rate; a row never matches itself."""
    m = NnModel(X, labels, metric)
    wrong = sum(nn_classify(m, m.rows[i], exclude=i) != m.labels[i] for i in range(len(m.labels)))
    return wrong / len(m.labels)
