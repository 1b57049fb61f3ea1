"""Convolutional factorization of segments into latent patterns and
simplex-constrained memberships, fitted by stochastic coordinate descent.

Random stream (one ``numpy.random.Generator`` seeded with ``seed``), consumed
in this order:

1. initialization: one ``integers`` draw for the first pattern, then one
   ``random`` draw per further pattern;
2. per iteration: ``permutation(N*M)`` for the segment visit order, then
   ``random((c, K * pair_multiplier))`` blocks of ``c <= DRAW_BLOCK`` visited
   segments (one draw per membership pair), then ``permutation(K*L)`` for
   the pattern-point visit order.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _pure
from ._kernels import get_backend
from .errors import ConfigError, DimensionError, InfeasibleKError
from .segmentation import SegmentTensor

log = logging.getLogger(__name__)

DRAW_BLOCK = 4096
DIST_BLOCK = 2048


@dataclass(frozen=True)
class Hyperparams:
    K: int
    L: int
    delta: int
    lambda_p: float = 1.0
    iterations: int = 15
    seed: int = 0
    pair_multiplier: int = 1
    all_windows: bool = False

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.lambda_p < 0:
            raise ConfigError(f"lambda_p must be >= 0, got {self.lambda_p}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.L < 1 or self.delta < 1:
            raise ConfigError("L and delta must be >= 1")
        if self.pair_multiplier < 1:
            raise ConfigError("pair_multiplier must be >= 1")


@dataclass
class FactorModel:
    patterns: np.ndarray  # (K, L)
    memberships: np.ndarray  # (N, M, K)
    residuals: np.ndarray | None  # (N, M, L); None when loaded without segments
    hyper: Hyperparams
    history: list = field(default_factory=list)
    series_length: int | None = None
    scale: int = 1

    @property
    def K(self) -> int:
        return self.patterns.shape[0]

    def flat(self):
        """(S, L) residual and (S, K) membership views over all segments."""
        N, M, K = self.memberships.shape
        return self.residuals.reshape(N * M, -1), self.memberships.reshape(N * M, K)


def _check_dims(S: SegmentTensor, m: FactorModel):
    N, M, L = S.values.shape
    if m.memberships.shape[:2] != (N, M) or m.patterns.shape[1] != L:
        raise DimensionError(
            f"model D{m.memberships.shape}/P{m.patterns.shape} does not match segments {S.values.shape}"
        )


def reconstruct(m: FactorModel) -> np.ndarray:
    return np.einsum("nmk,kl->nml", m.memberships, m.patterns)


def objective(S: SegmentTensor, m: FactorModel) -> float:
    _check_dims(S, m)
    err = S.values - reconstruct(m)
    return float(np.sum(err * err) + m.hyper.lambda_p * np.sum(m.patterns * m.patterns))


def _residual_objective(m: FactorModel) -> float:
    return float(np.sum(m.residuals * m.residuals)
                 + m.hyper.lambda_p * np.sum(m.patterns * m.patterns))


def nearest_pattern(X: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Index of the closest pattern (squared Euclidean, ties to lowest) per row."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for a in range(0, X.shape[0], DIST_BLOCK):
        diff = X[a:a + DIST_BLOCK, None, :] - P[None, :, :]
        out[a:a + DIST_BLOCK] = np.argmin(np.einsum("skl,skl->sk", diff, diff), axis=1)
    return out


def _sqdist(X: np.ndarray, p: np.ndarray) -> np.ndarray:
    diff = X - p
    return np.einsum("sl,sl->s", diff, diff)


def one_hot(assign: np.ndarray, K: int) -> np.ndarray:
    D = np.zeros((assign.shape[0], K))
    D[np.arange(assign.shape[0]), assign] = 1.0
    return D


def initialize(S: SegmentTensor, K: int, seed=0, hyper: Hyperparams | None = None) -> FactorModel:
    """Seed patterns from segments k-means++ style and assign each segment
    one-hot to its nearest pattern.

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed in place).
    """
    N, M, L = S.values.shape
    X = S.values.reshape(N * M, L)
    n = X.shape[0]
    if K > n:
        raise InfeasibleKError(f"K={K} exceeds the number of segments {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if hyper is None:
        hyper = Hyperparams(K=K, L=L, delta=S.offset,
                            seed=seed if isinstance(seed, (int, np.integer)) else 0)

    chosen = [int(rng.integers(n))]
    mind = _sqdist(X, X[chosen[0]])
    for _ in range(1, K):
        cum = np.cumsum(mind)
        total = cum[-1]
        if not total > 0.0:
            raise InfeasibleKError(f"fewer than K={K} distinct segments")
        idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        idx = min(idx, int(np.flatnonzero(mind > 0.0)[-1]))
        chosen.append(idx)
        np.minimum(mind, _sqdist(X, X[idx]), out=mind)

    P = X[chosen].copy()
    assign = nearest_pattern(X, P)
    D = one_hot(assign, K)
    xi = X - P[assign]
    return FactorModel(P, D.reshape(N, M, K), xi.reshape(N, M, L), hyper)


def update_pattern_point(m: FactorModel, k: int, l: int) -> FactorModel:
    """Set ``P[k, l]`` to its ridge-regularized optimum and refresh residuals.

    Skipped when the denominator vanishes (no membership mass and no ridge).
    Updates ``m`` in place and returns it.
    """
    xi, D = m.flat()
    _pure.pattern_step(xi, D, m.patterns, m.hyper.lambda_p, k, l)
    return m


def update_membership_pair(m: FactorModel, i: int, j: int, k: int, w: int) -> FactorModel:
    """Optimal transfer of mass between ``D[i, j, k]`` and ``D[i, j, w]``,
    keeping their sum. A no-op when patterns ``k`` and ``w`` coincide."""
    if k == w:
        raise ValueError("pair indices must differ")
    _pure.pair_step(m.residuals[i, j], m.memberships[i, j], m.patterns, k, w)
    return m


def membership_iteration(m: FactorModel, rng: np.random.Generator, backend) -> None:
    xi, D = m.flat()
    n = D.shape[0]
    n_draws = m.K * m.hyper.pair_multiplier
    order = rng.permutation(n).astype(np.int64)
    for a in range(0, n, DRAW_BLOCK):
        block = order[a:a + DRAW_BLOCK]
        rand = rng.random((block.shape[0], n_draws))
        backend.membership_sweep(xi, D, m.patterns, block, rand)


def pattern_iteration(m: FactorModel, rng: np.random.Generator, backend) -> None:
    xi, D = m.flat()
    order = rng.permutation(m.patterns.size).astype(np.int64)
    backend.pattern_sweep(xi, D, m.patterns, float(m.hyper.lambda_p), order)


def fit(S: SegmentTensor, h: Hyperparams, backend=None) -> FactorModel:
    """Initialize, then run ``h.iterations`` rounds of membership-pair and
    pattern-point sweeps. ``history`` holds the objective after init and
    after every iteration."""
    if S.window_length != h.L:
        raise DimensionError(f"segments have L={S.window_length}, hyper-parameters say {h.L}")
    kernels = backend if hasattr(backend, "membership_sweep") else get_backend(backend)
    rng = np.random.default_rng(h.seed)
    m = initialize(S, h.K, rng, hyper=h)
    m.history.append(_residual_objective(m))
    for it in range(h.iterations):
        membership_iteration(m, rng, kernels)
        pattern_iteration(m, rng, kernels)
        m.history.append(_residual_objective(m))
        log.debug("iteration %d objective %.10g", it + 1, m.history[-1])
    return m


def rebuild_residuals(S: SegmentTensor, m: FactorModel) -> tuple[FactorModel, float]:
    """Recompute residuals from their definition; return the model and the
    largest absolute change against the incrementally maintained values."""
    _check_dims(S, m)
    fresh = S.values - reconstruct(m)
    drift = 0.0 if m.residuals is None else float(np.max(np.abs(fresh - m.residuals), initial=0.0))
    m.residuals = np.ascontiguousarray(fresh)
    return m, drift


def model_to_dict(m: FactorModel) -> dict:
    h = m.hyper
    return {
        "K": h.K,
        "L": h.L,
        "delta": h.delta,
        "lambda_p": h.lambda_p,
        "iterations": h.iterations,
        "seed": h.seed,
        "pair_multiplier": h.pair_multiplier,
        "all_windows": h.all_windows,
        "series_length": m.series_length,
        "scale": m.scale,
        "patterns": m.patterns.tolist(),
        "memberships": m.memberships.tolist(),
        "objective_history": list(m.history),
    }


def save_model(m: FactorModel, path, meta: dict | None = None) -> None:
    doc = model_to_dict(m)
    if meta:
        doc["meta"] = meta
    # float repr is the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(doc))


def load_model(path, S: SegmentTensor | None = None) -> FactorModel:
    doc = json.loads(Path(path).read_text())
    h = Hyperparams(**{k: doc[k] for k in asdict(Hyperparams(2, 1, 1)) if k in doc})
    P = np.array(doc["patterns"], dtype=np.float64).reshape(h.K, h.L)
    D = np.array(doc["memberships"], dtype=np.float64)
    if D.size == 0:
        D = D.reshape(0, 0, h.K)
    m = FactorModel(P, D, None, h, list(doc.get("objective_history", [])),
                    doc.get("series_length"), doc.get("scale", 1))
    if S is not None:
        rebuild_residuals(S, m)
    return m
