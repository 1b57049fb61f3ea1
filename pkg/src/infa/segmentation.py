"""Sliding-window segmentation with per-segment z-normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, zscore
from .errors import ConfigError, NoSegmentsError, WindowTooLargeError


@dataclass(frozen=True)
class SegmentTensor:
    values: np.ndarray  # (N, M, L)
    window_length: int
    offset: int
    segments_per_series: int

    @property
    def shape(self):
        return self.values.shape

    def starts(self) -> np.ndarray:
        """0-based start index of each window."""
        return self.offset * np.arange(self.segments_per_series)


def segment_count(Q: int, L: int, delta: int, all_windows: bool = False) -> int:
    """Windows per series.

    The default follows ``floor((Q - L) / delta)``, which drops the last
    window even when it fits exactly (Q=150, L=45, delta=13 gives 8).
    ``all_windows`` counts every window that fits: ``floor(...) + 1``.
    """
    m = (Q - L) // delta
    return m + 1 if all_windows else m


def segment_series(d: Dataset | np.ndarray, L: int, delta: int,
                   all_windows: bool = False) -> SegmentTensor:
    T = d.series if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    if T.ndim != 2:
        raise ConfigError("expected an (N, Q) array of series")
    Q = T.shape[1]
    if L < 1 or delta < 1:
        raise ConfigError(f"window length and offset must be >= 1 (L={L}, delta={delta})")
    if delta > L:
        raise ConfigError(f"offset {delta} exceeds window length {L}")
    if L >= Q:
        raise WindowTooLargeError(f"window length {L} must be below series length {Q}")
    M = segment_count(Q, L, delta, all_windows)
    if M < 1:
        raise NoSegmentsError(f"no segments for Q={Q}, L={L}, delta={delta}")
    idx = delta * np.arange(M)[:, None] + np.arange(L)[None, :]
    values = np.ascontiguousarray(zscore(T[:, idx], axis=2))
    values.setflags(write=False)
    return SegmentTensor(values, L, delta, M)
