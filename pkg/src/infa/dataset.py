"""Time-series datasets: UCR text I/O, normalization and the two-pattern toy set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyDatasetError, FormatError, ParseError

STD_EPS = 1e-8


@dataclass(frozen=True)
class Dataset:
    """N labeled series of equal length Q.

    ``labels`` are contiguous ids ``0..class_count-1``; ``label_names[c]`` is
    the token the source file used for class ``c``.
    """

    series: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = ""
    label_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        series = np.array(self.series, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if series.ndim != 2 or series.shape[0] < 1:
            raise EmptyDatasetError("dataset must hold at least one series")
        if series.shape[1] < 2:
            raise FormatError(f"series length must be >= 2, got {series.shape[1]}")
        if labels.shape != (series.shape[0],):
            raise FormatError("one label per series required")
        if not np.all(np.isfinite(series)):
            raise DataError("non-finite values in series")
        if self.class_count < 1 or labels.min() < 0 or labels.max() >= self.class_count:
            raise FormatError("labels must lie in 0..class_count-1")
        names = tuple(self.label_names) or tuple(str(c) for c in range(self.class_count))
        if len(names) != self.class_count:
            raise FormatError("label_names must have class_count entries")
        series.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_names", names)

    @property
    def n_series(self) -> int:
        return self.series.shape[0]

    @property
    def length(self) -> int:
        return self.series.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.series[rows], self.labels[rows], self.class_count,
                       self.name, self.label_names)


def _label_token(value: float) -> str:
    if value.is_integer():
        return str(int(value))
    return repr(value)


def load_ucr(path, delimiter: str = "auto", name: str | None = None) -> Dataset:
    """Read a UCR-format file: ``label v1 ... vQ`` per line.

    ``delimiter`` is ``"auto"`` (comma if the first data line has one,
    whitespace otherwise), ``"comma"`` or ``"whitespace"``.
    """
    path = Path(path)
    text = path.read_text()
    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            rows.append((lineno, line))
    if not rows:
        raise EmptyDatasetError(f"{path}: no series found")

    if delimiter == "auto":
        delimiter = "comma" if "," in rows[0][1] else "whitespace"
    if delimiter not in ("comma", "whitespace"):
        raise ValueError(f"unknown delimiter {delimiter!r}")

    raw_labels = []
    values = []
    width = None
    for lineno, line in rows:
        fields = line.split(",") if delimiter == "comma" else line.split()
        fields = [f.strip() for f in fields]
        try:
            nums = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise ParseError(f"{path}:{lineno}: non-numeric field {bad!r}") from None
        if width is None:
            width = len(nums)
            if width < 3:
                raise FormatError(f"{path}:{lineno}: need a label and at least 2 values")
        elif len(nums) != width:
            raise FormatError(
                f"{path}:{lineno}: ragged row, expected {width - 1} values, got {len(nums) - 1}"
            )
        if not all(math.isfinite(v) for v in nums):
            raise DataError(f"{path}:{lineno}: non-finite value")
        raw_labels.append(nums[0])
        values.append(nums[1:])

    uniq = sorted(set(raw_labels))
    index = {v: c for c, v in enumerate(uniq)}
    labels = np.array([index[v] for v in raw_labels], dtype=np.int64)
    return Dataset(
        np.array(values, dtype=np.float64),
        labels,
        len(uniq),
        name if name is not None else path.stem,
        tuple(_label_token(v) for v in uniq),
    )


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_ucr(d: Dataset, path, delimiter: str = "comma") -> None:
    """Write ``d`` in UCR format; values use round-trip-exact repr."""
    sep = "," if delimiter == "comma" else " "
    lines = []
    for row, lab in zip(d.series, d.labels):
        lines.append(sep.join([d.label_names[lab]] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def zscore(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Mean 0 / population std 1 along ``axis``; near-constant slices become 0."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=axis, keepdims=True)
    centered = x - mu
    sd = np.sqrt((centered * centered).mean(axis=axis, keepdims=True))
    flat = sd < STD_EPS
    out = centered / np.where(flat, 1.0, sd)
    return np.where(flat, 0.0, out)


def znormalize_series(d: Dataset) -> Dataset:
    return Dataset(zscore(d.series, axis=1), d.labels, d.class_count, d.name, d.label_names)


# Red (single-peak) weight of each 20-point segment; blue gets the rest.
# Series totals are 1.9 / 1.7 / 1.3 / 1.1. Pure segments (weight 0 or 1) pin
# the prototypes as the extreme points of the data, and the segment order
# makes every raw-space nearest neighbour belong to the other class.
FIGURE1_RED_WEIGHTS = np.array(
    [
        [1.0, 0.9, 0.0],
        [0.0, 0.7, 1.0],
        [1.0, 0.3, 0.0],
        [0.1, 0.0, 1.0],
    ]
)
FIGURE1_LABELS = np.array([0, 0, 1, 1])
FIGURE1_SEGMENT = 20
FIGURE1_NOISE = 0.01


def figure1_prototypes() -> tuple[np.ndarray, np.ndarray]:
    """The single-peaked and double-peaked 20-point shapes, z-normalized."""
    t = np.arange(FIGURE1_SEGMENT, dtype=np.float64)
    bump = lambda c, w: np.exp(-0.5 * ((t - c) / w) ** 2)  # noqa: E731
    red = bump(9.5, 3.5)
    blue = bump(6.5, 2.0) + bump(12.5, 2.0)
    return zscore(red), zscore(blue)


def make_synthetic_figure1(seed: int = 0) -> Dataset:
    """Four series (classes 1 and 2) built from convex mixes of two prototypes."""
    red, blue = figure1_prototypes()
    w = FIGURE1_RED_WEIGHTS[:, :, None]
    clean = (w * red + (1.0 - w) * blue).reshape(4, -1)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-FIGURE1_NOISE, FIGURE1_NOISE, size=clean.shape)
    return Dataset(clean + noise, FIGURE1_LABELS, 2, "figure1", ("1", "2"))
