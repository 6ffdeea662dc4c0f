"""LibSVM-format parsing and synthetic dataset generation."""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

SYNTHETIC_KINDS = ("separable-logistic", "quadratic", "two-cluster-classification")


@dataclass(frozen=True)
class Dataset:
    """Sparse feature rows with labels.

    Each row is a tuple of (index, value) pairs with strictly increasing
    1-based indices. ``d`` is the feature dimension and must cover every
    index present. Datasets are immutable after construction.
    """

    rows: tuple
    labels: tuple
    d: int

    def __post_init__(self):
        if len(self.rows) != len(self.labels):
            raise ValueError(
                f"{len(self.rows)} rows but {len(self.labels)} labels"
            )
        if self.d < 0:
            raise ValueError("feature dimension must be non-negative")
        for r, row in enumerate(self.rows):
            prev = 0
            for idx, _val in row:
                if idx <= prev:
                    raise ValueError(
                        f"row {r + 1}: indices must be strictly increasing "
                        f"and 1-based (saw {idx} after {prev})"
                    )
                prev = idx
            if prev > self.d:
                raise ValueError(
                    f"row {r + 1}: feature index {prev} exceeds dimension {self.d}"
                )

    @property
    def n(self) -> int:
        return len(self.rows)

    def dense(self) -> np.ndarray:
        """Materialize the feature matrix as an (n, d) float64 array."""
        out = np.zeros((self.n, self.d))
        for r, row in enumerate(self.rows):
            for idx, val in row:
                out[r, idx - 1] = val
        return out

    def dense_labels(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.float64)


def map_binary_labels(labels) -> np.ndarray:
    """Map raw labels to {-1, +1} for logistic problems.

    Accepted raw values: 0 -> -1, 1 -> +1, -1 -> -1, +1 -> +1.
    Anything else is an error.
    """
    out = np.empty(len(labels))
    for k, y in enumerate(labels):
        if y in (0.0, -1.0):
            out[k] = -1.0
        elif y == 1.0:
            out[k] = 1.0
        else:
            raise ValueError(
                f"label {y!r} not usable for logistic loss "
                "(expected one of 0, 1, -1, +1)"
            )
    return out


def parse_libsvm(text: str, d: int | None = None) -> Dataset:
    """Parse LibSVM-format text into a :class:`Dataset`.

    Each non-empty, non-comment line is ``label idx:val idx:val ...``.
    Lines beginning with ``#`` are skipped. The dimension is the maximum
    feature index seen, unless ``d`` overrides it upward.
    """
    rows: list[tuple] = []
    labels: list[float] = []
    max_index = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ValueError(
                f"line {lineno}: unparseable label {parts[0]!r}"
            ) from None
        row = []
        prev = 0
        for token in parts[1:]:
            idx_str, sep, val_str = token.partition(":")
            if not sep:
                raise ValueError(
                    f"line {lineno}: malformed feature pair {token!r}"
                )
            try:
                idx = int(idx_str)
                val = float(val_str)
            except ValueError:
                raise ValueError(
                    f"line {lineno}: unparseable feature pair {token!r}"
                ) from None
            if idx <= prev:
                raise ValueError(
                    f"line {lineno}: feature indices must be strictly "
                    f"increasing and 1-based (saw {idx} after {prev})"
                )
            prev = idx
            row.append((idx, val))
        max_index = max(max_index, prev)
        rows.append(tuple(row))
        labels.append(label)
    if d is None:
        d = max_index
    elif d < max_index:
        raise ValueError(
            f"requested dimension {d} is below the maximum feature "
            f"index {max_index}; dimension may only be overridden upward"
        )
    return Dataset(rows=tuple(rows), labels=tuple(labels), d=d)


def load_libsvm(path: str, d: int | None = None) -> Dataset:
    """Read LibSVM data from a file path, or standard input when path is '-'."""
    if path == "-":
        return parse_libsvm(sys.stdin.read(), d=d)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh.read(), d=d)


def format_libsvm(dataset: Dataset) -> str:
    """Serialize to LibSVM text. ``parse_libsvm`` of the result round-trips."""
    lines = []
    for row, label in zip(dataset.rows, dataset.labels):
        fields = [repr(float(label))]
        fields.extend(f"{idx}:{val!r}" for idx, val in row)
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def scale_features(dataset: Dataset) -> Dataset:
    """Scale each feature column into [-1, 1] by its max absolute value.

    Off by default everywhere; columns that are identically zero are
    left untouched.
    """
    max_abs = np.zeros(dataset.d)
    for row in dataset.rows:
        for idx, val in row:
            max_abs[idx - 1] = max(max_abs[idx - 1], abs(val))
    scaled_rows = tuple(
        tuple(
            (idx, val / max_abs[idx - 1] if max_abs[idx - 1] > 0 else val)
            for idx, val in row
        )
        for row in dataset.rows
    )
    return Dataset(rows=scaled_rows, labels=dataset.labels, d=dataset.d)


def _dense_to_rows(features: np.ndarray) -> tuple:
    return tuple(
        tuple((j + 1, float(v)) for j, v in enumerate(row)) for row in features
    )


def generate_synthetic(
    kind: str,
    n: int,
    d: int,
    seed: int,
    *,
    n_classes: int = 4,
    noise: float = 0.01,
) -> Dataset:
    """Generate a deterministic synthetic dataset of the given kind.

    ``separable-logistic`` draws a hidden weight vector and labels each
    row by the sign of its inner product with it. ``quadratic`` draws
    (features, target) pairs for least squares with additive noise of
    scale ``noise``. ``two-cluster-classification`` draws ``n_classes``
    Gaussian clusters with integer class labels for the network task.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be at least 1")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; use one of {SYNTHETIC_KINDS}")
    rng = np.random.default_rng(seed)
    if kind == "separable-logistic":
        features = rng.standard_normal((n, d))
        w = rng.standard_normal(d)
        margins = features @ w
        labels = np.where(margins >= 0, 1.0, -1.0)
    elif kind == "quadratic":
        features = rng.standard_normal((n, d))
        w = rng.standard_normal(d)
        labels = features @ w + noise * rng.standard_normal(n)
    else:
        means = 3.0 * rng.standard_normal((n_classes, d))
        assignments = rng.integers(n_classes, size=n)
        features = means[assignments] + rng.standard_normal((n, d))
        labels = assignments.astype(np.float64)
    return Dataset(
        rows=_dense_to_rows(features),
        labels=tuple(float(y) for y in labels),
        d=d,
    )
