"""Classification datasets: CSV ingestion, splitting, scaling and generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    """``features`` is (n, d) float, ``labels`` are dense ints 0..k-1.

    ``class_names[i]`` is the original token for label ``i``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidInputError(f"features must be a non-empty (n, d) matrix, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise InvalidInputError(f"{x.shape[0]} rows but labels of shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            raise InvalidInputError("labels must be integers")
        if y.min() < 0:
            raise InvalidInputError("labels must be non-negative")
        if self.class_names is not None:
            names = tuple(self.class_names)
            if y.max() >= len(names):
                raise InvalidInputError(f"label {y.max()} has no entry in class_names")
            object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.class_names)


def load_csv(path, label_column=-1, has_header: bool = True) -> Dataset:
    """Read a comma-separated file with one label column.

    ``label_column`` is a header name (needs ``has_header``) or a zero-based
    index; negative indices count from the end. Labels are numbered by first
    appearance.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row and any(c.strip() for c in row)]
    header = None
    if has_header:
        if not rows:
            raise ParseError("missing header", path=path, line=1)
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise ParseError("no data rows", path=path)
    width = len(header) if header is not None else len(rows[0][1])
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise ParseError(f"label column {label_column!r} given by name but the file has no header", path=path)
        if label_column not in header:
            raise ParseError(f"unknown label column {label_column!r}; header is {header}", path=path, line=1)
        col = header.index(label_column)
    else:
        col = int(label_column)
        if not -width <= col < width:
            raise ParseError(f"label column index {col} out of range for {width} columns", path=path)
        col %= width
    if width < 2:
        raise ParseError("need at least one feature column besides the label", path=path)

    names: dict[str, int] = {}
    features, labels = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", path=path, line=lineno)
        values = []
        for j, cell in enumerate(row):
            if j == col:
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", path=path, line=lineno, column=j + 1) from None
        token = row[col].strip()
        labels.append(names.setdefault(token, len(names)))
        features.append(values)
    return Dataset(np.array(features), np.array(labels, dtype=np.int64), tuple(names))


def save_csv(d: Dataset, path, header: bool = True) -> None:
    """Write features then the label (as its class name when known) as the last column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(d.d)] + ["label"])
        for x, y in zip(d.features, d.labels):
            label = d.class_names[y] if d.class_names is not None else int(y)
            w.writerow([repr(float(v)) for v in x] + [label])


def split(d: Dataset, test_fraction: float, rng: np.random.Generator,
          stratified: bool = True) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test split.

    The test side gets ``round(test_fraction * n)`` rows; when stratified,
    each class contributes ``round(test_fraction * n_c)`` rows instead.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError("test_fraction must lie in (0, 1)")
    if stratified:
        test = []
        for c in np.unique(d.labels):
            members = np.flatnonzero(d.labels == c)
            if members.size < 2:
                raise InvalidInputError(f"class {c} has {members.size} example; stratified split needs 2")
            k = min(members.size - 1, max(1, int(round(test_fraction * members.size))))
            test.append(rng.permutation(members)[:k])
        test_idx = np.sort(np.concatenate(test))
    else:
        k = int(round(test_fraction * d.n))
        if not 0 < k < d.n:
            raise InvalidInputError(f"a {test_fraction} split of {d.n} rows leaves one side empty")
        test_idx = np.sort(rng.permutation(d.n)[:k])
    mask = np.zeros(d.n, dtype=bool)
    mask[test_idx] = True
    return d.subset(np.flatnonzero(~mask)), d.subset(test_idx)


@dataclass(frozen=True, eq=False)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray


def fit_standardizer(train: Dataset) -> Standardizer:
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0)
    # a constant column is only centered
    stds = np.where(stds > 0, stds, 1.0)
    return Standardizer(means, stds)


def apply_standardizer(s: Standardizer, d: Dataset) -> Dataset:
    if d.d != s.means.shape[0]:
        raise InvalidInputError(f"standardizer fitted on {s.means.shape[0]} features, data has {d.d}")
    return Dataset((d.features - s.means) / s.stds, d.labels, d.class_names)


def gen_blobs(k: int, per_class: int, d: int = 2, separation: float = 5.0, noise: float = 1.0,
              seed: int = 0) -> Dataset:
    """Isotropic Gaussian clouds with class ``i`` centred at ``i * separation`` on the first axis."""
    if k < 1 or per_class < 1 or d < 1:
        raise InvalidInputError("k, per_class and d must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((k, d))
    centers[:, 0] = separation * np.arange(k)
    labels = np.repeat(np.arange(k), per_class)
    features = centers[labels] + noise * rng.standard_normal((k * per_class, d))
    return Dataset(features, labels, tuple(f"class{i}" for i in range(k)))


def gen_rings(n: int, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Two concentric annuli of radius 1 (label 0) and 2 (label 1)."""
    if n < 2:
        raise InvalidInputError("gen_rings needs n >= 2")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    radius = 1.0 + labels + noise * rng.standard_normal(n)
    features = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    return Dataset(features, labels, ("inner", "outer"))
