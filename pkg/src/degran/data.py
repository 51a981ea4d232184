"""Dataset ingestion, z-score normalization, fold planning and synthetic blobs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import as_matrix

STD_FLOOR = 1e-12


class CsvFormatError(ValueError):
    """Malformed CSV input. ``row`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


@dataclass
class RawDataset:
    features: np.ndarray
    labels: list[str] | None = None
    feature_names: list[str] | None = None
    source: str = ""

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        n_rows, n_cols = self.features.shape
        if n_rows < 2:
            raise ValueError("a dataset needs at least 2 rows")
        if self.labels is not None:
            self.labels = [str(x) for x in self.labels]
            if len(self.labels) != n_rows:
                raise ValueError(f"{len(self.labels)} labels for {n_rows} rows")
        if self.feature_names is not None and len(self.feature_names) != n_cols:
            raise ValueError(f"{len(self.feature_names)} feature names for {n_cols} columns")

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int | None:
        if self.labels is None:
            return None
        return len(set(self.labels))

    def subset(self, idx) -> "RawDataset":
        idx = np.asarray(idx)
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return RawDataset(self.features[idx], labels, self.feature_names, self.source)


@dataclass(frozen=True)
class NormalizationStats:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.stds) <= 0):
            raise ValueError("stds must be strictly positive")

    @classmethod
    def unit(cls, n: int) -> "NormalizationStats":
        """Stats of already-normalized data: zero means, unit stds."""
        return cls(np.zeros(n), np.ones(n))

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.means) / self.stds

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["stds"], dtype=float))


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray = field(repr=False)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def load_csv(path, has_header: bool = True, label_column: int | None = None) -> RawDataset:
    """Read a comma-separated numeric table.

    ``label_column`` may be negative (``-1`` is the last column). Rows and
    columns in error messages are 1-based, counting data rows only.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_csv(text, has_header=has_header, label_column=label_column, source=str(path))


def parse_csv(text: str, has_header: bool = True, label_column: int | None = None,
              source: str = "<string>") -> RawDataset:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvFormatError("empty file")
    header = None
    if has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        if not rows:
            raise CsvFormatError("no data rows")
    width = len(header) if header is not None else len(rows[0])
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise CsvFormatError(f"expected {width} fields, found {len(r)}", row=i)

    label_idx = None
    if label_column is not None:
        label_idx = label_column if label_column >= 0 else width + label_column
        if not 0 <= label_idx < width:
            raise CsvFormatError(f"label column {label_column} out of range for {width} columns")
    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise CsvFormatError("no feature columns")

    feats = np.empty((len(rows), len(feature_cols)))
    for i, r in enumerate(rows):
        for out_j, j in enumerate(feature_cols):
            cell = r[j].strip()
            try:
                feats[i, out_j] = float(cell)
            except ValueError:
                raise CsvFormatError(f"non-numeric value {cell!r}", row=i + 1, column=j + 1) from None
            if not np.isfinite(feats[i, out_j]):
                raise CsvFormatError(f"non-finite value {cell!r}", row=i + 1, column=j + 1)

    labels = [r[label_idx].strip() for r in rows] if label_idx is not None else None
    names = [header[j] for j in feature_cols] if header is not None else None
    return RawDataset(feats, labels, names, source)


def format_csv(features, labels=None, feature_names=None, label_name: str = "class") -> str:
    """Serialize a feature matrix (plus optional trailing label column)."""
    features = np.asarray(features, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(feature_names) if feature_names else [f"x{j + 1}" for j in range(features.shape[1])]
    w.writerow(names + ([label_name] if labels is not None else []))
    for i, row in enumerate(features):
        cells = [repr(float(v)) for v in row]
        if labels is not None:
            cells.append(labels[i])
        w.writerow(cells)
    return buf.getvalue()


def write_csv(path, dataset: RawDataset, label_name: str = "class") -> None:
    Path(path).write_text(
        format_csv(dataset.features, dataset.labels, dataset.feature_names, label_name),
        encoding="utf-8",
    )


def fit_stats(x) -> NormalizationStats:
    """Per-column mean and population std; zero-spread columns get std 1.

    A column counts as constant when its std is below ``STD_FLOOR`` relative
    to its magnitude, so rounding noise in the mean does not get amplified.
    """
    x = np.asarray(x, dtype=float)
    flat = np.ptp(x, axis=0) == 0
    means = np.where(flat, x[0], x.mean(axis=0))
    stds = x.std(axis=0)
    tiny = flat | (stds < STD_FLOOR * np.maximum(1.0, np.abs(means)))
    stds = np.where(tiny, 1.0, stds)
    return NormalizationStats(means, stds)


def zscore(d: RawDataset) -> tuple[RawDataset, NormalizationStats]:
    stats = fit_stats(d.features)
    return replace(d, features=stats.apply(d.features)), stats


def kfold_split(n: int, k: int, seed: int, labels=None) -> FoldPlan:
    """Shuffle ``range(n)`` and deal it round-robin into ``k`` folds.

    When ``labels`` is given the shuffled order is grouped by label before
    dealing, which stratifies the folds.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} points into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if labels is not None:
        if len(labels) != n:
            raise ValueError("labels length does not match n")
        keys = np.asarray([str(labels[i]) for i in order])
        order = order[np.argsort(keys, kind="stable")]
    assignments = np.empty(n, dtype=int)
    assignments[order] = np.arange(n) % k
    return FoldPlan(k, assignments)


@dataclass(frozen=True)
class BlobSpec:
    """Geometry of the synthetic Gaussian mixture.

    Centers are drawn uniformly in a box and rejected until every pair is at
    least ``separation`` apart; each blob has isotropic covariance ``scale**2``.
    """

    separation: float = 6.0
    scale: float = 1.0
    box: float | None = None
    max_tries: int = 10_000


def blob_centers(dims: int, n_classes: int, rng: np.random.Generator, spec: BlobSpec) -> np.ndarray:
    half = spec.box if spec.box is not None else spec.separation * max(1.0, n_classes ** (1.0 / dims))
    centers = []
    tries = 0
    while len(centers) < n_classes:
        tries += 1
        if tries > spec.max_tries:
            raise RuntimeError("could not place blob centers; enlarge the box")
        cand = rng.uniform(-half, half, size=dims)
        if all(np.linalg.norm(cand - c) >= spec.separation for c in centers):
            centers.append(cand)
    return np.asarray(centers)


def synth_gaussian(n_points: int, dims: int, n_classes: int, seed: int,
                   spec: BlobSpec | None = None) -> tuple[RawDataset, np.ndarray]:
    """Sample isotropic Gaussian blobs with near-equal class sizes.

    Returns the dataset (labels ``"0"``..) and the blob centers it was drawn
    from.
    """
    if n_classes < 1:
        raise ValueError("n_classes must be at least 1")
    if dims < 1:
        raise ValueError("dims must be at least 1")
    if n_points < n_classes:
        raise ValueError("n_points must be at least n_classes")
    spec = spec or BlobSpec()
    rng = np.random.default_rng(seed)
    centers = blob_centers(dims, n_classes, rng, spec)
    sizes = np.full(n_classes, n_points // n_classes)
    sizes[: n_points % n_classes] += 1
    parts = []
    labels = []
    for j, size in enumerate(sizes):
        parts.append(centers[j] + spec.scale * rng.standard_normal((size, dims)))
        labels += [str(j)] * int(size)
    names = [f"x{j + 1}" for j in range(dims)]
    ds = RawDataset(np.vstack(parts), labels, names, f"synthetic(seed={seed})")
    return ds, centers
