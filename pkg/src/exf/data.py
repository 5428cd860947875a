"""Datasets: synthetic clusters, feature-file I/O, class-disjoint splits, batching.

Two on-disk formats are supported:

* CSV with header ``label,f0,...,f{D-1}``, one sample per line.
* Binary: magic ``EXF1``, little-endian u32 N and u32 D, then N records of
  one u32 label followed by D float64 features.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateError, InvalidInputError, InvalidParameterError, ParseError

BIN_MAGIC = b"EXF1"
CENTER_RETRIES = 1000


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    split_tag: str = "train"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"features must be a non-empty N x D matrix, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise InvalidInputError(f"{X.shape[0]} rows but {y.shape} labels")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise InvalidInputError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, idx, split_tag=None) -> "Dataset":
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            split_tag=split_tag or self.split_tag,
        )


def generate_clusters(classes, per_class, d_in, separation=4.0, noise=1.0, seed=0) -> Dataset:
    """Isotropic Gaussian blobs around well-separated centers.

    Centers are rejection-sampled uniformly from ``[0, separation]^d_in``
    until every pair is at least ``separation`` apart.  Samples are drawn in
    class order from a single generator, so output depends only on the
    arguments.
    """
    if classes < 2 or per_class < 1 or d_in < 1:
        raise InvalidParameterError("need classes >= 2, per_class >= 1, d_in >= 1")
    if not separation > 0 or noise < 0:
        raise InvalidParameterError("need separation > 0 and noise >= 0")
    rng = np.random.default_rng(seed)
    centers = []
    for c in range(classes):
        for _ in range(CENTER_RETRIES):
            cand = rng.uniform(0.0, separation, size=d_in)
            if all(np.linalg.norm(cand - other) >= separation for other in centers):
                centers.append(cand)
                break
        else:
            raise DegenerateError(
                f"could not place center {c} of {classes} at separation {separation} "
                f"in {d_in} dims after {CENTER_RETRIES} tries"
            )
    centers = np.array(centers)
    labels = np.repeat(np.arange(classes), per_class)
    X = centers[labels] + noise * rng.standard_normal((labels.size, d_in))
    return Dataset(X, labels, classes)


def split_by_class(ds: Dataset, train_fraction=0.5, seed=0):
    """Partition the classes (not the samples) into train and test sets."""
    present = ds.classes()
    if present.size < 2:
        raise InvalidInputError("need at least two classes to split")
    k = int(round(train_fraction * present.size))
    if not 0 < k < present.size:
        raise InvalidParameterError(
            f"train fraction {train_fraction} leaves one side empty ({present.size} classes)"
        )
    rng = np.random.default_rng(seed)
    train_classes = np.sort(rng.permutation(present)[:k])
    mask = np.isin(ds.labels, train_classes)
    return (
        ds.subset(np.flatnonzero(mask), "train"),
        ds.subset(np.flatnonzero(~mask), "test"),
    )


def split_by_sample(ds: Dataset, train_fraction=0.5, seed=0):
    """Stratified sample split sharing all classes (used for classifier runs)."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in ds.classes():
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        k = int(round(train_fraction * idx.size))
        train_idx.extend(idx[:k])
        test_idx.extend(idx[k:])
    if not train_idx or not test_idx:
        raise InvalidParameterError(f"train fraction {train_fraction} leaves one side empty")
    return (
        ds.subset(np.sort(train_idx), "train"),
        ds.subset(np.sort(test_idx), "test"),
    )


@dataclass(frozen=True)
class AugmentConfig:
    noise_std: float = 0.0
    feature_dropout_prob: float = 0.0
    views: int = 2

    def __post_init__(self):
        if self.noise_std < 0 or not 0 <= self.feature_dropout_prob < 1 or self.views < 1:
            raise InvalidParameterError(
                "need noise_std >= 0, feature_dropout_prob in [0, 1), views >= 1"
            )


def augment_views(X, cfg: AugmentConfig, seed=None) -> list:
    """Independent noisy/dropout copies of ``X``; ``seed`` may be an int or a Generator."""
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    views = []
    for _ in range(cfg.views):
        V = X.copy()
        if cfg.noise_std > 0:
            V += cfg.noise_std * rng.standard_normal(X.shape)
        if cfg.feature_dropout_prob > 0:
            V[rng.random(X.shape) < cfg.feature_dropout_prob] = 0.0
        views.append(V)
    return views


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray
    views: list
    labels: np.ndarray

    def stacked(self):
        """Views concatenated row-wise, with labels repeated per view."""
        return np.vstack(self.views), np.tile(self.labels, len(self.views))


def make_batches(ds: Dataset, batch_size, rng, augment: AugmentConfig = AugmentConfig(views=1)):
    """Yield one epoch of shuffled batches; a trailing partial batch is dropped.

    ``rng`` is consumed (permutation first, then augmentation draws), so
    successive epochs see different orders while a whole run stays
    reproducible from its initial seed.
    """
    if batch_size < 3:
        raise InvalidParameterError("batch_size must be >= 3")
    if batch_size > len(ds):
        raise InvalidParameterError(f"batch_size {batch_size} exceeds dataset size {len(ds)}")
    rng = np.random.default_rng(rng)
    order = rng.permutation(len(ds))
    for start in range(0, len(ds) - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        views = augment_views(ds.features[idx], augment, rng)
        yield Batch(idx, views, ds.labels[idx])


def _infer_format(path: Path, fmt):
    if fmt:
        return fmt
    return "bin" if path.suffix.lower() in (".bin", ".exf") else "csv"


def save_dataset(ds: Dataset, path, fmt=None):
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label"] + [f"f{k}" for k in range(ds.dim)])
        for lab, row in zip(ds.labels, ds.features):
            w.writerow([int(lab)] + [repr(float(v)) for v in row])
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "bin":
        N, D = ds.features.shape
        rec = np.dtype([("label", "<u4"), ("x", "<f8", (D,))])
        arr = np.empty(N, dtype=rec)
        arr["label"] = ds.labels
        arr["x"] = ds.features
        path.write_bytes(BIN_MAGIC + struct.pack("<II", N, D) + arr.tobytes())
    else:
        raise InvalidParameterError(f"unknown dataset format {fmt!r}")


def load_dataset(path, fmt=None, class_count=None) -> Dataset:
    """Read a CSV or binary feature file.

    ``class_count`` defaults to ``max(label) + 1``.
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        X, y = _read_csv(path)
    elif fmt == "bin":
        X, y = _read_bin(path)
    else:
        raise InvalidParameterError(f"unknown dataset format {fmt!r}")
    if class_count is None:
        class_count = int(y.max()) + 1
    elif y.max() >= class_count:
        raise ParseError(f"{path}: label {int(y.max())} out of range for {class_count} classes")
    return Dataset(X, y, class_count, split_tag="train")


def _read_csv(path: Path):
    text = path.read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    D = len(header) - 1
    expected = ["label"] + [f"f{k}" for k in range(D)]
    if D < 1 or [h.strip() for h in header] != expected:
        raise ParseError(f"{path}: line 1: header must be 'label,f0,...,f{{D-1}}'")
    labels, feats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != D + 1:
            raise ParseError(f"{path}: line {lineno}: expected {D + 1} fields, got {len(row)}")
        try:
            lab = int(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if lab < 0:
            raise ParseError(f"{path}: line {lineno}: negative label {lab}")
        labels.append(lab)
        feats.append(vals)
    if not labels:
        raise ParseError(f"{path}: no data rows")
    return np.array(feats, dtype=np.float64), np.array(labels, dtype=np.int64)


def _read_bin(path: Path):
    raw = path.read_bytes()
    if raw[:4] != BIN_MAGIC:
        raise ParseError(f"{path}: offset 0: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise ParseError(f"{path}: offset 4: truncated header")
    N, D = struct.unpack_from("<II", raw, 4)
    if N < 1 or D < 1:
        raise ParseError(f"{path}: offset 4: invalid shape N={N} D={D}")
    rec = np.dtype([("label", "<u4"), ("x", "<f8", (D,))])
    need = 12 + N * rec.itemsize
    if len(raw) != need:
        raise ParseError(f"{path}: offset {min(len(raw), need)}: expected {need} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=rec, offset=12, count=N)
    return arr["x"].astype(np.float64), arr["label"].astype(np.int64)
