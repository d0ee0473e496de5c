"""Linearly separable datasets: synthetic teachers, the canonical-basis set, and
CSV / IDX ingestion."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from .network import Dataset
from .rng import DATA, TEST, substream

DISTRIBUTIONS = ("gaussian", "uniform")
DEGENERATE_MARGIN = 1e-9
MAX_RESAMPLES = 10**6

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class GenSpec:
    d: int
    n: int
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError(f"need d >= 1 and n >= 1, got d={self.d}, n={self.n}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")


@dataclass(frozen=True, eq=False)
class RawTable:
    """Parsed features and +/-1 labels before unit-ball normalisation."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("inconsistent table shape")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be mapped to -1/+1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]


def _draw(rng: np.random.Generator, distribution: str, size) -> np.ndarray:
    if distribution == "gaussian":
        return rng.standard_normal(size)
    return rng.uniform(-1.0, 1.0, size)


def _draw_points(rng, distribution, omega, n) -> np.ndarray:
    X = _draw(rng, distribution, (n, omega.shape[0]))
    for i in range(n):
        tries = 0
        while abs(X[i] @ omega) < DEGENERATE_MARGIN:
            tries += 1
            if tries > MAX_RESAMPLES:
                raise RuntimeError("could not draw a point off the teacher hyperplane")
            X[i] = _draw(rng, distribution, omega.shape[0])
    return X


@dataclass(frozen=True, eq=False)
class Teacher:
    """Hidden linear labeller together with the train-set scaling."""

    omega: np.ndarray
    distribution: str
    scale: float

    def sample(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Fresh labelled points from the same distribution, scaled like training data.

        Scaled points may leave the unit ball; ReLU-network predictions are
        invariant to positive rescaling, so classification error is unaffected.
        """
        X = _draw_points(rng, self.distribution, self.omega, n)
        y = np.where(X @ self.omega >= 0, 1.0, -1.0)
        return X / self.scale, y


def gen_separable_with_teacher(spec: GenSpec) -> Tuple[Dataset, Teacher]:
    rng = substream(spec.seed, DATA)
    omega = _draw(rng, spec.distribution, spec.d)
    while np.linalg.norm(omega) == 0:
        omega = _draw(rng, spec.distribution, spec.d)
    X = _draw_points(rng, spec.distribution, omega, spec.n)
    raw = X @ omega
    y = np.where(raw >= 0, 1.0, -1.0)
    w_star = omega / np.min(y * raw)
    # (x / c, c * w) keeps every margin y <w, x> unchanged
    c = float(np.max(np.linalg.norm(X, axis=1)))
    return Dataset(X / c, y, w_star * c), Teacher(omega, spec.distribution, c)


def gen_separable(spec: GenSpec) -> Dataset:
    """Teacher-labelled data with a margin-1 separator, scaled into the unit ball."""
    return gen_separable_with_teacher(spec)[0]


def fresh_draw(spec: GenSpec, n_test: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fresh ``n_test`` points from the distribution behind ``gen_separable(spec)``."""
    _, teacher = gen_separable_with_teacher(spec)
    return teacher.sample(n_test, substream(spec.seed, TEST))


def gen_adversarial(d: int) -> Dataset:
    """The canonical basis ``e_1..e_d``, all labelled +1, with the all-ones separator."""
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    return Dataset(np.eye(d), np.ones(d), np.ones(d))


def _map_labels(raw_labels: Sequence[str], positive_label) -> np.ndarray:
    distinct = sorted(set(raw_labels))
    if positive_label is not None:
        positive_label = str(positive_label)
        if positive_label not in distinct:
            raise ValueError(f"positive label {positive_label!r} not found in {distinct}")
        return np.array([1.0 if lab == positive_label else -1.0 for lab in raw_labels])
    if len(distinct) != 2:
        raise ValueError(
            f"found {len(distinct)} distinct labels {distinct[:5]}; "
            "pass a positive label to relabel one-vs-rest")
    try:
        numeric = {lab: float(lab) for lab in distinct}
    except ValueError:
        numeric = None
    if numeric and set(numeric.values()) == {-1.0, 1.0}:
        return np.array([numeric[lab] for lab in raw_labels])
    # two arbitrary labels: the first in sorted order becomes +1
    return np.array([1.0 if lab == distinct[0] else -1.0 for lab in raw_labels])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, positive_label=None) -> RawTable:
    """Read a comma-separated table of numeric features plus one label column.

    A first row holding any non-numeric feature cell is taken to be a header.
    ``label_column`` is an index or, when a header exists, a column name. With
    ``positive_label`` set, that label maps to +1 and every other label to -1;
    otherwise exactly two distinct labels are required.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as e:
        raise ValueError(f"cannot read {path}: {e}") from e
    if not rows:
        raise ValueError(f"{path} is empty")
    width = len(rows[0])
    header = None
    if isinstance(label_column, str) and not _is_number(label_column):
        header = [c.strip() for c in rows[0]]
        if label_column not in header:
            raise ValueError(f"no column named {label_column!r} in {path}")
        col = header.index(label_column)
        rows = rows[1:]
    else:
        col = int(label_column) % width
        if not all(_is_number(c) for j, c in enumerate(rows[0]) if j != col):
            header = rows[0]
            rows = rows[1:]
    if not rows:
        raise ValueError(f"{path} has no data rows")
    feats, labels = [], []
    for lineno, r in enumerate(rows, start=2 if header else 1):
        if len(r) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(r)}")
        try:
            feats.append([float(c) for j, c in enumerate(r) if j != col])
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: non-numeric feature ({e})") from e
        labels.append(r[col].strip())
    return RawTable(np.array(feats, dtype=np.float64), _map_labels(labels, positive_label))


def _read_idx(path, magic: int) -> Tuple[Tuple[int, ...], bytes]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise ValueError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise ValueError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(data) < end:
        raise ValueError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", data[4:end])
    size = int(np.prod(dims))
    payload = data[end:end + size]
    if len(payload) != size:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
    return dims, payload


def load_idx(images_path, labels_path, keep_labels=(3, 5), relabel=None) -> RawTable:
    """Read an IDX image/label file pair (unsigned-byte payloads).

    Keeps samples whose label is in ``keep_labels``; ``relabel`` maps each kept
    label to +/-1 and defaults to first -> +1, second -> -1. Images are
    flattened to raw byte intensities.
    """
    dims, pix = _read_idx(images_path, IDX_IMAGES_MAGIC)
    (n_labels,), labs = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if dims[0] != n_labels:
        raise ValueError(f"image count {dims[0]} does not match label count {n_labels}")
    keep_labels = tuple(int(k) for k in keep_labels)
    if len(keep_labels) != 2:
        raise ValueError("keep_labels must name exactly two digits")
    if relabel is None:
        relabel = {keep_labels[0]: 1, keep_labels[1]: -1}
    relabel = {int(k): int(v) for k, v in dict(relabel).items()}
    if sorted(relabel) != sorted(keep_labels) or set(relabel.values()) != {-1, 1}:
        raise ValueError("relabel must map the two kept labels onto +1 and -1")
    images = np.frombuffer(pix, dtype=np.uint8).reshape(dims[0], -1)
    labels = np.frombuffer(labs, dtype=np.uint8)
    mask = np.isin(labels, keep_labels)
    y = np.array([relabel[int(lab)] for lab in labels[mask]], dtype=np.float64)
    return RawTable(images[mask].astype(np.float64), y)


def write_idx(images_path, labels_path, images, labels):
    """Write an IDX image/label pair; ``images`` is (n, rows, cols) uint8."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.shape != (images.shape[0],):
        raise ValueError("images must be (n, rows, cols) with one label each")
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


def finalize(table: RawTable) -> Dataset:
    """Scale all rows by ``1 / max_i ||x_i||``; no separator is attached."""
    if len(table) == 0:
        raise ValueError("empty table")
    c = np.max(np.linalg.norm(table.X, axis=1))
    if c == 0:
        raise ValueError("all feature vectors are zero")
    return Dataset(table.X / c, table.y)


def write_csv(data: Dataset, path):
    """Headerless rows ``x_1,...,x_d,y``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, y in zip(data.X, data.y):
            w.writerow([repr(float(a)) for a in x] + [int(y)])


def shuffled_subset(data: Dataset, n: int, seed: int, *keys: int) -> Dataset:
    """First ``n`` samples after a seeded permutation."""
    if n > data.n:
        raise ValueError(f"requested {n} samples but the dataset has only {data.n}")
    perm = substream(seed, DATA, *keys).permutation(data.n)
    return data.subset(perm[:n])
