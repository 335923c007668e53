"""Dataset ingestion: MNIST IDX files, CSV matrices, USPS, and binary digit tasks.

CSV matrix format: UTF-8, comma separated, optional header row; when the
header's last name is ``label`` that column holds labels. Values are written
with 17 significant digits so export/import round-trips exactly.
"""

from __future__ import annotations

import csv
import gzip
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .spectral import DesignMatrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class CsvFormatError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class RawImageSet:
    images: np.ndarray  # (n, h, w)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        if self.images.ndim != 3:
            raise DataError(f"images must be (n, h, w), got shape {self.images.shape}")
        if self.images.shape[0] != len(self.labels):
            raise CountMismatchError(
                f"{self.images.shape[0]} images but {len(self.labels)} labels"
            )

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]


@dataclass(frozen=True)
class DigitCorpus:
    """Train and test splits of one digit dataset, pixels already scaled to [0, 1]."""

    name: str
    train: RawImageSet
    test: RawImageSet


# ---------------------------------------------------------------------------
# IDX


def _open_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Parse an unsigned-byte IDX file (images or labels) into an array."""
    raw = _open_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: unexpected end of file")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise BadMagicError(f"{path}: bad magic number 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: unexpected end of file")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = math.prod(dims)
    if len(raw) < header + size:
        raise TruncatedFileError(f"{path}: unexpected end of file")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only unsigned-byte IDX files are supported")
    if array.ndim == 1:
        magic = IDX_LABELS_MAGIC
    elif array.ndim == 3:
        magic = IDX_IMAGES_MAGIC
    else:
        raise ValueError("IDX arrays must be 1-D labels or 3-D images")
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    payload += np.ascontiguousarray(array).tobytes()
    if str(path).endswith(".gz"):
        payload = gzip.compress(payload, mtime=0)
    Path(path).write_bytes(payload)


def load_idx(images_path, labels_path) -> RawImageSet:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise BadMagicError(f"{images_path}: not an image file")
    if labels.ndim != 1:
        raise BadMagicError(f"{labels_path}: not a label file")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels"
        )
    return RawImageSet(images, labels.astype(np.int64))


def _find_file(root: Path, stems: list[str]) -> Path:
    for stem in stems:
        for suffix in ("", ".gz"):
            p = root / (stem + suffix)
            if p.exists():
                return p
    raise DataError(f"none of {stems} (optionally .gz) found in {root}")


def load_mnist(root, split: str) -> RawImageSet:
    """Load the ``train`` or ``test`` split from a directory of the distributed IDX files."""
    prefix = {"train": "train", "test": "t10k"}[split]
    root = Path(root)
    images = _find_file(root, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"])
    labels = _find_file(root, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"])
    return load_idx(images, labels)


def load_mnist_corpus(root) -> DigitCorpus:
    def scaled(s: RawImageSet) -> RawImageSet:
        return RawImageSet(s.images.astype(np.float64) / 255.0, s.labels)

    return DigitCorpus("MNIST", scaled(load_mnist(root, "train")), scaled(load_mnist(root, "test")))


# ---------------------------------------------------------------------------
# CSV matrices


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None


def load_matrix_csv(path) -> tuple[DesignMatrix, Optional[np.ndarray]]:
    """Read a numeric CSV; a header whose last name is ``label`` splits off labels."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(f"{path}: ragged row {i + 1} has {len(row)} cells, expected {width}")
        values[i] = [_parse_float(c, i + 1, j + 1) for j, c in enumerate(row)]
    if header is not None and header[-1].lower() == "label":
        if width < 2:
            raise CsvFormatError(f"{path}: no feature columns")
        return DesignMatrix(values[:, :-1]), values[:, -1]
    return DesignMatrix(values), None


def save_matrix_csv(path, features, labels=None, names: Optional[list[str]] = None) -> None:
    features = features.data if isinstance(features, DesignMatrix) else np.asarray(features)
    if names is None:
        names = [f"f{j + 1}" for j in range(features.shape[1])]
    header = list(names) + (["label"] if labels is not None else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i in range(features.shape[0]):
        row = [f"{v:.17g}" for v in features[i]]
        if labels is not None:
            row.append(f"{float(labels[i]):.17g}")
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def scale_unit_interval(x: np.ndarray) -> np.ndarray:
    """Map pixel values to [0, 1] from the range they were stored in.

    Values in [-1, 1] with negatives are shifted, values above 1 are taken as
    8-bit intensities; anything already in [0, 1] is left alone.
    """
    lo, hi = float(np.min(x)), float(np.max(x))
    if lo < 0:
        if lo < -1 - 1e-9 or hi > 1 + 1e-9:
            raise DataError(f"cannot infer pixel range from [{lo}, {hi}]")
        return (x + 1.0) / 2.0
    if hi > 1.0:
        return x / 255.0
    return x


def load_usps_csv(path, side: int = 16) -> RawImageSet:
    """Load USPS from the CSV matrix format: side*side pixel columns plus ``label``."""
    m, labels = load_matrix_csv(path)
    if labels is None:
        raise DataError(f"{path}: USPS CSV needs a trailing 'label' column")
    if m.d != side * side:
        raise DataError(f"{path}: expected {side * side} pixel columns, got {m.d}")
    images = scale_unit_interval(m.data).reshape(-1, side, side)
    return RawImageSet(images, np.rint(labels).astype(np.int64))


def load_usps_corpus(train_csv, test_csv) -> DigitCorpus:
    return DigitCorpus("USPS", load_usps_csv(train_csv), load_usps_csv(test_csv))


# ---------------------------------------------------------------------------
# Image preprocessing


def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Accepts a single (h, w) image or a batch (n, h, w).
    """
    img = np.asarray(img, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    h, w = img.shape[-2:]

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(h, out_h)
    c0, c1, fc = axis(w, out_w)
    fr = fr[:, None]
    top = img[..., r0, :][..., c0] * (1 - fc) + img[..., r0, :][..., c1] * fc
    bottom = img[..., r1, :][..., c0] * (1 - fc) + img[..., r1, :][..., c1] * fc
    return top * (1 - fr) + bottom * fr


# ---------------------------------------------------------------------------
# Binary tasks


@dataclass(frozen=True)
class TaskSpec:
    digit_lo: int
    digit_hi: int
    subsample_ratio: float = 1.0
    direction: str = "M->U"
    seed: int = 0
    validation_size: int = 100

    def __post_init__(self):
        if not (0 <= self.digit_lo <= 9 and 0 <= self.digit_hi <= 9):
            raise ValueError("digits must be in 0..9")
        if self.digit_lo >= self.digit_hi:
            raise ValueError(f"need digit_lo < digit_hi, got {self.digit_lo}, {self.digit_hi}")
        if not 0 < self.subsample_ratio <= 1:
            raise ValueError("subsample_ratio must lie in (0, 1]")
        if self.direction not in ("M->U", "U->M"):
            raise ValueError(f"direction must be 'M->U' or 'U->M', got {self.direction!r}")

    @property
    def column(self) -> str:
        if self.subsample_ratio < 1:
            return f"{self.subsample_ratio:g}->U" if self.direction == "M->U" else f"{self.subsample_ratio:g}->M"
        return self.direction

    def rng(self) -> np.random.Generator:
        ratio_key = int(round(self.subsample_ratio * 1_000_000))
        seq = np.random.SeedSequence([self.seed, self.digit_lo, self.digit_hi, ratio_key])
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True, eq=False)
class BinaryTask:
    """Source (labeled), target (unlabeled for training) and the split of target labels."""

    spec: TaskSpec
    source: DesignMatrix
    y: np.ndarray
    target: DesignMatrix
    target_labels: np.ndarray
    validation_idx: np.ndarray
    evaluation_idx: np.ndarray
    source_idx: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, int))


def binary_design(images: RawImageSet, lo: int, hi: int, side: Optional[int] = None):
    """Filter to two digits, flatten, append a bias column and map labels to -1/+1.

    Returns (design, labels, kept_indices). ``side`` resizes images first.
    """
    keep = np.flatnonzero((images.labels == lo) | (images.labels == hi))
    for digit in (lo, hi):
        if not np.any(images.labels[keep] == digit):
            raise DataError(f"digit {digit} absent from split")
    x = images.images[keep]
    if side is not None and x.shape[1:] != (side, side):
        x = resize_bilinear(x, side, side)
    y = np.where(images.labels[keep] == hi, 1.0, -1.0)
    return DesignMatrix.with_bias(x.reshape(len(keep), -1)), y, keep


def prepare_binary_task(mnist: DigitCorpus, usps: DigitCorpus, spec: TaskSpec) -> BinaryTask:
    """Build one domain-adaptation task between MNIST and USPS.

    The source is the train split of one dataset and the target the test split
    of the other; USPS is resized to MNIST's 28x28. ``subsample_ratio`` keeps
    that fraction of the lower digit in the source. ``validation_size`` labeled
    target points are split off for model selection; the rest are for evaluation.
    """
    src, tgt = (mnist, usps) if spec.direction == "M->U" else (usps, mnist)
    side = mnist.train.shape[0]
    rng = spec.rng()

    source, y, src_keep = binary_design(src.train, spec.digit_lo, spec.digit_hi, side)
    if spec.subsample_ratio < 1:
        lows = np.flatnonzero(y < 0)
        n_keep = int(math.floor(spec.subsample_ratio * len(lows)))
        if n_keep == 0:
            raise DataError(
                f"ratio {spec.subsample_ratio} leaves no samples of digit {spec.digit_lo}"
            )
        chosen = np.sort(rng.choice(lows, size=n_keep, replace=False))
        rows = np.sort(np.concatenate([chosen, np.flatnonzero(y > 0)]))
        source = DesignMatrix(source.data[rows], has_bias=True)
        y = y[rows]
        src_keep = src_keep[rows]

    target, target_labels, _ = binary_design(tgt.test, spec.digit_lo, spec.digit_hi, side)
    if target.n <= spec.validation_size:
        raise DataError(
            f"target split has {target.n} rows for digits {spec.digit_lo}/{spec.digit_hi}; "
            f"need more than the {spec.validation_size} validation points"
        )
    n_val = spec.validation_size
    perm = rng.permutation(target.n)
    return BinaryTask(
        spec=spec,
        source=source,
        y=y,
        target=target,
        target_labels=target_labels,
        validation_idx=np.sort(perm[:n_val]),
        evaluation_idx=np.sort(perm[n_val:]),
        source_idx=src_keep,
    )
