"""Dataset container: binary matrix I/O, directory layout, synthetic generator.

On-disk matrices use a small container: the 5-byte magic ``CZSL1``, then
rows and cols as little-endian u32, then rows×cols little-endian float64 in
row-major order. Label and index files are bare little-endian u32 arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, ValidationError

MATRIX_MAGIC = b"CZSL1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<II")


def write_matrix(path: str | Path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"write_matrix needs a 2-D array, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(_HEADER.pack(*m.shape))
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(MATRIX_MAGIC) + _HEADER.size
    if raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(raw, len(MATRIX_MAGIC))
    payload = raw[head:]
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} floats, found {len(payload) / 8:g}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def write_u32(path: str | Path, values) -> None:
    Path(path).write_bytes(np.asarray(values, dtype="<u4").tobytes())


def read_u32(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 4:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 4")
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    class_names: list[str] | None = None
    name: str = "dataset"

    @property
    def num_classes(self) -> int:
        return self.attributes.shape[0]

    @property
    def d_x(self) -> int:
        return self.features.shape[1]

    @property
    def d_a(self) -> int:
        return self.attributes.shape[1]

    def validate(self) -> "Dataset":
        """Check every structural invariant, raising ValidationError on the first failure."""
        f, a = self.features, self.attributes
        if f.ndim != 2:
            raise ValidationError("features", f"expected a matrix, got shape {f.shape}")
        if a.ndim != 2 or a.shape[0] == 0:
            raise ValidationError("attributes", f"expected a non-empty matrix, got shape {a.shape}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("features", "non-finite values")
        if not np.all(np.isfinite(a)):
            raise ValidationError("attributes", "non-finite values")
        n, c = f.shape[0], a.shape[0]
        if self.labels.shape != (n,):
            raise ValidationError("labels", f"expected {n} labels, got {self.labels.shape[0]}")
        if n and (self.labels.min() < 0 or self.labels.max() >= c):
            raise ValidationError("labels", f"label outside [0, {c})")
        for name in ("train_idx", "test_idx"):
            idx = getattr(self, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValidationError(name, f"index outside [0, {n})")
            if np.unique(idx).size != idx.size:
                raise ValidationError(name, "duplicate indices")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise ValidationError("test_idx", "overlaps train_idx")
        missing = np.setdiff1d(np.arange(c), self.labels[self.test_idx])
        if missing.size:
            raise ValidationError("test_idx", f"class {int(missing[0])} has no test rows")
        if np.unique(a, axis=0).shape[0] != c:
            raise ValidationError("attributes", "duplicate attribute rows")
        if self.class_names is not None and len(self.class_names) != c:
            raise ValidationError("class_names", f"expected {c} names, got {len(self.class_names)}")
        return self


@dataclass
class DatasetManifest:
    name: str
    n: int
    d_x: int
    num_classes: int
    d_a: int
    files: dict[str, str] = field(
        default_factory=lambda: {
            "features": "features.bin",
            "labels": "labels.bin",
            "attributes": "attributes.bin",
            "train_idx": "train_idx.bin",
            "test_idx": "test_idx.bin",
        }
    )
    version: int = FORMAT_VERSION

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "n": self.n,
            "d_x": self.d_x,
            "C": self.num_classes,
            "d_a": self.d_a,
            "files": dict(self.files),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        try:
            return cls(obj["name"], int(obj["n"]), int(obj["d_x"]), int(obj["C"]), int(obj["d_a"]),
                       dict(obj["files"]), int(obj.get("version", FORMAT_VERSION)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError("manifest", f"malformed manifest ({exc})") from None


def save_dataset(ds: Dataset, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    man = DatasetManifest(ds.name, ds.features.shape[0], ds.d_x, ds.num_classes, ds.d_a)
    if ds.class_names is not None:
        man.files["class_names"] = "class_names.txt"
        (out / "class_names.txt").write_text("".join(f"{s}\n" for s in ds.class_names))
    write_matrix(out / man.files["features"], ds.features)
    write_u32(out / man.files["labels"], ds.labels)
    write_matrix(out / man.files["attributes"], ds.attributes)
    write_u32(out / man.files["train_idx"], ds.train_idx)
    write_u32(out / man.files["test_idx"], ds.test_idx)
    (out / "manifest.json").write_text(json.dumps(man.to_json(), indent=2) + "\n")
    return out


def load_dataset(directory: str | Path) -> Dataset:
    root = Path(directory)
    try:
        man = DatasetManifest.from_json(json.loads((root / "manifest.json").read_text()))
    except FileNotFoundError:
        raise ValidationError("manifest", f"{root / 'manifest.json'} not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError("manifest", f"invalid JSON ({exc})") from None

    def need(key: str) -> Path:
        if key not in man.files:
            raise ValidationError(key, "not listed in manifest")
        path = root / man.files[key]
        if not path.exists():
            raise ValidationError(key, f"{path} does not exist")
        return path

    try:
        features = read_matrix(need("features"))
        attributes = read_matrix(need("attributes"))
        labels = read_u32(need("labels"))
        train_idx = read_u32(need("train_idx"))
        test_idx = read_u32(need("test_idx"))
    except FormatError as exc:
        raise ValidationError("container", str(exc)) from None
    if features.shape != (man.n, man.d_x):
        raise ValidationError("features", f"shape {features.shape} != manifest ({man.n}, {man.d_x})")
    if attributes.shape != (man.num_classes, man.d_a):
        raise ValidationError("attributes", f"shape {attributes.shape} != manifest ({man.num_classes}, {man.d_a})")
    names = None
    if "class_names" in man.files:
        names = need("class_names").read_text().splitlines()
    return Dataset(features, labels, attributes, train_idx, test_idx, names, man.name).validate()


def synth_dataset(
    num_classes: int,
    d_x: int,
    d_a: int,
    per_class: int,
    noise_scale: float,
    seed: int,
) -> Dataset:
    """Attribute-correlated synthetic features.

    Attributes are uniform on the unit sphere; a fixed Gaussian linear map
    ``W`` gives class means ``relu(W a)``; samples add isotropic Gaussian
    noise and are clamped at zero. Each class is split 75/25 into train/test.
    """
    if num_classes < 4:
        raise ContractError("synth_dataset needs at least 4 classes")
    if per_class < 4:
        raise ContractError("synth_dataset needs at least 4 samples per class")
    if d_x < 1 or d_a < 1 or noise_scale < 0:
        raise ContractError("dimensions must be >= 1 and noise_scale >= 0")
    rng = np.random.default_rng(seed)
    attrs = rng.standard_normal((num_classes, d_a))
    attrs /= np.linalg.norm(attrs, axis=1, keepdims=True)
    w = rng.standard_normal((d_x, d_a))
    means = np.maximum(attrs @ w.T, 0.0)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((labels.size, d_x)) * noise_scale
    features = np.maximum(means[labels] + noise, 0.0)
    n_train = (3 * per_class) // 4
    train, test = [], []
    for c in range(num_classes):
        rows = c * per_class + rng.permutation(per_class)
        train.append(np.sort(rows[:n_train]))
        test.append(np.sort(rows[n_train:]))
    return Dataset(
        features, labels, attrs, np.concatenate(train), np.concatenate(test),
        name=f"synth-c{num_classes}-s{seed}",
    ).validate()
