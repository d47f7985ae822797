"""Cosine-similarity GAN: feature generator, attribute projector, classifier.

The generator maps ``(noise ‖ attribute)`` to a non-negative visual feature.
The discriminator maps an attribute to an *identifier projection* in visual
space; test features are labelled with the class whose projection has the
highest cosine similarity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import ContractError, FormatError, ShapeError

CHECKPOINT_MAGIC = b"CZSM1"


@dataclass
class ModelConfig:
    d_x: int
    d_a: int
    d_z: int | None = None
    hidden_g: int | None = None
    hidden_d: int | None = None
    temperature: float = 10.0

    def __post_init__(self):
        if self.d_z is None:
            self.d_z = self.d_a
        if self.hidden_g is None:
            self.hidden_g = 4 * self.d_x
        if self.hidden_d is None:
            self.hidden_d = 4 * self.d_x
        for name in ("d_x", "d_a", "d_z", "hidden_g", "hidden_d"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")
        if not self.temperature > 0:
            raise ContractError("temperature must be positive")


@dataclass
class CGZSLModel:
    config: ModelConfig
    generator: nn.DenseNet
    discriminator: nn.DenseNet
    class_ids: list[int] = field(default_factory=list)
    attributes: np.ndarray | None = None
    seen: list[int] = field(default_factory=list)

    @classmethod
    def create(cls, config: ModelConfig, rng: np.random.Generator) -> "CGZSLModel":
        c = config
        gen = nn.DenseNet.initialize([c.d_z + c.d_a, c.hidden_g, c.d_x], ["leaky-relu", "relu"], rng)
        disc = nn.DenseNet.initialize([c.d_a, c.hidden_d, c.d_x], ["leaky-relu", "linear"], rng)
        return cls(c, gen, disc, attributes=np.zeros((0, c.d_a)))

    def encounter(self, ids, attrs: np.ndarray) -> None:
        """Register classes (and their attribute rows) not met before."""
        attrs = np.asarray(attrs, dtype=np.float64).reshape(len(ids), -1)
        if attrs.shape[1] != self.config.d_a:
            raise ShapeError(f"attribute dim {attrs.shape[1]} != d_a={self.config.d_a}")
        known = set(self.class_ids)
        new = [(int(c), a) for c, a in zip(ids, attrs) if int(c) not in known]
        if new:
            self.class_ids.extend(c for c, _ in new)
            self.attributes = np.vstack([self.attributes, np.array([a for _, a in new])])

    def mark_seen(self, ids) -> None:
        missing = set(map(int, ids)) - set(self.class_ids)
        if missing:
            raise ContractError(f"classes {sorted(missing)} were never encountered")
        for c in ids:
            if int(c) not in self.seen:
                self.seen.append(int(c))

    def attributes_of(self, ids) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.class_ids)}
        try:
            return self.attributes[[pos[int(c)] for c in ids]]
        except KeyError as exc:
            raise ContractError(f"class {exc.args[0]} was never encountered") from None

    def parameters(self) -> list[nn.Tensor]:
        return self.generator.parameters() + self.discriminator.parameters()

    def copy(self) -> "CGZSLModel":
        return CGZSLModel(
            self.config,
            self.generator.copy(),
            self.discriminator.copy(),
            list(self.class_ids),
            None if self.attributes is None else self.attributes.copy(),
            list(self.seen),
        )


def generate(model: CGZSLModel, z, attrs) -> nn.Tensor:
    """Generated features for each (noise, attribute) row pair; outputs >= 0."""
    z, attrs = nn._lift(z), nn._lift(attrs)
    if z.shape[0] != attrs.shape[0]:
        raise ShapeError(f"{z.shape[0]} noise rows vs {attrs.shape[0]} attribute rows")
    if z.shape[0] == 0:
        return nn.Tensor(np.zeros((0, model.config.d_x)))
    return model.generator(nn.concat_cols(z, attrs))


def project_attributes(model: CGZSLModel, attrs) -> nn.Tensor:
    attrs = nn._lift(attrs)
    return model.discriminator(attrs)


def classify(x, projections) -> tuple[np.ndarray, np.ndarray]:
    """Nearest identifier projection by cosine similarity.

    Returns ``(pred, scores)``: the column index of the best projection per row
    (ties resolve to the lowest index) and the full m×c cosine matrix.
    """
    projections = np.asarray(getattr(projections, "value", projections), dtype=np.float64)
    x = np.asarray(getattr(x, "value", x), dtype=np.float64)
    if projections.ndim != 2 or projections.shape[0] == 0:
        raise ContractError("classify needs at least one projection")
    scores = nn.cosine_matrix(x, projections).value
    return np.argmax(scores, axis=1), scores


def sample_noise(n: int, d_z: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, d_z))


# ---------------------------------------------------------------------------
# checkpoints: magic, u32 header length, JSON header, little-endian float64s


def _layer_specs(net: nn.DenseNet) -> list[dict]:
    return [{"shape": list(l.weight.shape), "activation": l.activation} for l in net.layers]


def save_checkpoint(model: CGZSLModel, path: str | Path) -> None:
    attrs = model.attributes if model.attributes is not None else np.zeros((0, model.config.d_a))
    header = {
        "format": 1,
        "config": asdict(model.config),
        "generator": _layer_specs(model.generator),
        "discriminator": _layer_specs(model.discriminator),
        "class_ids": list(model.class_ids),
        "seen": list(model.seen),
        "attributes_shape": list(attrs.shape),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in model.parameters():
            fh.write(p.value.astype("<f8").tobytes())
        fh.write(attrs.astype("<f8").tobytes())


def _read_net(specs: list[dict], buf: memoryview, offset: int) -> tuple[nn.DenseNet, int]:
    layers = []
    for spec in specs:
        fan_in, fan_out = spec["shape"]
        arrays = []
        for count, shape in ((fan_in * fan_out, (fan_in, fan_out)), (fan_out, (fan_out,))):
            end = offset + 8 * count
            if end > len(buf):
                raise FormatError("checkpoint truncated")
            arrays.append(np.frombuffer(buf[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
            offset = end
        layers.append(nn.Layer(nn.parameter(arrays[0]), nn.parameter(arrays[1]), spec["activation"]))
    return nn.DenseNet(layers), offset


def load_checkpoint(path: str | Path) -> CGZSLModel:
    data = memoryview(Path(path).read_bytes())
    if bytes(data[:5]) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint")
    if len(data) < 9:
        raise FormatError(f"{path}: checkpoint truncated")
    (hlen,) = struct.unpack("<I", data[5:9])
    try:
        header = json.loads(bytes(data[9 : 9 + hlen]))
    except ValueError as exc:
        raise FormatError(f"{path}: bad checkpoint header ({exc})") from None
    offset = 9 + hlen
    gen, offset = _read_net(header["generator"], data, offset)
    disc, offset = _read_net(header["discriminator"], data, offset)
    rows, cols = header["attributes_shape"]
    end = offset + 8 * rows * cols
    if end != len(data):
        raise FormatError(f"{path}: checkpoint payload size mismatch")
    attrs = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(rows, cols)
    return CGZSLModel(ModelConfig(**header["config"]), gen, disc, header["class_ids"], attrs, header["seen"])
