"""Binary checkpoints for a trained encoder plus a JSON sidecar of its settings.

Layout (little-endian): ``b"GE2E"``, u32 format version, u32 cell code,
u32 input dim, u32 hidden, u32 embedding dim, u32 feature kind, then float64
blobs W, bias, P, pbias, w, b, input mean, input scale. Nothing time- or
host-dependent is written, so equal training runs give equal bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .encoder import GATES, EncoderParams
from .errors import CheckpointMismatch
from .features import FeatureKind, Standardizer
from .protocol import TrainConfig, TrainResult

MAGIC = b"GE2E"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIIIII")
CELL_CODES = {"lstm": 1, "gru": 2}


@dataclass
class Checkpoint:
    params: EncoderParams
    w: float
    b: float
    normalizer: Standardizer
    config: TrainConfig


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save(path, model: TrainResult | Checkpoint, extra: dict | None = None) -> Path:
    p = model.params
    kind = FeatureKind.parse(model.config.feature_kind)
    blobs = [p.W, p.bias, p.P, p.pbias, np.array([model.w, model.b]),
             model.normalizer.mean, model.normalizer.scale]
    path = Path(path)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, FORMAT_VERSION, CELL_CODES[p.cell_kind], p.input_dim,
                            p.hidden, p.embed_dim, int(kind)))
        for arr in blobs:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    meta = {"tool_version": __version__, "format_version": FORMAT_VERSION,
            "train_config": asdict(model.config), "w": model.w, "b": model.b}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path


def load(path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise CheckpointMismatch(f"{path}: too short to be a checkpoint")
    magic, version, cell, d, h, e, kind = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointMismatch(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointMismatch(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    names = {v: k for k, v in CELL_CODES.items()}
    if cell not in names:
        raise CheckpointMismatch(f"{path}: unknown cell code {cell}")
    cell_kind = names[cell]
    g = GATES[cell_kind]
    try:
        feature = FeatureKind(kind)
    except ValueError:
        raise CheckpointMismatch(f"{path}: unknown feature kind {kind}") from None
    if feature.dim != d:
        raise CheckpointMismatch(f"{path}: feature kind {feature.slug} with input dim {d}")
    sizes = [g * h * (d + h), g * h, e * h, e, 2, d, d]
    body = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    if body.size != sum(sizes):
        raise CheckpointMismatch(f"{path}: expected {sum(sizes)} parameters, found {body.size}")
    W, bias, P, pbias, wb, mean, scale = (a.astype(np.float64) for a in
                                          np.split(body, np.cumsum(sizes)[:-1]))
    params = EncoderParams(cell_kind, d, h, e, W.reshape(g * h, d + h), bias, P.reshape(e, h), pbias)

    config = TrainConfig(cell_kind=cell_kind, feature_kind=feature.slug, hidden=h, embed_dim=e)
    side = sidecar_path(path)
    if side.is_file():
        meta = json.loads(side.read_text())
        stored = meta.get("train_config", {})
        known = {k: v for k, v in stored.items() if k in TrainConfig.__dataclass_fields__}
        config = TrainConfig(**known)
        if config.cell_kind != cell_kind or FeatureKind.parse(config.feature_kind) != feature:
            raise CheckpointMismatch(f"{side}: sidecar disagrees with checkpoint header")
    return Checkpoint(params, float(wb[0]), float(wb[1]), Standardizer(mean, scale), config)
