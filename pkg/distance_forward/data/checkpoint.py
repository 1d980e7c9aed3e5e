"""
Versioned checkpoint container.

Layout:
    DFCKPT <version>\\n
    <header byte length>\\n
    <JSON header: architecture, config snapshot, tensor manifest, ...>
    <little-endian float32 tensors, concatenated in manifest order>
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from distance_forward.config import LabelMode
from distance_forward.core.layers import LayerKind
from distance_forward.core.model import Model
from distance_forward.data.normalize import NormalizationStats
from distance_forward.exceptions import CheckpointVersionError, DatasetFormatError
from distance_forward.samples.embedding import LabelEmbedding
from distance_forward.training.feedback import FeedbackMatrices

logger = logging.getLogger(__name__)

MAGIC = b"DFCKPT"
FORMAT_VERSION = 1
TENSOR_DTYPE = np.dtype("<f4")
REQUIRED_HEADER_KEYS = ("architecture", "embedding", "tensors")

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    model: Model
    emb: LabelEmbedding
    feedback: Optional[FeedbackMatrices] = None
    stats: Optional[NormalizationStats] = None
    config: Dict[str, Any] = field(default_factory=dict)
    rng_state: Dict[str, Any] = field(default_factory=dict)


def _tensors(ckpt: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    """Every stored tensor in declaration order"""
    tensors = [(name, p.value) for name, p in ckpt.model.named_params()]
    for i, layer in enumerate(ckpt.model.layers):
        if layer.kind == LayerKind.BATCHNORM:
            tensors.append((f"layers.{i}.running_mean", layer.running.mean))
            tensors.append((f"layers.{i}.running_var", layer.running.var))
    if ckpt.emb.table is not None:
        tensors.append(("embedding", ckpt.emb.table.value))
    if ckpt.feedback is not None:
        for (top, i), mat in ckpt.feedback.items():
            tensors.append((f"feedback.{top}.{i}", mat))
    return tensors


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    tensors = _tensors(ckpt)
    header = {
        "version": FORMAT_VERSION,
        "architecture": {
            "input_shape": list(ckpt.model.input_shape),
            "layers": [s.model_dump(mode="json", exclude_none=True) for s in ckpt.model.specs],
        },
        "embedding": {
            "num_classes": ckpt.emb.num_classes,
            "image_shape": list(ckpt.emb.image_shape),
            "mode": ckpt.emb.mode.value,
        },
        "feedback": None if ckpt.feedback is None else {
            "group_size": ckpt.feedback.group_size,
            "shapes": {str(u): list(s) for u, s in ckpt.feedback.shapes.items()},
        },
        "normalization": None if ckpt.stats is None else ckpt.stats.model_dump(),
        "config": ckpt.config,
        "rng_state": ckpt.rng_state,
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC + f" {FORMAT_VERSION}\n".encode(), f"{len(header_bytes)}\n".encode(), header_bytes]
    parts.extend(np.ascontiguousarray(t, dtype=TENSOR_DTYPE).tobytes() for _, t in tensors)
    return b"".join(parts)


def save_checkpoint(path: PathLike, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(ckpt))
    logger.info(f"Saved checkpoint to {path}")
    return path


def _read_line(raw: bytes, offset: int, source: str) -> Tuple[bytes, int]:
    end = raw.find(b"\n", offset)
    if end < 0:
        raise DatasetFormatError(f"{source}: truncated checkpoint header at byte offset {offset}")
    return raw[offset:end], end + 1


def load_checkpoint(path: PathLike) -> Checkpoint:
    """Rebuild model, embedding, feedback matrices and metadata from a checkpoint file"""
    source = str(path)
    raw = Path(path).read_bytes()
    first, offset = _read_line(raw, 0, source)
    magic, _, version = first.partition(b" ")
    if magic != MAGIC:
        raise DatasetFormatError(f"{source}: not a checkpoint (bad magic at byte offset 0)")
    if not version.isdigit() or int(version) != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source}: checkpoint format version {version.decode(errors='replace')}, expected {FORMAT_VERSION}"
        )
    length_line, offset = _read_line(raw, offset, source)
    try:
        header_len = int(length_line)
    except ValueError:
        raise DatasetFormatError(f"{source}: bad header length {length_line!r} at byte offset {offset}") from None
    if header_len < 0 or offset + header_len > len(raw):
        raise DatasetFormatError(f"{source}: header of {header_len} bytes truncated at byte offset {offset}")
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError(f"{source}: unreadable JSON header at byte offset {offset}: {e}") from None
    if not isinstance(header, dict):
        raise DatasetFormatError(f"{source}: checkpoint header is not a JSON object")
    missing = [key for key in REQUIRED_HEADER_KEYS if key not in header]
    if missing:
        raise DatasetFormatError(f"{source}: checkpoint header lacks {missing}")
    offset += header_len

    arch = header["architecture"]
    model = Model(arch["layers"], tuple(arch["input_shape"]), rng=np.random.default_rng(0))
    emb_meta = header["embedding"]
    emb = LabelEmbedding(emb_meta["num_classes"], emb_meta["image_shape"], LabelMode(emb_meta["mode"]),
                         rng=np.random.default_rng(0))

    arrays: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * TENSOR_DTYPE.itemsize
        if offset + nbytes > len(raw):
            raise DatasetFormatError(f"{source}: tensor '{entry['name']}' truncated at byte offset {offset}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=TENSOR_DTYPE, count=count, offset=offset).reshape(shape)
        offset += nbytes

    for name, p in model.named_params():
        p.value[...] = arrays[name]
    for i, layer in enumerate(model.layers):
        if layer.kind == LayerKind.BATCHNORM:
            layer.running.mean[...] = arrays[f"layers.{i}.running_mean"]
            layer.running.var[...] = arrays[f"layers.{i}.running_var"]
    if emb.table is not None:
        emb.table.value[...] = arrays["embedding"]

    feedback = None
    if header.get("feedback"):
        fb = header["feedback"]
        mats = {
            tuple(int(k) for k in name.split(".")[1:]): arr.astype(model.dtype)
            for name, arr in arrays.items() if name.startswith("feedback.")
        }
        shapes = {int(u): tuple(s) for u, s in fb["shapes"].items()}
        feedback = FeedbackMatrices.from_arrays(mats, shapes, fb["group_size"])

    stats = NormalizationStats(**header["normalization"]) if header.get("normalization") else None
    logger.info(f"Loaded checkpoint {source} ({len(arrays)} tensors)")
    return Checkpoint(model=model, emb=emb, feedback=feedback, stats=stats,
                      config=header.get("config", {}), rng_state=header.get("rng_state", {}))
