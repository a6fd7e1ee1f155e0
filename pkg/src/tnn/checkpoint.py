"""Checkpoint container: 8-byte magic, u64 little-endian manifest length,
JSON manifest, then one contiguous little-endian tensor blob.

The manifest carries the model config, init seed, dtype, an exact tensor
index (name/dtype/shape/offset/nbytes tiling the blob with no gaps), and a
free-form extras dict. Round trips are bit-exact and save(load(save(m)))
is byte-identical because the manifest is serialized canonically and the
tensor order is the model's own construction order.
"""

import json

import numpy as np

from tnn.errors import CheckpointError, CorruptCheckpointError, VersionMismatchError
from tnn.model import ModelConfig, TnnModel

MAGIC = b"TNNCKPT\x01"
FORMAT_VERSION = 1

_DTYPE_TAGS = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(model: TnnModel, path: str, extras: dict = None) -> None:
    tensors = []
    chunks = []
    offset = 0
    for name, p in model.params.items():
        tag = _DTYPE_TAGS[p.dtype.name]
        raw = np.ascontiguousarray(p).astype(tag, copy=False).tobytes()
        tensors.append(
            {
                "name": name,
                "dtype": p.dtype.name,
                "shape": list(p.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "seed": model.seed,
        "dtype": model.dtype.name,
        "tensors": tensors,
        "extras": extras or {},
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(body).to_bytes(8, "little"))
        fh.write(body)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path: str):
    """Rebuild the model bit-exactly; returns (model, extras)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 8:
        raise CorruptCheckpointError("file too short for header")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError("bad magic; not a checkpoint file")
    body_len = int.from_bytes(data[len(MAGIC) : len(MAGIC) + 8], "little")
    body_start = len(MAGIC) + 8
    if body_start + body_len > len(data):
        raise CorruptCheckpointError("manifest extends past end of file")
    try:
        manifest = json.loads(data[body_start : body_start + body_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"manifest is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version!r}, expected {FORMAT_VERSION}")
    for key in ("config", "seed", "dtype", "tensors"):
        if key not in manifest:
            raise CorruptCheckpointError(f"manifest missing key {key!r}")
    blob = data[body_start + body_len :]

    tensors = manifest["tensors"]
    expected_offset = 0
    for t in tensors:
        if t["offset"] != expected_offset:
            raise CorruptCheckpointError(
                f"tensor {t['name']!r} at offset {t['offset']}, expected {expected_offset}"
            )
        expected_offset += t["nbytes"]
    if expected_offset != len(blob):
        raise CorruptCheckpointError(
            f"blob is {len(blob)} bytes but the index tiles {expected_offset}"
        )

    config = ModelConfig.from_dict(manifest["config"])
    dtype = np.float32 if manifest["dtype"] == "float32" else np.float64
    model = TnnModel(config, seed=int(manifest["seed"]), dtype=dtype)
    names = [t["name"] for t in tensors]
    if names != list(model.params):
        raise CheckpointError("tensor index does not match the model's parameter set")
    for t in tensors:
        p = model.params[t["name"]]
        if list(p.shape) != t["shape"] or p.dtype.name != t["dtype"]:
            raise CheckpointError(
                f"tensor {t['name']!r} has shape {t['shape']}/{t['dtype']}, "
                f"model expects {list(p.shape)}/{p.dtype.name}"
            )
        tag = _DTYPE_TAGS[t["dtype"]]
        flat = np.frombuffer(blob, dtype=tag, count=p.size, offset=t["offset"])
        p[:] = flat.reshape(p.shape)
        if not np.isfinite(p).all():
            raise CheckpointError(f"tensor {t['name']!r} contains non-finite values")
    model.bump_versions()
    return model, manifest.get("extras", {})
