"""Self-describing model checkpoints.

Archive layout::

    b"LSGA" | u32 LE index length | UTF-8 JSON index | tensor containers

The JSON index records the model and tokenizer configs, the token width,
free-form run metadata and, per parameter, the byte offset and length of its
``.lsg`` container within the data section. Keys are sorted so identical
parameters always give identical bytes.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from seglat.container import decode_tensor, encode_tensor
from seglat.errors import FormatError
from seglat.model import ModelConfig, ModelParams
from seglat.tensorcore import Tensor
from seglat.tokenizer import TokenizerConfig

logger = logging.getLogger("seglat.checkpoint")

ARCHIVE_MAGIC = b"LSGA"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Parameters plus everything needed to rebuild inputs for them."""

    params: ModelParams
    tokenizer: TokenizerConfig
    metadata: dict[str, Any] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    blobs: list[bytes] = []
    tensors: dict[str, dict[str, int]] = {}
    offset = 0
    for name, tensor in ckpt.params.items():
        blob = encode_tensor(tensor)
        tensors[name] = {"offset": offset, "length": len(blob)}
        blobs.append(blob)
        offset += len(blob)
    index = {
        "format": FORMAT_VERSION,
        "model": ckpt.params.cfg.model_dump(mode="json"),
        "tokenizer": ckpt.tokenizer.model_dump(mode="json"),
        "token_width": ckpt.params.token_width,
        "metadata": ckpt.metadata,
        "order": list(ckpt.params),
        "tensors": tensors,
    }
    raw = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return ARCHIVE_MAGIC + struct.pack("<I", len(raw)) + raw + b"".join(blobs)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if buf[:4] != ARCHIVE_MAGIC:
        raise FormatError("bad checkpoint magic: expected b'LSGA'")
    if len(buf) < 8:
        raise FormatError("truncated checkpoint: missing index length")
    (index_len,) = struct.unpack_from("<I", buf, 4)
    start = 8 + index_len
    if len(buf) < start:
        raise FormatError("truncated checkpoint: index")
    try:
        index = json.loads(buf[8:start].decode("utf-8"))
        cfg = ModelConfig.model_validate(index["model"])
        tokenizer = TokenizerConfig.model_validate(index["tokenizer"])
        token_width = int(index["token_width"])
        order = list(index["order"])
        table = index["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
        raise FormatError(f"malformed checkpoint index: {exc}") from exc
    if index.get("format") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format {index.get('format')!r}")

    tensors: dict[str, Tensor] = {}
    for name in order:
        entry = table.get(name)
        if entry is None:
            raise FormatError(f"checkpoint index has no entry for {name}")
        lo = start + int(entry["offset"])
        hi = lo + int(entry["length"])
        if hi > len(buf):
            raise FormatError(f"truncated checkpoint: tensor {name}")
        tensors[name] = Tensor(decode_tensor(buf[lo:hi]), requires_grad=True, name=name)
    params = ModelParams(cfg, token_width, tensors)
    return Checkpoint(params=params, tokenizer=tokenizer, metadata=dict(index.get("metadata", {})))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.debug("Wrote checkpoint %s (%d tensors)", path, len(ckpt.params))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
