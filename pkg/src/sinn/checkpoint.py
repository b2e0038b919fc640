"""Deterministic binary checkpoints (format tag ``sinn-ckpt-1``).

Byte layout::

    offset 0   12 bytes   magic  b"sinn-ckpt-1\\n"
    offset 12  8 bytes    header length H, unsigned little-endian
    offset 20  H bytes    header, UTF-8 JSON with sorted keys
    offset 20+H           tensor payloads, float64 little-endian, row-major,
                          concatenated in header order

Header keys: ``format``, ``variant``, ``sizes``, ``dim``, ``graph`` (digest),
``graph_text`` (canonical graph file or null), ``train`` (config dict or
null) and ``tensors``, a list of ``{name, shape, offset}`` where ``offset``
counts bytes from the start of the payload section.  Nothing time- or
host-dependent is written, so equal parameters give equal files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import LabelGraph, parse_graph, serialize_graph
from .model import VARIANTS, ModelParams

FORMAT = "sinn-ckpt-1"
MAGIC = b"sinn-ckpt-1\n"
_LEN = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    graph: LabelGraph | None = None
    train: dict | None = None


def dumps_checkpoint(p: ModelParams, graph: LabelGraph | None = None, train: dict | None = None) -> bytes:
    if graph is not None and p.graph_digest and graph.digest() != p.graph_digest:
        raise CheckpointError("graph does not match the parameters' graph digest")
    entries, chunks, offset = [], [], 0
    for name, w in p.tensors.items():
        raw = np.ascontiguousarray(w, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(w.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": FORMAT,
        "variant": p.variant,
        "sizes": list(p.sizes),
        "dim": p.dim,
        "graph": p.graph_digest,
        "graph_text": serialize_graph(graph) if graph is not None else None,
        "train": train,
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + _LEN.pack(len(head)) + head + b"".join(chunks)


def loads_checkpoint(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"not a {FORMAT} checkpoint")
    start = len(MAGIC) + _LEN.size
    if len(blob) < start:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = _LEN.unpack_from(blob, len(MAGIC))
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unsupported format {header.get('format')!r}")
    if header.get("variant") not in VARIANTS:
        raise CheckpointError(f"unknown variant {header.get('variant')!r}")
    payload = memoryview(blob)[start + hlen:]
    tensors = {}
    for e in header["tensors"]:
        shape = tuple(int(s) for s in e["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        lo = int(e["offset"])
        if lo < 0 or lo + n > len(payload):
            raise CheckpointError(f"tensor {e['name']} runs past the end of the file")
        arr = np.frombuffer(payload[lo:lo + n], dtype=_DTYPE).reshape(shape)
        tensors[e["name"]] = arr.astype(np.float64)
    p = ModelParams(header["variant"], tuple(header["sizes"]), int(header["dim"]), tensors, header["graph"])
    graph = None
    if header.get("graph_text") is not None:
        graph = parse_graph(header["graph_text"])
        if p.graph_digest and graph.digest() != p.graph_digest:
            raise CheckpointError("embedded graph does not match the recorded digest")
    return Checkpoint(p, graph, header.get("train"))


def save_checkpoint(path, p: ModelParams, graph: LabelGraph | None = None, train: dict | None = None) -> None:
    Path(path).write_bytes(dumps_checkpoint(p, graph, train))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
