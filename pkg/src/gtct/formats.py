"""Binary lattice files and JSON graph files.

Lattice layout (little-endian)::

    b"JLAT" | u8 version=1 | u8 dtype (1=f32, 2=f64) | 2 reserved bytes
    | u32 T | u32 U+1 | u32 K | logits, row-major [T, U+1, K]
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from gtct.numerics import JoinerLattice
from gtct.topology import AlignmentGraph, Edge, GraphError, Node, make_graph

MAGIC = b"JLAT"
VERSION = 1
HEADER = struct.Struct("<4sBBxxIII")
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class FormatError(ValueError):
    pass


def lattice_to_bytes(logits: np.ndarray, dtype: int = 2) -> bytes:
    if dtype not in DTYPES:
        raise FormatError(f"unknown dtype code {dtype}")
    arr = np.asarray(logits)
    if arr.ndim != 3:
        raise FormatError("logits must be rank 3")
    T, U1, K = arr.shape
    payload = np.ascontiguousarray(arr, dtype=DTYPES[dtype]).tobytes()
    return HEADER.pack(MAGIC, VERSION, dtype, T, U1, K) + payload


def lattice_from_bytes(data: bytes) -> np.ndarray:
    """Decode to float64 logits ``[T, U+1, K]`` (f32 payloads are upcast)."""
    if len(data) < HEADER.size:
        raise FormatError("truncated lattice header")
    magic, version, dtype, T, U1, K = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported lattice version {version}")
    if dtype not in DTYPES:
        raise FormatError(f"unknown dtype code {dtype}")
    expected = T * U1 * K * DTYPES[dtype].itemsize
    payload = data[HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype=DTYPES[dtype]).reshape(T, U1, K)
    return arr.astype(np.float64)


def write_lattice(path, lat_or_logits, dtype: int = 2) -> None:
    logits = lat_or_logits.logits if isinstance(lat_or_logits, JoinerLattice) else lat_or_logits
    Path(path).write_bytes(lattice_to_bytes(logits, dtype))


def read_lattice(path, blank_id: int = 0) -> JoinerLattice:
    return JoinerLattice(lattice_from_bytes(Path(path).read_bytes()), blank_id=blank_id)


def graph_to_json(g: AlignmentGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "label": n.label} for n in g.nodes],
        "edges": [{"from": e.src, "to": e.dst, "u": e.u} for e in g.edges],
        "start": g.start,
        "end": g.end,
        "blank_id": g.blank_id,
        "K": g.K,
        "U": g.U,
        "labels": list(g.labels),
        "topology": g.topology,
    }


def graph_from_json(obj: dict) -> AlignmentGraph:
    """Parse and validate; raises ``GraphError`` or ``FormatError``."""
    try:
        nodes = [Node(int(n["id"]), None if n["label"] is None else int(n["label"])) for n in obj["nodes"]]
        edges = [Edge(int(e["from"]), int(e["to"]), int(e["u"])) for e in obj["edges"]]
        blank_id = int(obj["blank_id"])
        K = int(obj["K"])
        start, end = int(obj["start"]), int(obj["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed graph JSON: {exc}") from None
    if start != 0 or end != len(nodes) - 1:
        raise GraphError("bad-terminals", "start must be node 0 and end the last node")
    U = int(obj.get("U", max((e.u for e in edges), default=0)))
    return make_graph(nodes, edges, U, blank_id, K, labels=obj.get("labels", ()),
                      topology=obj.get("topology", "custom"))


def write_graph(path, g: AlignmentGraph) -> None:
    Path(path).write_text(json.dumps(graph_to_json(g), indent=2))


def read_graph(path) -> AlignmentGraph:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"graph file is not JSON: {exc}") from None
    return graph_from_json(obj)
