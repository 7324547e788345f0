"""Binary tensor files, match archives, and pairwise match text export.

Two on-disk formats, both little-endian:

Tensor file ("MFT1"):
    magic   4 bytes  b"MFT1"
    records repeated:
        dtype   u8   (0 = float32 little-endian, the only dtype in v1)
        rank    u8   (1..4)
        dims    u32 * rank
        payload row-major float32, prod(dims) values
    name block (always present, possibly empty):
        blob        concatenated UTF-8 record names
        offsets     u32 * count (byte offset of each name's start in blob)
        count       u32
        block_size  u32 (bytes in the whole name block, fields included)

Match archive ("MMA1"):
    magic    4 bytes b"MMA1"
    version  u8
    n_images u32, then per image: u32 name_len + UTF-8 name + u32 kp_count
    n_pairs  u32, then per pair:
        u32 len + id_a, u32 len + id_b, u32 n_matches,
        n_matches * (u32 idx_a, u32 idx_b, f32 confidence)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TENSOR_MAGIC = b"MFT1"
ARCHIVE_MAGIC = b"MMA1"
ARCHIVE_VERSION = 1

_DTYPE_F32 = 0
_MAX_RANK = 4


class FormatError(ValueError):
    """Raised on malformed or truncated on-disk data."""


def _pack_name_block(names: Sequence[str] | None) -> bytes:
    if not names:
        return struct.pack("<II", 0, 8)
    encoded = [n.encode("utf-8") for n in names]
    blob = b"".join(encoded)
    offsets = []
    pos = 0
    for e in encoded:
        offsets.append(pos)
        pos += len(e)
    body = blob + struct.pack(f"<{len(names)}I", *offsets)
    size = len(body) + 8
    return body + struct.pack("<II", len(names), size)


def _unpack_name_block(block: bytes) -> list[str]:
    count = struct.unpack("<I", block[-8:-4])[0]
    if count == 0:
        return []
    off_start = len(block) - 8 - 4 * count
    if off_start < 0:
        raise FormatError("truncated name block")
    offsets = struct.unpack(f"<{count}I", block[off_start:-8])
    blob = block[:off_start]
    names = []
    for i, off in enumerate(offsets):
        end = offsets[i + 1] if i + 1 < count else len(blob)
        names.append(blob[off:end].decode("utf-8"))
    return names


def write_tensors(path, tensors: Sequence[np.ndarray], names: Sequence[str] | None = None) -> None:
    """Write one or more float32 tensors, optionally naming each record."""
    if not tensors:
        raise ValueError("at least one tensor required")
    if names is not None and len(names) != len(tensors):
        raise ValueError("names must match tensor count")
    parts = [TENSOR_MAGIC]
    for t in tensors:
        arr = np.ascontiguousarray(t, dtype=np.float32)
        if arr.ndim < 1 or arr.ndim > _MAX_RANK:
            raise ValueError(f"rank must be in [1, {_MAX_RANK}], got {arr.ndim}")
        parts.append(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    parts.append(_pack_name_block(names))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def read_tensors(path) -> tuple[list[np.ndarray], list[str]]:
    """Read all records from a tensor file. Returns (tensors, names); names may be []."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != TENSOR_MAGIC:
        raise FormatError("bad magic")
    if len(data) < 12:
        raise FormatError("truncated header")
    block_size = struct.unpack("<I", data[-4:])[0]
    if block_size < 8 or len(data) - 4 < block_size:
        raise FormatError("truncated name block")
    names = _unpack_name_block(data[len(data) - block_size:])
    pos = 4
    end = len(data) - block_size
    tensors: list[np.ndarray] = []
    while pos < end:
        if pos + 2 > end:
            raise FormatError("truncated record header")
        dtype, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        if dtype != _DTYPE_F32:
            raise FormatError(f"unsupported dtype {dtype}")
        if rank < 1 or rank > _MAX_RANK:
            raise FormatError(f"bad rank {rank}")
        if pos + 4 * rank > end:
            raise FormatError("truncated dims")
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        count = int(np.prod(dims, dtype=np.int64))
        nbytes = 4 * count
        if pos + nbytes > end:
            raise FormatError("truncated payload")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
        tensors.append(arr)
        pos += nbytes
    if pos != end:
        raise FormatError("trailing bytes before name block")
    if not tensors:
        raise FormatError("empty tensor file")
    if names and len(names) != len(tensors):
        raise FormatError("name count does not match record count")
    return tensors, names


def write_tensor(path, tensor: np.ndarray, name: str | None = None) -> None:
    write_tensors(path, [tensor], [name] if name is not None else None)


def read_tensor(path) -> np.ndarray:
    tensors, _ = read_tensors(path)
    if len(tensors) != 1:
        raise FormatError(f"expected a single record, found {len(tensors)}")
    return tensors[0]


@dataclass
class ArchivePair:
    id_a: str
    id_b: str
    # (n, 2) int indices and (n,) float32 confidences
    indices: np.ndarray
    confidences: np.ndarray


def write_match_archive(path, pairs: Sequence[ArchivePair],
                        keypoint_counts: dict[str, int]) -> None:
    """Write a match archive. keypoint_counts declares the per-image index bounds."""
    ordered = sorted(pairs, key=lambda p: (p.id_a, p.id_b))
    parts = [ARCHIVE_MAGIC, struct.pack("<B", ARCHIVE_VERSION)]
    images = sorted(keypoint_counts)
    parts.append(struct.pack("<I", len(images)))
    for name in images:
        enc = name.encode("utf-8")
        parts.append(struct.pack("<I", len(enc)) + enc + struct.pack("<I", keypoint_counts[name]))
    parts.append(struct.pack("<I", len(ordered)))
    for p in ordered:
        if p.id_a >= p.id_b:
            raise ValueError(f"pair not canonical: {p.id_a!r} >= {p.id_b!r}")
        idx = np.asarray(p.indices, dtype=np.uint32).reshape(-1, 2)
        conf = np.asarray(p.confidences, dtype=np.float32).reshape(-1)
        if len(idx) != len(conf):
            raise ValueError("index/confidence length mismatch")
        for img, col in ((p.id_a, 0), (p.id_b, 1)):
            if img not in keypoint_counts:
                raise ValueError(f"image {img!r} missing from keypoint counts")
            if len(idx) and idx[:, col].max() >= keypoint_counts[img]:
                raise ValueError(f"index out of bounds for image {img!r}")
        for name in (p.id_a, p.id_b):
            enc = name.encode("utf-8")
            parts.append(struct.pack("<I", len(enc)) + enc)
        parts.append(struct.pack("<I", len(idx)))
        triples = np.empty((len(idx), 3), dtype="<u4")
        triples[:, :2] = idx
        triples[:, 2] = conf.astype("<f4").view("<u4")
        parts.append(triples.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def read_match_archive(path) -> tuple[list[ArchivePair], dict[str, int]]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 5 or data[:4] != ARCHIVE_MAGIC:
        raise FormatError("bad magic")
    if data[4] != ARCHIVE_VERSION:
        raise FormatError(f"unsupported version {data[4]}")
    pos = 5

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("truncated archive")
        out = data[pos:pos + n]
        pos += n
        return out

    def take_str() -> str:
        (ln,) = struct.unpack("<I", take(4))
        return take(ln).decode("utf-8")

    (n_images,) = struct.unpack("<I", take(4))
    counts: dict[str, int] = {}
    for _ in range(n_images):
        name = take_str()
        (kc,) = struct.unpack("<I", take(4))
        counts[name] = kc
    (n_pairs,) = struct.unpack("<I", take(4))
    pairs = []
    for _ in range(n_pairs):
        id_a = take_str()
        id_b = take_str()
        (nm,) = struct.unpack("<I", take(4))
        raw = np.frombuffer(take(12 * nm), dtype="<u4").reshape(nm, 3)
        indices = raw[:, :2].astype(np.int64)
        confidences = raw[:, 2].copy().view("<f4")
        for img, col in ((id_a, 0), (id_b, 1)):
            if img not in counts:
                raise FormatError(f"pair references undeclared image {img!r}")
            if nm and indices[:, col].max() >= counts[img]:
                raise FormatError(f"index out of bounds for image {img!r}")
        pairs.append(ArchivePair(id_a, id_b, indices, confidences))
    if pos != len(data):
        raise FormatError("trailing bytes")
    return pairs, counts


def export_pair_matches_text(pairs: Sequence[tuple[str, str, np.ndarray]], path) -> None:
    """Write pairwise matches as reconstruction-ready text.

    Each pair is (name_a, name_b, (n, 2) index array). Per pair the output is
    the two names on one line, one "idx_a idx_b" line per match, then a blank
    line. Pairs are emitted in canonical (name_a, name_b) order, LF endings.
    """
    for name_a, name_b, _ in pairs:
        for name in (name_a, name_b):
            if any(c.isspace() for c in name):
                raise ValueError(f"image name contains whitespace: {name!r}")
    chunks = []
    for name_a, name_b, idx in sorted(pairs, key=lambda p: (p[0], p[1])):
        lines = [f"{name_a} {name_b}\n"]
        for a, b in np.asarray(idx).reshape(-1, 2):
            lines.append(f"{int(a)} {int(b)}\n")
        lines.append("\n")
        chunks.append("".join(lines))
    with open(path, "wb") as f:
        f.write("".join(chunks).encode("ascii"))


def parse_pair_matches_text(path) -> list[tuple[str, str, np.ndarray]]:
    """Inverse of export_pair_matches_text (same grammar)."""
    with open(path, "rb") as f:
        text = f.read().decode("ascii")
    pairs = []
    block: list[str] = []
    for line in text.split("\n"):
        if line == "":
            if block:
                name_a, name_b = block[0].split(" ")
                idx = np.array([[int(a), int(b)] for a, b in
                                (l.split(" ") for l in block[1:])], dtype=np.int64).reshape(-1, 2)
                pairs.append((name_a, name_b, idx))
                block = []
        else:
            block.append(line)
    if block:
        raise FormatError("unterminated pair block")
    return pairs
