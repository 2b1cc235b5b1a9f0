"""The SEMB embedding interchange file.

Layout (little-endian): magic ``SEMB``, u32 version (1), u32 dim, u32
count, then per record a u16 id length, the UTF-8 id bytes, and ``dim``
float32 values. Written bytes are the provider output verbatim — vectors
are deliberately not normalized here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SEMB"
VERSION = 1


class EmbeddingFileError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingHeader:
    dim: int
    count: int


def write_embedding_file(vectors: dict[str, np.ndarray], path, dim: int) -> EmbeddingHeader:
    """Write id -> vector records; ids keep their iteration order."""
    records = []
    for utt_id, vec in vectors.items():
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (dim,):
            raise EmbeddingFileError(
                f"vector for {utt_id!r} has shape {arr.shape}, expected ({dim},)"
            )
        if not np.all(np.isfinite(arr)):
            raise EmbeddingFileError(f"non-finite values in vector for {utt_id!r}")
        encoded = utt_id.encode("utf-8")
        if not encoded or len(encoded) > 0xFFFF:
            raise EmbeddingFileError(f"bad utterance id {utt_id!r}")
        records.append((encoded, arr))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, len(records)))
        for encoded, arr in records:
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(arr.astype("<f4").tobytes())
    return EmbeddingHeader(dim=dim, count=len(records))


def read_embedding_file(path) -> tuple[EmbeddingHeader, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise EmbeddingFileError(f"{path}: bad magic {blob[:4]!r}")
    try:
        version, dim, count = struct.unpack_from("<III", blob, 4)
        if version != VERSION:
            raise EmbeddingFileError(f"{path}: unsupported version {version}")
        offset = 16
        vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            utt_id = blob[offset : offset + id_len].decode("utf-8")
            offset += id_len
            vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
            offset += 4 * dim
            if utt_id in vectors:
                raise EmbeddingFileError(f"{path}: duplicate id {utt_id!r}")
            vectors[utt_id] = vec
    except EmbeddingFileError:
        raise
    except (struct.error, ValueError) as exc:
        raise EmbeddingFileError(f"{path}: truncated file ({exc})") from None
    if offset > len(blob):
        raise EmbeddingFileError(f"{path}: truncated file")
    return EmbeddingHeader(dim=dim, count=count), vectors
