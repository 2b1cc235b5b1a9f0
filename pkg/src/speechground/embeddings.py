"""Reader/writer for the binary sentence-embedding interchange format.

Layout (little-endian): magic "SEMB", u32 version=1, u32 dim, u32 count,
then per record: u16 id length, UTF-8 id, dim float32 values. Target
vectors are stored verbatim (not normalized); cosine scoring makes their
scale irrelevant downstream.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SEMB"
VERSION = 1


class EmbeddingFileError(ValueError):
    pass


def write_embeddings(vectors: dict[str, np.ndarray], path, dim=None):
    if not vectors and dim is None:
        raise EmbeddingFileError("cannot infer dimension from an empty mapping")
    if dim is None:
        dim = len(next(iter(vectors.values())))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, len(vectors)))
        for ident, vec in vectors.items():
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise EmbeddingFileError(
                    f"vector for id {ident!r} has shape {arr.shape}, expected ({dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise EmbeddingFileError(f"non-finite vector for id {ident!r}")
            nb = ident.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(arr.tobytes())


def read_header(path):
    """Validate and return (dim, count) without reading the records."""
    with open(path, "rb") as fh:
        head = fh.read(16)
    if len(head) < 16 or head[:4] != MAGIC:
        raise EmbeddingFileError(f"{path}: not an embedding file (bad magic)")
    version, dim, count = struct.unpack_from("<III", head, 4)
    if version != VERSION:
        raise EmbeddingFileError(f"{path}: unsupported version {version}")
    return dim, count


def read_embeddings(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise EmbeddingFileError(f"{path}: not an embedding file (bad magic)")
    version, dim, count = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise EmbeddingFileError(f"{path}: unsupported version {version}")
    offset = 16
    vectors = {}
    for _ in range(count):
        try:
            (id_len,) = struct.unpack_from("<H", blob, offset)
        except struct.error:
            raise EmbeddingFileError(f"{path}: truncated file") from None
        offset += 2
        ident = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        if vec.size < dim:
            raise EmbeddingFileError(f"{path}: truncated file")
        offset += 4 * dim
        if ident in vectors:
            raise EmbeddingFileError(f"{path}: duplicate id {ident!r}")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFileError(f"{path}: non-finite vector for id {ident!r}")
        vectors[ident] = vec.copy()
    if offset != len(blob):
        raise EmbeddingFileError(f"{path}: trailing bytes after {count} records")
    return vectors
