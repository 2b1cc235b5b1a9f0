"""Sentence-embedding export.

``embed_transcripts`` maps every manifest transcript to one vector and
writes a SEMB file plus a JSON sidecar report. The embedding model is
pluggable; the built-in ``hash-sim-<dim>`` family is fully offline and
deterministic, which is what the test suite and the synthetic-register
experiments use. Real sentence-transformer checkpoints can be used by
passing their model id when the package is installed.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .manifest import read_manifest
from .semb import EmbeddingHeader, write_embedding_file


class ModelUnavailableError(RuntimeError):
    pass


class HashEmbedder:
    """Deterministic bag-of-tokens embedder.

    Each token gets a fixed pseudo-random direction derived from its CRC-32;
    a sentence embeds as the sum over its tokens. Not semantically
    meaningful, but stable across runs and machines, which is all the
    synthetic experiments need.
    """

    def __init__(self, dim: int = 768):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        if token not in self._cache:
            seed = zlib.crc32(token.encode("utf-8"))
            gen = np.random.default_rng(seed)
            self._cache[token] = gen.standard_normal(self.dim).astype(np.float32)
        return self._cache[token]

    def encode(self, texts) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in text.lower().split():
                out[row] += self._token_vector(token)
        return out


def load_model(model_id: str):
    """Resolve a model id to an encoder with ``.dim`` and ``.encode``."""
    if model_id.startswith("hash-sim-"):
        return HashEmbedder(dim=int(model_id.removeprefix("hash-sim-")))
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError:
        raise ModelUnavailableError(
            f"model {model_id!r} needs the sentence-transformers package; "
            "install it (pip install sentence-transformers) and retry, or "
            "use an offline hash-sim-<dim> model"
        ) from None
    try:
        wrapped = SentenceTransformer(model_id)
    except Exception as exc:  # network/cache failures surface here
        raise ModelUnavailableError(
            f"could not load {model_id!r} ({exc}); check the model id and "
            "network access, then retry"
        ) from exc

    class _Adapter:
        dim = wrapped.get_sentence_embedding_dimension()

        @staticmethod
        def encode(texts):
            return np.asarray(wrapped.encode(list(texts)), dtype=np.float32)

    return _Adapter()


@dataclass(frozen=True)
class EmbedResult:
    header: EmbeddingHeader
    model_id: str
    empty_transcript_ids: tuple[str, ...] = field(default=())


def embed_transcripts(manifest_path, model_id, out_path, report_path=None) -> EmbedResult:
    """Embed every transcript in the manifest into a SEMB file.

    Empty (or whitespace-only) transcripts become zero vectors and are
    flagged in the sidecar report rather than aborting the batch.
    """
    records = read_manifest(manifest_path)
    model = load_model(model_id)
    texts = [r["transcript"] for r in records]
    matrix = model.encode(texts)
    if matrix.shape != (len(records), model.dim):
        raise ValueError(
            f"model returned shape {matrix.shape}, expected ({len(records)}, {model.dim})"
        )
    empty_ids = []
    vectors = {}
    for row, record in enumerate(records):
        if not record["transcript"].strip():
            empty_ids.append(record["id"])
            vectors[record["id"]] = np.zeros(model.dim, dtype=np.float32)
        else:
            vectors[record["id"]] = matrix[row]
    header = write_embedding_file(vectors, out_path, dim=model.dim)
    result = EmbedResult(
        header=header, model_id=model_id, empty_transcript_ids=tuple(empty_ids)
    )
    if report_path is not None:
        report = {
            "model": model_id,
            "dim": header.dim,
            "count": header.count,
            "zero_vector_ids": list(result.empty_transcript_ids),
        }
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return result
