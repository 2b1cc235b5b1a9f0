import numpy as np
import pytest

from embedgen.semb import (
    EmbeddingFileError,
    read_embedding_file,
    write_embedding_file,
)

rng = np.random.default_rng(3)


def test_roundtrip_bit_identical(tmp_path):
    vectors = {f"u{i}": rng.standard_normal(8).astype(np.float32) for i in range(5)}
    path = tmp_path / "v.semb"
    header = write_embedding_file(vectors, path, dim=8)
    assert header.count == 5 and header.dim == 8
    back_header, back = read_embedding_file(path)
    assert back_header == header
    assert list(back) == list(vectors)
    for utt_id, vec in vectors.items():
        assert back[utt_id].tobytes() == vec.tobytes()


def test_rewrite_is_byte_stable(tmp_path):
    vectors = {"a": np.arange(4, dtype=np.float32), "b": np.ones(4, dtype=np.float32)}
    first, second = tmp_path / "1.semb", tmp_path / "2.semb"
    write_embedding_file(vectors, first, dim=4)
    write_embedding_file(read_embedding_file(first)[1], second, dim=4)
    assert first.read_bytes() == second.read_bytes()


def test_header_layout(tmp_path):
    path = tmp_path / "v.semb"
    write_embedding_file({"x": np.zeros(3, dtype=np.float32)}, path, dim=3)
    blob = path.read_bytes()
    assert blob[:4] == b"SEMB"
    assert int.from_bytes(blob[4:8], "little") == 1  # version
    assert int.from_bytes(blob[8:12], "little") == 3  # dim
    assert int.from_bytes(blob[12:16], "little") == 1  # count
    assert int.from_bytes(blob[16:18], "little") == 1  # id length
    assert blob[18:19] == b"x"


def test_wrong_dim_rejected(tmp_path):
    with pytest.raises(EmbeddingFileError, match="shape"):
        write_embedding_file({"a": np.zeros(3)}, tmp_path / "v.semb", dim=4)


def test_nonfinite_rejected(tmp_path):
    with pytest.raises(EmbeddingFileError, match="non-finite"):
        write_embedding_file({"a": np.array([np.nan, 0.0])}, tmp_path / "v.semb", dim=2)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "v.semb"
    write_embedding_file({"a": np.zeros(16, dtype=np.float32)}, path, dim=16)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(EmbeddingFileError, match="truncated"):
        read_embedding_file(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "v.semb"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(EmbeddingFileError, match="magic"):
        read_embedding_file(path)
