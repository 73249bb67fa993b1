import numpy as np
import pytest

from gramscore.embeddings import (
    EmbeddingFormatError,
    read_embeddings,
    write_embeddings,
)
from gramscore.tables import TableFormatError, file_sha256, read_table, write_table


class TestEmbeddingFile:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        vectors = rng.standard_normal((7, 5)).astype("<f4")
        path = tmp_path / "emb.bin"
        write_embeddings(path, [f"e{i}" for i in range(7)], vectors, "fixture", 512)
        table = read_embeddings(path)
        assert table.ids == tuple(f"e{i}" for i in range(7))
        assert table.encoder_id == "fixture"
        assert table.max_len == 512
        assert np.array_equal(table.vectors, vectors)
        assert table.vectors.dtype == np.dtype("<f4")

    def test_payload_size_checked(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embeddings(path, ["a"], np.zeros((1, 4), dtype="<f4"))
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(EmbeddingFormatError, match="payload"):
            read_embeddings(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embeddings(path, ["a", "a"], np.zeros((2, 2), dtype="<f4"))
        with pytest.raises(EmbeddingFormatError, match="unique"):
            read_embeddings(path)

    def test_row_lookup(self, tmp_path):
        path = tmp_path / "emb.bin"
        vectors = np.arange(6, dtype="<f4").reshape(3, 2)
        write_embeddings(path, ["x", "y", "z"], vectors)
        table = read_embeddings(path)
        assert table.row_for("y").tolist() == [2.0, 3.0]
        with pytest.raises(KeyError):
            table.row_for("w")

    def test_fixture_file_loads(self, fixtures_dir):
        table = read_embeddings(fixtures_dir / "random_embeddings_500x16.bin")
        assert len(table.ids) == 500
        assert table.vectors.shape == (500, 16)


class TestFeatureTable:
    def test_round_trip_with_meta(self, tmp_path):
        path = tmp_path / "t.tsv"
        matrix = np.array([[0.5, 1.25], [0.1, -2.0]])
        write_table(path, ["a", "b"], matrix, ["g0", "g1"], {"mode": "prob", "alpha": "0.5"})
        ids, loaded, columns, meta = read_table(path)
        assert ids == ["a", "b"]
        assert columns == ["g0", "g1"]
        assert np.array_equal(loaded, matrix)
        assert meta == {"mode": "prob", "alpha": "0.5"}

    def test_rewrite_byte_identical(self, tmp_path):
        matrix = np.random.default_rng(1).standard_normal((4, 3))
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        for path in (a, b):
            write_table(path, list("wxyz"), matrix, ["c0", "c1", "c2"], {"k": "v"})
        assert a.read_bytes() == b.read_bytes()

    def test_full_float_precision(self, tmp_path):
        value = 0.1 + 0.2  # not representable prettily
        path = tmp_path / "t.tsv"
        write_table(path, ["a"], np.array([[value]]), ["g0"])
        _, loaded, _, _ = read_table(path)
        assert loaded[0, 0] == value

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("id\tg0\nx\t1.0\n")
        with pytest.raises(TableFormatError, match="essay_id"):
            read_table(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("essay_id\tg0\tg1\nx\t1.0\n")
        with pytest.raises(TableFormatError, match="expected 3 fields"):
            read_table(path)


def test_file_sha256_stable(tmp_path):
    path = tmp_path / "f"
    path.write_bytes(b"abc")
    assert file_sha256(path) == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
