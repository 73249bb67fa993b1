"""Regenerate the checked-in random-embedding fixture files.

Run from the repository root:

    python3 tests/fixtures/make_embedding_fixtures.py
"""

from pathlib import Path

import numpy as np

from gramscore.embeddings import write_embeddings

HERE = Path(__file__).parent


def main() -> None:
    rng = np.random.default_rng(20240501)
    ids = [f"e{i:04d}" for i in range(500)]
    vectors = rng.standard_normal((500, 16)).astype("<f4")
    write_embeddings(
        HERE / "random_embeddings_500x16.bin", ids, vectors, "random:20240501", None
    )

    rng = np.random.default_rng(7)
    tiny_ids = [f"e{i:02d}" for i in range(1, 16)]
    tiny = rng.standard_normal((15, 8)).astype("<f4")
    write_embeddings(HERE / "random_embeddings_15x8.bin", tiny_ids, tiny, "random:7", None)
    print("wrote", HERE / "random_embeddings_500x16.bin")
    print("wrote", HERE / "random_embeddings_15x8.bin")


if __name__ == "__main__":
    main()
