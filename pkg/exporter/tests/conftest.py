import pytest


@pytest.fixture
def tiny_corpus(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text(
        "essay_id\tessay_set\tessay\tdomain1_score\n"
        "e1\t1\tThere is a book on my desk.\t4\n"
        "e2\t1\tIf you practice every day, you can win.\t8\n"
        "e3\t1\tShe has taken the test before, and it went well.\t7\n"
    )
    return path
