import pytest

from app.synth_corpus import GenConfig, generate_corpus, write_corpus

SMALL_DOCS = 10
SMALL_WORDS = 600


@pytest.fixture(scope="session")
def gen_config():
    return GenConfig(seed=7, doc_count=SMALL_DOCS, mean_words_per_doc=SMALL_WORDS)


@pytest.fixture(scope="session")
def corpus(gen_config):
    """A small seeded labelled corpus shared by the whole session"""
    return generate_corpus(gen_config)


@pytest.fixture(scope="session")
def corpus_dir(corpus, tmp_path_factory):
    directory = tmp_path_factory.mktemp("corpus")
    write_corpus(corpus, directory)
    return directory
