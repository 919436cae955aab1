import pytest

from fcrank import stores
from fcrank.synth import planted_corpus


@pytest.fixture(scope="session")
def demo_corpus():
    return planted_corpus(seed=3)


@pytest.fixture(scope="session")
def demo_store(demo_corpus):
    return stores.generate_synthetic(demo_corpus, seed=5)
