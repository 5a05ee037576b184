import numpy as np
import pytest
from hypothesis import settings

from squashscope import generate

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


def generator_zoo(max_n: int = 12):
    """One graph per generator kind, all with at most `max_n` nodes."""
    return [
        generate("path", n=min(6, max_n)),
        generate("cycle", n=min(5, max_n)),
        generate("complete", n=min(5, max_n)),
        generate("tree", arity=2, depth=2),
        generate("grid", width=3, height=3),
        generate("erdos_renyi", n=min(10, max_n), p=0.35, seed=11),
        generate("molecule_like", n=min(11, max_n), extra_cycles=2, seed=5),
    ]


@pytest.fixture(scope="session")
def zoo():
    return generator_zoo()


@pytest.fixture(scope="session")
def connected_corpus():
    """Connected graphs up to n = 64, both bipartite and not."""
    graphs = generator_zoo()
    graphs += [
        generate("path", n=32),
        generate("cycle", n=21),
        generate("grid", width=8, height=8),
        generate("tree", arity=3, depth=3),
        generate("complete", n=9),
        generate("erdos_renyi", n=24, p=0.15, seed=3),
        generate("molecule_like", n=40, extra_cycles=4, seed=9),
        generate("molecule_like", n=64, extra_cycles=6, seed=21),
    ]
    return graphs


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
