import os

import numpy as np
import pytest

from markovfield import corpus, realize

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def killed_path3():
    return corpus.killed_path_form(3)


@pytest.fixture(scope="session")
def jump_path3():
    return corpus.jump_path_form(3)


@pytest.fixture(scope="session")
def recurrent_path3():
    return corpus.recurrent_path_form(3)


@pytest.fixture(scope="session")
def killed_field(killed_path3):
    return realize(killed_path3, seed=0)


@pytest.fixture(scope="session")
def jump_field(jump_path3):
    return realize(jump_path3, seed=0)


@pytest.fixture(scope="session")
def recurrent_field(recurrent_path3):
    return realize(recurrent_path3, seed=0)


def random_transient_form(rng, n_max=12, n_min=4):
    """Random connected form with killing somewhere (nonsingular Q)."""
    n = int(rng.integers(n_min, n_max + 1))
    space = corpus.random_connected_space(n, extra_edges=int(rng.integers(0, 3)),
                                          seed=int(rng.integers(1 << 31)))
    k = np.zeros(n)
    hot = rng.integers(0, n, size=max(1, n // 4))
    k[hot] = rng.uniform(0.3, 1.5, size=len(hot))
    return corpus.local_form(space, killing=k, seed=int(rng.integers(1 << 31)))


def random_recurrent_form(rng, n_max=12, n_min=4):
    """Random connected form without killing (kernel = constants)."""
    n = int(rng.integers(n_min, n_max + 1))
    space = corpus.random_connected_space(n, extra_edges=int(rng.integers(0, 3)),
                                          seed=int(rng.integers(1 << 31)))
    return corpus.local_form(space, seed=int(rng.integers(1 << 31)))


def random_vertex_subset(rng, n, allow_empty=False, allow_full=False):
    while True:
        mask = rng.random(n) < rng.uniform(0.2, 0.8)
        s = frozenset(np.flatnonzero(mask).tolist())
        if not allow_empty and not s:
            continue
        if not allow_full and len(s) == n:
            continue
        return s
