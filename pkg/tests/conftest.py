import numpy as np
import pytest

from rwrs.walk import IncrementLaw, build_model


@pytest.fixture(scope="session")
def lazy_planar_law():
    return IncrementLaw(2, [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)], [0.2] * 5)


@pytest.fixture(scope="session")
def lazy_planar(lazy_planar_law):
    return build_model(lazy_planar_law)


@pytest.fixture(scope="session")
def lazy_cubic_law():
    moves = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1), (0, 0, 0)]
    return IncrementLaw(3, moves, [1 / 7] * 7)


@pytest.fixture(scope="session")
def lazy_cubic(lazy_cubic_law):
    return build_model(lazy_cubic_law)


@pytest.fixture(scope="session")
def drift_walk():
    return build_model(IncrementLaw(1, [(1,)], [1.0]), allow_periodic=True)


PLANAR_DOC = {"d": 2, "support": [[1, 0], [-1, 0], [0, 1], [0, -1], [0, 0]],
              "probs": [0.2, 0.2, 0.2, 0.2, 0.2]}
CUBIC_DOC = {"d": 3,
             "support": [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                         [0, 0, 1], [0, 0, -1], [0, 0, 0]],
             "probs": [1 / 7] * 7}


@pytest.fixture(scope="session")
def planar_doc():
    return dict(PLANAR_DOC)


@pytest.fixture(scope="session")
def cubic_doc():
    return dict(CUBIC_DOC)


def make_path(coords):
    """Path stub from explicit positions (n, d) or a flat list for d=1."""
    from rwrs.walk import Path

    arr = np.asarray(coords, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return Path(positions=arr, seed=0)
