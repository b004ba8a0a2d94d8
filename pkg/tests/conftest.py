import pytest
from hypothesis import strategies as st

from allpairs.core import Dataset

# Three unit vectors over two dimensions; pair scores 0.96, 0.8, 0.6.
TINY3_ROWS = [
    [(0, 0.6), (1, 0.8)],
    [(0, 0.8), (1, 0.6)],
    [(1, 1.0)],
]


def make_dataset(rows, normalize=True, m=None):
    return Dataset.from_entries(rows, normalize_vectors=normalize, m=m)


@pytest.fixture
def tiny3():
    return make_dataset(TINY3_ROWS)


@st.composite
def sparse_rows(draw, max_n=12, max_m=8, min_n=1):
    n = draw(st.integers(min_n, max_n))
    m = draw(st.integers(1, max_m))
    rows = []
    for _ in range(n):
        k = draw(st.integers(1, m))
        dims = sorted(draw(st.sets(st.integers(0, m - 1), min_size=k, max_size=k)))
        weights = draw(
            st.lists(
                st.floats(0.05, 1.0, allow_nan=False, allow_infinity=False),
                min_size=len(dims),
                max_size=len(dims),
            )
        )
        rows.append(list(zip(dims, weights)))
    return rows


@st.composite
def normalized_datasets(draw, max_n=12, max_m=8, min_n=1):
    rows = draw(sparse_rows(max_n=max_n, max_m=max_m, min_n=min_n))
    return make_dataset(rows, normalize=True)
