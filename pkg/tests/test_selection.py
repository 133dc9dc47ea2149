from collections import Counter
from math import gcd

import numpy as np
import pytest
from hypothesis import given, strategies as st

from confexec.crypto import Rng
from confexec.enclave import am_i_selected
from confexec.selection import SelectionError, committee_stride, compute_step, is_selected, round_seed, select_committee


@pytest.mark.parametrize("n,c,stride,step", [(10, 3, 3, 3), (9, 3, 3, 4), (1, 1, 1, 1), (12, 5, 2, 5), (100, 7, 14, 17)])
def test_step(n, c, stride, step):
    assert committee_stride(n, c) == stride
    assert compute_step(n, c) == step


def test_worked_example():
    assert select_committee(17, 10, 3) == [7, 0, 3]


@pytest.mark.parametrize("n", [1, 2, 7, 10, 64])
def test_full_committee_is_a_permutation(n):
    assert sorted(select_committee(12345, n, n)) == list(range(n))


@given(st.integers(1, 300).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))), st.integers(0, 2**256))
def test_members_distinct(nc, seed):
    n, c = nc
    idx = select_committee(seed, n, c)
    assert len(set(idx)) == c and all(0 <= i < n for i in idx)
    assert gcd(compute_step(n, c), n) == 1


def test_index_frequency():
    counts = Counter()
    rng = Rng(b"freq")
    for _ in range(10_000):
        counts.update(select_committee(int.from_bytes(rng.bytes(32), "big"), 10, 3))
    freq = np.array([counts[i] for i in range(10)]) / 10_000
    assert np.all(np.abs(freq - 0.3) < 0.02)


@pytest.mark.parametrize("n,c", [(0, 1), (3, 0), (3, 4)])
def test_bad_parameters(n, c):
    with pytest.raises(SelectionError):
        select_committee(1, n, c)


def test_single_node_always_selected():
    rng = Rng(b"one")
    assert all(am_i_selected(0, rng.bytes(32), 1, 1) for _ in range(50))


def test_selection_is_a_function_of_the_block_hash():
    h1, h2 = Rng(1).bytes(32), Rng(2).bytes(32)
    assert round_seed(h1) == round_seed(h1) != round_seed(h2)
    views = [[is_selected(i, h1, 20, 4) for i in range(20)] for _ in range(2)]
    assert views[0] == views[1] and sum(views[0]) == 4
