import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustcbf.robustness import (CapacityError, bootstrap_percolate, is_f_local,
                                  is_strongly_r_robust_bruteforce, max_strong_robustness,
                                  percolates)
from robustcbf.verification import all_graphs, erdos_renyi


def complete(n):
    return np.ones((n, n), dtype=int) - np.eye(n, dtype=int)


def path(n):
    a = np.zeros((n, n), dtype=int)
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1
    return a


def star(n):
    a = np.zeros((n, n), dtype=int)
    a[0, 1:] = a[1:, 0] = 1
    return a


@st.composite
def graphs(draw, n_min=2, n_max=8):
    n = draw(st.integers(n_min, n_max))
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    a = np.zeros((n, n), dtype=int)
    for (i, j), b in zip(itertools.combinations(range(n), 2), bits):
        a[i, j] = a[j, i] = int(b)
    l = draw(st.integers(1, n))
    leaders = tuple(draw(st.permutations(range(n)))[:l])
    return a, leaders


def test_complete_graph_activates_in_one_round():
    tr = bootstrap_percolate(complete(5), [0, 1], 2)
    assert len(tr) == 2
    assert tr.percolated
    assert percolates(complete(5), [0, 1], 2)


def test_path_never_activates_at_threshold_two():
    tr = bootstrap_percolate(path(3), [0], 2)
    assert tr.final.tolist() == [1, 0, 0]
    assert not percolates(path(3), [0], 2)


def test_empty_leader_set_rejected():
    with pytest.raises(ValueError):
        bootstrap_percolate(complete(3), [], 1)


def test_star_graph_bruteforce():
    assert is_strongly_r_robust_bruteforce(star(5), [0], 1)
    assert not is_strongly_r_robust_bruteforce(star(5), [0], 2)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        is_strongly_r_robust_bruteforce(complete(25), [0], 1)


def test_agrees_on_all_four_node_graphs():
    for a in all_graphs(4):
        for l in range(1, 5):
            for leaders in itertools.combinations(range(4), l):
                for r in range(1, 5):
                    assert percolates(a, leaders, r) == is_strongly_r_robust_bruteforce(a, leaders, r)


def test_agrees_on_random_erdos_renyi():
    rng = np.random.default_rng(3)
    for _ in range(500):
        n = int(rng.integers(6, 9))
        a = erdos_renyi(n, 0.3, rng)
        leaders = rng.choice(n, size=int(rng.integers(1, n)), replace=False)
        r = int(rng.integers(1, 4))
        assert percolates(a, leaders, r) == is_strongly_r_robust_bruteforce(a, leaders, r)


@given(graphs())
def test_trace_monotone_and_bounded(g):
    a, leaders = g
    tr = bootstrap_percolate(a, leaders, 2)
    first = tr.iterations[0]
    assert all(first[i] == 1 for i in leaders)
    assert first.sum() == len(set(leaders))
    f = a.shape[0] - len(set(leaders))
    assert len(tr) - 1 <= f
    for prev, nxt in zip(tr.iterations, tr.iterations[1:]):
        assert np.all(nxt >= prev)


@given(graphs(), st.integers(1, 6))
def test_connected_graph_percolates_at_one(g, _):
    a, leaders = g
    # connect the graph with a path through every node
    a = np.maximum(a, path(a.shape[0]))
    assert percolates(a, leaders, 1)
    assert is_strongly_r_robust_bruteforce(a, leaders, 1)


@given(graphs(), st.integers(2, 6))
def test_monotone_in_r(g, r):
    a, leaders = g
    if percolates(a, leaders, r):
        assert all(percolates(a, leaders, rr) for rr in range(1, r))


def test_max_robustness_complete_graph():
    for n in range(3, 7):
        for l in range(1, n):
            assert max_strong_robustness(complete(n), list(range(l))) == l


def test_max_robustness_isolated_follower():
    a = complete(4)
    a[3, :] = a[:, 3] = 0
    assert max_strong_robustness(a, [0, 1]) == 0


@given(graphs(n_min=3))
def test_max_robustness_monotone_under_edge_insertion(g):
    a, leaders = g
    if len(set(leaders)) == a.shape[0]:
        return
    before = max_strong_robustness(a, leaders)
    zeros = [(i, j) for i, j in itertools.combinations(range(a.shape[0]), 2) if a[i, j] == 0]
    if not zeros:
        return
    i, j = zeros[0]
    b = a.copy()
    b[i, j] = b[j, i] = 1
    assert max_strong_robustness(b, leaders) >= before


def test_f_local_examples():
    assert is_f_local(complete(4), [], 0)
    assert not is_f_local(complete(4), [0, 1], 1)
    assert is_f_local(complete(4), [0], 1)
