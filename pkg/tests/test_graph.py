import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from robustcbf.graph import (hard_adjacency, pairwise_distances, smooth_adjacency,
                             smooth_adjacency_partials)
from robustcbf.sigmoid import sigmoid, sigmoid_gap

positions = st.integers(2, 7).flatmap(
    lambda n: arrays(float, (n, 2), elements=st.floats(-4, 4)))


def test_pythagorean_distance():
    d = pairwise_distances([[0, 0], [3, 4]])
    assert d[0, 1] == 5.0 and d[1, 0] == 5.0


def test_single_agent_distance():
    assert pairwise_distances([[1.0, 2.0]]).tolist() == [[0.0]]


def test_distances_match_scalar_loop(rng):
    p = rng.normal(size=(5, 2))
    d = pairwise_distances(p)
    for i in range(5):
        for j in range(5):
            ref = ((p[i, 0] - p[j, 0]) ** 2 + (p[i, 1] - p[j, 1]) ** 2) ** 0.5
            assert d[i, j] == pytest.approx(ref, rel=1e-14, abs=1e-15)


def test_exact_range_is_not_an_edge():
    assert hard_adjacency([[0, 0], [3, 0]], 3.0)[0, 1] == 0
    assert hard_adjacency([[0, 0], [2.999, 0]], 3.0)[0, 1] == 1


def test_coincident_agents_are_adjacent():
    a = hard_adjacency([[1, 1], [1, 1]], 0.5)
    assert a[0, 1] == 1 and a[0, 0] == 0


def test_unit_square_edges_only_on_sides():
    a = hard_adjacency([[0, 0], [1, 0], [1, 1], [0, 1]], 1.2)
    expected = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]])
    assert np.array_equal(a, expected)


def test_smooth_entry_at_range_is_zero():
    assert smooth_adjacency([[0, 0], [3, 0]], 3.0, 10.0, 0.5)[0, 1] == 0.0
    assert abs(smooth_adjacency([[0, 0], [3 - 1e-9, 0]], 3.0, 10.0, 0.5)[0, 1]) < 1e-12


def test_smooth_entry_for_coincident_agents():
    s_A, q_A = 0.01, 0.5
    got = smooth_adjacency([[0, 0], [0, 0]], 3.0, s_A, q_A)[0, 1]
    E = np.exp(-s_A * 729.0)
    assert got == pytest.approx(q_A * (1 - E) / (q_A + E), rel=1e-14)
    assert got == pytest.approx(sigmoid(729.0, s_A, q_A))


@given(positions, st.floats(0.5, 5), st.floats(0.01, 10), st.floats(0.05, 0.95))
def test_symmetry_and_lemma2_ordering(p, R, s_A, q_A):
    a = hard_adjacency(p, R)
    ab = smooth_adjacency(p, R, s_A, q_A)
    assert np.array_equal(a, a.T) and np.all(np.diag(a) == 0)
    np.testing.assert_array_equal(ab, ab.T)
    assert np.all(ab <= a)
    assert np.all(ab[a == 0] == 0.0)
    # strictness on edges, judged without rounding sigma to 1.0
    y = (R ** 2 - pairwise_distances(p) ** 2) ** 3
    assert np.all(sigmoid_gap(y[a == 1], s_A, q_A) > 0)


def _fd_partials(p, R, s_A, q_A, h=1e-5):
    n, m = p.shape
    out = np.zeros((n, n, n, m))
    for k in range(n):
        for b in range(m):
            e = np.zeros_like(p)
            e[k, b] = h
            out[:, :, k, b] = (smooth_adjacency(p + e, R, s_A, q_A)
                               - smooth_adjacency(p - e, R, s_A, q_A)) / (2 * h)
    return out


def test_partials_match_finite_differences(rng):
    # only configurations whose partials are far above the difference quotient's roundoff
    worst, checked = 0.0, 0
    while checked < 100:
        n = int(rng.integers(2, 7))
        p = rng.uniform(0, 3.5, (n, 2))
        s_A = float(rng.uniform(0.005, 0.05))
        P = smooth_adjacency_partials(p, 3.0, s_A, 0.5)
        if np.max(np.abs(P)) < 1e-3:
            continue
        checked += 1
        F = _fd_partials(p, 3.0, s_A, 0.5)
        worst = max(worst, np.max(np.abs(P - F)) / np.max(np.abs(F)))
    assert worst < 1e-6


def test_partials_structure(rng):
    p = rng.uniform(0, 3, (5, 2))
    p[4] = [50.0, 50.0]
    P = smooth_adjacency_partials(p, 3.0, 0.1, 0.5)
    # rows/cols of the far agent are exactly zero
    assert np.all(P[4] == 0) and np.all(P[:, 4] == 0)
    for i in range(4):
        for j in range(4):
            others = [k for k in range(5) if k not in (i, j)]
            assert np.all(P[i, j, others] == 0)
            if i != j:
                np.testing.assert_allclose(P[i, j, i], -P[i, j, j], rtol=0, atol=1e-15)


def test_moving_apart_decreases_entry():
    p = np.array([[0.0, 0.0], [1.5, 0.0]])
    P = smooth_adjacency_partials(p, 3.0, 0.1, 0.5)
    # pushing agent 1 along +x (away from agent 0)
    assert P[0, 1, 1, 0] < 0


def test_continuity_across_boundary():
    R = 3.0
    vals = [smooth_adjacency([[0, 0], [R + d, 0]], R, 0.5, 0.5)[0, 1] for d in (-1e-4, -1e-6, 0, 1e-6)]
    assert all(abs(v) < 1e-9 for v in vals)
