"""Distance-based communication graphs, hard and smooth."""
import numpy as np

from .sigmoid import sigmoid, sigmoid_deriv, sigmoid_second_deriv


def _as_positions(positions):
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError(f"positions must be an (n, m) array with n >= 1, got shape {p.shape}")
    return p


def differences(positions):
    """(n, n, m) array of p_i - p_j."""
    p = _as_positions(positions)
    return p[:, None, :] - p[None, :, :]


def squared_distances(positions):
    d = differences(positions)
    return np.einsum("ijk,ijk->ij", d, d)


def pairwise_distances(positions):
    return np.sqrt(squared_distances(positions))


def hard_adjacency(positions, R):
    """0/1 adjacency with an edge iff the distance is strictly below R."""
    if R <= 0:
        raise ValueError("communication range R must be positive")
    n2 = squared_distances(positions)
    A = (n2 < R * R).astype(float)
    np.fill_diagonal(A, 0.0)
    return A


def smooth_adjacency_terms(positions, R, s_A, q_A):
    """Smooth adjacency and its first two derivatives in the squared distance.

    Returns ``(abar, d1, d2)`` where, with n_ij = |p_i - p_j|^2 and
    g = (R^2 - n_ij)^3, ``abar = sigma(g)`` inside the range and
    ``d1 = d abar / d n_ij``, ``d2 = d^2 abar / d n_ij^2``. All three vanish
    outside the range and on the diagonal.
    """
    n2 = squared_distances(positions)
    gap = R * R - n2
    inside = gap > 0
    np.fill_diagonal(inside, False)
    gap = np.where(inside, gap, 0.0)
    g = gap ** 3
    abar = np.where(inside, sigmoid(g, s_A, q_A), 0.0)
    ds = sigmoid_deriv(g, s_A, q_A)
    dds = sigmoid_second_deriv(g, s_A, q_A)
    d1 = np.where(inside, -3.0 * gap ** 2 * ds, 0.0)
    d2 = np.where(inside, 9.0 * gap ** 4 * dds + 6.0 * gap * ds, 0.0)
    return abar, d1, d2


def smooth_adjacency(positions, R, s_A, q_A):
    return smooth_adjacency_terms(positions, R, s_A, q_A)[0]


def smooth_adjacency_partials(positions, R, s_A, q_A):
    """Full partials of the smooth adjacency with respect to positions.

    Returns an (n, n, n, m) array ``P`` with ``P[i, j, k, b]`` the derivative
    of abar_ij with respect to coordinate b of agent k. Only k in {i, j} is
    nonzero and the two endpoint blocks are negatives of each other.
    """
    p = _as_positions(positions)
    n, m = p.shape
    _, d1, _ = smooth_adjacency_terms(p, R, s_A, q_A)
    # d abar_ij / d p_i = d1_ij * 2 (p_i - p_j)
    gi = 2.0 * d1[:, :, None] * differences(p)
    P = np.zeros((n, n, n, m))
    for k in range(n):
        P[k, :, k, :] += gi[k]
        P[:, k, k, :] -= gi[:, k]
    return P
