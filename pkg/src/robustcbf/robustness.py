"""Exact combinatorial robustness checks.

Two independent deciders for strong r-robustness with respect to a leader
set: bootstrap percolation from the leaders, and brute-force enumeration of
follower subsets. They must always agree.
"""
from dataclasses import dataclass, field

import numpy as np

# 2**f subsets are enumerated by the brute-force decider
MAX_BRUTEFORCE_NODES = 24
_CHUNK_BITS = 15


class CapacityError(ValueError):
    """Problem too large for exhaustive enumeration."""


@dataclass
class ActivationTrace:
    """Activation vectors of bootstrap percolation, one per iteration (k = 0 first)."""

    iterations: list = field(default_factory=list)

    @property
    def final(self):
        return self.iterations[-1]

    @property
    def percolated(self):
        return bool(np.all(self.final == 1))

    def __len__(self):
        return len(self.iterations)


def _check_graph(adj):
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    return (a != 0).astype(np.int64)


def _leader_mask(n, leaders):
    leaders = sorted(set(int(i) for i in leaders))
    if not leaders:
        raise ValueError("leader set must be nonempty")
    if leaders[0] < 0 or leaders[-1] >= n:
        raise ValueError(f"leader indices must lie in [0, {n})")
    mask = np.zeros(n, dtype=bool)
    mask[leaders] = True
    return mask


def bootstrap_percolate(adj, leaders, r):
    """Run bootstrap percolation with threshold ``r`` from the active set ``leaders``.

    An inactive node activates once at least ``r`` of its neighbors are active.
    Stops at a fixed point, which is always reached within |followers|
    iterations.
    """
    a = _check_graph(adj)
    n = a.shape[0]
    if r < 1:
        raise ValueError("threshold r must be a positive integer")
    active = _leader_mask(n, leaders).astype(np.int64)
    trace = ActivationTrace([active.copy()])
    f = n - int(active.sum())
    for _ in range(f):
        nxt = np.where((active == 1) | (a @ active >= r), 1, 0)
        if np.array_equal(nxt, active):
            break
        active = nxt
        trace.iterations.append(active.copy())
    return trace


def percolates(adj, leaders, r):
    return bootstrap_percolate(adj, leaders, r).percolated


def is_strongly_r_robust_bruteforce(adj, leaders, r):
    """Check every nonempty follower subset for a node with >= r outside neighbors."""
    a = _check_graph(adj)
    n = a.shape[0]
    if n > MAX_BRUTEFORCE_NODES:
        raise CapacityError(f"brute-force robustness limited to n <= {MAX_BRUTEFORCE_NODES}, got {n}")
    lead = _leader_mask(n, leaders)
    followers = np.flatnonzero(~lead)
    f = len(followers)
    if f == 0:
        return True
    total = 1 << f
    bit = np.arange(f, dtype=np.int64)
    for start in range(1, total, 1 << _CHUNK_BITS):
        masks = np.arange(start, min(total, start + (1 << _CHUNK_BITS)), dtype=np.int64)
        inside_f = ((masks[:, None] >> bit) & 1).astype(bool)
        inside = np.zeros((len(masks), n), dtype=bool)
        inside[:, followers] = inside_f
        outside_counts = (~inside).astype(np.int64) @ a.T
        reachable = np.any(inside & (outside_counts >= r), axis=1)
        if not np.all(reachable):
            return False
    return True


def max_strong_robustness(adj, leaders):
    """Largest r >= 1 for which the leaders percolate the graph, 0 if none.

    A graph without followers is reported as n - 1, the largest degree any
    node can have.
    """
    a = _check_graph(adj)
    n = a.shape[0]
    if _leader_mask(n, leaders).all():
        return n - 1
    r = 0
    while r < n and percolates(a, leaders, r + 1):
        r += 1
    return r


def is_f_local(adj, suspects, F):
    """True iff every node outside ``suspects`` has at most ``F`` suspect neighbors."""
    a = _check_graph(adj)
    n = a.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[list(suspects)] = True
    counts = a @ mask.astype(np.int64)
    return bool(np.all(counts[~mask] <= F))
