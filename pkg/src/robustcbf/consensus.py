"""Leader-follower consensus rounds: plain averaging and W-MSR filtering.

Rounds are synchronous: every agent reads the previous round's values, then
all agents write.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Role(str, Enum):
    NORMAL_LEADER = "normal-leader"
    NORMAL_FOLLOWER = "normal-follower"
    MALICIOUS_LEADER = "malicious-leader"
    MALICIOUS_FOLLOWER = "malicious-follower"

    @property
    def malicious(self):
        return self in (Role.MALICIOUS_LEADER, Role.MALICIOUS_FOLLOWER)

    @property
    def leader(self):
        return self in (Role.NORMAL_LEADER, Role.MALICIOUS_LEADER)


@dataclass
class ConsensusState:
    values: np.ndarray
    roles: list
    f_l: float
    tau: float
    F: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.roles = [Role(r) for r in self.roles]
        if len(self.roles) != self.values.size:
            raise ValueError("one role per agent is required")
        if not self.tau > 0:
            raise ValueError("update interval tau must be positive")
        if self.F < 0:
            raise ValueError("F must be nonnegative")


def malicious_value(rng):
    """Value broadcast by a malicious agent: uniform on [0, 1]."""
    return float(rng.uniform(0.0, 1.0))


def _roles(roles):
    return [Role(r) for r in roles]


def _finish(new, roles, f_l, rng):
    for i, role in enumerate(roles):
        if role is Role.NORMAL_LEADER:
            new[i] = f_l
        elif role.malicious:
            if rng is None:
                raise ValueError("malicious agents need a random generator")
            new[i] = malicious_value(rng)
    return new


def linear_update(values, adj, roles, f_l, rng=None):
    """Equal-weight average over the closed neighborhood for normal followers."""
    y = np.asarray(values, dtype=float)
    roles = _roles(roles)
    a = np.asarray(adj) != 0
    new = y.copy()
    for i, role in enumerate(roles):
        if role is Role.NORMAL_FOLLOWER:
            nbrs = np.flatnonzero(a[i])
            new[i] = (y[i] + y[nbrs].sum()) / (nbrs.size + 1)
    return _finish(new, roles, f_l, rng)


def wmsr_retained(values, adj, i, F):
    """Neighbor indices agent ``i`` keeps after W-MSR filtering.

    Up to F neighbor values strictly above y_i (largest first) and up to F
    strictly below (smallest first) are dropped; ties go by lowest index.
    """
    y = np.asarray(values, dtype=float)
    nbrs = [int(j) for j in np.flatnonzero(np.asarray(adj)[i] != 0)]
    above = sorted((j for j in nbrs if y[j] > y[i]), key=lambda j: (-y[j], j))
    below = sorted((j for j in nbrs if y[j] < y[i]), key=lambda j: (y[j], j))
    dropped = set(above[:F]) | set(below[:F])
    return [j for j in nbrs if j not in dropped]


def wmsr_update(values, adj, roles, F, f_l, rng=None):
    y = np.asarray(values, dtype=float)
    roles = _roles(roles)
    new = y.copy()
    for i, role in enumerate(roles):
        if role is Role.NORMAL_FOLLOWER:
            kept = wmsr_retained(y, adj, i, F)
            new[i] = (y[i] + y[kept].sum()) / (len(kept) + 1)
    return _finish(new, roles, f_l, rng)


def consensus_error(values, roles, f_l):
    """Largest |y_i - f_l| over normal followers (0 if there are none)."""
    y = np.asarray(values, dtype=float)
    idx = [i for i, r in enumerate(_roles(roles)) if r is Role.NORMAL_FOLLOWER]
    if not idx:
        return 0.0
    return float(np.max(np.abs(y[idx] - f_l)))
