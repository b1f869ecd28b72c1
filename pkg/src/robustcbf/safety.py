"""Collision-avoidance barriers and the QP rows built from all barriers.

Every row reads ``u_coef @ u >= rhs``. Rows derived from a barrier chain also
keep ``psi1`` and ``psi1_dot_drift`` so that they can be folded into a single
exponential composition.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Obstacle:
    position: tuple
    clearance: float

    def __post_init__(self):
        if not self.clearance > 0:
            raise ValueError("obstacle clearance must be positive")


@dataclass
class ConstraintRow:
    u_coef: np.ndarray
    rhs: float
    label: tuple
    psi1: float = None
    psi1_dot_drift: float = None

    def slack(self, u):
        return float(self.u_coef @ np.ravel(u)) - self.rhs

    def is_satisfied(self, u, tol=0.0):
        return self.slack(u) >= -tol


def _barrier_row(d, dv, b, idx_pos, idx_neg, M, m, eta1, eta2, label, order):
    """Row for a squared-distance barrier b = |d|^2 - c^2 between two points.

    ``d`` is the relative position, ``dv`` the relative velocity. ``idx_pos``
    enters with +2d, ``idx_neg`` (None for a static obstacle) with -2d.
    """
    coef = np.zeros(M)
    coef[idx_pos * m:(idx_pos + 1) * m] = 2.0 * d
    if idx_neg is not None:
        coef[idx_neg * m:(idx_neg + 1) * m] = -2.0 * d
    if order == 1:
        # single integrator: d/dt b = coef @ u
        return ConstraintRow(coef, -eta1 * b, label, psi1=b, psi1_dot_drift=0.0)
    bdot = 2.0 * float(d @ dv)
    psi1 = bdot + eta1 * b
    psi1_dot_drift = 2.0 * float(dv @ dv) + eta1 * bdot
    return ConstraintRow(coef, -(psi1_dot_drift + eta2 * psi1), label,
                         psi1=psi1, psi1_dot_drift=psi1_dot_drift)


def agent_pair_constraints(state, clearance, eta1=1.0, eta2=1.0, order=2):
    """One row per unordered agent pair keeping them at least ``clearance`` apart."""
    if not clearance > 0:
        raise ValueError("agent clearance must be positive")
    p, v = state.positions, state.velocities
    n, m = p.shape
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            d = p[i] - p[j]
            b = float(d @ d) - clearance ** 2
            rows.append(_barrier_row(d, v[i] - v[j], b, i, j, state.M, m, eta1, eta2,
                                     ("pair", i, j), order))
    return rows


def obstacle_constraints(state, obstacles, eta1=1.0, eta2=1.0, order=2, sensing_radius=None):
    """One row per (agent, obstacle) pair; obstacles beyond ``sensing_radius`` are skipped."""
    p, v = state.positions, state.velocities
    n, m = p.shape
    rows = []
    for i in range(n):
        for k, ob in enumerate(obstacles):
            d = p[i] - np.asarray(ob.position, dtype=float)
            if sensing_radius is not None and float(d @ d) > sensing_radius ** 2:
                continue
            b = float(d @ d) - ob.clearance ** 2
            rows.append(_barrier_row(d, v[i], b, i, None, state.M, m, eta1, eta2,
                                     ("obstacle", i, k), order))
    return rows


def robustness_constraint(composed, alpha_T=1.0):
    """Row for d phi/dt >= -alpha_T phi with a linear class-K gain."""
    return ConstraintRow(np.array(composed.u_coef, dtype=float),
                         -(composed.drift + alpha_T * composed.value), ("robustness",))


def exponential_composition(chains, w, safety_rows, safety_weight=1.0, alpha_T=1.0):
    """Fold the robustness chains and all safety barriers into a single row.

    Y = 1 - sum_c exp(-w_c psi_{c,1}) - sum_k exp(-w_s psi_{k,1}); the row is
    dY/dt >= -alpha_T Y. Returns ``(row, Y)``.
    """
    f = len(chains.psi1)
    w = np.broadcast_to(np.asarray(w, dtype=float), (f,))
    e = np.exp(-w * chains.psi1)
    value = 1.0 - e.sum()
    coef = (w * e) @ chains.u_coef if f else np.zeros(chains.u_coef.shape[1])
    drift = float((w * e) @ chains.psi1_dot_drift)
    for row in safety_rows:
        ek = np.exp(-safety_weight * row.psi1)
        value -= ek
        coef = coef + safety_weight * ek * row.u_coef
        drift += safety_weight * ek * row.psi1_dot_drift
    return ConstraintRow(coef, -(drift + alpha_T * value), ("composed",)), float(value)
