"""Smooth bootstrap percolation and the robustness barrier functions built on it.

Replacing the 0/1 adjacency by the smooth adjacency and the step function by
a sigmoid turns the percolation recursion over followers into a twice
differentiable function of positions. Its final follower activations, shifted
by a small margin, are the per-follower barrier functions h_{r,c}: the hard
network is strongly r-robust whenever all of them are nonnegative.

Derivatives are carried forward through the recursion alongside the values,
so the Jacobian and the velocity-directional derivative of the Jacobian come
out of one sweep.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .graph import differences, smooth_adjacency_terms
from .sigmoid import (heaviside, sigmoid, sigmoid_deriv, sigmoid_gap,  # noqa: F401
                      sigmoid_second_deriv)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothParams:
    """Sigmoid sharpness/offset pairs, target robustness, depth and margin."""

    r: int = 1
    s: float = 5.0
    s_A: float = 10.0
    q: float = 0.5
    q_A: float = 0.5
    delta: int = 4
    epsilon: float = 1e-4

    def __post_init__(self):
        if not (self.s > 0 and self.s_A > 0):
            raise ValueError("s and s_A must be positive")
        if not (0 < self.q < 1 and 0 < self.q_A < 1):
            raise ValueError("q and q_A must lie in (0, 1)")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("r must be a positive integer")
        if int(self.delta) != self.delta or self.delta < 1:
            raise ValueError("delta must be a positive integer")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def check_network(self, l, f):
        """Reject parameter sets the network cannot support."""
        if self.r > l - 1:
            raise ValueError(
                f"target robustness r={self.r} needs at least r + 1 leaders, got l={l}: "
                "with r = l the first smooth activation is negative for every follower")
        if self.delta > max(f, 1):
            raise ValueError(f"depth delta={self.delta} exceeds the follower count f={f}")


@dataclass
class SmoothActivation:
    """Smooth follower activations, one (f,) vector per iteration with k = 0 first."""

    iterations: list

    @property
    def final(self):
        return self.iterations[-1]


@dataclass
class HocbfChain:
    """Second-order barrier chain for every follower.

    ``psi2(u) = drift + u_coef @ u``; ``psi1_dot_drift`` is the u-free part of
    the time derivative of ``psi1``.
    """

    psi0: np.ndarray
    psi1: np.ndarray
    psi1_dot_drift: np.ndarray
    drift: np.ndarray
    u_coef: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    # d psi1 / d p, used by the composed gradient
    psi1_grad_p: np.ndarray = None

    def psi2(self, u):
        return self.drift + self.u_coef @ np.ravel(u)


@dataclass
class ComposedCbf:
    """phi = 1 - sum_c exp(-w_c psi_c) and the pieces of its time derivative.

    ``phi_dot(u) = drift + u_coef @ u``.
    """

    weights: np.ndarray
    value: float
    u_coef: np.ndarray
    drift: float
    grad_p: np.ndarray
    grad_v: np.ndarray

    def phi_dot(self, u):
        return self.drift + float(self.u_coef @ np.ravel(u))


def _forward(positions, leaders, R, params, velocities=None, grad=True):
    """One sweep of the smooth recursion.

    Returns ``(acts, J, Jdot)``: the list of follower activations per
    iteration, the (f, n, m) Jacobian of the last one and its directional
    derivative along ``velocities`` (None when not requested).
    """
    p_all = np.asarray(positions, dtype=float)
    n, m = p_all.shape
    lead = sorted(set(int(i) for i in leaders))
    order = np.array(lead + [i for i in range(n) if i not in set(lead)], dtype=int)
    l, f = len(lead), n - len(lead)
    p = p_all[order]
    s, q, r = params.s, params.q, params.r

    abar, d1, d2 = smooth_adjacency_terms(p, R, params.s_A, params.q_A)
    A_FL = abar[l:, :l].sum(axis=1)
    A_FF = abar[l:, l:]
    pi = np.zeros(f)
    acts = [pi.copy()]

    want_dot = grad and velocities is not None
    if grad:
        diff2 = 2.0 * differences(p)
        J = np.zeros((f, n, m))
    if want_dot:
        v = np.asarray(velocities, dtype=float)[order]
        dv = v[:, None, :] - v[None, :, :]
        ndot = np.einsum("ijk,ijk->ij", diff2, dv)
        abar_dot = d1 * ndot
        d1_dot = d2 * ndot
        Jdot = np.zeros((f, n, m))
        pidot = np.zeros(f)

    frows = np.arange(l, n)
    for _ in range(params.delta):
        B = A_FL + A_FF @ pi - r
        new_pi = sigmoid(B, s, q)
        if grad:
            w = np.concatenate([np.ones(l), pi])
            # T[j, i] = d abar_ji / d p_j scaled by the activation of i
            T = (d1 * w[None, :])[l:, :, None] * diff2[l:]
            JB = -T
            JB[np.arange(f), frows, :] += T.sum(axis=1)
            JB += np.tensordot(A_FF, J, axes=(1, 0))
            ds = sigmoid_deriv(B, s, q)
            if want_dot:
                wdot = np.concatenate([np.zeros(l), pidot])
                Tdot = ((d1_dot * w[None, :] + d1 * wdot[None, :])[l:, :, None] * diff2[l:]
                        + (d1 * w[None, :])[l:, :, None] * 2.0 * dv[l:])
                JBdot = -Tdot
                JBdot[np.arange(f), frows, :] += Tdot.sum(axis=1)
                JBdot += np.tensordot(abar_dot[l:, l:], J, axes=(1, 0))
                JBdot += np.tensordot(A_FF, Jdot, axes=(1, 0))
                Bdot = np.einsum("fnm,nm->f", JB, v)
                dds = sigmoid_second_deriv(B, s, q)
                Jdot = (dds * Bdot)[:, None, None] * JB + ds[:, None, None] * JBdot
                pidot = ds * Bdot
            J = ds[:, None, None] * JB
        pi = new_pi
        acts.append(pi.copy())

    if not grad:
        return acts, None, None
    J_out = np.empty_like(J)
    J_out[:, order, :] = J
    Jdot_out = None
    if want_dot:
        Jdot_out = np.empty_like(Jdot)
        Jdot_out[:, order, :] = Jdot
    return acts, J_out, Jdot_out


def smooth_percolation(smooth_adj, l, params):
    """Smooth percolation on a given smooth adjacency with leaders 0..l-1."""
    abar = np.asarray(smooth_adj, dtype=float)
    n = abar.shape[0]
    if not 1 <= l <= n or abar.shape != (n, n):
        raise ValueError("smooth adjacency must be square with 1 <= l <= n")
    A_FL = abar[l:, :l].sum(axis=1)
    A_FF = abar[l:, l:]
    pi = np.zeros(n - l)
    acts = [pi.copy()]
    for _ in range(params.delta):
        pi = sigmoid(A_FL + A_FF @ pi - params.r, params.s, params.q)
        acts.append(pi.copy())
    return SmoothActivation(acts)


def robustness_margin(state, params):
    """h_{r,c} = final smooth activation of follower c minus epsilon."""
    acts, _, _ = _forward(state.positions, state.leaders, state.R, params, grad=False)
    return acts[-1] - params.epsilon


def robustness_margin_grad(state, params):
    """(f, M) Jacobian of the robustness margin with respect to stacked positions."""
    _, J, _ = _forward(state.positions, state.leaders, state.R, params)
    return J.reshape(J.shape[0], -1)


def _margin_and_derivatives(state, params, v):
    acts, J, Jdot = _forward(state.positions, state.leaders, state.R, params, velocities=v)
    f = J.shape[0]
    return acts[-1] - params.epsilon, J.reshape(f, -1), Jdot.reshape(f, -1)


def hessian_vector_product(state, params, v=None, method="analytic", step=1e-5):
    """Directional derivative of the margin Jacobian along ``v`` (default: the state velocity).

    Row c is the Hessian of h_{r,c} times v. ``method="fd"`` uses a central
    difference of the analytic Jacobian instead, for cross-checking.
    """
    v = state.velocities if v is None else np.asarray(v, dtype=float).reshape(state.positions.shape)
    if method == "analytic":
        return _margin_and_derivatives(state, params, v)[2]
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    plus = state.with_motion(state.positions + step * v, state.velocities)
    minus = state.with_motion(state.positions - step * v, state.velocities)
    return (robustness_margin_grad(plus, params) - robustness_margin_grad(minus, params)) / (2 * step)


def _per_follower(value, f, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (f,)).copy()
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be positive")
    return arr


def hocbf_chain(state, params, eta1=1.0, eta2=1.0):
    """Relative-degree-2 chain psi0 = h, psi1 = dh/dt + eta1 h, psi2 = dpsi1/dt + eta2 psi1."""
    f = state.f
    eta1 = _per_follower(eta1, f, "eta1")
    eta2 = _per_follower(eta2, f, "eta2")
    v = state.velocities.ravel()
    h, J, Hv = _margin_and_derivatives(state, params, state.velocities)
    hdot = J @ v
    psi1 = hdot + eta1 * h
    psi1_dot_drift = Hv @ v + eta1 * hdot
    return HocbfChain(
        psi0=h,
        psi1=psi1,
        psi1_dot_drift=psi1_dot_drift,
        drift=psi1_dot_drift + eta2 * psi1,
        u_coef=J,
        eta1=eta1,
        eta2=eta2,
        psi1_grad_p=Hv + eta1[:, None] * J,
    )


def first_order_chain(state, params, eta1=1.0):
    """Chain for single-integrator motion, where h itself has relative degree 1.

    The composed barrier is then built on h directly and ``u_coef`` multiplies
    the velocity input.
    """
    f = state.f
    eta1 = _per_follower(eta1, f, "eta1")
    acts, J, _ = _forward(state.positions, state.leaders, state.R, params)
    h = acts[-1] - params.epsilon
    J = J.reshape(f, -1)
    return HocbfChain(psi0=h, psi1=h, psi1_dot_drift=np.zeros(f), drift=eta1 * h,
                      u_coef=J, eta1=eta1, eta2=np.ones(f), psi1_grad_p=J)


def composed_cbf(chains, w=1.0):
    """Compose per-follower barriers into phi = 1 - sum_c exp(-w_c psi_{c,1})."""
    psi = np.asarray(chains.psi1, dtype=float)
    f = psi.shape[0]
    w = _per_follower(w, f, "weights")
    e = np.exp(-w * psi)
    dphi_dpsi = w * e
    u_coef = dphi_dpsi @ chains.u_coef if f else np.zeros(chains.u_coef.shape[1])
    return ComposedCbf(
        weights=w,
        value=float(1.0 - e.sum()),
        u_coef=u_coef,
        drift=float(dphi_dpsi @ chains.psi1_dot_drift),
        grad_p=dphi_dpsi @ chains.psi1_grad_p,
        grad_v=u_coef,
    )


def has_extreme_agent(positions):
    """True if some agent has the strictly largest or smallest value in some coordinate."""
    p = np.asarray(positions, dtype=float)
    if p.shape[0] < 2:
        return True
    srt = np.sort(p, axis=0)
    return bool(np.any(srt[-1] > srt[-2]) or np.any(srt[0] < srt[1]))


def extreme_columns(positions):
    """Flat indices (agent * m + coordinate) of every extreme agent/coordinate pair."""
    p = np.asarray(positions, dtype=float)
    n, m = p.shape
    cols = []
    for b in range(m):
        x = p[:, b]
        hi, lo = int(np.argmax(x)), int(np.argmin(x))
        if np.sum(x == x[hi]) == 1:
            cols.append(hi * m + b)
        if np.sum(x == x[lo]) == 1 and lo != hi:
            cols.append(lo * m + b)
    return cols
