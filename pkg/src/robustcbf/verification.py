"""Self-checks run by ``robustcbf verify`` and by the acceptance tests.

Every suite returns a :class:`SuiteResult`. The oracles here are independent
of the production code paths they check: brute-force subset enumeration for
robustness, central finite differences for derivatives, and exhaustive
active-set enumeration for the QP.
"""
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import hard_adjacency
from .qp import QpProblem, solve, verify_kkt
from .robustness import is_strongly_r_robust_bruteforce, percolates
from .sigmoid import heaviside, sigmoid, sigmoid_gap
from .smooth import (SmoothParams, composed_cbf, hessian_vector_product, hocbf_chain,
                     robustness_margin, robustness_margin_grad)
from .state import SwarmState

FD_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        bits = ", ".join(f"{k}={_short(v)}" for k, v in self.detail.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({bits}; {self.seconds:.1f}s)"


def _short(v):
    return f"{v:.3g}" if isinstance(v, float) else str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# robustness deciders

def all_graphs(n):
    """Every simple undirected graph on n labelled nodes, as 0/1 matrices."""
    pairs = list(itertools.combinations(range(n), 2))
    for bits in range(1 << len(pairs)):
        a = np.zeros((n, n), dtype=np.int8)
        for k, (i, j) in enumerate(pairs):
            if bits >> k & 1:
                a[i, j] = a[j, i] = 1
        yield a


def erdos_renyi(n, p, rng):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return (upper | upper.T).astype(np.int8)


def _leader_sets(n):
    for size in range(1, n + 1):
        yield from itertools.combinations(range(n), size)


@_timed
def oracle_equivalence(max_exhaustive=5, random_graphs=500, sizes=(6, 7, 8), p=0.3, seed=0):
    """Percolation and brute force agree on every small graph and on random ones."""
    checked = mismatches = 0
    first = None
    for n in range(1, max_exhaustive + 1):
        for adj in all_graphs(n):
            for leaders in _leader_sets(n):
                for r in range(1, n + 1):
                    checked += 1
                    if percolates(adj, leaders, r) != is_strongly_r_robust_bruteforce(adj, leaders, r):
                        mismatches += 1
                        first = first or (adj.tolist(), leaders, r)
    rng = np.random.default_rng(seed)
    for _ in range(random_graphs):
        n = int(rng.choice(sizes))
        adj = erdos_renyi(n, p, rng)
        l = int(rng.integers(1, n))
        leaders = tuple(sorted(rng.choice(n, size=l, replace=False).tolist()))
        for r in range(1, n + 1):
            checked += 1
            if percolates(adj, leaders, r) != is_strongly_r_robust_bruteforce(adj, leaders, r):
                mismatches += 1
                first = first or (adj.tolist(), leaders, r)
    detail = dict(checked=checked, mismatches=mismatches)
    if first:
        detail["first_mismatch"] = first
    return SuiteResult("oracle-equivalence", mismatches == 0, detail)


# sigmoid ordering

@_timed
def sigmoid_below_step(samples=10_000, seed=0):
    """sigma_{s,q}(y) < H(y) on random (y, s, q), judged by the cancellation-free gap."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(-10.0, 10.0, samples)
    s = 20.0 - rng.uniform(0.0, 20.0, samples)   # (0, 20]
    q = 1.0 - rng.uniform(0.0, 1.0, samples)     # (0, 1]
    q = np.where(q == 1.0, 0.5, q)
    gap = sigmoid_gap(y, s, q)
    failures = int(np.sum(~(gap > 0)))
    # direct comparison after rounding sigma; ties only where sigma rounds to 1.0
    direct = int(np.sum(sigmoid(y, s, q) < heaviside(y)))
    return SuiteResult("sigmoid-below-step", failures == 0,
                       dict(samples=samples, failures=failures, direct_strict=direct,
                            min_gap=float(gap.min())))


# margin implies robustness

def random_configuration(rng, n_max=10, box=None):
    """Random planar swarm: (state, params) with r <= l - 1 and delta <= f."""
    n = int(rng.integers(3, n_max + 1))
    l = int(rng.integers(2, n))
    R = 3.0
    box = box or float(rng.uniform(2.0, 6.0))
    p = rng.uniform(0.0, box, (n, 2))
    v = rng.normal(size=(n, 2))
    leaders = tuple(sorted(rng.choice(n, size=l, replace=False).tolist()))
    r = int(rng.integers(1, l))
    f = n - l
    params = SmoothParams(r=r, s=float(rng.uniform(0.5, 8.0)), s_A=float(rng.uniform(0.05, 10.0)),
                          q=float(rng.uniform(0.1, 0.9)), q_A=float(rng.uniform(0.1, 0.9)),
                          delta=int(rng.integers(1, f + 1)))
    return SwarmState(p, v, leaders, R), params


@_timed
def margin_implies_robustness(configs=1000, seed=0, n_max=10):
    """Whenever every margin is nonnegative the hard graph is strongly r-robust."""
    rng = np.random.default_rng(seed)
    positive = counter = 0
    first = None
    for _ in range(configs):
        state, params = random_configuration(rng, n_max)
        h = robustness_margin(state, params)
        if np.all(h >= 0):
            positive += 1
            adj = hard_adjacency(state.positions, state.R)
            if not is_strongly_r_robust_bruteforce(adj, state.leaders, params.r):
                counter += 1
                first = first or (state.positions.tolist(), state.leaders, params)
    detail = dict(configs=configs, nonnegative=positive, counterexamples=counter)
    if first:
        detail["first_counterexample"] = first
    return SuiteResult("margin-implies-robustness", counter == 0, detail)


# derivative checks

def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def fd_margin_jacobian(state, params, step=FD_STEP):
    p = state.positions
    flat = p.ravel()
    cols = []
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = step
        hp = robustness_margin(state.with_motion((flat + e).reshape(p.shape), state.velocities), params)
        hm = robustness_margin(state.with_motion((flat - e).reshape(p.shape), state.velocities), params)
        cols.append((hp - hm) / (2 * step))
    return np.stack(cols, axis=1)


def fd_composed_gradient(state, params, w, eta1, eta2, step=FD_STEP):
    """Central differences of phi along every position and velocity coordinate."""
    def phi(p, v):
        return composed_cbf(hocbf_chain(state.with_motion(p, v), params, eta1, eta2), w).value

    out = []
    for which in ("p", "v"):
        base = state.positions if which == "p" else state.velocities
        flat = base.ravel()
        g = np.empty(flat.size)
        for k in range(flat.size):
            e = np.zeros_like(flat)
            e[k] = step
            hi, lo = (flat + e).reshape(base.shape), (flat - e).reshape(base.shape)
            if which == "p":
                g[k] = (phi(hi, state.velocities) - phi(lo, state.velocities)) / (2 * step)
            else:
                g[k] = (phi(state.positions, hi) - phi(state.positions, lo)) / (2 * step)
        out.append(g)
    return out


def informative_state(rng, min_grad=1e-3, tries=200):
    """Random state whose margin Jacobian is far from zero, so relative errors mean something."""
    for _ in range(tries):
        state, params = random_configuration(rng, n_max=8, box=float(rng.uniform(2.0, 4.0)))
        params = SmoothParams(r=params.r, s=float(rng.uniform(0.3, 2.0)),
                              s_A=float(rng.uniform(0.03, 0.5)), q=params.q, q_A=params.q_A,
                              delta=params.delta)
        if np.max(np.abs(robustness_margin_grad(state, params))) > min_grad:
            return state, params
    raise RuntimeError("could not draw an informative state")


@_timed
def derivative_checks(states=100, seed=0, tol_jac=1e-5, tol_hvp=1e-4, tol_phi=1e-5):
    """Analytic Jacobian, Hessian-vector product and composed gradient against finite differences."""
    rng = np.random.default_rng(seed)
    worst = dict(jacobian=0.0, hessian_vector=0.0, composed_p=0.0, composed_v=0.0)
    for _ in range(states):
        state, params = informative_state(rng)
        J = robustness_margin_grad(state, params)
        worst["jacobian"] = max(worst["jacobian"], rel_error(J, fd_margin_jacobian(state, params)))
        Hv = hessian_vector_product(state, params)
        worst["hessian_vector"] = max(worst["hessian_vector"],
                                      rel_error(Hv, hessian_vector_product(state, params, method="fd")))
        w, eta1, eta2 = float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0))
        comp = composed_cbf(hocbf_chain(state, params, eta1, eta2), w)
        gp, gv = fd_composed_gradient(state, params, w, eta1, eta2)
        worst["composed_p"] = max(worst["composed_p"], rel_error(comp.grad_p, gp))
        worst["composed_v"] = max(worst["composed_v"], rel_error(comp.grad_v, gv))
    passed = (worst["jacobian"] < tol_jac and worst["hessian_vector"] < tol_hvp
              and worst["composed_p"] < tol_phi and worst["composed_v"] < tol_phi)
    return SuiteResult("derivatives", passed, dict(states=states, **worst))


# QP exactness

def enumerate_qp(problem, cond_max=1e10, feas_tol=1e-9):
    """Best feasible point over all equality-constrained active-set candidates.

    Candidates of one subset size are solved together as a stacked batch.
    Returns None when no candidate is feasible.
    """
    u, A, b = problem.u_des, problem.A, problem.b
    k, M = A.shape
    best_val, best_x = np.inf, None
    if np.all(A @ u >= b - feas_tol):
        return u.copy()
    for size in range(1, min(k, M) + 1):
        S = np.array(list(itertools.combinations(range(k), size)))
        N = A[S]                                  # (c, size, M)
        G = N @ N.transpose(0, 2, 1)              # (c, size, size)
        ok = np.linalg.cond(G) < cond_max
        if not np.any(ok):
            continue
        N, G, S = N[ok], G[ok], S[ok]
        rhs = b[S] - N @ u                        # (c, size)
        lam = np.linalg.solve(G, rhs[..., None])[..., 0]
        X = u + np.einsum("csm,cs->cm", N, lam)
        feas = np.all(X @ A.T >= b - feas_tol, axis=1)
        if not np.any(feas):
            continue
        d = np.sum((X[feas] - u) ** 2, axis=1)
        j = int(np.argmin(d))
        if d[j] < best_val:
            best_val, best_x = d[j], X[feas][j]
    return best_x


def random_qp(rng, max_vars=8, max_rows=12):
    """Random feasible QP: rows are built around a known feasible point."""
    M = int(rng.integers(1, max_vars + 1))
    k = int(rng.integers(0, max_rows + 1))
    A = rng.normal(size=(k, M))
    x0 = rng.normal(size=M)
    slack = np.abs(rng.normal(size=k)) * (rng.random(k) < 0.5)
    return QpProblem(rng.normal(size=M) * 3.0, A, A @ x0 - slack)


@_timed
def qp_exactness(instances=1000, seed=0, tol=1e-6, kkt_tol=1e-8):
    """Solver output against exhaustive enumeration, plus KKT verification."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    kkt_fail = not_optimal = 0
    worst_kkt = 0.0
    for _ in range(instances):
        prob = random_qp(rng)
        sol = solve(prob)
        if not sol.optimal:
            not_optimal += 1
            continue
        ok, report = verify_kkt(prob, sol, kkt_tol)
        kkt_fail += not ok
        worst_kkt = max(worst_kkt, report.residual)
        worst = max(worst, float(np.max(np.abs(sol.u_star - enumerate_qp(prob)))))
    passed = worst <= tol and kkt_fail == 0 and not_optimal == 0
    return SuiteResult("qp-exactness", passed,
                       dict(instances=instances, max_diff=worst, max_kkt=worst_kkt,
                            kkt_failures=kkt_fail, not_optimal=not_optimal))


SUITES = {
    "oracle": oracle_equivalence,
    "sigmoid": sigmoid_below_step,
    "margin": margin_implies_robustness,
    "derivatives": derivative_checks,
    "qp": qp_exactness,
}


def run_suites(names=None, seed=0):
    names = names or list(SUITES)
    return [SUITES[n](seed=seed) for n in names]
