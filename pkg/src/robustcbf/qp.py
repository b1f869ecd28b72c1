"""Minimum-deviation QP: minimize |u - u_des|^2 subject to A u >= b.

Solved with a dual active-set method (Goldfarb-Idnani) specialized to an
identity Hessian. Starting from the unconstrained minimizer u_des, the most
violated row is added and the iterate moves along its projection onto the
orthogonal complement of the active normals while multipliers stay
nonnegative. When a violated row is a nonnegative combination of active rows
the problem is infeasible and the combination is returned as a certificate.
"""
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-12
DEP_TOL = 1e-14
KKT_TOL = 1e-8
# a row depending on the active set and violated by less than this is roundoff, not a conflict
DEP_VIOL_TOL = 1e-9


@dataclass
class QpProblem:
    u_des: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, u_des, rows):
        u_des = np.asarray(u_des, dtype=float).ravel()
        if rows:
            A = np.vstack([np.asarray(r.u_coef, dtype=float) for r in rows])
            b = np.array([r.rhs for r in rows], dtype=float)
        else:
            A = np.zeros((0, u_des.size))
            b = np.zeros(0)
        return cls(u_des, A, b, [r.label for r in rows])

    def __post_init__(self):
        self.u_des = np.asarray(self.u_des, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.u_des.size)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ValueError("A and b disagree on the number of rows")
        if not (np.all(np.isfinite(self.u_des)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("QP data must be finite")


@dataclass
class QpSolution:
    u_star: np.ndarray
    status: str
    active_set: list
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int = 0
    # y >= 0 with y @ A = 0 and y @ b > 0, only when infeasible
    certificate: np.ndarray = None

    @property
    def optimal(self):
        return self.status == "optimal"


@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def residual(self):
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def ok(self, tol=KKT_TOL):
        return self.residual <= tol


def _normalize(A, b):
    norms = np.linalg.norm(A, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return A / safe[:, None], b / safe, norms


def kkt_report(problem, u, multipliers):
    """KKT residuals on unit-normalized rows; stationarity is relative to the input scale."""
    An, bn, norms = _normalize(problem.A, problem.b)
    lam = np.asarray(multipliers, dtype=float) * norms
    scale = max(1.0, float(np.max(np.abs(problem.u_des), initial=0.0)), float(np.max(np.abs(u), initial=0.0)))
    gap = An @ u - bn
    return KktReport(
        stationarity=float(np.max(np.abs(u - problem.u_des - An.T @ lam), initial=0.0)) / scale,
        primal=float(np.max(-gap, initial=0.0)),
        dual=float(np.max(-lam, initial=0.0)),
        complementarity=float(np.max(np.abs(lam * gap), initial=0.0)),
    )


def verify_kkt(problem, solution, tol=KKT_TOL):
    """Return ``(ok, report)`` for an optimal solution."""
    report = kkt_report(problem, solution.u_star, solution.multipliers)
    return report.ok(tol), report


def _infeasible(problem, y_normalized, norms, x, its):
    y = np.where(norms > 0, y_normalized / np.where(norms > 0, norms, 1.0), y_normalized)
    return QpSolution(x, "infeasible", [], np.zeros(problem.b.size), np.inf, its, certificate=y)


def solve(problem, max_iter=None):
    k, M = problem.A.shape
    An, bn, norms = _normalize(problem.A, problem.b)
    zero = norms == 0
    bad = np.flatnonzero(zero & (problem.b > FEAS_TOL))
    if bad.size:
        y = np.zeros(k)
        y[bad[0]] = 1.0
        return _infeasible(problem, y, norms, problem.u_des.copy(), 0)

    x = problem.u_des.copy()
    active = []
    lam = np.zeros(k)
    max_iter = max_iter or 10 * (k + M) + 10
    its = 0
    skipped = []
    while k and its < max_iter:
        its += 1
        s = An @ x - bn
        s[zero] = 0.0
        s[active + skipped] = 0.0
        p = int(np.argmin(s))
        if s[p] >= -FEAS_TOL:
            break
        n_p = An[p]
        lam_p = 0.0
        while True:
            its += 1
            if active:
                N = An[active].T
                rdir = np.linalg.lstsq(N, n_p, rcond=None)[0]
                z = n_p - N @ rdir
            else:
                rdir = np.zeros(0)
                z = n_p
            ztn = float(z @ n_p)
            t1, block = np.inf, None
            for pos, j in enumerate(active):
                if rdir[pos] > DEP_TOL:
                    ratio = lam[j] / rdir[pos]
                    if ratio < t1:
                        t1, block = ratio, pos
            sp = float(n_p @ x - bn[p])
            t2 = -sp / ztn if ztn > DEP_TOL else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                if -sp <= DEP_VIOL_TOL:
                    skipped.append(p)
                    break
                y = np.zeros(k)
                y[p] = 1.0
                for pos, j in enumerate(active):
                    y[j] = max(-rdir[pos], 0.0)
                return _infeasible(problem, y, norms, x, its)
            t = min(t1, t2)
            if np.isfinite(t2):
                x = x + t * z
            for pos, j in enumerate(active):
                lam[j] -= t * rdir[pos]
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam[p] = lam_p
                break
            j = active.pop(block)
            lam[j] = 0.0
            if its >= max_iter:
                break
    x, lam = _polish(problem.u_des, An, bn, active, x, lam)
    lam_orig = np.where(norms > 0, lam / np.where(norms > 0, norms, 1.0), 0.0)
    report = kkt_report(problem, x, lam_orig)
    status = "optimal" if report.primal <= 1e-9 else "failed"
    return QpSolution(x, status, sorted(active), lam_orig, report.residual, its)


def _polish(u_des, An, bn, active, x, lam):
    """Re-solve the equality system of the final active set; keep it if it is no worse."""
    if not active:
        return x, lam
    N = An[active]
    mu = np.linalg.lstsq(N @ N.T, bn[active] - N @ u_des, rcond=None)[0]
    x_new = u_des + N.T @ mu
    if np.any(mu < -FEAS_TOL):
        return x, lam
    viol_old = np.max(bn - An @ x, initial=0.0)
    viol_new = np.max(bn - An @ x_new, initial=0.0)
    if viol_new > max(viol_old, FEAS_TOL):
        return x, lam
    lam_new = np.zeros_like(lam)
    lam_new[active] = np.maximum(mu, 0.0)
    return x_new, lam_new
