"""Closed-loop simulation: barrier rows, QP, integration and consensus rounds."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import consensus as cons
from .graph import hard_adjacency, pairwise_distances
from .qp import QpProblem, solve
from .robustness import max_strong_robustness, percolates
from .safety import (Obstacle, agent_pair_constraints, exponential_composition, obstacle_constraints,
                     robustness_constraint)
from .smooth import (composed_cbf, first_order_chain, has_extreme_agent, hocbf_chain,
                     robustness_margin)
from .state import SwarmState

log = logging.getLogger(__name__)

__all__ = ["SwarmState", "Trace", "StepResult", "step_dynamics", "nominal_control", "control_step",
           "run_scenario", "check_invariants", "InvariantReport", "SimulationAborted"]


class SimulationAborted(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def step_dynamics(state, u, dt, mode="double"):
    """Advance one step. Double integrator: v += u dt, then p += v dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float).reshape(state.positions.shape)
    if mode == "double":
        v = state.velocities + dt * u
        p = state.positions + dt * v
    elif mode == "single":
        v = u.copy()
        p = state.positions + dt * u
    else:
        raise ValueError(f"unknown dynamics mode {mode!r}")
    return state.with_motion(p, v, state.time + dt)


def _unit(d):
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    return np.where(norm > 0, d / np.where(norm > 0, norm, 1.0), 0.0)


def nominal_control(state, config):
    """Unit attraction toward the goal, minus velocity for double integrators.

    In ``spread_out`` mode only leaders are driven; followers get zero.
    Agents sitting exactly on their goal get a zero attraction term.
    """
    mode = config.nominal.mode
    u = np.zeros_like(state.positions)
    if mode == "none":
        return u
    goals = config.goals()
    movers = np.array(state.leaders if mode == "spread_out" else range(state.n), dtype=int)
    u[movers] = _unit(goals[movers] - state.positions[movers])
    if config.dynamics == "double":
        u[movers] -= state.velocities[movers]
    return u


@dataclass
class StepResult:
    u: np.ndarray
    u_des: np.ndarray
    margins: np.ndarray
    phi: float
    solution: object
    rows: list


def control_step(state, config, compose_mode=None):
    """Build every barrier row for ``state`` and solve the QP."""
    compose_mode = compose_mode or config.compose_mode
    g = config.gains
    params = config.params
    order = 2 if config.dynamics == "double" else 1
    if order == 2:
        chains = hocbf_chain(state, params, g.eta1, g.eta2)
    else:
        chains = first_order_chain(state, params, g.eta1)
    # barriers enforce a slightly inflated clearance so Euler steps stay outside the true one
    buf = config.safety.buffer
    safety_rows = agent_pair_constraints(state, config.safety.agent_clearance + buf,
                                         g.safety_eta1, g.safety_eta2, order)
    obstacles = [Obstacle(o.position, o.clearance + buf) for o in config.obstacles]
    safety_rows += obstacle_constraints(state, obstacles, g.safety_eta1, g.safety_eta2,
                                        order, config.safety.sensing_radius)
    if compose_mode == "rows":
        composed = composed_cbf(chains, g.weights)
        rows = [robustness_constraint(composed, g.alpha_T)] + safety_rows
        phi = composed.value
    elif compose_mode == "exponential":
        row, phi = exponential_composition(chains, g.weights, safety_rows, g.safety_weight, g.alpha_T)
        rows = [row]
    else:
        raise ValueError(f"unknown compose mode {compose_mode!r}")
    u_des = nominal_control(state, config)
    sol = solve(QpProblem.from_rows(u_des.ravel(), rows))
    return StepResult(sol.u_star.reshape(state.positions.shape), u_des, chains.psi0, phi, sol, rows)


@dataclass
class Trace:
    """Uniform-grid record of one run; row k is the state at t = k dt."""

    time: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    controls: np.ndarray
    margins: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    active_robustness: np.ndarray
    active_pairs: np.ndarray
    active_obstacles: np.ndarray
    kkt_residual: np.ndarray
    followers: tuple
    name: str = field(default="", compare=False)
    status: str = field(default="ok", compare=False)
    message: str = field(default="", compare=False)

    def __len__(self):
        return len(self.time)

    @property
    def n(self):
        return self.positions.shape[1]

    @property
    def m(self):
        return self.positions.shape[2]

    @property
    def leaders(self):
        return tuple(i for i in range(self.n) if i not in set(self.followers))

    def __eq__(self, other):
        if not isinstance(other, Trace) or tuple(self.followers) != tuple(other.followers):
            return False
        keys = ("time", "positions", "velocities", "controls", "margins", "phi", "values",
                "active_robustness", "active_pairs", "active_obstacles", "kkt_residual")
        return all(getattr(self, k).shape == getattr(other, k).shape
                   and getattr(self, k).tobytes() == getattr(other, k).tobytes() for k in keys)

    def state_at(self, k, R):
        return SwarmState(self.positions[k], self.velocities[k], self.leaders, R, float(self.time[k]))


class _Recorder:
    def __init__(self, n, m, f, params):
        self.n, self.m, self.f = n, m, f
        self.params = params
        self.cols = {k: [] for k in ("time", "positions", "velocities", "controls", "margins", "phi",
                                     "values", "active_robustness", "active_pairs",
                                     "active_obstacles", "kkt_residual")}

    def add(self, state, step, values):
        c = self.cols
        c["time"].append(state.time)
        c["positions"].append(state.positions.copy())
        c["velocities"].append(state.velocities.copy())
        c["values"].append(np.array(values, dtype=float))
        if step is None:
            c["controls"].append(np.full((self.n, self.m), np.nan))
            c["margins"].append(robustness_margin(state, self.params) if self.f else np.zeros(0))
            c["phi"].append(np.nan)
            c["active_robustness"].append(0)
            c["active_pairs"].append(0)
            c["active_obstacles"].append(0)
            c["kkt_residual"].append(np.nan)
            return
        kinds = [step.rows[i].label[0] for i in step.solution.active_set]
        c["controls"].append(step.u.copy())
        c["margins"].append(np.asarray(step.margins, dtype=float))
        c["phi"].append(step.phi)
        c["active_robustness"].append(sum(k in ("robustness", "composed") for k in kinds))
        c["active_pairs"].append(kinds.count("pair"))
        c["active_obstacles"].append(kinds.count("obstacle"))
        c["kkt_residual"].append(step.solution.kkt_residual)

    def build(self, followers, name, status="ok", message=""):
        c = self.cols
        arr = {k: np.array(v) for k, v in c.items()}
        arr["time"] = arr["time"].astype(float)
        arr["margins"] = arr["margins"].reshape(len(c["time"]), self.f)
        for k in ("active_robustness", "active_pairs", "active_obstacles"):
            arr[k] = arr[k].astype(np.int64)
        return Trace(followers=tuple(followers), name=name, status=status, message=message, **arr)


def _consensus_init(config, rng):
    roles = config.roles
    f_l = config.consensus.leader_value
    values = np.empty(len(roles))
    for i, (role, agent) in enumerate(zip(roles, config.agents)):
        if role is cons.Role.NORMAL_LEADER:
            values[i] = f_l
        elif role.malicious:
            values[i] = cons.malicious_value(rng)
        elif agent.initial_value is not None:
            values[i] = agent.initial_value
        else:
            values[i] = rng.uniform(0.0, 1.0)
    return values


def run_scenario(config, seed=None, dt=None, compose_mode=None, raise_on_abort=False):
    """Simulate a scenario; returns a Trace whose status is ``ok`` or ``infeasible``."""
    if dt is not None or seed is not None or compose_mode is not None:
        config = config.with_overrides(dt=dt, seed=seed, compose_mode=compose_mode)
    rng = np.random.default_rng(config.seed)
    state = config.initial_state()
    values = _consensus_init(config, rng)
    roles = config.roles
    c = config.consensus
    stride = config.consensus_stride
    rec = _Recorder(state.n, state.m, state.f, config.params)
    warned = False
    for k in range(config.steps + 1):
        if k > 0 and k % stride == 0:
            adj = hard_adjacency(state.positions, config.R)
            if c.mode == "wmsr":
                values = cons.wmsr_update(values, adj, roles, c.F, c.leader_value, rng)
            else:
                values = cons.linear_update(values, adj, roles, c.leader_value, rng)
        if not warned and not has_extreme_agent(state.positions):
            log.warning("t=%.2f: no extreme agent; gradient sign argument does not apply", state.time)
            warned = True
        step = control_step(state, config)
        if not step.solution.optimal:
            labels = []
            if step.solution.certificate is not None:
                labels = [step.rows[i].label for i in np.flatnonzero(step.solution.certificate > 0)]
            msg = f"QP {step.solution.status} at t={state.time:.4f}; conflicting rows: {labels}"
            log.error("%s: %s", config.name, msg)
            rec.add(state, None, values)
            trace = rec.build(state.followers, config.name, "infeasible", msg)
            if raise_on_abort:
                raise SimulationAborted(msg, trace)
            return trace
        rec.add(state, step, values)
        if k < config.steps:
            state = step_dynamics(state, step.u, config.dt, config.dynamics)
            state.time = (k + 1) * config.dt
    return rec.build(state.followers, config.name)


@dataclass
class InvariantReport:
    violations: list
    min_margin: float
    maintained_level: int
    final_consensus_error: float
    arrival_time: float
    min_pair_distance: float
    min_obstacle_clearance: float
    max_active_rows: int
    max_kkt_residual: float
    checkpoints: int
    consensus_converged: bool

    @property
    def passed(self):
        return not self.violations


def arrival_time(trace, exit_spec):
    if exit_spec is None:
        return None
    point = np.asarray(exit_spec.point, dtype=float)
    normal = np.asarray(exit_spec.normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    ahead = np.einsum("knm,m->kn", trace.positions - point, normal) >= -exit_spec.tolerance
    hit = np.flatnonzero(np.all(ahead, axis=1))
    return float(trace.time[hit[0]]) if hit.size else None


def check_invariants(trace, config, check_every=None, tol=1e-6):
    """Recheck a trace against the oracle and the safety/consensus requirements."""
    check_every = check_every or config.check_every
    violations = []
    K = len(trace)
    leaders, r = config.leaders, config.smooth.r
    if tuple(trace.followers) != tuple(config.followers):
        violations.append("trace agent layout does not match the scenario")
    if trace.status != "ok":
        violations.append(f"solver: {trace.message or trace.status}")

    if K == 0:
        violations.append("trace is empty")
    idx = sorted(set(range(0, K, check_every)) | ({K - 1} if K else set()))
    levels = []
    params = config.params
    for k in idx:
        adj = hard_adjacency(trace.positions[k], config.R)
        robust = percolates(adj, leaders, r) if config.followers else True
        levels.append(max_strong_robustness(adj, leaders))
        if not robust:
            violations.append(f"t={trace.time[k]:.4f}: network not strongly {r}-robust")
        if config.followers:
            h = robustness_margin(trace.state_at(k, config.R), params)
            if np.min(h) >= 0 and not robust:
                violations.append(f"t={trace.time[k]:.4f}: nonnegative margin on a non-robust network")
            if not np.allclose(h, trace.margins[k], rtol=1e-9, atol=1e-12):
                violations.append(f"t={trace.time[k]:.4f}: recorded margins disagree with positions")
    min_margin = float(np.min(trace.margins)) if trace.margins.size else np.inf
    if min_margin < 0:
        k = int(np.argmin(np.min(trace.margins, axis=1)))
        violations.append(f"t={trace.time[k]:.4f}: robustness margin {min_margin:.3g} < 0")

    n = trace.n
    iu = np.triu_indices(n, 1)
    min_pair = np.inf
    if n > 1:
        dists = np.array([pairwise_distances(p)[iu] for p in trace.positions])
        min_pair = float(dists.min())
        if min_pair < config.safety.agent_clearance - tol:
            violations.append(f"inter-agent distance {min_pair:.6g} below {config.safety.agent_clearance}")
    min_obs = np.inf
    for ob in config.obstacles:
        d = np.linalg.norm(trace.positions - np.asarray(ob.position), axis=2) - ob.clearance
        min_obs = min(min_obs, float(d.min()))
    if min_obs < -tol:
        violations.append(f"obstacle clearance short by {-min_obs:.6g}")

    final_err = (cons.consensus_error(trace.values[-1], config.roles, config.consensus.leader_value)
                 if K else np.inf)
    converged = final_err < config.consensus.tolerance
    if converged != config.consensus.expect_convergence:
        want = "converge" if config.consensus.expect_convergence else "fail"
        violations.append(f"consensus expected to {want}; final error {final_err:.3g}")

    arrival = arrival_time(trace, config.exit)
    if config.exit is not None and arrival is None:
        violations.append("agents never reached the exit")
    active = trace.active_robustness + trace.active_pairs + trace.active_obstacles
    kkt = trace.kkt_residual[np.isfinite(trace.kkt_residual)]
    return InvariantReport(
        violations=violations,
        min_margin=min_margin,
        maintained_level=int(min(levels)) if levels else 0,
        final_consensus_error=final_err,
        arrival_time=arrival,
        min_pair_distance=min_pair,
        min_obstacle_clearance=min_obs,
        max_active_rows=int(active.max()) if active.size else 0,
        max_kkt_residual=float(kkt.max()) if kkt.size else 0.0,
        checkpoints=len(idx),
        consensus_converged=converged,
    )
