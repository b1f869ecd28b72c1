"""Scenario files: JSON with a versioned schema, validated on load."""
import json
from importlib import resources
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .consensus import Role
from .graph import hard_adjacency
from .robustness import is_f_local, max_strong_robustness, percolates
from .safety import Obstacle
from .smooth import SmoothParams, composed_cbf, hocbf_chain, robustness_margin
from .state import SwarmState

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
Scalars = Union[float, List[float]]


class ConfigError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AgentSpec(_Model):
    position: List[float]
    velocity: Optional[List[float]] = None
    role: Literal["leader", "follower"]
    malicious: bool = False
    goal: Optional[List[float]] = None
    initial_value: Optional[float] = Field(default=None, ge=0.0, le=1.0)


class SmoothSpec(_Model):
    r: int = Field(ge=1)
    s: float = Field(default=5.0, gt=0)
    s_A: float = Field(default=10.0, gt=0)
    q: float = Field(default=0.5, gt=0, lt=1)
    q_A: float = Field(default=0.5, gt=0, lt=1)
    delta: int = Field(default=4, ge=1)
    epsilon: float = Field(default=1e-4, gt=0)


class GainSpec(_Model):
    eta1: Scalars = 1.0
    eta2: Scalars = 1.0
    alpha_T: float = Field(default=1.0, gt=0)
    weights: Scalars = 1.0
    safety_eta1: float = Field(default=1.0, gt=0)
    safety_eta2: float = Field(default=1.0, gt=0)
    # only used when every barrier is folded into one row
    safety_weight: float = Field(default=1.0, gt=0)


class ObstacleSpec(_Model):
    position: List[float]
    clearance: float = Field(gt=0)


class SafetySpec(_Model):
    agent_clearance: float = Field(default=0.3, gt=0)
    obstacles: List[ObstacleSpec] = Field(default_factory=list)
    sensing_radius: Optional[float] = Field(default=None, gt=0)
    buffer: float = Field(default=1e-3, ge=0)


class NominalSpec(_Model):
    mode: Literal["spread_out", "goal", "none"] = "goal"
    goal: Optional[List[float]] = None


class ExitSpec(_Model):
    point: List[float]
    normal: List[float]
    tolerance: float = Field(default=0.5, ge=0)


class ConsensusSpec(_Model):
    mode: Literal["wmsr", "linear"] = "wmsr"
    F: int = Field(default=0, ge=0)
    tau: float = Field(default=0.5, gt=0)
    leader_value: float = Field(default=1.0, ge=0.0, le=1.0)
    tolerance: float = Field(default=1e-3, gt=0)
    expect_convergence: bool = True


class ScenarioConfig(_Model):
    schema_version: Literal[1]
    name: str
    description: str = ""
    dynamics: Literal["double", "single"] = "double"
    R: float = Field(gt=0)
    agents: List[AgentSpec] = Field(min_length=1)
    smooth: SmoothSpec
    gains: GainSpec = Field(default_factory=GainSpec)
    safety: SafetySpec = Field(default_factory=SafetySpec)
    nominal: NominalSpec = Field(default_factory=NominalSpec)
    exit: Optional[ExitSpec] = None
    consensus: ConsensusSpec = Field(default_factory=ConsensusSpec)
    dt: float = Field(default=0.01, gt=0)
    duration: float = Field(default=20.0, ge=0)
    seed: int = Field(default=0, ge=0)
    compose_mode: Literal["rows", "exponential"] = "rows"
    check_every: int = Field(default=10, ge=1)
    initial_robustness: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _shapes(self):
        m = len(self.agents[0].position)
        if m < 1:
            raise ValueError("agents.0.position: must have at least one coordinate")
        for i, a in enumerate(self.agents):
            for key in ("position", "velocity", "goal"):
                val = getattr(a, key)
                if val is not None and len(val) != m:
                    raise ValueError(f"agents.{i}.{key}: expected {m} coordinates, got {len(val)}")
        for key, val in (("nominal.goal", self.nominal.goal),
                         ("exit.point", self.exit and self.exit.point),
                         ("exit.normal", self.exit and self.exit.normal)):
            if val and len(val) != m:
                raise ValueError(f"{key}: expected {m} coordinates, got {len(val)}")
        for k, ob in enumerate(self.safety.obstacles):
            if len(ob.position) != m:
                raise ValueError(f"safety.obstacles.{k}.position: expected {m} coordinates")
        return self

    # runtime views

    @property
    def m(self):
        return len(self.agents[0].position)

    @property
    def leaders(self):
        return tuple(i for i, a in enumerate(self.agents) if a.role == "leader")

    @property
    def followers(self):
        return tuple(i for i, a in enumerate(self.agents) if a.role == "follower")

    @property
    def roles(self):
        out = []
        for a in self.agents:
            if a.role == "leader":
                out.append(Role.MALICIOUS_LEADER if a.malicious else Role.NORMAL_LEADER)
            else:
                out.append(Role.MALICIOUS_FOLLOWER if a.malicious else Role.NORMAL_FOLLOWER)
        return out

    @property
    def params(self):
        return SmoothParams(**self.smooth.model_dump())

    @property
    def obstacles(self):
        return [Obstacle(tuple(o.position), o.clearance) for o in self.safety.obstacles]

    @property
    def steps(self):
        return int(round(self.duration / self.dt))

    @property
    def consensus_stride(self):
        return int(round(self.consensus.tau / self.dt))

    def initial_state(self):
        p = np.array([a.position for a in self.agents], dtype=float)
        v = np.array([a.velocity if a.velocity is not None else [0.0] * self.m
                      for a in self.agents], dtype=float)
        return SwarmState(p, v, self.leaders, self.R, 0.0)

    def goals(self):
        """(n, m) goal array; rows of NaN for agents without a goal."""
        g = np.full((len(self.agents), self.m), np.nan)
        for i, a in enumerate(self.agents):
            if a.goal is not None:
                g[i] = a.goal
            elif self.nominal.goal is not None:
                g[i] = self.nominal.goal
        return g

    def with_overrides(self, **changes):
        """Copy with top-level or dotted (``smooth.s``) fields replaced, re-validated."""
        data = self.model_dump()
        for key, val in changes.items():
            if val is None:
                continue
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node[part]
            node[parts[-1]] = val
        return validate_scenario(data)


def _raise_from_pydantic(err):
    first = err.errors()[0]
    path = ".".join(str(x) for x in first["loc"])
    raise ConfigError(path, first["msg"]) from None


def validate_scenario(data):
    """Build a config from a dict and check every load-time invariant."""
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as err:
        _raise_from_pydantic(err)
    _check_invariants(cfg)
    return cfg


def _check_invariants(cfg):
    l, f = len(cfg.leaders), len(cfg.followers)
    if l == 0:
        raise ConfigError("agents", "at least one leader is required")
    if cfg.smooth.r > l - 1:
        raise ConfigError(
            "smooth.r",
            f"r={cfg.smooth.r} with l={l} leaders: the maintained robustness must satisfy r <= l - 1, "
            "since smooth adjacency entries stay below 1 and r = l leaves every first-round "
            "smooth activation negative")
    if f and cfg.smooth.delta > f:
        raise ConfigError("smooth.delta", f"delta={cfg.smooth.delta} exceeds the follower count f={f}")
    ratio = cfg.consensus.tau / cfg.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError("consensus.tau", "tau must be a positive integer multiple of dt")
    for name, val in (("gains.eta1", cfg.gains.eta1), ("gains.eta2", cfg.gains.eta2),
                      ("gains.weights", cfg.gains.weights)):
        arr = np.atleast_1d(np.asarray(val, dtype=float))
        if arr.size not in (1, f):
            raise ConfigError(name, f"expected a scalar or {f} per-follower values")
        if np.any(arr <= 0):
            raise ConfigError(name, "must be positive")
    goals = cfg.goals()
    movers = cfg.leaders if cfg.nominal.mode == "spread_out" else range(len(cfg.agents))
    if cfg.nominal.mode != "none":
        for i in movers:
            if np.any(np.isnan(goals[i])):
                raise ConfigError(f"agents.{i}.goal", "this agent needs a goal under the selected nominal mode")

    state = cfg.initial_state()
    adj = hard_adjacency(state.positions, cfg.R)
    if f and not percolates(adj, cfg.leaders, cfg.smooth.r):
        raise ConfigError("agents", f"initial network is not strongly {cfg.smooth.r}-robust with respect to the leaders")
    if cfg.initial_robustness is not None:
        got = max_strong_robustness(adj, cfg.leaders)
        if got != cfg.initial_robustness:
            raise ConfigError("initial_robustness", f"declared {cfg.initial_robustness}, oracle reports {got}")
    malicious = [i for i, r in enumerate(cfg.roles) if r.malicious]
    if malicious and not is_f_local(adj, malicious, cfg.consensus.F):
        log.warning("%s: malicious set is not %d-local in the initial network", cfg.name, cfg.consensus.F)
    if f:
        h = robustness_margin(state, cfg.params)
        if np.min(h) < 0:
            log.warning("%s: initial robustness margin %.3g is negative", cfg.name, np.min(h))
        elif cfg.dynamics == "double":
            phi = composed_cbf(hocbf_chain(state, cfg.params, cfg.gains.eta1, cfg.gains.eta2),
                               cfg.gains.weights).value
            if phi < 0:
                log.warning("%s: initial composed barrier %.3g is negative; raise weights or eta1", cfg.name, phi)


def shipped_scenarios():
    """Paths of the scenario files bundled with the package."""
    root = resources.files("robustcbf") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario(name_or_path):
    """A path as given, or the bundled scenario of that name."""
    path = Path(name_or_path)
    if path.exists():
        return path
    for p in shipped_scenarios():
        if p.stem == str(name_or_path):
            return p
    return path


def parse_scenario(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("", f"scenario file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("", f"{path}: invalid JSON ({err})") from None
    return validate_scenario(data)
