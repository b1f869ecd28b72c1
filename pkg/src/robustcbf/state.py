from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class SwarmState:
    """Positions and velocities of all robots plus the fixed network data.

    ``positions`` and ``velocities`` are (n, m) arrays. ``leaders`` holds the
    leader indices; followers are the remaining indices in ascending order,
    and every per-follower vector in the package uses that order.
    """

    positions: np.ndarray
    velocities: np.ndarray
    leaders: tuple
    R: float
    time: float = 0.0
    followers: tuple = field(init=False)

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        if self.positions.ndim != 2:
            raise ValueError("positions must be an (n, m) array")
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)
        self.velocities = np.array(self.velocities, dtype=float)
        if self.velocities.shape != self.positions.shape:
            raise ValueError("velocities must have the same shape as positions")
        n = self.positions.shape[0]
        self.leaders = tuple(sorted(set(int(i) for i in self.leaders)))
        if not self.leaders:
            raise ValueError("at least one leader is required")
        if self.leaders[0] < 0 or self.leaders[-1] >= n:
            raise ValueError("leader index out of range")
        lead = set(self.leaders)
        self.followers = tuple(i for i in range(n) if i not in lead)
        if self.R <= 0:
            raise ValueError("communication range R must be positive")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ValueError("state entries must be finite")

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def m(self):
        return self.positions.shape[1]

    @property
    def M(self):
        return self.positions.size

    @property
    def l(self):
        return len(self.leaders)

    @property
    def f(self):
        return len(self.followers)

    @property
    def order(self):
        """Leaders first, then followers."""
        return np.array(self.leaders + self.followers, dtype=int)

    def with_motion(self, positions, velocities, time=None):
        return replace(self, positions=positions, velocities=velocities,
                       time=self.time if time is None else time)
