"""n-step returns and advantages over an (n_e, t_max) experience slab."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError


@dataclass
class TrajectorySlab:
    observations: np.ndarray      # (n_e, t_max, obs_dim)
    actions: np.ndarray           # (n_e, t_max) int
    rewards: np.ndarray           # (n_e, t_max)
    dones: np.ndarray             # (n_e, t_max) bool
    values: np.ndarray            # (n_e, t_max), estimates at selection time
    bootstrap_values: np.ndarray  # (n_e,), estimate for the state after the segment
    returns: Optional[np.ndarray] = None
    param_version: int = -1       # parameters that generated the slab

    @property
    def n_e(self) -> int:
        return self.rewards.shape[0]

    @property
    def t_max(self) -> int:
        return self.rewards.shape[1]

    @property
    def batch_size(self) -> int:
        return self.rewards.size

    def flat_observations(self) -> np.ndarray:
        return self.observations.reshape(self.batch_size, -1)


def discounted_returns(rewards: np.ndarray, dones: np.ndarray, bootstrap: np.ndarray,
                       gamma: float) -> np.ndarray:
    """Backward recursion R_t = r_t + gamma * (1 - done_t) * R_{t+1}, R_{t_max+1} = bootstrap."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 2 or np.shape(dones) != rewards.shape or np.shape(bootstrap) != rewards.shape[:1]:
        raise ConfigError(f"inconsistent slab shapes: rewards {rewards.shape}, "
                          f"dones {np.shape(dones)}, bootstrap {np.shape(bootstrap)}")
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    live = 1.0 - np.asarray(dones, dtype=np.float64)
    out = np.empty_like(rewards)
    running = np.asarray(bootstrap, dtype=np.float64).copy()
    for t in range(rewards.shape[1] - 1, -1, -1):
        running = rewards[:, t] + gamma * live[:, t] * running
        out[:, t] = running
    return out


def compute_returns(slab: TrajectorySlab, gamma: float) -> TrajectorySlab:
    """Return a copy of ``slab`` with ``returns`` filled; the input is not modified."""
    R = discounted_returns(slab.rewards, slab.dones, slab.bootstrap_values, gamma)
    return dataclasses.replace(slab, returns=R)


def compute_advantages(slab: TrajectorySlab) -> np.ndarray:
    if slab.returns is None:
        raise ConfigError("compute_returns must run before compute_advantages")
    return slab.returns - slab.values
