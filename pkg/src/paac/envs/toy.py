"""Deterministic toy environments with closed-form or tabular optima."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..errors import ConfigError, ContractViolation
from . import preprocess as pp

KINDS = ("gridworld", "chain", "gridworld-pixel")

# gridworld actions; STAY doubles as the no-op
STAY, UP, RIGHT, DOWN, LEFT = range(5)
_MOVES = {STAY: (0, 0), UP: (0, -1), RIGHT: (1, 0), DOWN: (0, 1), LEFT: (-1, 0)}
# chain actions
CHAIN_LEFT, CHAIN_RIGHT = 0, 1


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "gridworld"
    size: Optional[int] = None          # grid side (default 5) or chain length (default 8)
    goal_reward: float = 1.0
    step_penalty: float = 0.01          # gridworld only; chain steps are reward-free
    max_steps: int = 100
    noop_max: int = 0                   # 0 disables no-op starts
    action_repeat: Optional[int] = None  # default 4 for gridworld-pixel, else 1
    step_delay_ms: float = 0.0          # busy-wait per base step, for timing experiments

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown env kind {self.kind!r}; expected one of {KINDS}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.resolved_size < 2:
            raise ConfigError("size must be >= 2")
        if self.noop_max < 0 or self.repeat < 1 or self.step_delay_ms < 0:
            raise ConfigError("noop_max, action_repeat and step_delay_ms must be non-negative (repeat >= 1)")
        if self.noop_max and self.kind == "chain":
            raise ConfigError("chain has no no-op action; set noop_max = 0")

    @property
    def resolved_size(self) -> int:
        if self.size is not None:
            return self.size
        return 8 if self.kind == "chain" else 5

    @property
    def repeat(self) -> int:
        if self.action_repeat is not None:
            return self.action_repeat
        return 4 if self.kind == "gridworld-pixel" else 1

    @property
    def num_actions(self) -> int:
        return 2 if self.kind == "chain" else 5

    @property
    def noop_action(self) -> Optional[int]:
        return None if self.kind == "chain" else STAY

    @property
    def obs_dim(self) -> int:
        if self.kind == "gridworld-pixel":
            return pp.STACK_DEPTH * pp.OUT_SIZE * pp.OUT_SIZE
        n = self.resolved_size
        return n if self.kind == "chain" else n * n


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool


class _Env:
    """Common bookkeeping: step counter, awaiting-reset flag, own RNG stream."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.steps = 0
        self.done = True

    @property
    def num_actions(self) -> int:
        return self.spec.num_actions

    @property
    def obs_dim(self) -> int:
        return self.spec.obs_dim

    def _begin_step(self, action) -> None:
        if self.done:
            raise ContractViolation("step() called on an environment awaiting reset()")
        if not 0 <= int(action) < self.num_actions:
            raise ContractViolation(f"action {action} outside [0, {self.num_actions})")


class GridWorld(_Env):
    """N x N grid, start (0, 0), goal (N-1, N-1). Positions are (x, y), y grows downward."""

    def reset(self) -> np.ndarray:
        self.pos = (0, 0)
        self.steps = 0
        self.done = False
        return self.observe()

    @property
    def goal(self):
        n = self.spec.resolved_size
        return (n - 1, n - 1)

    def observe(self) -> np.ndarray:
        n = self.spec.resolved_size
        obs = np.zeros(n * n)
        obs[self.pos[1] * n + self.pos[0]] = 1.0
        return obs

    def step(self, action) -> StepResult:
        self._begin_step(action)
        n = self.spec.resolved_size
        dx, dy = _MOVES[int(action)]
        x = min(max(self.pos[0] + dx, 0), n - 1)
        y = min(max(self.pos[1] + dy, 0), n - 1)
        self.pos = (x, y)
        self.steps += 1
        if self.pos == self.goal:
            reward, self.done = self.spec.goal_reward, True
        else:
            reward = -self.spec.step_penalty
            self.done = self.steps >= self.spec.max_steps
        return StepResult(self.observe(), reward, self.done)


class ChainMDP(_Env):
    """States 0..L-1, start at 0; reaching L-1 pays ``goal_reward`` and ends the episode."""

    def reset(self) -> np.ndarray:
        self.pos = 0
        self.steps = 0
        self.done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        obs = np.zeros(self.spec.resolved_size)
        obs[self.pos] = 1.0
        return obs

    def step(self, action) -> StepResult:
        self._begin_step(action)
        last = self.spec.resolved_size - 1
        self.pos = max(self.pos - 1, 0) if int(action) == CHAIN_LEFT else min(self.pos + 1, last)
        self.steps += 1
        if self.pos == last:
            reward, self.done = self.spec.goal_reward, True
        else:
            reward = 0.0
            self.done = self.steps >= self.spec.max_steps
        return StepResult(self.observe(), reward, self.done)


def render_grid(pos, size: int) -> np.ndarray:
    """Draw the grid as a 210x160x3 frame: dark background, green goal, red agent."""
    h, w, _ = pp.RAW_SHAPE
    frame = np.empty(pp.RAW_SHAPE, dtype=np.uint8)
    frame[...] = (20, 24, 48)

    def cell(cx, cy, color):
        y0, y1 = cy * h // size, (cy + 1) * h // size
        x0, x1 = cx * w // size, (cx + 1) * w // size
        frame[y0 + 2:y1 - 2, x0 + 2:x1 - 2] = color

    cell(size - 1, size - 1, (40, 200, 60))
    cell(pos[0], pos[1], (220, 40, 40))
    return frame


class GridWorldPixel(GridWorld):
    """GridWorld observed through rendered frames and the full preprocessing pipeline.

    One agent action repeats the base move ``spec.repeat`` times; the last two
    raw frames are max-pooled, reduced to 84x84 gray and pushed onto a 4-frame stack.
    """

    def reset(self) -> np.ndarray:
        super().reset()
        raw = render_grid(self.pos, self.spec.resolved_size)
        self._last_raw = raw
        self.stack = pp.frame_stack_reset(pp.preprocess_frame_pair(raw, raw))
        return pp.stack_to_observation(self.stack)

    def observe(self) -> np.ndarray:
        return np.empty(0)  # vector view unused; observations come from the frame stack

    def step(self, action) -> StepResult:
        self._begin_step(action)
        total = 0.0
        prev, last = self._last_raw, self._last_raw
        for _ in range(self.spec.repeat):
            _, r, done = GridWorld.step(self, action)
            total += r
            prev, last = last, render_grid(self.pos, self.spec.resolved_size)
            if done:
                break
        self._last_raw = last
        self.stack = pp.frame_stack_push(self.stack, pp.preprocess_frame_pair(prev, last))
        return StepResult(pp.stack_to_observation(self.stack), total, self.done)


class ActionRepeat:
    """Apply each agent action ``k`` times; rewards summed, done if any sub-step ends."""

    def __init__(self, env, k: int):
        self.env, self.k = env, k

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self):
        return self.env.reset()

    def step(self, action) -> StepResult:
        total = 0.0
        for _ in range(self.k):
            obs, r, done = self.env.step(action)
            total += r
            if done:
                break
        return StepResult(obs, total, done)


class StepDelay:
    """Busy-wait ``ms`` milliseconds inside every step (simulates a costlier emulator)."""

    def __init__(self, env, ms: float):
        self.env, self.seconds = env, ms / 1000.0

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self):
        return self.env.reset()

    def step(self, action) -> StepResult:
        end = time.perf_counter() + self.seconds
        while time.perf_counter() < end:
            pass
        return self.env.step(action)


def make_env(spec: EnvSpec, rng: np.random.Generator | None = None):
    if spec.kind == "gridworld":
        env = GridWorld(spec, rng)
    elif spec.kind == "chain":
        env = ChainMDP(spec, rng)
    else:
        env = GridWorldPixel(spec, rng)
    if spec.step_delay_ms > 0:
        env = StepDelay(env, spec.step_delay_ms)
    if spec.kind != "gridworld-pixel" and spec.repeat > 1:
        env = ActionRepeat(env, spec.repeat)
    return env


def noop_start(env, rng: np.random.Generator | None = None, max_noops: int = 30) -> np.ndarray:
    """Play k ~ U{1..max_noops} no-ops from a fresh reset; restart if an episode ends meanwhile."""
    noop = env.spec.noop_action
    if noop is None:
        raise ConfigError(f"{env.spec.kind} has no no-op action")
    rng = env.rng if rng is None else rng
    k = int(rng.integers(1, max_noops + 1))
    obs = None
    for _ in range(k):
        obs, _, done = env.step(noop)
        if done:
            obs = env.reset()
    return obs


def reset_env(env) -> np.ndarray:
    """Reset, followed by no-op starts when ``noop_max`` is positive."""
    obs = env.reset()
    if env.spec.noop_max > 0:
        obs = noop_start(env, max_noops=env.spec.noop_max)
    return obs


# --- optima ---------------------------------------------------------------

def gridworld_optimal_return(spec: EnvSpec, gamma: float) -> float:
    """Discounted return of a shortest path from (0, 0) to the goal."""
    n = spec.resolved_size
    d = 2 * (n - 1)
    penalties = sum(gamma ** k for k in range(d - 1))
    return -spec.step_penalty * penalties + gamma ** (d - 1) * spec.goal_reward


def gridworld_optimal_undiscounted(spec: EnvSpec) -> float:
    d = 2 * (spec.resolved_size - 1)
    return spec.goal_reward - (d - 1) * spec.step_penalty


def chain_value_iteration(spec: EnvSpec, gamma: float, tol: float = 1e-10) -> np.ndarray:
    """Q* for the non-terminal chain states, shape (L-1, 2), iterated to ``tol``."""
    n = spec.resolved_size
    q = np.zeros((n - 1, 2))
    while True:
        v = q.max(axis=1)
        new = np.empty_like(q)
        for s in range(n - 1):
            for a, s2 in ((CHAIN_LEFT, max(s - 1, 0)), (CHAIN_RIGHT, s + 1)):
                if s2 == n - 1:
                    new[s, a] = spec.goal_reward
                else:
                    new[s, a] = gamma * v[s2]
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
