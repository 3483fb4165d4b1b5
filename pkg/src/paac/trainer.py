"""Synchronous master loop: collect an (n_e, t_max) slab, compute returns, one update.

The learner is pluggable. ``PaacLearner`` is the parallel advantage
actor-critic; ``NStepQLearner`` reuses the same pool, slab and optimizer for
batched n-step Q-learning with epsilon-greedy exploration.
"""
from __future__ import annotations

import dataclasses
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from . import nn_core
from .config import TrainerConfig, trainer_from_dict, trainer_to_dict
from .env_pool import EnvPool
from .envs import EnvSpec, make_env, reset_env
from .errors import ConfigError, TrainingDivergence
from .nn_core import GradientSet, LossStats, ParamSet, PolicyValueOutput, RmsPropState
from .returns import TrajectorySlab, compute_returns

# entropy tags for the master-side RNG streams (the pool uses tag 0)
STREAM_SAMPLE, STREAM_INIT, STREAM_EVAL = 1, 2, 3

WALL_CLOCK_FIELDS = ("wall_time", "update_time", "timesteps_per_sec", "phases")


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF; consumes exactly B uniforms in row order."""
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    actions = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(actions, probs.shape[1] - 1)


def epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    n, n_actions = q.shape
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(0, n_actions, size=n)
    return np.where(explore, random_actions, q.argmax(axis=1))


def paac_update(params: ParamSet, slab: TrajectorySlab, cfg: TrainerConfig
                ) -> tuple[GradientSet, LossStats]:
    """Batched actor-critic gradient over all n_e * t_max transitions of the slab."""
    if slab.returns is None:
        raise ConfigError("slab has no returns; run compute_returns first")
    _, cache = nn_core.forward(params, slab.flat_observations())
    return nn_core.backward_paac_loss(
        params, cache, slab.actions.ravel(), slab.returns.ravel(), slab.values.ravel(),
        beta=cfg.beta, value_coef=cfg.value_coef)


def qlearn_loss_sensitivities(output: PolicyValueOutput, actions, targets):
    q = output.logits
    n = q.shape[0]
    rows = np.arange(n)
    err = np.asarray(targets) - q[rows, actions]
    per_sample = err ** 2
    if not np.all(np.isfinite(per_sample)):
        idx = int(np.flatnonzero(~np.isfinite(per_sample))[0])
        raise TrainingDivergence(f"non-finite Q loss at batch index {idx}", batch_index=idx)
    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * err / n
    mse = float(per_sample.mean())
    return dq, LossStats(total=mse, policy_loss=0.0, value_loss=mse, entropy=float("nan"))


def qlearn_update(params: ParamSet, slab: TrajectorySlab, cfg: TrainerConfig
                  ) -> tuple[GradientSet, LossStats]:
    """Gradient of mean (y - Q(s, a))^2 with n-step targets y held constant.

    The policy head's outputs are read as Q-values; the value head gets zero gradient.
    """
    if slab.returns is None:
        raise ConfigError("slab has no returns; run compute_returns first")
    _, cache = nn_core.forward(params, slab.flat_observations())
    dq, stats = qlearn_loss_sensitivities(cache.output, slab.actions.ravel(), slab.returns.ravel())
    dvalues = np.zeros(dq.shape[0], dtype=dq.dtype)
    return nn_core.backward(params, cache, dq, dvalues), stats


def qlearn_objective(params: ParamSet, obs, actions, targets) -> float:
    out, _ = nn_core.forward(params, obs)
    return qlearn_loss_sensitivities(out, actions, targets)[1].total


class Learner(Protocol):
    kind: str

    def act(self, out: PolicyValueOutput, rng: np.random.Generator, progress: float) -> np.ndarray: ...
    def selection_values(self, out: PolicyValueOutput, actions: np.ndarray) -> np.ndarray: ...
    def bootstrap(self, out: PolicyValueOutput) -> np.ndarray: ...
    def update(self, params: ParamSet, slab: TrajectorySlab) -> tuple[GradientSet, LossStats]: ...


@dataclass
class PaacLearner:
    cfg: TrainerConfig
    kind: str = "paac"

    def act(self, out, rng, progress):
        return sample_actions(out.probs, rng)

    def selection_values(self, out, actions):
        return out.values

    def bootstrap(self, out):
        return out.values

    def update(self, params, slab):
        return paac_update(params, slab, self.cfg)


@dataclass
class NStepQLearner:
    cfg: TrainerConfig
    kind: str = "nstep-q"

    def epsilon(self, progress: float) -> float:
        c = self.cfg
        frac = 1.0 if c.eps_anneal <= 0 else min(1.0, progress / c.eps_anneal)
        return c.eps_start + frac * (c.eps_end - c.eps_start)

    def act(self, out, rng, progress):
        return epsilon_greedy(out.logits, self.epsilon(progress), rng)

    def selection_values(self, out, actions):
        return out.logits[np.arange(len(actions)), actions]

    def bootstrap(self, out):
        return out.logits.max(axis=1)

    def update(self, params, slab):
        return qlearn_update(params, slab, self.cfg)


def make_learner(cfg: TrainerConfig) -> Learner:
    return PaacLearner(cfg) if cfg.learner == "paac" else NStepQLearner(cfg)


@dataclass
class TrainState:
    cfg: TrainerConfig
    params: ParamSet
    opt: RmsPropState
    pool: EnvPool
    rng: np.random.Generator
    learner: Learner
    timestep: int = 0
    updates: int = 0
    version: int = 0
    timers: dict = field(default_factory=lambda: {"env_interaction": 0.0, "forward_select": 0.0})

    @property
    def progress(self) -> float:
        return self.timestep / self.cfg.n_max


def initial_params(cfg: TrainerConfig) -> ParamSet:
    """The parameters a run with this config starts from."""
    spec = cfg.env
    dtype = np.float32 if cfg.dtype == "float32" else np.float64
    return nn_core.init_params(spec.obs_dim, spec.num_actions, cfg.hidden,
                               rng=np.random.default_rng([cfg.seed, STREAM_INIT]), dtype=dtype)


def init_state(cfg: TrainerConfig) -> TrainState:
    spec = cfg.env
    params = initial_params(cfg)
    opt = RmsPropState.zeros_like(params, lr=cfg.lr, decay=cfg.rms_decay, eps=cfg.rms_eps)
    pool = EnvPool(spec, cfg.n_e, cfg.n_w, master_seed=cfg.seed)
    return TrainState(cfg, params, opt, pool, np.random.default_rng([cfg.seed, STREAM_SAMPLE]),
                      make_learner(cfg))


def collect_segment(state: TrainState) -> TrajectorySlab:
    """Run t_max lockstep steps under the current parameters, plus one bootstrap forward."""
    cfg, pool = state.cfg, state.pool
    n_e, t_max = cfg.n_e, cfg.t_max
    obs = pool.observations()
    observations = np.empty((n_e, t_max, obs.shape[1]), dtype=obs.dtype)
    actions = np.empty((n_e, t_max), dtype=np.int64)
    rewards = np.empty((n_e, t_max))
    dones = np.empty((n_e, t_max), dtype=bool)
    values = np.empty((n_e, t_max))
    clock = time.perf_counter
    for t in range(t_max):
        t0 = clock()
        out, _ = nn_core.forward(state.params, obs)
        a = state.learner.act(out, state.rng, state.progress)
        values[:, t] = state.learner.selection_values(out, a)
        t1 = clock()
        observations[:, t] = obs
        actions[:, t] = a
        obs, rewards[:, t], dones[:, t] = pool.step(a)
        t2 = clock()
        state.timers["forward_select"] += t1 - t0
        state.timers["env_interaction"] += t2 - t1
    t0 = clock()
    out, _ = nn_core.forward(state.params, obs)
    bootstrap = np.asarray(state.learner.bootstrap(out), dtype=np.float64)
    state.timers["forward_select"] += clock() - t0
    return TrajectorySlab(observations, actions, rewards, dones, values, bootstrap,
                          param_version=state.version)


@dataclass
class MetricsRecord:
    update: int
    timestep: int
    wall_time: float
    update_time: float
    mean_return: Optional[float]
    max_return: Optional[float]
    episodes: int
    policy_loss: float
    value_loss: float
    entropy: Optional[float]
    grad_norm: float
    lr: float
    timesteps_per_sec: float
    phases: dict
    epsilon: Optional[float] = None
    eval_return: Optional[float] = None
    eval_discounted: Optional[float] = None
    param_version: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _finite_or_none(x: float) -> Optional[float]:
    return float(x) if x is not None and np.isfinite(x) else None


def current_lr(cfg: TrainerConfig, timestep: int) -> float:
    if cfg.lr_schedule == "linear":
        return cfg.lr * max(0.0, 1.0 - timestep / cfg.n_max)
    return cfg.lr


def save_train_checkpoint(path, state: TrainState) -> None:
    meta = {"config": trainer_to_dict(state.cfg), "updates": state.updates,
            "version": state.version}
    nn_core.save_checkpoint(path, state.params, state.opt, state.timestep, meta)


def load_train_checkpoint(path) -> tuple[TrainerConfig, nn_core.Checkpoint]:
    ck = nn_core.load_checkpoint(path)
    if "config" not in ck.meta:
        raise ConfigError(f"{path}: checkpoint carries no trainer config")
    return trainer_from_dict(ck.meta["config"]), ck


@dataclass
class TrainResult:
    state: TrainState
    history: list
    diverged: bool = False
    error: Optional[str] = None


def train(cfg: TrainerConfig, checkpoint_path=None,
          on_record: Optional[Callable[[MetricsRecord], None]] = None,
          should_stop: Optional[Callable[[TrainState], bool]] = None,
          raise_on_divergence: bool = True) -> TrainResult:
    """Repeat {collect, returns, gradient, clip, RMSProp} until timestep >= n_max.

    On divergence the last good parameters are checkpointed (when a path is
    given) and ``TrainingDivergence`` propagates unless ``raise_on_divergence``
    is false, in which case the result is flagged instead.
    """
    state = init_state(cfg)
    history: list[MetricsRecord] = []
    window: deque = deque(maxlen=cfg.return_window)
    clock = time.perf_counter
    start = clock()
    batch = cfg.batch_size
    try:
        while state.timestep < cfg.n_max:
            if should_stop is not None and should_stop(state):
                break
            state.timers = {"env_interaction": 0.0, "forward_select": 0.0}
            t0 = clock()
            slab = collect_segment(state)
            t1 = clock()
            slab = compute_returns(slab, cfg.gamma)
            if slab.param_version != state.version:
                raise RuntimeError("stale slab: collected under different parameters")
            grads, stats = state.learner.update(state.params, slab)
            grads, norm = nn_core.clip_gradients(grads, cfg.clip)
            lr = current_lr(cfg, state.timestep)
            nn_core.rmsprop_step(state.params, grads, state.opt, lr=lr)
            t2 = clock()
            state.timestep += batch
            state.updates += 1
            state.version += 1

            window.extend(ret for _, ret, _ in state.pool.drain_completed())
            eval_ret = eval_disc = None
            if cfg.eval_every and state.updates % cfg.eval_every == 0:
                summary = evaluate(state.params, cfg.env, cfg.eval_episodes, seed=cfg.seed,
                                   gamma=cfg.gamma)
                eval_ret, eval_disc = summary.mean, summary.discounted_mean
            t3 = clock()
            phases = {
                "env_interaction": state.timers["env_interaction"],
                "forward_select": state.timers["forward_select"],
                "learning": t2 - t1,
            }
            record = MetricsRecord(
                update=state.updates, timestep=state.timestep, wall_time=t3 - start,
                update_time=t3 - t0,
                mean_return=float(np.mean(window)) if window else None,
                max_return=float(np.max(window)) if window else None,
                episodes=len(window),
                policy_loss=stats.policy_loss, value_loss=stats.value_loss,
                entropy=_finite_or_none(stats.entropy), grad_norm=norm, lr=lr,
                timesteps_per_sec=batch / (t3 - t0), phases=phases,
                epsilon=(state.learner.epsilon(state.progress)
                         if isinstance(state.learner, NStepQLearner) else None),
                eval_return=eval_ret, eval_discounted=eval_disc,
                param_version=state.version,
            )
            history.append(record)
            if on_record is not None:
                on_record(record)
            if checkpoint_path and cfg.checkpoint_every and state.updates % cfg.checkpoint_every == 0:
                save_train_checkpoint(checkpoint_path, state)
    except TrainingDivergence as exc:
        if checkpoint_path:
            save_train_checkpoint(checkpoint_path, state)
        if raise_on_divergence:
            raise
        return TrainResult(state, history, diverged=True, error=str(exc))
    finally:
        state.pool.close()
    if checkpoint_path:
        save_train_checkpoint(checkpoint_path, state)
    return TrainResult(state, history)


# --- evaluation -----------------------------------------------------------

@dataclass
class EvalSummary:
    returns: list
    discounted: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std(self) -> float:
        return float(np.std(self.returns))

    @property
    def min(self) -> float:
        return float(np.min(self.returns))

    @property
    def max(self) -> float:
        return float(np.max(self.returns))

    @property
    def discounted_mean(self) -> float:
        return float(np.mean(self.discounted))

    def to_dict(self) -> dict:
        return {"episodes": len(self.returns), "mean": self.mean, "std": self.std,
                "min": self.min, "max": self.max, "discounted_mean": self.discounted_mean}


def evaluate(params: ParamSet, spec: EnvSpec, episodes: int = 30, seed: int = 0,
             gamma: float = 0.99, greedy: bool = True) -> EvalSummary:
    """Play ``episodes`` episodes on a dedicated env stream (no-op starts if enabled).

    Greedy takes argmax of the policy logits (Q-values for the Q learner);
    otherwise actions are sampled from softmax(logits).
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if params.input_dim != spec.obs_dim or params.num_actions != spec.num_actions:
        raise ConfigError(
            f"network ({params.input_dim} in, {params.num_actions} out) does not fit env "
            f"{spec.kind} ({spec.obs_dim} in, {spec.num_actions} actions)")
    rng = np.random.default_rng([seed, STREAM_EVAL])
    env = make_env(spec, rng)
    returns, discounted = [], []
    for _ in range(episodes):
        obs = reset_env(env)
        total = disc = 0.0
        k, done = 0, False
        while not done:
            out, _ = nn_core.forward(params, obs[None, :])
            if greedy:
                a = int(out.logits[0].argmax())
            else:
                a = int(sample_actions(out.probs, rng)[0])
            obs, r, done = env.step(a)
            total += r
            disc += gamma ** k * r
            k += 1
        returns.append(total)
        discounted.append(disc)
    return EvalSummary(returns, discounted)


def random_policy_baseline(spec: EnvSpec, episodes: int = 30, seed: int = 0,
                           gamma: float = 0.99) -> EvalSummary:
    """Uniform-random actions on the same evaluation protocol."""
    rng = np.random.default_rng([seed, STREAM_EVAL])
    env = make_env(spec, rng)
    returns, discounted = [], []
    for _ in range(episodes):
        reset_env(env)
        total = disc = 0.0
        k, done = 0, False
        while not done:
            _, r, done = env.step(int(rng.integers(spec.num_actions)))
            total += r
            disc += gamma ** k * r
            k += 1
        returns.append(total)
        discounted.append(disc)
    return EvalSummary(returns, discounted)
