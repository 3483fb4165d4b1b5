"""Lockstep environment pool: n_w persistent workers step n_e environments per call.

Environment i is owned by worker floor(i * n_w / n_e). Each environment has
its own RNG stream seeded from (master_seed, i), so outputs do not depend on
the worker count or on thread scheduling. With n_w == 1 the pool steps
inline in the caller's thread; that path doubles as the serial reference.
"""
from __future__ import annotations

import threading
from typing import Optional

import numpy as np

from .envs import EnvSpec, make_env, reset_env
from .errors import ConfigError, PoolError


STREAM_ENV = 0  # first entropy word after the seed; other consumers use other tags


def env_stream(master_seed: int, env_index: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), STREAM_ENV, int(env_index)])


def partition(n_e: int, n_w: int) -> list[range]:
    """Contiguous env blocks per worker, env i -> worker floor(i * n_w / n_e)."""
    owners = [(i * n_w) // n_e for i in range(n_e)]
    blocks = []
    for w in range(n_w):
        idx = [i for i, o in enumerate(owners) if o == w]
        blocks.append(range(idx[0], idx[-1] + 1) if idx else range(0))
    return blocks


class EnvPool:
    def __init__(self, spec: EnvSpec, n_e: int, n_w: int = 1, master_seed: int = 0,
                 barrier_timeout: Optional[float] = 60.0):
        if n_e < 1:
            raise ConfigError(f"n_e must be >= 1, got {n_e}")
        if not 1 <= n_w <= n_e:
            raise ConfigError(f"n_w must satisfy 1 <= n_w <= n_e ({n_e}), got {n_w}")
        self.spec, self.n_e, self.n_w = spec, n_e, n_w
        self.envs = [make_env(spec, env_stream(master_seed, i)) for i in range(n_e)]
        self.blocks = partition(n_e, n_w)

        self._obs = np.stack([reset_env(e) for e in self.envs])
        self._rewards = np.zeros(n_e)
        self._dones = np.zeros(n_e, dtype=bool)
        self._actions = np.zeros(n_e, dtype=np.int64)
        self._ep_return = np.zeros(n_e)
        self._ep_length = np.zeros(n_e, dtype=np.int64)
        self._finished_return = np.zeros(n_e)
        self._finished_length = np.zeros(n_e, dtype=np.int64)
        self.completed: list[tuple[int, float, int]] = []  # (env index, return, length)

        self._errors: list[Optional[BaseException]] = [None] * n_w
        self._poisoned: Optional[str] = None
        self._closed = False
        self._threads: list[threading.Thread] = []
        if n_w > 1:
            self._timeout = barrier_timeout
            self._start = threading.Barrier(n_w + 1)
            self._end = threading.Barrier(n_w + 1)
            for w in range(n_w):
                t = threading.Thread(target=self._worker, args=(w,), daemon=True,
                                     name=f"env-worker-{w}")
                t.start()
                self._threads.append(t)

    # -- worker side -------------------------------------------------------

    def _step_block(self, block: range) -> None:
        for i in block:
            env = self.envs[i]
            obs, r, done = env.step(self._actions[i])
            self._ep_return[i] += r
            self._ep_length[i] += 1
            if done:
                self._finished_return[i] = self._ep_return[i]
                self._finished_length[i] = self._ep_length[i]
                self._ep_return[i] = 0.0
                self._ep_length[i] = 0
                obs = reset_env(env)
            self._obs[i] = obs
            self._rewards[i] = r
            self._dones[i] = done

    def _worker(self, w: int) -> None:
        while True:
            try:
                self._start.wait()  # idle between steps; close() aborts the barrier
            except threading.BrokenBarrierError:
                return
            if self._closed:
                return
            try:
                self._step_block(self.blocks[w])
            except BaseException as exc:  # surfaced to the controlling thread
                self._errors[w] = exc
            try:
                self._end.wait(self._timeout)
            except threading.BrokenBarrierError:
                return

    # -- controller side ---------------------------------------------------

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Apply one action per environment; returns copies of (obs, rewards, dones).

        A terminated environment is reset immediately: its returned observation
        is the fresh start while its done flag stays true for this step.
        """
        if self._poisoned:
            raise PoolError(f"pool is poisoned: {self._poisoned}")
        if self._closed:
            raise PoolError("pool is closed")
        actions = np.asarray(actions)
        if actions.shape != (self.n_e,):
            raise ConfigError(f"expected {self.n_e} actions, got shape {actions.shape}")
        self._actions[:] = actions
        if self.n_w == 1:
            try:
                self._step_block(self.blocks[0])
            except BaseException as exc:
                self._errors[0] = exc
        else:
            try:
                self._start.wait(self._timeout)
                self._end.wait(self._timeout)
            except threading.BrokenBarrierError as exc:
                self._poison("worker barrier broken or timed out")
                raise PoolError(self._poisoned) from exc
        failed = [(w, e) for w, e in enumerate(self._errors) if e is not None]
        if failed:
            w, exc = failed[0]
            self._poison(f"worker {w} failed: {exc!r}")
            raise PoolError(self._poisoned) from exc
        for i in np.flatnonzero(self._dones):
            self.completed.append((int(i), float(self._finished_return[i]),
                                   int(self._finished_length[i])))
        return self._obs.copy(), self._rewards.copy(), self._dones.copy()

    def observations(self) -> np.ndarray:
        return self._obs.copy()

    def drain_completed(self) -> list[tuple[int, float, int]]:
        out, self.completed = self.completed, []
        return out

    @property
    def poisoned(self) -> bool:
        return self._poisoned is not None

    def _poison(self, reason: str) -> None:
        self._poisoned = reason
        self._shutdown_threads()

    def _shutdown_threads(self) -> None:
        self._closed = True
        if self._threads:
            self._start.abort()
            self._end.abort()
            for t in self._threads:
                t.join(timeout=5)
            self._threads = []

    def close(self) -> None:
        self._shutdown_threads()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self._shutdown_threads()
        except Exception:
            pass


def pool_new(spec: EnvSpec, n_e: int, n_w: int = 1, master_seed: int = 0) -> EnvPool:
    return EnvPool(spec, n_e, n_w, master_seed)
