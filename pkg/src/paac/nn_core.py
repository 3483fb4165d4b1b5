"""Shared-trunk policy/value network with hand-derived backprop, RMSProp and clipping.

The network is a stack of dense ReLU layers feeding two linear heads: one
producing |A| logits (softmax policy, or Q-values for value-based learners)
and one producing a scalar state value. Everything is plain numpy so the
gradients can be checked against finite differences.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, TrainingDivergence


@dataclass
class ParamSet:
    """All learnable tensors. Also used as the gradient container (same shapes)."""

    trunk: list  # list of (W: fan_in x fan_out, b: fan_out)
    pi_w: np.ndarray
    pi_b: np.ndarray
    v_w: np.ndarray
    v_b: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in self.trunk:
            out += [w, b]
        return out + [self.pi_w, self.pi_b, self.v_w, self.v_b]

    def names(self) -> list[str]:
        out = []
        for i in range(len(self.trunk)):
            out += [f"trunk{i}_w", f"trunk{i}_b"]
        return out + ["pi_w", "pi_b", "v_w", "v_b"]

    @classmethod
    def from_tensors(cls, tensors: Sequence[np.ndarray]) -> "ParamSet":
        tensors = list(tensors)
        if len(tensors) < 4 or len(tensors) % 2:
            raise ConfigError(f"expected an even number >= 4 of tensors, got {len(tensors)}")
        body, heads = tensors[:-4], tensors[-4:]
        trunk = [(body[i], body[i + 1]) for i in range(0, len(body), 2)]
        return cls(trunk, *heads)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParamSet":
        return ParamSet.from_tensors([fn(t) for t in self.tensors()])

    def copy(self) -> "ParamSet":
        return self.map(np.copy)

    def zeros_like(self) -> "ParamSet":
        return self.map(np.zeros_like)

    @property
    def input_dim(self) -> int:
        return (self.trunk[0][0] if self.trunk else self.pi_w).shape[0]

    @property
    def num_actions(self) -> int:
        return self.pi_w.shape[1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w, _ in self.trunk)

    @property
    def dtype(self):
        return self.pi_w.dtype

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def with_flat(self, vec: np.ndarray) -> "ParamSet":
        out, i = [], 0
        for t in self.tensors():
            out.append(vec[i:i + t.size].reshape(t.shape).astype(t.dtype, copy=True))
            i += t.size
        return ParamSet.from_tensors(out)

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors())


GradientSet = ParamSet


@dataclass
class PolicyValueOutput:
    probs: np.ndarray   # (B, |A|)
    values: np.ndarray  # (B,)
    logits: np.ndarray  # (B, |A|)


@dataclass
class ForwardCache:
    inputs: list        # input to every trunk layer, then the trunk output last
    preacts: list       # trunk pre-activations
    output: PolicyValueOutput

    @property
    def features(self) -> np.ndarray:
        return self.inputs[-1]


def init_params(input_dim: int, num_actions: int, hidden: Sequence[int] = (64, 64),
                rng: np.random.Generator | None = None, dtype=np.float64,
                head_scale: float = 0.01) -> ParamSet:
    """Glorot-uniform trunk, zero biases, heads shrunk by ``head_scale``."""
    if input_dim < 1 or num_actions < 2:
        raise ConfigError(f"bad network dims: input_dim={input_dim}, num_actions={num_actions}")
    rng = np.random.default_rng() if rng is None else rng

    def glorot(fan_in, fan_out, scale=1.0):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return (scale * rng.uniform(-lim, lim, size=(fan_in, fan_out))).astype(dtype)

    trunk, d = [], input_dim
    for h in hidden:
        if h < 1:
            raise ConfigError(f"hidden layer width must be >= 1, got {h}")
        trunk.append((glorot(d, h), np.zeros(h, dtype=dtype)))
        d = h
    return ParamSet(
        trunk=trunk,
        pi_w=glorot(d, num_actions, head_scale), pi_b=np.zeros(num_actions, dtype=dtype),
        v_w=glorot(d, 1, head_scale), v_b=np.zeros(1, dtype=dtype),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; works on a vector or a (B, |A|) matrix."""
    z = np.asarray(logits)
    if z.dtype.kind != "f":
        z = z.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def entropy(probs: np.ndarray) -> np.ndarray:
    """-sum p ln p over the last axis, with 0 ln 0 = 0."""
    p = np.asarray(probs)
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)


def forward(params: ParamSet, obs: np.ndarray) -> tuple[PolicyValueOutput, ForwardCache]:
    obs = np.asarray(obs)
    if obs.ndim != 2 or obs.shape[0] < 1:
        raise ConfigError(f"observation batch must be (B>=1, dim), got shape {obs.shape}")
    if obs.shape[1] != params.input_dim:
        raise ConfigError(f"observation dim {obs.shape[1]} != network input dim {params.input_dim}")
    h = obs.astype(params.dtype, copy=False)
    inputs, preacts = [h], []
    for w, b in params.trunk:
        z = h @ w + b
        h = np.maximum(z, 0.0)
        preacts.append(z)
        inputs.append(h)
    logits = h @ params.pi_w + params.pi_b
    values = (h @ params.v_w + params.v_b)[:, 0]
    out = PolicyValueOutput(probs=softmax(logits), values=values, logits=logits)
    return out, ForwardCache(inputs=inputs, preacts=preacts, output=out)


def backward(params: ParamSet, cache: ForwardCache, dlogits: np.ndarray,
             dvalues: np.ndarray) -> GradientSet:
    """Backprop loss sensitivities w.r.t. logits (B, |A|) and values (B,) into every tensor."""
    feats = cache.features
    dv = dvalues[:, None]
    grads_pi_w = feats.T @ dlogits
    grads_pi_b = dlogits.sum(axis=0)
    grads_v_w = feats.T @ dv
    grads_v_b = dv.sum(axis=0)
    dh = dlogits @ params.pi_w.T + dv @ params.v_w.T
    trunk_grads = []
    for i in range(len(params.trunk) - 1, -1, -1):
        w, _ = params.trunk[i]
        dz = dh * (cache.preacts[i] > 0)
        trunk_grads.append((cache.inputs[i].T @ dz, dz.sum(axis=0)))
        dh = dz @ w.T
    trunk_grads.reverse()
    return ParamSet(trunk_grads, grads_pi_w, grads_pi_b, grads_v_w, grads_v_b)


@dataclass
class LossStats:
    total: float
    policy_loss: float
    value_loss: float
    entropy: float


def _check_batch(n: int, **arrays):
    for name, a in arrays.items():
        if np.shape(a) != (n,):
            raise ConfigError(f"{name} has shape {np.shape(a)}, expected ({n},)")


def _first_nonfinite(per_sample: np.ndarray) -> int:
    return int(np.flatnonzero(~np.isfinite(per_sample))[0])


def paac_loss_sensitivities(output: PolicyValueOutput, actions, returns, values, beta: float,
                            value_coef: float = 0.5):
    """Per-batch loss and its derivatives w.r.t. logits and values.

    Minimised objective, averaged over the batch of size B:
        -A * log pi(a|s) - beta * H(pi(s)) + value_coef * (R - V(s))**2
    with A = R - v held constant (``values`` are the estimates recorded at
    action-selection time; V(s) comes from ``output``).
    """
    logits = output.logits
    n, n_actions = logits.shape
    actions = np.asarray(actions)
    _check_batch(n, actions=actions, returns=returns, values=values)
    if np.any((actions < 0) | (actions >= n_actions)):
        raise ConfigError("action index out of range")
    rows = np.arange(n)
    adv = np.asarray(returns) - np.asarray(values)
    logp = log_softmax(logits)
    p = output.probs
    ent = -np.sum(p * logp, axis=1)
    v_err = np.asarray(returns) - output.values
    per_sample = -adv * logp[rows, actions] - beta * ent + value_coef * v_err ** 2
    if not np.all(np.isfinite(per_sample)):
        idx = _first_nonfinite(per_sample)
        raise TrainingDivergence(f"non-finite PAAC loss at batch index {idx}", batch_index=idx)

    # d(-A log p_a)/dz = -A (onehot - p);  d(-beta H)/dz = beta p (log p + H)
    dlogits = adv[:, None] * p
    dlogits[rows, actions] -= adv
    dlogits += beta * p * (logp + ent[:, None])
    dlogits /= n
    dvalues = -2.0 * value_coef * v_err / n
    stats = LossStats(
        total=float(per_sample.mean()),
        policy_loss=float(np.mean(-adv * logp[rows, actions])),
        value_loss=float(np.mean(v_err ** 2)),
        entropy=float(ent.mean()),
    )
    return dlogits, dvalues, stats


def backward_paac_loss(params: ParamSet, cache: ForwardCache, actions, returns, values,
                       beta: float, value_coef: float = 0.5) -> tuple[GradientSet, LossStats]:
    """Gradient of the combined actor-critic objective, ready for ``theta -= step(grad)``."""
    dlogits, dvalues, stats = paac_loss_sensitivities(
        cache.output, actions, returns, values, beta, value_coef)
    return backward(params, cache, dlogits, dvalues), stats


def paac_objective(params: ParamSet, obs, actions, returns, values, beta: float,
                   value_coef: float = 0.5) -> float:
    """Scalar objective whose gradient ``backward_paac_loss`` returns (used by gradient checks)."""
    out, _ = forward(params, obs)
    _, _, stats = paac_loss_sensitivities(out, actions, returns, values, beta, value_coef)
    return stats.total


def global_norm(grads: GradientSet) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(t, dtype=np.float64))) for t in grads.tensors())))


def clip_gradients(grads: GradientSet, threshold: float) -> tuple[GradientSet, float]:
    """Rescale so the global L2 norm is at most ``threshold``. Returns (grads, pre-clip norm).

    A relative slack of 1e-12 makes clipping idempotent: a norm that rounding
    left a few ulp above the threshold is not rescaled a second time.
    """
    if threshold <= 0:
        raise ConfigError(f"clip threshold must be > 0, got {threshold}")
    norm = global_norm(grads)
    if norm > threshold * (1.0 + 1e-12):
        scale = threshold / norm
        return grads.map(lambda t: t * t.dtype.type(scale)), norm
    return grads, norm


@dataclass
class RmsPropState:
    g: list
    lr: float = 0.0224
    decay: float = 0.99
    eps: float = 0.1

    @classmethod
    def zeros_like(cls, params: ParamSet, lr=0.0224, decay=0.99, eps=0.1) -> "RmsPropState":
        return cls([np.zeros_like(t) for t in params.tensors()], lr, decay, eps)


def rmsprop_step(params: ParamSet, grads: GradientSet, state: RmsPropState,
                 lr: float | None = None) -> None:
    """In-place uncentered RMSProp: g <- rho g + (1-rho) grad^2; theta -= lr grad / sqrt(g + eps)."""
    lr = state.lr if lr is None else lr
    p_list, g_list = params.tensors(), grads.tensors()
    if len(p_list) != len(g_list) or len(p_list) != len(state.g):
        raise ConfigError("parameter / gradient / optimizer state tensor counts differ")
    new_ms, new_p = [], []
    for p, grad, ms in zip(p_list, g_list, state.g):
        if p.shape != grad.shape or p.shape != ms.shape:
            raise ConfigError(f"shape mismatch: param {p.shape}, grad {grad.shape}, state {ms.shape}")
        ms2 = state.decay * ms + (1.0 - state.decay) * grad * grad
        p2 = p - lr * grad / np.sqrt(ms2 + state.eps)
        if not (np.isfinite(ms2).all() and np.isfinite(p2).all()):
            raise TrainingDivergence("non-finite parameters after RMSProp step")
        new_ms.append(ms2)
        new_p.append(p2)
    # commit only once every tensor is known finite
    for p, p2 in zip(p_list, new_p):
        p[...] = p2
    for ms, ms2 in zip(state.g, new_ms):
        ms[...] = ms2


# --- checkpoints ---------------------------------------------------------

def save_checkpoint(path, params: ParamSet, opt: RmsPropState, timestep: int,
                    meta: dict | None = None) -> None:
    """Write params, optimizer statistics and counters to one ``.npz``; atomic replace."""
    arrays = {f"param/{n}": t for n, t in zip(params.names(), params.tensors())}
    arrays.update({f"rms/{n}": t for n, t in zip(params.names(), opt.g)})
    header = {
        "n_trunk": len(params.trunk),
        "shapes": [list(t.shape) for t in params.tensors()],
        "rms": {"lr": opt.lr, "decay": opt.decay, "eps": opt.eps},
        "timestep": int(timestep),
        "meta": meta or {},
    }
    arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    params: ParamSet
    opt: RmsPropState
    timestep: int
    meta: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    with np.load(os.fspath(path)) as data:
        header = json.loads(bytes(data["header"]).decode())
        names = [f"trunk{i}_{k}" for i in range(header["n_trunk"]) for k in ("w", "b")]
        names += ["pi_w", "pi_b", "v_w", "v_b"]
        params = ParamSet.from_tensors([data[f"param/{n}"] for n in names])
        g = [data[f"rms/{n}"] for n in names]
    for t, shape in zip(params.tensors(), header["shapes"]):
        if list(t.shape) != shape:
            raise ConfigError(f"checkpoint tensor shape {t.shape} != recorded {shape}")
    opt = RmsPropState(g, **header["rms"])
    return Checkpoint(params, opt, header["timestep"], header["meta"])
