import math

import numpy as np
import pytest

from paac import nn_core
from paac.config import TrainerConfig
from paac.envs import EnvSpec, chain_value_iteration
from paac.errors import ConfigError
from paac.nn_core import forward, init_params
from paac.returns import compute_returns
from paac.trainer import (
    NStepQLearner, PaacLearner, collect_segment, epsilon_greedy, evaluate, init_state,
    make_learner, paac_update, qlearn_objective, qlearn_update, random_policy_baseline,
    sample_actions, train,
)
from oracles import fd_gradient, rel_error


def tiny(**kw) -> TrainerConfig:
    base = dict(n_e=4, n_w=2, t_max=3, n_max=120, hidden=(8,))
    base.update(kw)
    return TrainerConfig(**base)


# --- action selection -------------------------------------------------------------

def test_sample_one_hot_always_that_action():
    probs = np.zeros((50, 4))
    probs[:, 2] = 1.0
    assert np.all(sample_actions(probs, np.random.default_rng(0)) == 2)


def test_sample_uniform_frequencies_within_three_sigma():
    n, k = 100_000, 4
    a = sample_actions(np.full((n, k), 1 / k), np.random.default_rng(1))
    counts = np.bincount(a, minlength=k)
    sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 3 * sigma)


def test_sample_deterministic_for_seed():
    probs = np.random.default_rng(0).dirichlet(np.ones(5), size=200)
    a = sample_actions(probs, np.random.default_rng(3))
    b = sample_actions(probs, np.random.default_rng(3))
    assert np.array_equal(a, b) and a.min() >= 0 and a.max() < 5


def test_epsilon_greedy_extremes():
    q = np.array([[0.0, 2.0, 1.0]] * 100)
    assert np.all(epsilon_greedy(q, 0.0, np.random.default_rng(0)) == 1)
    a = epsilon_greedy(q, 1.0, np.random.default_rng(0))
    assert set(a.tolist()) == {0, 1, 2}


def test_epsilon_schedule():
    lrn = NStepQLearner(tiny(learner="nstep-q", eps_start=1.0, eps_end=0.05, eps_anneal=0.5))
    assert lrn.epsilon(0.0) == 1.0
    assert lrn.epsilon(0.25) == pytest.approx(0.525)
    assert lrn.epsilon(0.5) == pytest.approx(0.05)
    assert lrn.epsilon(0.9) == pytest.approx(0.05)


# --- segments and updates ------------------------------------------------------------

def test_collect_segment_shapes_and_version():
    cfg = TrainerConfig(n_e=32, n_w=4, t_max=5, hidden=(8,))
    state = init_state(cfg)
    try:
        slab = collect_segment(state)
    finally:
        state.pool.close()
    assert slab.observations.shape == (32, 5, 25)
    for x in (slab.actions, slab.rewards, slab.dones, slab.values):
        assert x.shape == (32, 5)
    assert slab.bootstrap_values.shape == (32,)
    assert slab.param_version == 0
    assert np.all(np.isfinite(slab.values))


def test_paac_zero_advantage_zero_beta_gives_zero_gradient():
    cfg = tiny(beta=0.0)
    state = init_state(cfg)
    try:
        slab = compute_returns(collect_segment(state), cfg.gamma)
    finally:
        state.pool.close()
    v = forward(state.params, slab.flat_observations())[0].values.reshape(slab.rewards.shape)
    slab.values, slab.returns = v, v.copy()  # R = v = V(s): both loss terms are stationary
    grads, _ = paac_update(state.params, slab, cfg)
    assert all(not t.any() for t in grads.tensors())


def test_paac_update_matches_finite_differences():
    cfg = tiny(hidden=(3,), beta=0.02)
    state = init_state(cfg)
    try:
        slab = compute_returns(collect_segment(state), cfg.gamma)
    finally:
        state.pool.close()
    params = state.params.map(lambda t: t + 0.3 * np.random.default_rng(0).standard_normal(t.shape))
    grads, _ = paac_update(params, slab, cfg)
    obs, acts = slab.flat_observations(), slab.actions.ravel()
    R, v = slab.returns.ravel(), slab.values.ravel()
    f = lambda x: nn_core.paac_objective(params.with_flat(x), obs, acts, R, v, cfg.beta)
    assert rel_error(grads.flat(), fd_gradient(f, params.flat())).max() < 1e-4


def _q_case(seed, hidden=(2,), n_actions=2, batch=4, input_dim=3):
    rng = np.random.default_rng(seed)
    params = init_params(input_dim, n_actions, hidden, rng=rng, head_scale=1.0)
    params = params.map(lambda t: t + 0.1 * rng.standard_normal(t.shape))
    obs = rng.standard_normal((batch, input_dim))
    actions = rng.integers(0, n_actions, batch)
    targets = rng.standard_normal(batch)
    return params, obs, actions, targets


def _q_grads(params, obs, actions, targets):
    from paac.returns import TrajectorySlab
    b = obs.shape[0]
    slab = TrajectorySlab(obs[:, None, :], actions[:, None], np.zeros((b, 1)),
                          np.zeros((b, 1), bool), np.zeros((b, 1)), np.zeros(b),
                          returns=targets[:, None])
    return qlearn_update(params, slab, tiny())[0]


@pytest.mark.parametrize("seed", range(10))
def test_qlearn_gradient_matches_finite_differences(seed):
    params, obs, actions, targets = _q_case(seed)
    _, cache = forward(params, obs)
    if any(np.abs(z).min() < 1e-4 for z in cache.preacts):
        pytest.skip("draw lands within FD step of a ReLU kink")
    grads = _q_grads(params, obs, actions, targets)
    f = lambda x: qlearn_objective(params.with_flat(x), obs, actions, targets)
    assert rel_error(grads.flat(), fd_gradient(f, params.flat())).max() < 1e-4
    assert not grads.v_w.any() and not grads.v_b.any()


def test_qlearn_targets_equal_q_gives_zero_gradient():
    params, obs, actions, _ = _q_case(0)
    out, _ = forward(params, obs)
    targets = out.logits[np.arange(len(actions)), actions].copy()
    assert all(not t.any() for t in _q_grads(params, obs, actions, targets).tensors())


# --- the loop ------------------------------------------------------------------------

def test_loop_guard_two_updates():
    result = train(TrainerConfig(n_e=32, n_w=4, t_max=5, n_max=320, hidden=(8,)))
    assert len(result.history) == 2
    assert [r.timestep for r in result.history] == [160, 320]


@pytest.mark.parametrize("n_e,t_max,n_max", [(32, 5, 800), (7, 1, 50), (3, 4, 30)])
def test_timestep_advances_by_batch(n_e, t_max, n_max):
    cfg = TrainerConfig(n_e=n_e, n_w=1, t_max=t_max, n_max=n_max, hidden=(4,))
    hist = train(cfg).history
    steps = [r.timestep for r in hist]
    assert steps == [n_e * t_max * (k + 1) for k in range(len(hist))]
    assert steps[-1] >= n_max > steps[-1] - n_e * t_max


def test_param_version_increments_once_per_update():
    hist = train(tiny(n_max=60)).history
    assert [r.param_version for r in hist] == list(range(1, len(hist) + 1))


def test_entropy_starts_near_uniform_and_stays_finite():
    hist = train(tiny(n_max=600)).history
    assert hist[0].entropy == pytest.approx(math.log(5), abs=1e-3)
    assert all(math.isfinite(r.entropy) for r in hist)


def test_metrics_phase_accounting():
    for r in train(tiny(n_max=300)).history:
        assert r.timesteps_per_sec > 0
        assert sum(r.phases.values()) <= r.update_time


def test_determinism_across_worker_counts():
    a = train(tiny(n_e=8, n_w=1, n_max=400))
    b = train(tiny(n_e=8, n_w=4, n_max=400))
    assert np.array_equal(a.state.params.flat(), b.state.params.flat())
    strip = lambda h: [{k: v for k, v in r.to_dict().items()
                        if k not in ("wall_time", "update_time", "timesteps_per_sec", "phases")}
                       for r in h]
    assert strip(a.history) == strip(b.history)


@pytest.mark.parametrize("learner", ["paac", "nstep-q"])
def test_learner_interchangeability(learner):
    result = train(tiny(learner=learner, n_max=300))
    assert len(result.history) == 25 and not result.diverged
    assert isinstance(make_learner(tiny(learner=learner)),
                      PaacLearner if learner == "paac" else NStepQLearner)


def test_linear_lr_schedule_decays():
    hist = train(tiny(lr_schedule="linear", n_max=120)).history
    lrs = [r.lr for r in hist]
    assert lrs[0] == pytest.approx(0.0224) and all(x > y for x, y in zip(lrs, lrs[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_flagged_without_raising():
    cfg = tiny(lr=1e200, n_max=600, clip=1e300)
    result = train(cfg, raise_on_divergence=False)
    assert result.diverged and result.error


def test_q_learner_short_run_moves_toward_value_iteration():
    spec = EnvSpec(kind="chain")
    cfg = TrainerConfig(env=spec, learner="nstep-q", hidden=(), n_e=16, n_w=1, n_max=16_000)
    params = train(cfg).state.params
    obs = np.eye(8)[:7]
    q = forward(params, obs)[0].logits
    err0 = np.abs(chain_value_iteration(spec, 0.99).max(axis=1)).max()
    assert np.abs(q.max(axis=1) - chain_value_iteration(spec, 0.99).max(axis=1)).max() < err0


# --- evaluation ----------------------------------------------------------------------

def test_evaluate_deterministic_single_episode():
    params = init_params(25, 5, (8,), rng=np.random.default_rng(0))
    spec = EnvSpec(noop_max=30)
    a = evaluate(params, spec, episodes=1, seed=4)
    b = evaluate(params, spec, episodes=1, seed=4)
    assert a.returns == b.returns and len(a.returns) == 1


def test_evaluate_rejects_mismatched_network():
    params = init_params(8, 2, (), rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        evaluate(params, EnvSpec(), episodes=1)


def test_random_baseline_is_reproducible():
    a = random_policy_baseline(EnvSpec(), episodes=20, seed=1)
    b = random_policy_baseline(EnvSpec(), episodes=20, seed=1)
    assert a.returns == b.returns
    assert -1.0 - 1e-9 <= a.min and a.max <= 0.93 + 1e-9
