"""Multi-seed baseline on the 5x5 grid: greedy return after the full budget.

Usage: python3 scripts/baseline.py [--seeds 10] [--config configs/gridworld.yaml]
"""
import argparse
import dataclasses
import time

import numpy as np

from paac.config import load_run_config
from paac.envs import gridworld_optimal_return
from paac.trainer import evaluate, random_policy_baseline, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/gridworld.yaml")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    base = load_run_config(args.config).trainer
    optimum = gridworld_optimal_return(base.env, base.gamma)
    rand = random_policy_baseline(base.env, episodes=200, seed=0, gamma=base.gamma)
    print(f"optimum (discounted) {optimum:.4f}; 95% threshold {0.95 * optimum:.4f}")
    print(f"random policy: mean {rand.mean:.3f}, discounted {rand.discounted_mean:.3f}")
    scores = []
    for seed in range(args.seeds):
        cfg = dataclasses.replace(base, seed=seed)
        t0 = time.perf_counter()
        result = train(cfg)
        ev = evaluate(result.state.params, cfg.env, 30, seed=seed, gamma=cfg.gamma)
        scores.append(ev.discounted_mean)
        print(f"seed {seed}: greedy discounted {ev.discounted_mean:.4f}, "
              f"training window {result.history[-1].mean_return:.3f}, {time.perf_counter() - t0:.1f}s")
    scores = np.array(scores)
    print(f"{(scores >= 0.95 * optimum).sum()}/{len(scores)} seeds reach the threshold")


if __name__ == "__main__":
    main()
