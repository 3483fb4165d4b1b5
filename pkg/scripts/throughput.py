"""Timesteps per second against n_e and n_w, plus float32 vs float64.

Usage: python3 scripts/throughput.py [--seconds 3]
"""
import argparse

from paac.cli import cmd_timing
from paac.config import RunConfig, TrainerConfig


def rate(seconds, **kw):
    return cmd_timing(RunConfig(TrainerConfig(**kw)), seconds)["timesteps_per_sec"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=3.0)
    args = ap.parse_args()
    print(f"{'n_e':>5} {'n_w':>4} {'dtype':>8} {'steps/s':>10}")
    for n_e in (16, 32, 64, 128, 256):
        for n_w in (1, 8):
            for dtype in ("float64", "float32"):
                r = rate(args.seconds, n_e=n_e, n_w=n_w, dtype=dtype)
                print(f"{n_e:>5} {n_w:>4} {dtype:>8} {r:>10.0f}")


if __name__ == "__main__":
    main()
