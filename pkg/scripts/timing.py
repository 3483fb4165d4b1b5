"""Phase time breakdown for several n_e, with and without a per-step env delay.

Usage: python3 scripts/timing.py [--seconds 5] [--delay-ms 1.0]
"""
import argparse
import dataclasses

from paac.cli import cmd_timing
from paac.config import RunConfig, TrainerConfig
from paac.envs import EnvSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seconds", type=float, default=5.0)
    ap.add_argument("--delay-ms", type=float, default=1.0)
    ap.add_argument("--hidden", default="64,64")
    args = ap.parse_args()
    hidden = tuple(int(x) for x in args.hidden.split(",") if x)

    print(f"{'n_e':>5} {'delay':>6} {'env%':>6} {'sel%':>6} {'learn%':>7} {'other%':>7} "
          f"{'steps/s':>9} {'sel us/step':>12}")
    for delay in (0.0, args.delay_ms):
        for n_e in (16, 32, 64):
            cfg = TrainerConfig(env=EnvSpec(step_delay_ms=delay), n_e=n_e, n_w=8, hidden=hidden)
            t = cmd_timing(RunConfig(cfg), args.seconds)
            print(f"{n_e:>5} {delay:>6.1f} {t['env_pct']:>6.1f} {t['select_pct']:>6.1f} "
                  f"{t['learn_pct']:>7.1f} {t['other_pct']:>7.1f} {t['timesteps_per_sec']:>9.0f} "
                  f"{1e6 * t['select_sec_per_timestep']:>12.2f}")


if __name__ == "__main__":
    main()
