"""n_e sweep with the scaled learning-rate rule, plus an oversized-constant control.

Usage: python3 scripts/sweep.py [--n-e-list 16,32,64,128,256] [--out runs/sweep]
"""
import argparse
import dataclasses

from paac.cli import cmd_sweep
from paac.config import load_run_config


def show(report):
    print(f"lr rule {report['lr_rule']}")
    print(f"{'n_e':>5} {'lr':>8} {'steps/s':>10} {'final':>8} {'eval':>8} diverged")
    for r in report["runs"]:
        final = r.get("final_return")
        ev = r.get("final_eval_discounted")
        print(f"{r['n_e']:>5} {r['lr']:>8.4f} {r.get('timesteps_per_sec', 0):>10.0f} "
              f"{'-' if final is None else format(final, '.3f'):>8} "
              f"{'-' if ev is None else format(ev, '.3f'):>8} {r['diverged']}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/gridworld.yaml")
    ap.add_argument("--n-e-list", default="16,32,64,128,256")
    ap.add_argument("--huge", type=float, default=0.1, help="oversized lr constant for the control")
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    n_e_list = [int(x) for x in args.n_e_list.split(",")]
    run = load_run_config(args.config)
    show(cmd_sweep(dataclasses.replace(run, out_dir=f"{args.out}/scaled"), n_e_list, "scaled:0.0007"))
    show(cmd_sweep(dataclasses.replace(run, out_dir=f"{args.out}/huge"), n_e_list,
                   f"scaled:{args.huge}"))


if __name__ == "__main__":
    main()
