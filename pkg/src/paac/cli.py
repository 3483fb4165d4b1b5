"""Command-line front end: train, sweep, timing, eval, export.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, TrainerConfig, dump_run_config, load_run_config
from .envs import gridworld_optimal_return
from .errors import ConfigError, TrainingDivergence
from .metrics import METRICS_FILE, MetricsWriter, metrics_export
from .trainer import evaluate, initial_params, load_train_checkpoint, train

log = logging.getLogger("paac")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
CHECKPOINT_FILE = "checkpoint.npz"

_OVERRIDES = {  # CLI flag dest -> TrainerConfig field
    "seed": "seed", "n_e": "n_e", "n_w": "n_w", "t_max": "t_max", "lr": "lr", "learner": "learner",
}


def apply_overrides(run: RunConfig, out: Optional[str] = None, **overrides) -> RunConfig:
    changes = {_OVERRIDES[k]: v for k, v in overrides.items() if v is not None}
    trainer = dataclasses.replace(run.trainer, **changes) if changes else run.trainer
    return dataclasses.replace(run, trainer=trainer, out_dir=out or run.out_dir)


# --- train ----------------------------------------------------------------

def run_training(run: RunConfig, raise_on_divergence: bool = True):
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_run_config(run))
    with MetricsWriter(out / METRICS_FILE, run.metrics_flush_every) as writer:
        try:
            return train(run.trainer, checkpoint_path=out / CHECKPOINT_FILE,
                         on_record=writer.write, raise_on_divergence=raise_on_divergence)
        except TrainingDivergence as exc:
            diag = {"diverged": True, "error": str(exc), "batch_index": exc.batch_index}
            (out / "diagnostic.json").write_text(json.dumps(diag, indent=2))
            raise


def cmd_train(config, out: Optional[str] = None, **overrides) -> int:
    try:
        run = config if isinstance(config, RunConfig) else load_run_config(config)
        run = apply_overrides(run, out, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = run_training(run)
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}; last good checkpoint kept in {run.out_dir}",
              file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"done: {last.update} updates, N={last.timestep}, mean_return={last.mean_return}")
    return EXIT_OK


# --- sweep ----------------------------------------------------------------

def parse_lr_rule(rule: str):
    """``fixed:<alpha>`` or ``scaled:<c>`` (alpha = c * n_e)."""
    kind, _, value = rule.partition(":")
    try:
        x = float(value) if value else 0.0007
    except ValueError:
        raise ConfigError(f"bad lr rule {rule!r}") from None
    if kind == "fixed":
        return lambda n_e: x
    if kind == "scaled":
        return lambda n_e: x * n_e
    raise ConfigError(f"lr rule must be fixed:<a> or scaled:<c>, got {rule!r}")


def initial_return(trainer: TrainerConfig) -> float:
    """Mean return of the untrained policy, sampling actions as training does."""
    return evaluate(initial_params(trainer), trainer.env, trainer.eval_episodes,
                    seed=trainer.seed, gamma=trainer.gamma, greedy=False).mean


def run_diverged(history: list, n_max: int, initial: float) -> bool:
    """Return collapse: the mean training return over the second half of the budget
    falls below ``initial``, the untrained policy's return."""
    late = [r.mean_return for r in history
            if r.mean_return is not None and r.timestep >= n_max / 2]
    return bool(late) and float(np.mean(late)) < initial


def final_return(history: list, frac: float = 0.1) -> Optional[float]:
    """Mean of the windowed training return over the last ``frac`` of updates."""
    vals = [r.mean_return for r in history if r.mean_return is not None]
    if not vals:
        return None
    k = max(1, int(len(vals) * frac))
    return float(np.mean(vals[-k:]))


def cmd_sweep(run: RunConfig, n_e_list: Sequence[int], lr_rule: str = "scaled:0.0007") -> dict:
    """One run per n_e; returns the combined report (also written to sweep_report.json)."""
    rule = parse_lr_rule(lr_rule)
    base = Path(run.out_dir)
    rows = []
    for n_e in n_e_list:
        row = {"n_e": n_e, "lr": rule(n_e)}
        try:
            trainer = dataclasses.replace(run.trainer, n_e=n_e, n_w=min(run.trainer.n_w, n_e),
                                          lr=rule(n_e))
            sub = dataclasses.replace(run, trainer=trainer, out_dir=str(base / f"ne_{n_e}"))
            initial = initial_return(trainer)
            t0 = time.perf_counter()
            result = run_training(sub, raise_on_divergence=False)
            wall = time.perf_counter() - t0
            hist = result.history
            steps = hist[-1].timestep if hist else 0
            row.update(
                timesteps=steps,
                wall_time=wall,
                timesteps_per_sec=steps / sum(r.update_time for r in hist) if hist else 0.0,
                final_return=final_return(hist),
                initial_return=initial,
                diverged=result.diverged or run_diverged(hist, trainer.n_max, initial),
                error=result.error,
            )
            if not result.diverged:
                ev = evaluate(result.state.params, trainer.env, episodes=trainer.eval_episodes,
                              seed=trainer.seed, gamma=trainer.gamma)
                row["final_eval_discounted"] = ev.discounted_mean
        except Exception as exc:  # recorded, sweep continues
            log.exception("sweep run n_e=%s failed", n_e)
            row.update(diverged=True, error=repr(exc))
        rows.append(row)
        log.info("sweep n_e=%s: %s", n_e, row)
    report = {"lr_rule": lr_rule, "runs": rows}
    base.mkdir(parents=True, exist_ok=True)
    (base / "sweep_report.json").write_text(json.dumps(report, indent=2))
    return report


# --- timing -----------------------------------------------------------------

def cmd_timing(run: RunConfig, seconds: float) -> dict:
    """Train for ``seconds`` of wall time and break the time down by phase (percent)."""
    trainer = dataclasses.replace(run.trainer, n_max=10 ** 12, eval_every=0)
    start = time.perf_counter()
    result = train(trainer, should_stop=lambda s: time.perf_counter() - start >= seconds)
    hist = result.history
    total = sum(r.update_time for r in hist)
    env = sum(r.phases["env_interaction"] for r in hist)
    select = sum(r.phases["forward_select"] for r in hist)
    learn = sum(r.phases["learning"] for r in hist)
    steps = hist[-1].timestep if hist else 0
    pct = (lambda x: 100.0 * x / total) if total > 0 else (lambda x: 0.0)
    return {
        "n_e": trainer.n_e, "n_w": trainer.n_w, "updates": len(hist), "timesteps": steps,
        "wall_time": total,
        "timesteps_per_sec": steps / total if total > 0 else 0.0,
        "env_pct": pct(env), "select_pct": pct(select), "learn_pct": pct(learn),
        "other_pct": pct(total - env - select - learn),
        "select_sec_per_timestep": select / steps if steps else 0.0,
    }


# --- eval ---------------------------------------------------------------------

def cmd_eval(checkpoint, episodes: int = 30, seed: int = 0, sample: bool = False) -> dict:
    cfg, ck = load_train_checkpoint(checkpoint)
    summary = evaluate(ck.params, cfg.env, episodes, seed=seed, gamma=cfg.gamma,
                       greedy=not sample)
    out = summary.to_dict()
    out["timestep"] = ck.timestep
    if cfg.env.kind == "gridworld":
        out["optimal_discounted"] = gridworld_optimal_return(cfg.env, cfg.gamma)
    return out


# --- argparse -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training job")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--n-e", dest="n_e", type=int)
    t.add_argument("--n-w", dest="n_w", type=int)
    t.add_argument("--t-max", dest="t_max", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--learner", choices=["paac", "nstep-q"])
    t.add_argument("--out")

    s = sub.add_parser("sweep", help="one run per n_e with a learning-rate rule")
    s.add_argument("--config", required=True)
    s.add_argument("--n-e-list", default="16,32,64,128,256")
    s.add_argument("--lr-rule", default="scaled:0.0007")
    s.add_argument("--out")

    tm = sub.add_parser("timing", help="phase time breakdown")
    tm.add_argument("--config", required=True)
    tm.add_argument("--seconds", type=float, default=10.0)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=30)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--sample", action="store_true", help="sample actions instead of argmax")

    x = sub.add_parser("export", help="flatten a run's metrics to CSV")
    x.add_argument("--run", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config, out=args.out, seed=args.seed, n_e=args.n_e,
                             n_w=args.n_w, t_max=args.t_max, lr=args.lr, learner=args.learner)
        if args.command == "sweep":
            run = apply_overrides(load_run_config(args.config), args.out)
            n_e_list = [int(x) for x in args.n_e_list.split(",") if x.strip()]
            report = cmd_sweep(run, n_e_list, args.lr_rule)
            print(f"{'n_e':>5} {'lr':>8} {'steps/s':>10} {'final':>8} diverged")
            for r in report["runs"]:
                fr = r.get("final_return")
                print(f"{r['n_e']:>5} {r['lr']:>8.4f} {r.get('timesteps_per_sec', 0):>10.0f} "
                      f"{'-' if fr is None else format(fr, '8.3f'):>8} {r['diverged']}")
            return EXIT_OK
        if args.command == "timing":
            print(json.dumps(cmd_timing(load_run_config(args.config), args.seconds), indent=2))
            return EXIT_OK
        if args.command == "eval":
            print(json.dumps(cmd_eval(args.checkpoint, args.episodes, args.seed, args.sample),
                             indent=2))
            return EXIT_OK
        if args.command == "export":
            for name, path in metrics_export(args.run).items():
                print(f"{name}: {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, KeyError, ValueError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
