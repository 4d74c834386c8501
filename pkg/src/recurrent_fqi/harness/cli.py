"""Command-line experiment runner.

Examples::

    recurrent-fqi --world po --model gru --algo q --runs 3 --hidden 32 --out results/
    recurrent-fqi --grid-all --episodes 5000 --runs 15 --format table --out full/
    recurrent-fqi --config run.cfg --seed 7
    recurrent-fqi --replay results/checkpoints/gw_gru_advantage_fixed_run0.npz --world gw

A ``--config`` file holds ``key = value`` lines named after the long flags
(``world = po``, ``random-start = true``); flags given on the command line
override it.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from ..gridworlds import ACTION_NAMES, VARIANTS
from ..recnet import ARCHITECTURES, load_network
from ..valuelearn import ALGORITHMS, AlgoConfig, greedy_rollout
from .experiment import ExperimentConfig, full_grid, run_experiment
from .report import FORMATS, emit_results, format_report

log = logging.getLogger("recurrent_fqi")

_BOOL_FLAGS = {"random-start", "no-hint", "grid-all", "allow-divergence", "save-checkpoints", "obstacle-wall"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="recurrent-fqi",
        description="Neural fitted Q iteration with recurrent value networks on grid worlds.",
    )
    p.add_argument("--config", type=Path, help="key = value file mirroring these flags")
    p.add_argument("--world", choices=VARIANTS, default="gw")
    p.add_argument("--model", choices=ARCHITECTURES, default="gru")
    p.add_argument("--algo", choices=ALGORITHMS, default="advantage")
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--no-hint", action="store_true", help="drop the first-step (x, y) hint in random-start po/ac")
    p.add_argument("--obstacle-wall", action="store_true", help="ac distance sensor stops at the obstacle")
    p.add_argument("--episodes", type=int, default=5000)
    p.add_argument("--max-steps", type=int, default=500)
    p.add_argument("--runs", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--kappa", type=float, default=0.3)
    p.add_argument("--train-every", type=int, default=10)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3, help="RMSprop step size")
    p.add_argument("--rho", type=float, default=0.9, help="RMSprop decay")
    p.add_argument("--opt-eps", type=float, default=1e-8, help="RMSprop stabilizer")
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--grid-all", action="store_true", help="run all 48 world/model/algo/start combinations")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (processes)")
    p.add_argument("--allow-divergence", action="store_true")
    p.add_argument("--save-checkpoints", action="store_true")
    p.add_argument("--replay", type=Path, metavar="CHECKPOINT", help="play one greedy episode with a saved network")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def config_file_args(path: Path) -> list[str]:
    parser = configparser.ConfigParser(delimiters=("=", ":"), interpolation=None)
    parser.read_string("[run]\n" + path.read_text())
    argv = []
    for key, value in parser["run"].items():
        flag = "--" + key.replace("_", "-")
        if key.replace("_", "-") in _BOOL_FLAGS:
            if value.strip().lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
        else:
            argv += [flag, value.strip()]
    return argv


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    first, _ = parser.parse_known_args(argv)
    if first.config is not None:
        argv = config_file_args(first.config) + argv
    return parser.parse_args(argv)


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    algo = AlgoConfig(
        algorithm=args.algo,
        alpha=args.alpha,
        gamma=args.gamma,
        kappa=args.kappa,
        temperature=args.temperature,
        window=args.window,
        train_every=args.train_every,
        max_steps=args.max_steps,
        episodes=args.episodes,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        rho=args.rho,
        eps=args.opt_eps,
    )
    return ExperimentConfig(
        world=args.world,
        model=args.model,
        algorithm=args.algo,
        start_mode="random" if args.random_start else "fixed",
        algo=algo,
        runs=args.runs,
        seed=args.seed,
        hidden=args.hidden,
        width=args.width,
        height=args.height,
        hint=not args.no_hint,
        obstacle_is_wall=args.obstacle_wall,
        out=args.out,
        save_checkpoints=args.save_checkpoints,
    )


def replay(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    net = load_network(args.replay)
    env = cfg.make_env()
    if env.obs_dim != net.input_dim:
        log.error("checkpoint expects %d inputs, %s world gives %d", net.input_dim, cfg.world, env.obs_dim)
        return 2
    total, actions, terminal = greedy_rollout(env, net, cfg.algo, np.random.default_rng(cfg.seed))
    print(" ".join(ACTION_NAMES[a] for a in actions))
    print(f"return {total:g} in {len(actions)} steps ({'goal' if terminal else 'step cap'})")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        cfg = experiment_config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.replay is not None:
        return replay(args, cfg)

    configs = full_grid(cfg) if args.grid_all else [cfg]
    results = []
    for c in configs:
        log.info("running %s", c.label)
        results.append(run_experiment(c, jobs=args.jobs))

    paths = emit_results(results, args.format, args.out)
    print(format_report([r.summary for r in results]))
    for path in paths:
        print(f"wrote {path}")

    diverged = sum(r.summary.diverged for r in results)
    if diverged and not args.allow_divergence:
        print(f"error: {diverged} run(s) diverged", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
