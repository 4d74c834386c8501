"""Seeded repeated runs of one configuration, and the full configuration grid."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..gridworlds import START_MODES, VARIANTS, GridSpec, GridWorld
from ..recnet import ARCHITECTURES, init_network, save_network
from ..valuelearn import ALGORITHMS, AlgoConfig, DivergenceError, RunRecord, fitted_iteration
from .metrics import MetricSummary, summarize

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    world: str = "gw"
    model: str = "gru"
    algorithm: str = "advantage"
    start_mode: str = "fixed"
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    runs: int = 15
    seed: int = 0
    hidden: int = 100
    width: int = 10
    height: int = 5
    hint: bool = True
    obstacle_is_wall: bool = False
    out: Path | None = None
    save_checkpoints: bool = False

    def __post_init__(self):
        if self.world not in VARIANTS:
            raise ValueError(f"unknown world {self.world!r}; expected one of {VARIANTS}")
        if self.model not in ARCHITECTURES:
            raise ValueError(f"unknown model {self.model!r}; expected one of {ARCHITECTURES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.start_mode not in START_MODES:
            raise ValueError(f"unknown start mode {self.start_mode!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.algo.algorithm != self.algorithm:
            self.algo = replace(self.algo, algorithm=self.algorithm)

    @property
    def label(self) -> str:
        return f"{self.world}_{self.model}_{self.algorithm}_{self.start_mode}"

    def make_env(self) -> GridWorld:
        spec = GridSpec() if (self.width, self.height) == (10, 5) else GridSpec.sized(self.width, self.height)
        return GridWorld(self.world, self.start_mode, spec, self.hint, self.obstacle_is_wall)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summary: MetricSummary
    records: list[RunRecord]


def run_seeds(seed: int) -> tuple[np.random.SeedSequence, np.random.Generator]:
    """Network-init seed sequence and the run generator (PCG64) for one run."""
    init_seq, run_seq = np.random.SeedSequence(seed).spawn(2)
    return init_seq, np.random.Generator(np.random.PCG64(run_seq))


def single_run(cfg: ExperimentConfig, index: int) -> RunRecord:
    seed = cfg.seed + index
    init_seq, rng = run_seeds(seed)
    net = init_network(cfg.model, cfg.make_env().obs_dim, cfg.hidden, GridWorld.actions, cfg.algo.window, init_seq)
    try:
        record = fitted_iteration(cfg.make_env, net, cfg.algo, rng)
    except DivergenceError as exc:
        log.warning("%s run %d diverged: %s", cfg.label, index, exc)
        return RunRecord(list(exc.rewards), seed=seed, diverged=True, diagnostic=str(exc))
    record.seed = seed
    if cfg.save_checkpoints and cfg.out is not None:
        ckpt = Path(cfg.out) / "checkpoints"
        ckpt.mkdir(parents=True, exist_ok=True)
        save_network(net, ckpt / f"{cfg.label}_run{index}.npz")
    return record


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run ``cfg.runs`` independent runs with seeds ``seed + i`` and summarize."""
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(single_run, [cfg] * cfg.runs, range(cfg.runs)))
    else:
        records = [single_run(cfg, i) for i in range(cfg.runs)]
    summary = summarize(cfg.world, cfg.model, cfg.algorithm, cfg.start_mode, records)
    log.info(
        "%s: lt=%s lp=%.2f (%d runs, %d diverged)",
        cfg.label, summary.lt_mean, summary.lp_mean, summary.runs, summary.diverged,
    )
    return ExperimentResult(cfg, summary, records)


def full_grid(base: ExperimentConfig) -> list[ExperimentConfig]:
    """Every algorithm x model x world x start mode combination (48 configs)."""
    return [
        replace(base, world=w, model=m, algorithm=a, start_mode=s, algo=replace(base.algo, algorithm=a))
        for a, m, w, s in itertools.product(ALGORITHMS, ARCHITECTURES, VARIANTS, START_MODES)
    ]
