"""Learning-time / learning-performance metrics and Welch's t-test.

Both metrics slide a window over per-episode total rewards. Windows that
would run past the end use the available suffix, down to ``min_window``
episodes (or the whole run if it is shorter than that).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

LEARNING_THRESHOLD = -15.0
LEARNING_MAX_STD = 20.0
METRIC_WINDOW = 1000
MIN_WINDOW = 100


def _windows(rewards, window: int, min_window: int):
    r = np.asarray(rewards, dtype=np.float64)
    n = r.size
    floor = min(min_window, n)
    for e in range(n - floor + 1) if n else ():
        yield e, r[e:e + window]


def learning_time(
    episode_rewards: Sequence[float],
    threshold: float = LEARNING_THRESHOLD,
    max_std: float = LEARNING_MAX_STD,
    window: int = METRIC_WINDOW,
    min_window: int = MIN_WINDOW,
) -> int | None:
    """First 0-based episode whose following window has mean > threshold and
    population std < max_std; ``None`` if no episode qualifies."""
    for e, w in _windows(episode_rewards, window, min_window):
        if w.mean() > threshold and w.std() < max_std:
            return e
    return None


def learning_performance(
    episode_rewards: Sequence[float],
    window: int = METRIC_WINDOW,
    min_window: int = MIN_WINDOW,
) -> float:
    if len(episode_rewards) == 0:
        raise ValueError("learning_performance needs at least one episode")
    return max(float(w.mean()) for _, w in _windows(episode_rewards, window, min_window))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("samples must be finite")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        return 1.0 if diff == 0 else 0.0
    t = diff / math.sqrt(se2)
    # Welch-Satterthwaite on rescaled variances so tiny values cannot underflow
    ra, rb = va / max(va, vb), vb / max(va, vb)
    df = (ra + rb) ** 2 / (ra**2 / (a.size - 1) + rb**2 / (b.size - 1))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))


@dataclass
class MetricSummary:
    world: str
    model: str
    algo: str
    start_mode: str
    runs: int
    lt_mean: float | None
    lt_std: float | None
    lt_na_count: int
    lp_mean: float
    lp_std: float
    seconds_mean: float
    learning_times: list[int | None] = field(default_factory=list)
    learning_performances: list[float] = field(default_factory=list)
    diverged: int = 0

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.world, self.model, self.algo, self.start_mode)


def summarize(world, model, algo, start_mode, records) -> MetricSummary:
    """Aggregate run records. Learning times are 1-based episode numbers;
    diverged runs count as NA for learning time."""
    times: list[int | None] = []
    perfs: list[float] = []
    for rec in records:
        lt = None if rec.diverged else learning_time(rec.rewards)
        times.append(None if lt is None else lt + 1)
        if rec.rewards:
            perfs.append(learning_performance(rec.rewards))
    found = [t for t in times if t is not None]
    lp = np.array(perfs) if perfs else np.array([np.nan])
    return MetricSummary(
        world=world,
        model=model,
        algo=algo,
        start_mode=start_mode,
        runs=len(records),
        lt_mean=float(np.mean(found)) if found else None,
        lt_std=float(np.std(found)) if found else None,
        lt_na_count=len(times) - len(found),
        lp_mean=float(lp.mean()),
        lp_std=float(lp.std()),
        seconds_mean=float(np.mean([r.seconds for r in records])) if records else 0.0,
        learning_times=times,
        learning_performances=perfs,
        diverged=sum(r.diverged for r in records),
    )
