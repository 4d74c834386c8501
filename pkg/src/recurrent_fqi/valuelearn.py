"""Neural fitted Q iteration with Q-learning or advantage-learning targets.

Episodes are played with a frozen network under a softmax policy; each
transition stores a regression target computed from the network's current
estimates. Every ``train_every`` episodes the network is fitted on the
samples of those episodes only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import NonFiniteError, OptimizerState
from .recnet import TargetSample, ValueNetwork, train_batch

ALGORITHMS = ("q", "advantage")


class DivergenceError(RuntimeError):
    """A run produced non-finite values; carries where it happened."""

    def __init__(self, message: str, episode: int, rewards: list[float]):
        super().__init__(f"{message} (episode {episode + 1})")
        self.episode = episode
        self.rewards = rewards


@dataclass
class AlgoConfig:
    algorithm: str = "advantage"
    alpha: float = 0.2
    gamma: float = 0.9
    kappa: float = 0.3
    temperature: float = 0.5
    window: int = 10
    train_every: int = 10
    max_steps: int = 500
    episodes: int = 5000
    epochs: int = 2
    batch_size: int = 10
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.kappa <= 0 or self.temperature <= 0:
            raise ValueError("kappa and temperature must be positive")
        if min(self.window, self.train_every, self.max_steps, self.batch_size) < 1:
            raise ValueError("window, train_every, max_steps and batch_size must be >= 1")
        if self.episodes < 0 or self.epochs < 0:
            raise ValueError("episodes and epochs must be non-negative")


@dataclass
class EpisodeRecord:
    samples: list[TargetSample]
    total_reward: float
    steps: int
    terminal: bool


@dataclass
class RunRecord:
    rewards: list[float]
    seconds: float = 0.0
    seed: int | None = None
    diverged: bool = False
    diagnostic: str = ""
    losses: list[float] = field(default_factory=list)


# -- targets -----------------------------------------------------------------


def q_target(values_t, values_next, a: int, r: float, terminal: bool, cfg: AlgoConfig) -> float:
    current = values_t[a]
    bootstrap = 0.0 if terminal else cfg.gamma * np.max(values_next)
    return float(current + cfg.alpha * (r + bootstrap - current))


def advantage_target(values_t, values_next, a: int, r: float, terminal: bool, cfg: AlgoConfig) -> float:
    """Advantage-learning target: the TD correction is scaled by ``1/kappa``
    around the best current value, widening gaps to non-greedy actions."""
    current = values_t[a]
    best = np.max(values_t)
    bootstrap = 0.0 if terminal else cfg.gamma * np.max(values_next)
    delta = best + (r + bootstrap - best) / cfg.kappa - current
    return float(current + cfg.alpha * delta)


TARGETS = {"q": q_target, "advantage": advantage_target}


# -- policy ------------------------------------------------------------------


def softmax_probabilities(values, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    v = np.asarray(values, dtype=np.float64) / temperature
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_policy(values, temperature: float, rng: np.random.Generator) -> int:
    p = softmax_probabilities(values, temperature)
    # inverse-CDF draw keeps one uniform per decision
    idx = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(idx, len(p) - 1)


def greedy_action(values) -> int:
    """Argmax with ties broken toward the lowest index."""
    return int(np.argmax(values))


# -- windows -----------------------------------------------------------------


def window(observations: Sequence[np.ndarray], t: int, length: int) -> np.ndarray:
    """The ``length`` observations ending at ``t``, left-padded with zeros."""
    if not 0 <= t < len(observations):
        raise IndexError(f"t={t} outside history of length {len(observations)}")
    dim = len(observations[0])
    out = np.zeros((length, dim))
    lo = max(0, t - length + 1)
    chunk = observations[lo:t + 1]
    out[length - len(chunk):] = chunk
    return out


class _History:
    """Zero-prefixed observation buffer so windows are plain slices."""

    def __init__(self, first_obs: np.ndarray, length: int, capacity: int):
        self.length = length
        self.buf = np.zeros((length - 1 + capacity + 1, first_obs.size))
        self.n = 0
        self.append(first_obs)

    def append(self, obs):
        self.buf[self.length - 1 + self.n] = obs
        self.n += 1

    def window(self, t: int) -> np.ndarray:
        return self.buf[t:t + self.length]


# -- episodes ----------------------------------------------------------------


def run_episode(env, net, cfg: AlgoConfig, rng: np.random.Generator, first_obs: np.ndarray | None = None) -> EpisodeRecord:
    """Play one episode with the network frozen and collect target samples.

    ``env`` must already be reset; its first observation is passed as
    ``first_obs`` (or read from ``env.observation``).
    """
    if first_obs is None:
        first_obs = env.observation
    target_fn = TARGETS[cfg.algorithm]
    history = _History(first_obs, cfg.window, cfg.max_steps)
    values_t = net.forward(history.window(0))
    samples: list[TargetSample] = []
    total = 0.0
    terminal = False
    for t in range(cfg.max_steps):
        a = softmax_policy(values_t, cfg.temperature, rng)
        obs, r, terminal = env.step(a)
        total += r
        history.append(obs)
        values_next = net.forward(history.window(t + 1))
        target = target_fn(values_t, values_next, a, r, terminal, cfg)
        samples.append(TargetSample(history.window(t).copy(), a, target))
        values_t = values_next
        if terminal:
            break
    return EpisodeRecord(samples, total, len(samples), terminal)


def greedy_rollout(env, net, cfg: AlgoConfig, rng: np.random.Generator | None = None):
    """Run the greedy policy once; returns ``(total_reward, actions, terminal)``."""
    obs = env.reset(rng)
    history = _History(obs, cfg.window, cfg.max_steps)
    total, actions, terminal = 0.0, [], False
    for t in range(cfg.max_steps):
        a = greedy_action(net.forward(history.window(t)))
        obs, r, terminal = env.step(a)
        actions.append(a)
        total += r
        history.append(obs)
        if terminal:
            break
    return total, actions, terminal


def fitted_iteration(
    env_factory: Callable[[], object],
    net: ValueNetwork,
    cfg: AlgoConfig,
    rng: np.random.Generator,
    progress: Callable[[int, float], None] | None = None,
) -> RunRecord:
    """Run ``cfg.episodes`` episodes, training after every ``cfg.train_every``.

    Raises :class:`DivergenceError` if any value or parameter goes non-finite.
    """
    env = env_factory()
    state = OptimizerState.for_params(net.params, cfg.lr, cfg.rho, cfg.eps)
    rewards: list[float] = []
    losses: list[float] = []
    start = time.perf_counter()
    # overflow is caught by the finite checks and reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        _iterate(env, net, cfg, rng, state, rewards, losses, progress)
    return RunRecord(rewards, time.perf_counter() - start, losses=losses)


def _iterate(env, net, cfg, rng, state, rewards, losses, progress):
    pending: list[TargetSample] = []
    for e in range(cfg.episodes):
        try:
            obs = env.reset(rng)
            record = run_episode(env, net, cfg, rng, first_obs=obs)
            rewards.append(record.total_reward)
            pending.extend(record.samples)
            if (e + 1) % cfg.train_every == 0:
                losses.extend(train_batch(net, pending, state, rng, cfg.epochs, cfg.batch_size))
                pending = []
        except (NonFiniteError, FloatingPointError) as exc:
            raise DivergenceError(str(exc), e, rewards) from exc
        if progress is not None:
            progress(e, record.total_reward)


# -- tabular reference -------------------------------------------------------


class TabularValues:
    """Exact lookup table keyed by the last observation."""

    def __init__(self, actions: int = 4):
        self.actions = actions
        self.table: dict[bytes, np.ndarray] = {}

    def values(self, obs: np.ndarray) -> np.ndarray:
        key = obs.tobytes()
        if key not in self.table:
            self.table[key] = np.zeros(self.actions)
        return self.table[key]


def tabular_learning(env, cfg: AlgoConfig, rng: np.random.Generator, episodes: int) -> TabularValues:
    """Same target rule as :func:`run_episode`, but written to a table after every step."""
    table = TabularValues(env.actions)
    target_fn = TARGETS[cfg.algorithm]
    for _ in range(episodes):
        obs = env.reset(rng)
        for _ in range(cfg.max_steps):
            values_t = table.values(obs)
            a = softmax_policy(values_t, cfg.temperature, rng)
            nxt, r, terminal = env.step(a)
            values_t[a] = target_fn(values_t, table.values(nxt), a, r, terminal, cfg)
            obs = nxt
            if terminal:
                break
    return table


def tabular_greedy_return(env, table: TabularValues, max_steps: int = 500) -> tuple[float, bool]:
    obs = env.reset()
    total = 0.0
    for _ in range(max_steps):
        obs, r, terminal = env.step(greedy_action(table.values(obs)))
        total += r
        if terminal:
            return total, True
    return total, False
