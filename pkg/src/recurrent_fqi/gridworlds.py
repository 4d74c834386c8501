"""Grid world with an obstacle, in three observability variants.

``gw``  observes one-hot x and y.
``po``  observes one-hot x; the y block is present but always zero.
``ac``  observes one-hot orientation and one-hot distance to the wall ahead.

In random-start mode ``po`` and ``ac`` append a one-hot (x, y) hint block
that is filled only on the first observation of an episode.

Coordinates: x grows to the right, y grows downward, so ``up`` is ``y - 1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_NAMES = ("up", "down", "left", "right")
MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}

VARIANTS = ("gw", "po", "ac")
START_MODES = ("fixed", "random")


@dataclass(frozen=True)
class GridSpec:
    width: int = 10
    height: int = 5
    start: tuple[int, int] = (0, 2)
    goal: tuple[int, int] = (9, 2)
    obstacle: tuple[int, int] = (5, 2)
    step_reward: float = -1.0
    collision_reward: float = -5.0
    goal_reward: float = 10.0

    def __post_init__(self):
        cells = (self.start, self.goal, self.obstacle)
        if len(set(cells)) != 3:
            raise ValueError("start, goal and obstacle must be distinct")
        if not all(self.in_bounds(c) for c in cells):
            raise ValueError("start, goal and obstacle must lie inside the grid")

    @classmethod
    def sized(cls, width: int, height: int) -> "GridSpec":
        """Same layout scaled to another size: start left, goal right, obstacle mid-row."""
        row = height // 2
        return cls(width, height, (0, row), (width - 1, row), (width // 2, row))

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def max_distance(self) -> int:
        return max(self.width, self.height)

    def free_cells(self) -> list[tuple[int, int]]:
        """Legal random-start cells: everything but the obstacle and goal."""
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in (self.obstacle, self.goal)
        ]


@dataclass(frozen=True)
class EnvState:
    position: tuple[int, int]
    orientation: int
    t: int
    variant: str
    mode: str
    hint: bool = True
    obstacle_is_wall: bool = False


def distance_to_wall(position, orientation: int, spec: GridSpec, obstacle_is_wall: bool = False) -> int:
    """Number of free cells between the agent and the wall it faces."""
    dx, dy = MOVES[orientation]
    x, y = position
    n = 0
    while True:
        x, y = x + dx, y + dy
        if not spec.in_bounds((x, y)) or (obstacle_is_wall and (x, y) == spec.obstacle):
            return n
        n += 1


def observation_dim(spec: GridSpec, variant: str, mode: str, hint: bool = True) -> int:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if mode not in START_MODES:
        raise ValueError(f"unknown start mode {mode!r}")
    xy = spec.width + spec.height
    base = xy if variant in ("gw", "po") else 4 + spec.max_distance
    if variant != "gw" and mode == "random" and hint:
        base += xy
    return base


def encode_observation(state: EnvState, spec: GridSpec) -> np.ndarray:
    obs = np.zeros(observation_dim(spec, state.variant, state.mode, state.hint))
    x, y = state.position
    if state.variant in ("gw", "po"):
        obs[x] = 1.0
        if state.variant == "gw":
            obs[spec.width + y] = 1.0
        offset = spec.width + spec.height
    else:
        obs[state.orientation] = 1.0
        obs[4 + distance_to_wall(state.position, state.orientation, spec, state.obstacle_is_wall)] = 1.0
        offset = 4 + spec.max_distance
    if offset < obs.size and state.t == 0:
        obs[offset + x] = 1.0
        obs[offset + spec.width + y] = 1.0
    return obs


def env_reset(
    spec: GridSpec,
    variant: str,
    mode: str,
    rng: np.random.Generator | None = None,
    hint: bool = True,
    obstacle_is_wall: bool = False,
) -> tuple[EnvState, np.ndarray]:
    if mode == "random":
        if rng is None:
            raise ValueError("random start mode needs a generator")
        cells = spec.free_cells()
        position = cells[int(rng.integers(len(cells)))]
    elif mode == "fixed":
        position = spec.start
    else:
        raise ValueError(f"unknown start mode {mode!r}")
    state = EnvState(position, RIGHT, 0, variant, mode, hint, obstacle_is_wall)
    return state, encode_observation(state, spec)


def env_step(state: EnvState, action: int, spec: GridSpec):
    """Apply ``action``; returns ``(state, reward, observation, terminal)``.

    Blocked moves (wall or obstacle) keep the position and cost the
    collision reward. The agent turns to face ``action`` either way.
    """
    dx, dy = MOVES[action]
    x, y = state.position
    target = (x + dx, y + dy)
    terminal = False
    if not spec.in_bounds(target) or target == spec.obstacle:
        position, reward = state.position, spec.collision_reward
    elif target == spec.goal:
        position, reward, terminal = target, spec.goal_reward, True
    else:
        position, reward = target, spec.step_reward
    new = replace(state, position=position, orientation=action, t=state.t + 1)
    return new, reward, encode_observation(new, spec), terminal


class GridWorld:
    """Stateful wrapper used by the learning loop."""

    actions = 4

    def __init__(
        self,
        variant: str = "gw",
        mode: str = "fixed",
        spec: GridSpec | None = None,
        hint: bool = True,
        obstacle_is_wall: bool = False,
    ):
        self.spec = spec or GridSpec()
        self.variant = variant
        self.mode = mode
        self.hint = hint
        self.obstacle_is_wall = obstacle_is_wall
        self.obs_dim = observation_dim(self.spec, variant, mode, hint)
        self.state: EnvState | None = None
        self.observation: np.ndarray | None = None

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        self.state, self.observation = env_reset(
            self.spec, self.variant, self.mode, rng, self.hint, self.obstacle_is_wall
        )
        return self.observation

    def step(self, action: int):
        """Returns ``(observation, reward, terminal)``."""
        self.state, reward, self.observation, terminal = env_step(self.state, action, self.spec)
        return self.observation, reward, terminal


def shortest_path_return(spec: GridSpec, start=None) -> float:
    """Undiscounted return of the shortest path to the goal, by breadth-first search."""
    start = start or spec.start
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == spec.goal:
            steps = dist[cell]
            return (steps - 1) * spec.step_reward + spec.goal_reward
        for dx, dy in MOVES.values():
            nxt = (cell[0] + dx, cell[1] + dy)
            if spec.in_bounds(nxt) and nxt != spec.obstacle and nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    raise ValueError("goal unreachable")
