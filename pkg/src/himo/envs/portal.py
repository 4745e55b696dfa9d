"""Portal Choice: a two-phase gridworld.

Phase one shows a context (``N`` lit pixels in a 5x5 grid) and two portals.
Entering a portal moves the agent to the green or red goal room, fixed by
the portal's position. Reaching the goal pays ``2 (f(N) G + (1 - f(N))(1 - G))``
with ``G = 1`` in the green room. The context is hidden in phase two.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .. import _kernels

ROWS, COLS = 7, 23
N_ACTIONS = 4
ACTIONS = ("up", "down", "left", "right")
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]], dtype=np.int64)

PORTAL_ROOM, GOAL_ROOM = 0, 1
GREEN, RED = 0, 1

COLORS = {
    "floor": (0.0, 0.0, 0.0),
    "wall": (0.5, 0.5, 0.5),
    "agent": (1.0, 0.5, 0.0),
    "portal": (0.0, 1.0, 1.0),
    "goal": (0.0, 0.0, 1.0),
    "green": (0.0, 1.0, 0.0),
    "red": (1.0, 0.0, 0.0),
    "context": (1.0, 1.0, 1.0),
}
# row order expected by the render kernel
_SPRITES = np.array([COLORS[k] for k in ("agent", "portal", "green", "red", "context")])


def parity_map(n: int) -> int:
    """Default context map ``f(N) = N mod 2``; odd counts pay in the green room."""
    return n % 2


@dataclass(frozen=True)
class PortalLayout:
    portal_grid: tuple[str, ...]
    goal_grid: tuple[str, ...]

    def cells(self, grid: str, chars: str) -> np.ndarray:
        rows = self.portal_grid if grid == "portal" else self.goal_grid
        return np.array([(i, j) for i, row in enumerate(rows) for j, ch in enumerate(row)
                         if ch in chars], dtype=np.int64).reshape(-1, 2)

    @property
    def green_slots(self) -> np.ndarray:
        return self.cells("portal", "g")

    @property
    def red_slots(self) -> np.ndarray:
        return self.cells("portal", "r")

    @property
    def spawns(self) -> np.ndarray:
        return self.cells("portal", "S")

    @property
    def context_cells(self) -> np.ndarray:
        return self.cells("portal", "c")

    @property
    def arrival(self) -> np.ndarray:
        return self.cells("goal", "A")[0]

    @property
    def goal(self) -> np.ndarray:
        return self.cells("goal", "G")[0]

    @property
    def room_pixel(self) -> np.ndarray:
        return self.cells("goal", "I")[0]

    def walkable(self) -> np.ndarray:
        """(2, ROWS, COLS) bool, per phase."""
        out = np.zeros((2, ROWS, COLS), dtype=bool)
        for p, rows, chars in ((0, self.portal_grid, ".grS"), (1, self.goal_grid, ".AG")):
            for i, row in enumerate(rows):
                for j, ch in enumerate(row):
                    out[p, i, j] = ch in chars
        return out

    def base_frames(self) -> np.ndarray:
        """(2, ROWS, COLS, 3) static backgrounds per phase."""
        out = np.zeros((2, ROWS, COLS, 3))
        for p, rows in ((0, self.portal_grid), (1, self.goal_grid)):
            for i, row in enumerate(rows):
                for j, ch in enumerate(row):
                    if ch == "#":
                        out[p, i, j] = COLORS["wall"]
                    elif ch == "G":
                        out[p, i, j] = COLORS["goal"]
        return out


def parse_layout(text: str) -> PortalLayout:
    blocks: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.rstrip("\n")
        if not line.strip() or line == "#" or line.startswith("# "):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
            continue
        if current is None:
            raise ValueError(f"layout row outside a section: {line!r}")
        blocks[current].append(line)
    try:
        layout = PortalLayout(tuple(blocks["portal_room"]), tuple(blocks["goal_room"]))
    except KeyError as exc:
        raise ValueError(f"layout is missing section {exc}") from None
    _check_layout(layout)
    return layout


def _check_layout(layout: PortalLayout) -> None:
    for grid in (layout.portal_grid, layout.goal_grid):
        if len(grid) != ROWS or any(len(r) != COLS for r in grid):
            raise ValueError(f"layout grids must be {ROWS}x{COLS}")
    if len(layout.green_slots) != 21 or len(layout.red_slots) != 21:
        raise ValueError("layout needs 21 green and 21 red portal slots")
    if len(layout.spawns) != 3:
        raise ValueError("layout needs 3 spawn cells")
    if len(layout.context_cells) != 25:
        raise ValueError("layout needs a 5x5 context grid")
    for ch in "AGI":
        if len(layout.cells("goal", ch)) != 1:
            raise ValueError(f"goal room needs exactly one {ch!r} cell")


DEFAULT_LAYOUT_PATH = "data/portal_layout.txt"


@lru_cache(maxsize=None)
def load_layout(path: str | None = None) -> PortalLayout:
    if path is None:
        text = resources.files("himo.envs").joinpath(DEFAULT_LAYOUT_PATH).read_text()
    else:
        text = Path(path).read_text()
    return parse_layout(text)


@dataclass
class PortalState:
    phase: int
    agent_pos: tuple[int, int]
    portal_positions: tuple[tuple[int, int], tuple[int, int]]  # (green-destined, red-destined)
    context_count: int
    context_layout: np.ndarray  # (5, 5) of 0/1
    room_color: int | None
    steps_elapsed: int
    done: bool = False


class PortalBatch:
    """``B`` independent Portal Choice episodes stepped in lockstep.

    With ``auto_reset`` a finished episode is replaced at once: the
    observation returned for that row is the next episode's first frame and
    its ``episode_start`` flag is set. Without it, stepping a finished row
    raises.
    """

    def __init__(self, batch_size: int, seed: int, time_limit: int = 60, f_map=parity_map,
                 layout: PortalLayout | None = None, auto_reset: bool = True):
        self.B = batch_size
        self.auto_reset = auto_reset
        self.layout = layout or load_layout()
        self.time_limit = time_limit
        self.f_table = np.array([f_map(n) for n in range(11)], dtype=np.int64)
        self.rng = np.random.default_rng(seed)
        self._walk = self.layout.walkable()
        self._base = np.ascontiguousarray(self.layout.base_frames())
        self._green = self.layout.green_slots
        self._red = self.layout.red_slots
        self._spawns = self.layout.spawns
        self._ctx_cells = np.ascontiguousarray(self.layout.context_cells)
        self._arrival = self.layout.arrival
        self._goal = self.layout.goal
        self._room_pixel = np.ascontiguousarray(self.layout.room_pixel)
        B = batch_size
        self.phase = np.zeros(B, dtype=np.int64)
        self.agent = np.zeros((B, 2), dtype=np.int64)
        self.portals = np.zeros((B, 2, 2), dtype=np.int64)
        self.count = np.zeros(B, dtype=np.int64)
        self.context = np.zeros((B, 25), dtype=np.uint8)
        self.room = np.zeros(B, dtype=np.int64)
        self.steps = np.zeros(B, dtype=np.int64)
        self.needs_reset = np.ones(B, dtype=bool)
        self._obs = np.zeros((B, ROWS, COLS, 3))

    @property
    def obs_dim(self) -> int:
        return ROWS * COLS * 3

    def _reset_rows(self, rows: np.ndarray) -> None:
        n = len(rows)
        if n == 0:
            return
        rng = self.rng
        self.phase[rows] = PORTAL_ROOM
        self.agent[rows] = self._spawns[rng.integers(0, len(self._spawns), size=n)]
        self.portals[rows, GREEN] = self._green[rng.integers(0, len(self._green), size=n)]
        self.portals[rows, RED] = self._red[rng.integers(0, len(self._red), size=n)]
        counts = rng.integers(1, 11, size=n)
        self.count[rows] = counts
        ctx = np.zeros((n, 25), dtype=np.uint8)
        for i in range(n):
            ctx[i, rng.permutation(25)[:counts[i]]] = 1
        self.context[rows] = ctx
        self.room[rows] = 0
        self.steps[rows] = 0
        self.needs_reset[rows] = False

    def reset(self) -> np.ndarray:
        self.needs_reset[:] = True
        self._reset_rows(np.arange(self.B))
        return self.render()

    def render(self) -> np.ndarray:
        _kernels.render_portal(self._obs, self._base, self.phase, self.agent, self.portals,
                               self.context, self._ctx_cells, self.room, self._room_pixel, _SPRITES)
        return self._obs.copy()

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Returns ``(obs, rewards, dones, episode_start)``.

        ``rewards``/``dones`` describe the transition taken; ``obs`` is the
        next observation, which is a fresh episode's first frame wherever
        ``episode_start`` is set.
        """
        actions = np.asarray(actions, dtype=np.int64).reshape(self.B)
        if self.needs_reset.any():
            raise RuntimeError("step called on a finished episode; call reset()")
        if ((actions < 0) | (actions >= N_ACTIONS)).any():
            raise ValueError(f"actions must be in [0, {N_ACTIONS})")
        B = self.B
        rewards = np.zeros(B)
        dones = np.zeros(B, dtype=bool)
        live = np.ones(B, dtype=bool)
        target = self.agent + MOVES[actions]
        inside = (target[:, 0] >= 0) & (target[:, 0] < ROWS) & (target[:, 1] >= 0) & (target[:, 1] < COLS)
        tr = np.clip(target[:, 0], 0, ROWS - 1)
        tc = np.clip(target[:, 1], 0, COLS - 1)
        ok = live & inside & self._walk[self.phase, tr, tc]
        self.agent[ok] = target[ok]
        self.steps[live] += 1

        in_portal_room = live & (self.phase == PORTAL_ROOM)
        for color in (GREEN, RED):
            hit = in_portal_room & np.all(self.agent == self.portals[:, color], axis=1)
            if hit.any():
                self.phase[hit] = GOAL_ROOM
                self.room[hit] = color
                self.agent[hit] = self._arrival

        at_goal = live & (self.phase == GOAL_ROOM) & np.all(self.agent == self._goal, axis=1)
        if at_goal.any():
            f = self.f_table[self.count[at_goal]]
            green = (self.room[at_goal] == GREEN).astype(np.int64)
            rewards[at_goal] = 2.0 * (f * green + (1 - f) * (1 - green))
            dones[at_goal] = True
        timeout = live & ~dones & (self.steps >= self.time_limit)
        dones |= timeout
        self.needs_reset |= dones
        starting = np.zeros(B, dtype=bool)
        if self.auto_reset and dones.any():
            starting = dones.copy()
            self._reset_rows(np.nonzero(dones)[0])
        return self.render(), rewards, dones, starting

    # single-episode views

    def state(self, b: int = 0) -> PortalState:
        ctx = self.context[b].reshape(5, 5).copy()
        return PortalState(
            phase=int(self.phase[b]),
            agent_pos=(int(self.agent[b, 0]), int(self.agent[b, 1])),
            portal_positions=(tuple(int(v) for v in self.portals[b, GREEN]),
                              tuple(int(v) for v in self.portals[b, RED])),
            context_count=int(self.count[b]),
            context_layout=ctx,
            room_color=int(self.room[b]) if self.phase[b] == GOAL_ROOM else None,
            steps_elapsed=int(self.steps[b]),
            done=bool(self.needs_reset[b]),
        )

    def load_state(self, state: PortalState, b: int = 0) -> None:
        self.phase[b] = state.phase
        self.agent[b] = state.agent_pos
        self.portals[b, GREEN] = state.portal_positions[0]
        self.portals[b, RED] = state.portal_positions[1]
        self.count[b] = state.context_count
        self.context[b] = np.asarray(state.context_layout, dtype=np.uint8).reshape(25)
        self.room[b] = 0 if state.room_color is None else state.room_color
        self.steps[b] = state.steps_elapsed
        self.needs_reset[b] = state.done

    def state_arrays(self, prefix: str = "env") -> dict[str, np.ndarray]:
        keys = ("phase", "agent", "portals", "count", "context", "room", "steps", "needs_reset")
        return {f"{prefix}/{k}": getattr(self, k).astype(np.float64) for k in keys}

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "env") -> None:
        for k in ("phase", "agent", "portals", "count", "context", "room", "steps", "needs_reset"):
            cur = getattr(self, k)
            cur[...] = np.asarray(arrays[f"{prefix}/{k}"]).astype(cur.dtype)


def portal_reset(seed: int, **kwargs) -> tuple[PortalState, np.ndarray]:
    env = PortalBatch(1, seed, auto_reset=False, **kwargs)
    obs = env.reset()
    return env.state(0), obs[0]


def portal_step(state: PortalState, action, f_map=parity_map, time_limit: int = 60,
                layout: PortalLayout | None = None) -> tuple[PortalState, np.ndarray, float, bool]:
    """Pure transition: returns ``(next_state, obs, reward, done)``."""
    if state.done:
        raise RuntimeError("portal_step called on a finished episode")
    if isinstance(action, str):
        action = ACTIONS.index(action)
    env = PortalBatch(1, 0, time_limit=time_limit, f_map=f_map, layout=layout, auto_reset=False)
    env.load_state(replace(state, done=False))
    obs, rew, done, _ = env.step([action])
    nxt = env.state(0)
    nxt.done = bool(done[0])
    return nxt, obs[0], float(rew[0]), bool(done[0])


def shortest_path_actions(walkable: np.ndarray, start, goal, blocked=()) -> list[int]:
    """BFS action sequence on a (ROWS, COLS) walkable grid."""
    start, goal = tuple(start), tuple(goal)
    blocked = {tuple(b) for b in blocked}
    prev = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            break
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (cur[0] + dr, cur[1] + dc)
            if (0 <= nxt[0] < walkable.shape[0] and 0 <= nxt[1] < walkable.shape[1]
                    and walkable[nxt] and nxt not in blocked and nxt not in prev):
                prev[nxt] = (cur, a)
                queue.append(nxt)
    if goal not in prev:
        raise ValueError(f"no path from {start} to {goal}")
    actions = []
    node = goal
    while prev[node] is not None:
        node, a = prev[node]
        actions.append(a)
    return actions[::-1]


def random_portal_policy_returns(n_episodes: int, seed: int, **kwargs) -> np.ndarray:
    """Terminal rewards of a scripted agent that walks to a uniformly chosen portal."""
    env = PortalBatch(1, seed, **kwargs)
    rng = np.random.default_rng(seed + 1)
    walk = env.layout.walkable()
    returns = np.zeros(n_episodes)
    env.reset()
    for ep in range(n_episodes):
        choice = int(rng.integers(0, 2))
        target = env.portals[0, choice]
        other = env.portals[0, 1 - choice]
        plan = shortest_path_actions(walk[PORTAL_ROOM], env.agent[0], target, blocked=[other])
        plan += shortest_path_actions(walk[GOAL_ROOM], env.layout.arrival, env.layout.goal)
        total = 0.0
        for a in plan:
            _, r, d, _ = env.step([a])
            total += r[0]
            if d[0]:
                break
        returns[ep] = total
    return returns
