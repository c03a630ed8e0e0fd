"""Sparse-reward gridworld MDPs (deep-sea dive and hallway), a synchronous
vector wrapper, and exact dynamic-programming solvers for optimal returns.

Observations are one-hot float64 vectors. The dive grid emits an all-zero
vector for the virtual below-the-grid terminal state; agents never act on it
because the vector wrapper auto-resets finished lanes.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .nn import ConfigError

LEFT, STAY, RIGHT = 0, 1, 2  # hallway actions


class DeepSeaEnv:
    """N x N dive grid: the agent descends one row per step and must reach the
    bottom-right cell. Which of the two actions means "right" is re-randomised
    per row from the construction seed, so the mapping is a fixed property of
    the task instance, not of any single episode.
    """

    n_actions = 2

    def __init__(self, size: int, env_seed: int = 0):
        if size < 1:
            raise ConfigError(f"size must be >= 1, got {size}")
        self.size = size
        self.obs_dim = size * size
        rng = np.random.default_rng(np.random.SeedSequence([1, int(env_seed)]))
        self.action_right = rng.integers(0, 2, size=size)
        self.row = 0
        self.col = 0
        self.t = 0
        self.done = True

    def obs_index(self) -> int:
        """One-hot index of the current cell, or -1 for the terminal pseudo-state."""
        if self.done:
            return -1
        return self.row * self.size + self.col

    def _obs(self):
        obs = np.zeros(self.obs_dim)
        idx = self.obs_index()
        if idx >= 0:
            obs[idx] = 1.0
        return obs

    def reset(self, seed=None):
        self.row = 0
        self.col = 0
        self.t = 0
        self.done = False
        return self._obs()

    def step(self, action):
        if self.done:
            raise ValueError("step() called on a finished episode; reset() first")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")
        goes_right = action == self.action_right[self.row]
        reward = -0.01 / self.size if goes_right else 0.0
        if goes_right and self.row == self.size - 1 and self.col == self.size - 1:
            reward += 1.0
        self.col = self.col + 1 if goes_right else max(self.col - 1, 0)
        self.t += 1
        self.row = self.t
        self.done = self.t == self.size
        return self._obs(), reward, self.done


class HallwayEnv:
    """Corridor of n_left cells to the goal plus n_right cells beyond it.

    Reaching the goal the first time pays +1; each run of 10 consecutive
    "stay" actions at the goal pays +1 again. Moving right or staying costs
    0.01, moving left is free, and episodes last exactly 2 * n_left steps.
    """

    n_actions = 3

    def __init__(self, n_left: int, n_right: int = 0, env_seed: int = 0):
        if n_left < 1 or n_right < 0:
            raise ConfigError(f"need n_left >= 1 and n_right >= 0, got {n_left}, {n_right}")
        self.n_left = n_left
        self.n_right = n_right
        self.goal = n_left
        self.horizon = 2 * n_left
        self.obs_dim = n_left + n_right + 1
        self.pos = 0
        self.t = 0
        self.stay_count = 0
        self.first_reached = False
        self.done = True

    def obs_index(self) -> int:
        return self.pos

    def _obs(self):
        obs = np.zeros(self.obs_dim)
        obs[self.pos] = 1.0
        return obs

    def reset(self, seed=None):
        self.pos = 0
        self.t = 0
        self.stay_count = 0
        self.first_reached = False
        self.done = False
        return self._obs()

    def step(self, action):
        if self.done:
            raise ValueError("step() called on a finished episode; reset() first")
        if action not in (LEFT, STAY, RIGHT):
            raise ValueError(f"action must be 0/1/2, got {action}")
        reward = -0.01 if action in (STAY, RIGHT) else 0.0
        if action == STAY and self.pos == self.goal:
            self.stay_count += 1
            if self.stay_count % 10 == 0:
                reward += 1.0
        else:
            self.stay_count = 0
        if action == LEFT:
            self.pos = max(self.pos - 1, 0)
        elif action == RIGHT:
            self.pos = min(self.pos + 1, self.n_left + self.n_right)
        if self.pos == self.goal and not self.first_reached:
            self.first_reached = True
            reward += 1.0
        self.t += 1
        self.done = self.t == self.horizon
        return self._obs(), reward, self.done


class VecEnv:
    """Lockstep wrapper over K independent environments with auto-reset.

    step() returns (obs, rewards, dones, step_obs): obs is what the agent acts
    on next (fresh episode start wherever done is set), step_obs is the raw
    observation the step itself produced (the terminal one on finished lanes).
    """

    def __init__(self, envs):
        if not envs:
            raise ConfigError("VecEnv needs at least one environment")
        dims = {e.obs_dim for e in envs}
        acts = {e.n_actions for e in envs}
        if len(dims) != 1 or len(acts) != 1:
            raise ConfigError("all sub-environments must share obs_dim and n_actions")
        self.envs = list(envs)
        self.num_envs = len(envs)
        self.obs_dim = envs[0].obs_dim
        self.n_actions = envs[0].n_actions

    def reset(self):
        return np.stack([e.reset() for e in self.envs])

    def step(self, actions):
        if len(actions) != self.num_envs:
            raise ValueError(f"expected {self.num_envs} actions, got {len(actions)}")
        obs = np.empty((self.num_envs, self.obs_dim))
        step_obs = np.empty((self.num_envs, self.obs_dim))
        rewards = np.empty(self.num_envs)
        dones = np.zeros(self.num_envs, dtype=bool)
        for k, (env, a) in enumerate(zip(self.envs, actions)):
            o, r, d = env.step(int(a))
            step_obs[k] = o
            rewards[k] = r
            dones[k] = d
            obs[k] = env.reset() if d else o
        return obs, rewards, dones, step_obs


def make_env(name, size=None, n_left=None, n_right=None, env_seed=0):
    if name == "deepsea":
        if size is None:
            raise ConfigError("deepsea needs env.size")
        return DeepSeaEnv(size, env_seed=env_seed)
    if name == "hallway":
        if n_left is None:
            raise ConfigError("hallway needs env.n_l")
        return HallwayEnv(n_left, n_right or 0, env_seed=env_seed)
    raise ConfigError(f"unknown env {name!r} (expected 'deepsea' or 'hallway')")


def solve_deepsea_optimal(size: int) -> float:
    """Exact optimal undiscounted return by backward induction over (row, col).

    Computed in rational arithmetic so the result is the correctly rounded
    float of the true optimum (0.99 for every size).
    """
    step_cost = Fraction(-1, 100 * size)
    zero = Fraction(0)
    values = [zero] * (size + 2)  # V[col] at the row below the current one
    for row in range(size - 1, -1, -1):
        row_values = [zero] * (size + 2)
        for col in range(row + 1):
            right = step_cost + values[col + 1]
            if row == size - 1 and col == size - 1:
                right += 1
            left = values[max(col - 1, 0)]
            row_values[col] = max(right, left)
        values = row_values
    return float(values[0])


def solve_hallway_optimal(n_left: int, n_right: int = 0) -> float:
    """Exact optimal return by backward induction over (pos, stay phase, reached).

    Rational arithmetic throughout; the float returned is the correctly
    rounded value of the true optimum.
    """
    n_pos = n_left + n_right + 1
    goal = n_left
    horizon = 2 * n_left
    move_cost = Fraction(-1, 100)
    # stay phase is the consecutive-stay count mod 10; +1 fires on the wrap to 0
    values = {(pos, phase, reached): Fraction(0)
              for pos in range(n_pos) for phase in range(10) for reached in (0, 1)}
    for _ in range(horizon):
        nxt = {}
        for (pos, phase, reached) in values:
            best = None
            for action in (LEFT, STAY, RIGHT):
                r = move_cost if action in (STAY, RIGHT) else Fraction(0)
                new_phase = 0
                if action == STAY and pos == goal:
                    new_phase = (phase + 1) % 10
                    if new_phase == 0:
                        r += 1
                if action == LEFT:
                    new_pos = max(pos - 1, 0)
                elif action == RIGHT:
                    new_pos = min(pos + 1, n_pos - 1)
                else:
                    new_pos = pos
                new_reached = reached
                if new_pos == goal and not reached:
                    new_reached = 1
                    r += 1
                total = r + values[(new_pos, new_phase, new_reached)]
                if best is None or total > best:
                    best = total
            nxt[(pos, phase, reached)] = best
        values = nxt
    return float(values[(0, 0, 0)])


def solve_optimal_return(name, size=None, n_left=None, n_right=None) -> float:
    if name == "deepsea":
        return solve_deepsea_optimal(size)
    if name == "hallway":
        return solve_hallway_optimal(n_left, n_right or 0)
    raise ConfigError(f"unknown env {name!r}")
