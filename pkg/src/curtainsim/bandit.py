"""Epsilon-greedy bandit over placement strategies with self-generated reward.

The reward for the curtain placed at step t is how well the forecast that
guided it predicts what the sensor then actually reports at t+1: the F1
score of the binarized forecast against the observed cells. No ground truth
is involved, so the switcher trains itself online.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import OCCUPIED, UNKNOWN, DynamicOccupancyGrid
from .policies import StrategyId

__all__ = ["BanditState", "select_action", "self_supervised_reward", "update_q"]

N_ARMS = len(StrategyId)


@dataclass
class BanditState:
    """Action-value table with exploration and step-size parameters."""

    epsilon: float = 0.1
    alpha: float = 0.1
    q_init: float = 0.5
    q: np.ndarray = field(default=None)
    counts: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.q is None:
            self.q = np.full(N_ARMS, float(self.q_init))
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        if self.counts is None:
            self.counts = np.zeros(N_ARMS, dtype=np.int64)
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.q.shape != (N_ARMS,) or self.counts.shape != (N_ARMS,):
            raise ValueError(f"q and counts must have shape ({N_ARMS},)")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("q values must be finite")


def select_action(state: BanditState, rng: np.random.Generator) -> StrategyId:
    """Pick an arm epsilon-greedily and record it in the pull counts.

    Exploits the highest Q (ties toward the lowest arm index), explores
    uniformly with probability epsilon. One uniform is always drawn so the
    stream consumption does not depend on the outcome.
    """
    u = rng.random()
    if u < state.epsilon:
        arm = int(rng.integers(N_ARMS))
    else:
        arm = int(np.argmax(state.q))
    state.counts[arm] += 1
    return StrategyId(arm)


def self_supervised_reward(forecast_grid: DynamicOccupancyGrid, obs) -> float:
    """F1 of the binarized forecast against the observed cells of one scan.

    Forecast cells at or above 0.5 count as predicted-occupied; only cells
    the observation labels (non-UNKNOWN) participate. When neither side
    marks any cell occupied there is nothing to miss, so the reward is 1.
    Raises if the observation labels nothing.
    """
    labels = np.asarray(obs.labels if hasattr(obs, "labels") else obs)
    if labels.shape != forecast_grid.occupancy.shape:
        raise ValueError("observation does not match the forecast geometry")
    seen = labels != UNKNOWN
    if not seen.any():
        raise ValueError("observation labels no cells; reward undefined")
    pred = forecast_grid.occupancy[seen] >= 0.5
    truth = labels[seen] == OCCUPIED
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def update_q(state: BanditState, arm: StrategyId | int, reward: float) -> None:
    """Constant step-size value update: Q += alpha * (reward - Q)."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    a = int(arm)
    state.q[a] = state.q[a] + state.alpha * (reward - state.q[a])
