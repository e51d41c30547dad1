"""Forecasting recast as a decision process.

The observation is the window of the most recent ``lag_count`` normalized
power values, the action is the predicted next value in [0, 1], and the
reward is the negative absolute prediction error. Episodes walk a
contiguous slice of the series one step at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .data import TimeSeries
from .errors import DomainError, RangeError, StateError


@dataclass(frozen=True)
class EnvConfig:
    """Lag-window size, episode length, and the normalization divisor."""

    normalization_max: float
    lag_count: int = 7
    episode_length: int = 48

    def __post_init__(self) -> None:
        if self.normalization_max <= 0.0:
            raise ValueError("normalization_max must be positive")
        if self.lag_count < 1:
            raise ValueError("lag_count must be >= 1")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


def _normalized_view(series: TimeSeries | np.ndarray, config: EnvConfig) -> np.ndarray:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, float)
    # Values above the stored divisor (e.g. test peaks over the train max)
    # saturate at 1 so observations stay inside the unit interval.
    out = np.minimum(values / config.normalization_max, 1.0)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EnvState:
    """A point-in-time view of one episode; a plain value, safe to share."""

    values: np.ndarray  # normalized, read-only
    config: EnvConfig
    cursor: int
    steps_taken: int = 0

    @property
    def observation(self) -> np.ndarray:
        """The ``lag_count`` most recent values, oldest first, current last."""
        j = self.config.lag_count
        return self.values[self.cursor - j + 1: self.cursor + 1]

    @property
    def done(self) -> bool:
        return (
            self.steps_taken >= self.config.episode_length
            or self.cursor + 1 >= self.values.size
        )


def reset(series: TimeSeries | np.ndarray, config: EnvConfig, start_index: int) -> EnvState:
    """Start an episode with the window ending at ``start_index``."""
    values = _normalized_view(series, config)
    j = config.lag_count
    if start_index < j - 1:
        raise RangeError(f"start_index {start_index} leaves no room for {j} lags")
    if start_index + config.episode_length + 1 > values.size:
        raise RangeError(
            f"series of length {values.size} cannot fit an episode of "
            f"{config.episode_length} steps starting at {start_index}"
        )
    return EnvState(values=values, config=config, cursor=start_index)


def step(state: EnvState, action: float) -> tuple[float, EnvState, bool]:
    """Score the prediction against the next true value and advance one step."""
    action = float(action)
    if not 0.0 <= action <= 1.0:
        raise DomainError(f"action {action} outside [0, 1]")
    if state.cursor + 1 >= state.values.size:
        raise StateError("episode already exhausted the series")
    truth = float(state.values[state.cursor + 1])
    reward = -abs(truth - action)
    next_state = replace(state, cursor=state.cursor + 1, steps_taken=state.steps_taken + 1)
    return reward, next_state, next_state.done


def rollout_forecast(
    actor_params: nn.NetworkParams,
    series: TimeSeries | np.ndarray,
    config: EnvConfig,
    indices: np.ndarray,
) -> np.ndarray:
    """One-step-ahead predictions of the exploitation policy.

    ``indices`` are cursor positions t; entry i of the result predicts the
    true value at ``indices[i] + 1``. Output is denormalized back to the
    units of ``series``. Pure: same inputs, same output.
    """
    values = _normalized_view(series, config)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise RangeError("indices must be a non-empty 1-D collection")
    j = config.lag_count
    if idx.min() < j - 1 or idx.max() + 1 >= values.size:
        raise RangeError(
            f"indices must lie in [{j - 1}, {values.size - 2}] "
            f"(got [{idx.min()}, {idx.max()}])"
        )
    windows = np.lib.stride_tricks.sliding_window_view(values, j)[idx - (j - 1)]
    out, _ = nn.forward(actor_params, windows)
    return out[:, 0] * config.normalization_max
