"""Time-series ingestion, splitting, and synthetic wind-power generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.signal import lfilter

from .errors import DataError, RangeError

DEFAULT_INTERVAL = timedelta(minutes=5)
DEFAULT_ORIGIN = datetime(2000, 1, 1)


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled, dense, nonnegative wind-power sequence."""

    values: np.ndarray
    sampling_interval: timedelta = DEFAULT_INTERVAL
    origin: datetime = DEFAULT_ORIGIN
    name: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DataError("series values must be a non-empty 1-D array")
        if not np.isfinite(values).all():
            raise DataError("series contains NaN or infinite values")
        if (values < 0.0).any():
            raise DataError("series contains negative power values")
        if self.sampling_interval <= timedelta(0):
            raise DataError("sampling interval must be positive")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def timestamp(self, index: int) -> datetime:
        return self.origin + index * self.sampling_interval

    @property
    def byte_size(self) -> int:
        """Raw payload size of the samples (8 bytes per float64 value)."""
        return self.values.size * 8


def load_csv(
    path,
    timestamp_column: str = "timestamp",
    power_column: str = "power",
    name: str | None = None,
) -> TimeSeries:
    """Read a dense series from CSV; gaps and bad cells are errors, never imputed.

    Required columns: an ISO-8601 timestamp and a power value in MW.
    Extra columns are ignored.
    """
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        for column in (timestamp_column, power_column):
            if column not in reader.fieldnames:
                raise DataError(f"{path}: missing required column {column!r}")

        timestamps: list[datetime] = []
        values: list[float] = []
        for i, row in enumerate(reader, start=2):  # header is line 1
            if None in row or row.get(None):
                raise DataError(f"{path}: ragged row at line {i}")
            raw_ts, raw_power = row[timestamp_column], row[power_column]
            if raw_ts is None or raw_power is None:
                raise DataError(f"{path}: ragged row at line {i}")
            try:
                timestamps.append(datetime.fromisoformat(raw_ts.strip()))
            except ValueError as exc:
                raise DataError(f"{path}: bad timestamp at line {i}: {raw_ts!r}") from exc
            try:
                power = float(raw_power)
            except ValueError as exc:
                raise DataError(f"{path}: bad power cell at line {i}: {raw_power!r}") from exc
            if math.isnan(power) or math.isinf(power):
                raise DataError(f"{path}: NaN power cell at line {i}")
            values.append(power)

    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 rows")
    interval = timestamps[1] - timestamps[0]
    if interval <= timedelta(0):
        raise DataError(f"{path}: timestamps not strictly increasing at line 3")
    for i in range(1, len(timestamps)):
        delta = timestamps[i] - timestamps[i - 1]
        if delta <= timedelta(0):
            raise DataError(f"{path}: timestamps not strictly increasing at line {i + 2}")
        if delta != interval:
            raise DataError(f"{path}: sampling gap at line {i + 2} "
                            f"(expected {interval}, got {delta})")

    return TimeSeries(
        np.array(values),
        sampling_interval=interval,
        origin=timestamps[0],
        name=name if name is not None else str(path),
    )


def write_csv(series: TimeSeries, path) -> None:
    """Write the documented two-column schema; values keep full precision."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", "power"])
        for i, v in enumerate(series.values):
            writer.writerow([series.timestamp(i).isoformat(), repr(float(v))])


def split(series: TimeSeries, ratio: float, min_length: int = 1) -> tuple[TimeSeries, TimeSeries]:
    """Chronological split: train strictly precedes test, no shuffling."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie in (0, 1)")
    n_train = int(round(len(series) * ratio))
    n_test = len(series) - n_train
    if n_train < min_length or n_test < min_length:
        raise RangeError(
            f"series of length {len(series)} too short to split {ratio:g} "
            f"with both parts >= {min_length}"
        )
    train = TimeSeries(series.values[:n_train], series.sampling_interval,
                       series.origin, f"{series.name}/train")
    test = TimeSeries(series.values[n_train:], series.sampling_interval,
                      series.timestamp(n_train), f"{series.name}/test")
    return train, test


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the bundled synthetic wind-farm generator.

    The curve is a clipped sum of a diurnal and a short-period sinusoid plus
    AR(1) noise, scaled to ``capacity_mw``. ``noise_level`` is the stationary
    standard deviation of the noise in normalized units.
    """

    seed: int
    length: int = 5000
    capacity_mw: float = 16.0
    base_level: float = 0.42
    diurnal_period: int = 288   # one day at 5-minute sampling
    diurnal_amplitude: float = 0.30
    gust_period: int = 36       # three hours
    gust_amplitude: float = 0.18
    noise_level: float = 0.04
    noise_phi: float = 0.8

    def __post_init__(self) -> None:
        if self.length < 500:
            raise ValueError("synthetic series length must be >= 500")
        if self.capacity_mw <= 0.0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.noise_phi < 1.0:
            raise ValueError("noise_phi must lie in [0, 1)")
        if self.noise_level < 0.0:
            raise ValueError("noise_level must be nonnegative")


def generate_synthetic(config: SyntheticConfig) -> TimeSeries:
    """Seeded, reproducible stand-in for a real farm's 5-minute export.

    Draw order is fixed: two phases first, then the noise innovations, so
    the deterministic part of the curve depends only on the seed.
    """
    rng = np.random.default_rng(config.seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=2)
    t = np.arange(config.length)
    curve = (
        config.base_level
        + config.diurnal_amplitude * np.sin(2.0 * np.pi * t / config.diurnal_period + phases[0])
        + config.gust_amplitude * np.sin(2.0 * np.pi * t / config.gust_period + phases[1])
    )
    innovations = rng.normal(0.0, 1.0, size=config.length)
    scale = config.noise_level * np.sqrt(1.0 - config.noise_phi ** 2)
    noise = lfilter([1.0], [1.0, -config.noise_phi], innovations * scale)
    values = config.capacity_mw * np.clip(curve + noise, 0.0, 1.0)
    return TimeSeries(values, name=f"synthetic-{config.seed}")


def autocorrelation(values: np.ndarray, lag: int) -> float:
    """Sample autocorrelation at the given lag (mean-removed)."""
    x = np.asarray(values, dtype=np.float64)
    if lag <= 0 or lag >= x.size:
        raise ValueError("lag must lie in [1, len-1]")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise DataError("constant series has no autocorrelation")
    return float(centered[:-lag] @ centered[lag:]) / denom
