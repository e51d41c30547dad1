"""Reference forecasters: persistence, ARIMA, and a supervised MLP.

All three emit one-step-ahead predictions aligned the same way as the
policy rollout, so every method is scored on identical targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from . import nn
from .data import TimeSeries
from .errors import ArimaFitError, DataError, RangeError


def _values_of(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, float)


def _check_indices(idx: np.ndarray, lo: int, size: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise RangeError("indices must be a non-empty 1-D collection")
    if idx.min() < lo or idx.max() + 1 >= size:
        raise RangeError(f"indices must lie in [{lo}, {size - 2}]")
    return idx


def persistence_forecast(series, indices) -> np.ndarray:
    """Naive reference: the prediction for t+1 is the observation at t."""
    values = _values_of(series)
    idx = _check_indices(indices, 0, values.size)
    return values[idx].copy()


@dataclass(frozen=True)
class ArimaConfig:
    p: int = 2
    d: int = 0
    q: int = 1
    max_iterations: int = 5000
    tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if self.p < 0 or self.d < 0 or self.q < 0:
            raise ValueError("p, d, q must be nonnegative")
        if self.p + self.q < 1:
            raise ValueError("need at least one AR or MA coefficient")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class ArimaModel:
    """Fitted coefficients plus the conditional-sum-of-squares diagnostics."""

    config: ArimaConfig
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    innovation_variance: float
    css: float

    def __post_init__(self) -> None:
        ar = np.atleast_1d(np.asarray(self.ar, dtype=np.float64))
        ma = np.atleast_1d(np.asarray(self.ma, dtype=np.float64))
        if ar.size != self.config.p or ma.size != self.config.q:
            raise ValueError("coefficient counts must match the (p, q) orders")
        if not (np.isfinite(ar).all() and np.isfinite(ma).all()
                and np.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "ar", ar)
        object.__setattr__(self, "ma", ma)

    @property
    def ar_stationary(self) -> bool:
        """True iff the AR polynomial's roots all lie outside the unit circle."""
        if self.config.p == 0:
            return True
        roots = np.roots(np.r_[1.0, -self.ar][::-1])
        return bool((np.abs(roots) > 1.0).all())


def _css_innovations(z: np.ndarray, ar: np.ndarray, ma: np.ndarray,
                     intercept: float) -> np.ndarray:
    """Innovations from time p onward; pre-sample innovations are zero."""
    p, q = ar.size, ma.size
    rhs = z[p:] - intercept
    for i, phi in enumerate(ar, start=1):
        rhs = rhs - phi * z[p - i: z.size - i]
    if q == 0:
        return rhs
    # eps_t + theta_1 eps_{t-1} + ... = rhs_t, zero initial conditions
    return lfilter([1.0], np.r_[1.0, ma], rhs)


def _css(z: np.ndarray, ar: np.ndarray, ma: np.ndarray, intercept: float) -> float:
    eps = _css_innovations(z, ar, ma, intercept)
    return float(eps @ eps)


def _ols_ar_start(z: np.ndarray, p: int) -> tuple[np.ndarray, float]:
    if p == 0:
        return np.zeros(0), float(z.mean())
    columns = [np.ones(z.size - p)]
    columns += [z[p - i: z.size - i] for i in range(1, p + 1)]
    design = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(design, z[p:], rcond=None)
    return coef[1:], float(coef[0])


def arima_fit(series, config: ArimaConfig | None = None) -> ArimaModel:
    """Estimate coefficients by conditional sum of squares.

    The raw series is differenced ``d`` times, an ordinary-least-squares
    AR fit supplies the starting point, and a Nelder-Mead simplex search
    minimizes the CSS. The search is derivative-free and deterministic, so
    refits of the same series are identical.
    """
    config = config if config is not None else ArimaConfig()
    values = _values_of(series)
    if values.size < 10 * (config.p + config.q):
        raise DataError(
            f"series of length {values.size} too short to fit "
            f"ARIMA({config.p},{config.d},{config.q})"
        )
    z = np.diff(values, n=config.d) if config.d > 0 else values.astype(np.float64)

    ar0, intercept0 = _ols_ar_start(z, config.p)
    x0 = np.r_[intercept0, ar0, np.zeros(config.q)]

    def objective(x: np.ndarray) -> float:
        return _css(z, x[1: 1 + config.p], x[1 + config.p:], x[0])

    result = minimize(
        objective, x0, method="Nelder-Mead",
        options={"maxiter": config.max_iterations, "maxfev": config.max_iterations,
                 "xatol": config.tolerance, "fatol": config.tolerance},
    )
    x = result.x
    css = float(result.fun)
    n_eff = z.size - config.p
    model = ArimaModel(
        config=config, ar=x[1: 1 + config.p], ma=x[1 + config.p:], intercept=float(x[0]),
        innovation_variance=css / max(n_eff, 1), css=css,
    )
    if not result.success:
        raise ArimaFitError(
            f"CSS search did not converge within {config.max_iterations} iterations",
            model=model,
        )
    if not model.ar_stationary:
        warnings.warn("fitted AR polynomial has roots inside the unit circle",
                      stacklevel=2)
    return model


def arima_forecast(model: ArimaModel, series, indices) -> np.ndarray:
    """One-step-ahead forecasts from observed history and recursive innovations.

    Entry i predicts the value at ``indices[i] + 1`` using observations up
    to ``indices[i]`` only. Differencing is inverted for d > 0.
    """
    values = _values_of(series)
    d = model.config.d
    # Need p lagged z values and q lagged innovations behind each forecast.
    idx = _check_indices(indices, d + max(model.config.p, model.config.q) - 1, values.size)

    z = np.diff(values, n=d) if d > 0 else values.astype(np.float64)
    p, q = model.config.p, model.config.q
    eps = np.zeros(z.size)
    eps[p:] = _css_innovations(z, model.ar, model.ma, model.intercept)

    predictions = np.empty(idx.size)
    for k, t in enumerate(idx):
        tz = t - d  # position of the last known value in the differenced series
        z_hat = model.intercept
        for i, phi in enumerate(model.ar, start=1):
            z_hat += phi * z[tz + 1 - i]
        for j, theta in enumerate(model.ma, start=1):
            z_hat += theta * eps[tz + 1 - j]
        # Undo differencing: add back the last value of each lower level.
        forecast = z_hat
        for level in range(d - 1, -1, -1):
            forecast += np.diff(values, n=level)[t - level]
        predictions[k] = forecast
    return predictions


@dataclass(frozen=True)
class BpnnConfig:
    hidden_layers: int = 2
    hidden_width: int = 10
    lag_count: int = 7
    learning_rate: float = 0.02
    epochs: int = 300
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_layers < 1 or self.hidden_width < 1 or self.lag_count < 1:
            raise ValueError("layer counts and widths must be positive")
        if self.learning_rate <= 0.0 or self.epochs < 0:
            raise ValueError("learning_rate must be positive and epochs nonnegative")


def _lag_matrix(values: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    windows = np.lib.stride_tricks.sliding_window_view(values, lag)
    return windows[:-1], values[lag:]


def bpnn_train(series, config: BpnnConfig | None = None
               ) -> tuple[nn.NetworkParams, np.ndarray]:
    """Full-batch MSE training of the lag-window MLP.

    Inputs and targets are normalized by the series maximum. Returns the
    trained parameters and the per-epoch loss trace.
    """
    config = config if config is not None else BpnnConfig()
    values = _values_of(series)
    if values.size < config.lag_count + 2:
        raise DataError("series too short for lag-window training pairs")
    norm = float(values.max())
    if norm <= 0.0:
        raise DataError("cannot normalize an all-zero series")
    scaled = values / norm
    inputs, targets = _lag_matrix(scaled, config.lag_count)
    targets = targets[:, None]

    rng = np.random.default_rng(config.seed)
    specs = [nn.LayerSpec(config.lag_count, config.hidden_width, "relu")]
    for _ in range(config.hidden_layers - 1):
        specs.append(nn.LayerSpec(config.hidden_width, config.hidden_width, "relu"))
    specs.append(nn.LayerSpec(config.hidden_width, 1, "linear"))
    params = nn.init_params(specs, rng)
    opt = nn.OptimizerState.for_params(params, config.learning_rate, config.optimizer)

    losses = np.empty(config.epochs)
    batch = inputs.shape[0]
    for epoch in range(config.epochs):
        out, tape = nn.forward(params, inputs)
        err = out - targets
        losses[epoch] = float(np.mean(err * err))
        grads, _ = nn.backward(params, tape, (2.0 / batch) * err)
        params, opt = nn.apply_gradients(params, grads, opt)
    return params, losses


def bpnn_forecast(params: nn.NetworkParams, series, indices,
                  normalization_max: float | None = None) -> np.ndarray:
    """One-step-ahead MLP predictions, denormalized back to series units."""
    values = _values_of(series)
    lag = params.weights[0].shape[1]
    idx = _check_indices(indices, lag - 1, values.size)
    norm = float(values.max()) if normalization_max is None else float(normalization_max)
    if norm <= 0.0:
        raise DataError("normalization divisor must be positive")
    windows = np.lib.stride_tricks.sliding_window_view(values / norm, lag)[idx - (lag - 1)]
    out, _ = nn.forward(params, windows)
    return out[:, 0] * norm
