"""Forecast evaluation: max-normalized MAE/RMSE and the equivalence check."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError


@dataclass(frozen=True)
class EvalSeries:
    """Aligned actual/predicted pair; normalization uses max of the actuals."""

    actual: np.ndarray
    predicted: np.ndarray

    def __post_init__(self) -> None:
        actual = np.asarray(self.actual, dtype=np.float64)
        predicted = np.asarray(self.predicted, dtype=np.float64)
        if actual.ndim != 1 or predicted.ndim != 1 or actual.shape != predicted.shape:
            raise ShapeError(
                f"actual {actual.shape} and predicted {predicted.shape} must be equal-length vectors"
            )
        if actual.size == 0:
            raise ShapeError("need at least one sample")
        if not (np.isfinite(actual).all() and np.isfinite(predicted).all()):
            raise DataError("evaluation series contains non-finite values")
        object.__setattr__(self, "actual", actual)
        object.__setattr__(self, "predicted", predicted)

    def __len__(self) -> int:
        return self.actual.size

    @property
    def norm_max(self) -> float:
        m = float(self.actual.max())
        if m <= 0.0:
            raise DataError("cannot normalize: max of actuals is not positive")
        return m


def nmae(ev: EvalSeries) -> float:
    """Mean absolute error of the max-normalized series."""
    m = ev.norm_max
    return float(np.mean(np.abs(ev.actual / m - ev.predicted / m)))


def nrmse(ev: EvalSeries) -> float:
    """Root-mean-square error of the max-normalized series."""
    m = ev.norm_max
    diff = ev.actual / m - ev.predicted / m
    return float(np.sqrt(np.mean(diff * diff)))


def equivalence_check(psi_c: float, psi_f: float, sigma: float) -> bool:
    """True iff the two scores differ by less than sigma."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    return abs(psi_c - psi_f) < sigma


# NMAE can exceed NRMSE only through float noise; this is the slack we allow
# before declaring the pair inconsistent.
_RMS_SLACK = 1e-12


@dataclass(frozen=True)
class ClientMetrics:
    """One method's scores on one client's held-out window."""

    client_id: int
    method: str
    nmae: float
    nrmse: float

    def __post_init__(self) -> None:
        if self.nmae < 0.0 or self.nrmse < 0.0:
            raise ValueError("metrics must be nonnegative")
        if self.nmae > self.nrmse * (1.0 + _RMS_SLACK) + _RMS_SLACK:
            raise ValueError(
                f"NMAE {self.nmae} exceeds NRMSE {self.nrmse}; inconsistent metrics"
            )


@dataclass
class MetricsReport:
    """Per-client scores plus reward-trace and network-load summaries."""

    rows: list[ClientMetrics] = field(default_factory=list)
    reward_summary: dict[int, dict[str, float]] = field(default_factory=dict)
    load: dict[str, float] = field(default_factory=dict)

    def add(self, client_id: int, method: str, ev: EvalSeries) -> ClientMetrics:
        row = ClientMetrics(client_id, method, nmae(ev), nrmse(ev))
        self.rows.append(row)
        return row

    def methods(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    def aggregate(self, method: str) -> tuple[float, float]:
        """Mean NMAE and NRMSE over all clients for one method."""
        rows = [r for r in self.rows if r.method == method]
        if not rows:
            raise KeyError(f"no rows for method {method!r}")
        return (
            float(np.mean([r.nmae for r in rows])),
            float(np.mean([r.nrmse for r in rows])),
        )

    def to_dict(self) -> dict:
        out: dict = {
            "clients": [
                {"client": r.client_id, "method": r.method,
                 "nmae": r.nmae, "nrmse": r.nrmse}
                for r in self.rows
            ],
            "aggregate": {
                method: dict(zip(("nmae", "nrmse"), self.aggregate(method)))
                for method in self.methods()
            },
        }
        if self.reward_summary:
            out["reward_summary"] = {
                str(cid): stats for cid, stats in sorted(self.reward_summary.items())
            }
        if self.load:
            out["load"] = self.load
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["client", "method", "nmae", "nrmse"])
            for r in self.rows:
                writer.writerow([r.client_id, r.method, repr(r.nmae), repr(r.nrmse)])
            for method in self.methods():
                agg_nmae, agg_nrmse = self.aggregate(method)
                writer.writerow(["all", method, repr(agg_nmae), repr(agg_nrmse)])

    def write_json(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")
