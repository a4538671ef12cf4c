"""Rollout accuracy metrics over a test set.

For each horizon step m the series tracks

* max_abs: largest entry-wise absolute error over all sequences,
* mse: mean over sequences of the per-entry mean squared error,
* rel: mean over sequences of ||error||_F / ||reference frame||_F.

Rollouts always start from the clean stored initial conditions; input noise
is a training-time regularizer only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import DegenerateInputError
from .integrators import StepperConfig, network_vector_field, rollout
from .network import TwoLayerNetParams

__all__ = ["MetricSeries", "eval_metrics", "save_metrics_csv"]


@dataclass(frozen=True)
class MetricSeries:
    horizon: int
    max_abs: list[float]
    mse: list[float]
    rel: list[float]

    def __post_init__(self):
        if not (len(self.max_abs) == len(self.mse) == len(self.rel) == self.horizon):
            raise ValueError("metric lists must all have length = horizon")
        if any(v < 0 for series in (self.max_abs, self.mse, self.rel) for v in series):
            raise ValueError("metric entries must be non-negative")


def eval_metrics(
    theta: TwoLayerNetParams, cfg: StepperConfig, test: Dataset, horizon: int
) -> MetricSeries:
    """Roll the model's one-step map out over every test sequence and collect
    errors; the norm-preserving scheme integrates the tangent-projected field."""
    f = network_vector_field(theta, cfg.scheme)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > test.n_steps:
        raise ValueError(f"horizon {horizon} exceeds the dataset's {test.n_steps} steps")
    if test.n_sequences < 1:
        raise ValueError("need at least one test sequence")
    p2 = float(test.p) ** 2
    max_abs = np.zeros(horizon)
    mse = np.zeros(horizon)
    rel = np.zeros(horizon)
    for n in range(test.n_sequences):
        frames = rollout(cfg, f, test.field(n, 0), horizon)
        for m in range(1, horizon + 1):
            ref = test.frames[n, m]
            err = frames[m - 1].data - ref
            err_norm = float(np.sqrt(np.sum(err * err)))
            ref_norm = float(np.sqrt(np.sum(ref * ref)))
            if ref_norm == 0.0:
                raise DegenerateInputError(
                    f"reference frame (n={n}, m={m}) has zero norm; "
                    "relative error is undefined"
                )
            max_abs[m - 1] = max(max_abs[m - 1], float(np.max(np.abs(err))))
            mse[m - 1] += err_norm**2 / p2
            rel[m - 1] += err_norm / ref_norm
    mse /= test.n_sequences
    rel /= test.n_sequences
    return MetricSeries(
        horizon=horizon, max_abs=max_abs.tolist(), mse=mse.tolist(), rel=rel.tolist()
    )


def save_metrics_csv(series: MetricSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "maxE", "mse", "rE"])
        for m in range(series.horizon):
            writer.writerow(
                [m + 1, repr(series.max_abs[m]), repr(series.mse[m]), repr(series.rel[m])]
            )
