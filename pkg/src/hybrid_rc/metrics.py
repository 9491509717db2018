"""Forecast evaluation: normalized error, valid time, error maps and readout contributions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barkley import FieldPair
from .hybrid import DimPlan
from .reservoir import Readout

__all__ = [
    "ErrorSeries",
    "ValidTime",
    "ContributionReport",
    "normalized_error",
    "valid_time",
    "error_field",
    "wout_contribution",
    "grid_contribution",
]


@dataclass(frozen=True)
class ErrorSeries:
    values: np.ndarray
    dt: float = 0.01

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ValidTime:
    """First-crossing time; ``censored`` means the threshold was never exceeded."""

    time: float
    index: int
    censored: bool


@dataclass(frozen=True)
class ContributionReport:
    """Reservoir and KBM shares of the readout, one entry per output variable (u, v).

    Rows whose weights are all zero have NaN shares and ``degenerate`` set.
    """

    reservoir_share: np.ndarray
    kbm_share: np.ndarray
    degenerate: np.ndarray


def normalized_error(truth: np.ndarray, pred: np.ndarray, dt: float = 0.01) -> ErrorSeries:
    """``e(t) = ||y(t) - y_r(t)|| / sqrt(<||y||^2>)``.

    Norms run over every grid point and both variables; the average in the
    denominator is over the compared truth window.  Inputs are trajectories
    ``(T, ...)`` with the time axis first.
    """
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim < 1 or truth.shape[0] == 0:
        raise ValueError(f"truth {truth.shape} and prediction {pred.shape} must have equal, non-empty shapes")
    t = truth.reshape(truth.shape[0], -1)
    d = t - pred.reshape(pred.shape[0], -1)
    scale = np.sqrt(np.mean(np.einsum("ij,ij->i", t, t)))
    if scale == 0:
        raise ValueError("truth is identically zero; normalized error is undefined")
    return ErrorSeries(np.sqrt(np.einsum("ij,ij->i", d, d)) / scale, dt)


def valid_time(errors: ErrorSeries, e_max: float = 0.2) -> ValidTime:
    if not e_max > 0:
        raise ValueError("e_max must be positive")
    values = np.asarray(errors.values)
    above = np.flatnonzero(values > e_max)
    if above.size:
        k = int(above[0])
        return ValidTime(errors.dt * k, k, False)
    return ValidTime(errors.dt * len(values), len(values), True)


def error_field(truth, pred) -> FieldPair:
    """Pointwise absolute error for each variable (heatmap input)."""
    t = truth.as_array() if isinstance(truth, FieldPair) else np.asarray(truth, dtype=float)
    p = pred.as_array() if isinstance(pred, FieldPair) else np.asarray(pred, dtype=float)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {p.shape}")
    return FieldPair.from_array(np.abs(t - p))


def wout_contribution(readout, plan: DimPlan, feature_rms: Optional[np.ndarray] = None) -> ContributionReport:
    """Split each readout row's absolute weight mass into reservoir and KBM blocks.

    With ``feature_rms`` every weight is multiplied by the RMS of the feature
    it reads (activity weighting); otherwise raw ``|w|`` is used.
    """
    w = readout.w_out if isinstance(readout, Readout) else np.asarray(readout, dtype=float)
    if w.shape[-1] != plan.h_dim:
        raise ValueError(f"readout width {w.shape[-1]} does not match h_dim={plan.h_dim}")
    if plan.kbm_feat == 0:
        raise ValueError(f"mode {plan.mode} has no KBM block in the readout")
    mass = np.abs(w)
    if feature_rms is not None:
        mass = mass * np.asarray(feature_rms, dtype=float)
    res = mass[..., : plan.r_feat].sum(axis=-1)
    total = mass.sum(axis=-1)
    degenerate = total == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(degenerate, np.nan, res / np.where(degenerate, 1.0, total))
    return ContributionReport(share, 1.0 - share, degenerate)


def grid_contribution(grid, metric: str = "weight") -> ContributionReport:
    """Median per-point contribution over a trained :class:`ReservoirGrid`.

    ``metric`` is ``"weight"`` (absolute weight mass) or ``"activity"``
    (weights scaled by the RMS of their training features).  Degenerate
    points are excluded from the medians.
    """
    if metric == "weight":
        rms = None
    elif metric == "activity":
        rms = np.sqrt(grid.feature_ms)[:, None, :]
    else:
        raise ValueError(f"unknown contribution metric {metric!r}")
    per_point = wout_contribution(grid.w_out, grid.plan, rms)
    with np.errstate(all="ignore"):
        res = np.nanmedian(per_point.reservoir_share, axis=0)
    degenerate = np.isnan(res)
    return ContributionReport(res, 1.0 - res, degenerate)
