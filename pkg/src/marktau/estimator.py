"""IPCW kernel estimation of mark-specific treatment effects on a mark grid.

For arm a, the mean failure time localized at mark v is estimated by

    tau_a(v) = (1/n_a) * sum over arm-a subjects of
               delta_i * (y_i / S_a(y_i)) * K_h(mark_i - v)

where S_a is the arm's censoring survival curve evaluated left-continuously
and K_h is a scaled kernel. The double integral against each subject's
marked counting process reduces to this single term because the process
carries one unit point mass at (y_i, mark_i) when delta_i = 1 and none
otherwise; the integral form survives only in the test oracles. The contrast
tau(v) = tau_1(v) - tau_0(v), its variance estimate and pointwise confidence
intervals follow the large-sample normal approximation for sqrt(n h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data_model import Dataset, DataError, MarkInterval, SubjectRecord
from .kernels import (
    EPANECHNIKOV,
    Bandwidth,
    KernelSpec,
    bandwidth_value,
    rule_of_thumb_bandwidth,
    scaled_kernel,
)
from .km import StepSurvival, fit_censoring_km

__all__ = [
    "EstimationError",
    "EvaluationGrid",
    "EstimateGrid",
    "normal_quantile",
    "ipcw_weights",
    "ipcw_kernel_term",
    "ipcw_kernel_matrix",
    "tau_hat_group",
    "tau_hat",
    "sigma2_hat",
    "confidence_interval",
    "estimate_on_grid",
    "ipcw_mean_difference",
]


class EstimationError(ValueError):
    """Invalid estimation request (empty arm, vanishing weights, bad grid)."""


@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    """Strictly increasing mark values inside an evaluation interval."""

    points: np.ndarray
    interval: MarkInterval

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise EstimationError("grid needs at least one point")
        if np.any(np.diff(pts) <= 0):
            raise EstimationError("grid points must be strictly increasing")
        if pts[0] < self.interval.lower or pts[-1] > self.interval.upper:
            raise EstimationError(
                f"grid points must lie in [{self.interval.lower}, {self.interval.upper}]"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.size)

    @classmethod
    def evenly_spaced(cls, interval: MarkInterval, count: int) -> "EvaluationGrid":
        """``count`` points from interval.lower to interval.upper inclusive."""
        if count < 2:
            raise EstimationError(f"evenly spaced grid needs count >= 2, got {count}")
        return cls(np.linspace(interval.lower, interval.upper, count), interval)

    @classmethod
    def explicit(cls, points, interval: MarkInterval | None = None) -> "EvaluationGrid":
        """Grid from explicit points; the interval defaults to their span."""
        pts = np.asarray(points, dtype=float)
        if interval is None:
            if pts.size < 2:
                raise EstimationError("an explicit single-point grid needs an interval")
            interval = MarkInterval(float(np.min(pts)), float(np.max(pts)))
        return cls(pts, interval)


@dataclass(frozen=True, eq=False)
class EstimateGrid:
    """Per-point estimates plus the shared configuration they were computed under.

    ``flagged`` marks grid points whose kernel window contains no observed
    event in either arm; these carry tau = 0 and sigma2 = 0 by convention and
    are excluded from downstream test statistics.
    """

    points: np.ndarray
    tau1: np.ndarray
    tau0: np.ndarray
    tau: np.ndarray
    sigma2: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    events1: np.ndarray
    events0: np.ndarray
    flagged: np.ndarray
    bandwidth: Bandwidth
    alpha: float
    n: int
    n0: int
    n1: int

    @property
    def h(self) -> float:
        return self.bandwidth.h

    @property
    def nh(self) -> float:
        return self.n * self.bandwidth.h


def normal_quantile(p: float) -> float:
    """Standard normal quantile (inverse CDF)."""
    if not 0.0 < p < 1.0:
        raise EstimationError(f"quantile level must be in (0,1), got {p!r}")
    return float(stats.norm.ppf(p))


def ipcw_weights(dataset: Dataset) -> tuple[np.ndarray, dict[int, StepSurvival]]:
    """Per-subject factor delta_i * y_i / S_a(y_i), with the fitted curves.

    Weights are zero on censored rows. Each arm's censoring curve is fitted
    on that arm alone and evaluated left-continuously, so the weight at an
    observed failure is positive and at most the arm size.
    """
    weights = np.zeros(dataset.n)
    curves: dict[int, StepSurvival] = {}
    for a in (0, 1):
        idx = dataset.arm_indices(a)
        if idx.size == 0:
            raise EstimationError(f"treatment group {a} is empty")
        curve = fit_censoring_km(dataset.y[idx], dataset.delta[idx], group=a)
        curves[a] = curve
        events = idx[dataset.delta[idx] == 1]
        if events.size:
            surv_at_event = curve.evaluate(dataset.y[events])
            if np.any(surv_at_event <= 0.0):
                raise EstimationError(
                    f"censoring survival vanishes at an observed failure in group {a}"
                )
            weights[events] = dataset.y[events] / surv_at_event
    return weights, curves


def ipcw_kernel_term(record: SubjectRecord, surv: StepSurvival, v: float, h,
                     kernel: KernelSpec = EPANECHNIKOV) -> float:
    """One subject's contribution delta * (y / S(y)) * K_h(mark - v).

    Censored records contribute exactly zero. ``surv`` must be the censoring
    curve of the record's own arm.
    """
    if record.delta == 0:
        return 0.0
    s = surv.evaluate(record.y)
    if s <= 0.0:
        raise EstimationError("censoring survival vanishes at an observed failure")
    return (record.y / s) * scaled_kernel(record.mark, v, h, kernel)


def ipcw_kernel_matrix(dataset: Dataset, points, h,
                       kernel: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """Matrix of per-subject contributions, subjects by grid points."""
    weights, _ = ipcw_weights(dataset)
    return _kernel_terms(dataset, weights, np.asarray(points, dtype=float), h, kernel)


def _kernel_terms(dataset: Dataset, weights: np.ndarray, points: np.ndarray, h,
                  kernel: KernelSpec) -> np.ndarray:
    # NaN marks on censored rows are masked by their zero weight; substitute
    # a harmless center so the kernel never sees NaN.
    marks = np.where(dataset.delta == 1, dataset.mark, points[0] if points.size else 0.0)
    kern = scaled_kernel(marks[:, None], points[None, :], h, kernel)
    return weights[:, None] * kern


def tau_hat_group(dataset: Dataset, a: int, v: float, h,
                  surv: StepSurvival | None = None,
                  kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Arm-a localized mean failure time at mark v.

    Summation runs over the arm's subjects in record order (np.sum), which
    the no-censoring reduction test relies on.
    """
    idx = dataset.arm_indices(a)
    if idx.size == 0:
        raise EstimationError(f"treatment group {a} is empty")
    if surv is None:
        surv = fit_censoring_km(dataset.y[idx], dataset.delta[idx], group=a)
    weights = np.zeros(idx.size)
    events = dataset.delta[idx] == 1
    if np.any(events):
        surv_at_event = np.atleast_1d(surv.evaluate(dataset.y[idx][events]))
        if np.any(surv_at_event <= 0.0):
            raise EstimationError(
                f"censoring survival vanishes at an observed failure in group {a}"
            )
        weights[events] = dataset.y[idx][events] / surv_at_event
    marks = np.where(events, dataset.mark[idx], float(v))
    terms = weights * scaled_kernel(marks, v, h, kernel)
    return float(np.sum(terms) / idx.size)


def tau_hat(dataset: Dataset, v: float, h, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Treatment contrast tau_1(v) - tau_0(v); fits both censoring curves."""
    return tau_hat_group(dataset, 1, v, h, kernel=kernel) - tau_hat_group(
        dataset, 0, v, h, kernel=kernel
    )


def sigma2_hat(dataset: Dataset, v: float, h, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Variance estimate for sqrt(n h) * (tau_hat(v) - tau(v)).

    sigma2 = (n h) * sum over arms of n_a^(-2) * sum of squared subject
    contributions at v. Zero exactly when no subject contributes at v.
    """
    theta = ipcw_kernel_matrix(dataset, [v], h, kernel)[:, 0]
    hval = bandwidth_value(h)
    total = 0.0
    for a in (0, 1):
        idx = dataset.arm_indices(a)
        total += float(np.sum(theta[idx] ** 2)) / idx.size**2
    return dataset.n * hval * total


def confidence_interval(tau: float, sigma2: float, n: int, h, alpha: float = 0.05,
                        ) -> tuple[float, float]:
    """Pointwise (1 - alpha) interval: tau +- z_{alpha/2} * sqrt(sigma2 / (n h))."""
    if not 0.0 < alpha < 1.0:
        raise EstimationError(f"alpha must be in (0,1), got {alpha!r}")
    if sigma2 < 0.0:
        raise EstimationError(f"variance estimate must be non-negative, got {sigma2!r}")
    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * math.sqrt(sigma2 / (n * bandwidth_value(h)))
    return tau - half, tau + half


def ipcw_mean_difference(dataset: Dataset) -> float:
    """Difference of IPCW-weighted group mean failure times, ignoring marks.

    This is the estimate an analysis gets by dropping the mark dimension
    entirely; effects that flip sign across marks can average to zero here
    while the mark-specific contrast is far from zero everywhere.
    """
    weights, _ = ipcw_weights(dataset)
    idx1 = dataset.arm_indices(1)
    idx0 = dataset.arm_indices(0)
    return float(np.sum(weights[idx1]) / idx1.size - np.sum(weights[idx0]) / idx0.size)


def _resolve_bandwidth(dataset: Dataset, bandwidth, varpi: float) -> Bandwidth:
    if bandwidth is None:
        return rule_of_thumb_bandwidth(dataset.observed_marks(), varpi=varpi)
    if isinstance(bandwidth, Bandwidth):
        return bandwidth
    return Bandwidth(h=bandwidth_value(bandwidth))


def _estimate_with_terms(dataset: Dataset, grid: EvaluationGrid, *,
                         alpha: float = 0.05, bandwidth=None, varpi: float = 1.0,
                         kernel: KernelSpec = EPANECHNIKOV,
                         ) -> tuple[EstimateGrid, np.ndarray]:
    """Estimates on the grid plus the subject-by-point contribution matrix.

    The matrix is what the multiplier resampling reuses, so it is computed
    once here and shared.
    """
    if not 0.0 < alpha < 1.0:
        raise EstimationError(f"alpha must be in (0,1), got {alpha!r}")
    if dataset.n0 == 0 or dataset.n1 == 0:
        raise EstimationError(f"both treatment groups must be non-empty "
                              f"(n0={dataset.n0}, n1={dataset.n1})")
    bw = _resolve_bandwidth(dataset, bandwidth, varpi)
    weights, _ = ipcw_weights(dataset)
    theta = _kernel_terms(dataset, weights, grid.points, bw, kernel)

    idx1 = dataset.arm_indices(1)
    idx0 = dataset.arm_indices(0)
    tau1 = theta[idx1].sum(axis=0) / dataset.n1
    tau0 = theta[idx0].sum(axis=0) / dataset.n0
    tau = tau1 - tau0
    nh = dataset.n * bw.h
    sigma2 = nh * (
        (theta[idx1] ** 2).sum(axis=0) / dataset.n1**2
        + (theta[idx0] ** 2).sum(axis=0) / dataset.n0**2
    )

    in_window = np.abs(
        np.where(dataset.delta == 1, dataset.mark, np.inf)[:, None] - grid.points[None, :]
    ) < bw.h
    events1 = (in_window[idx1]).sum(axis=0).astype(np.int64)
    events0 = (in_window[idx0]).sum(axis=0).astype(np.int64)
    flagged = (events1 + events0) == 0

    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * np.sqrt(sigma2 / nh)
    est = EstimateGrid(
        points=grid.points, tau1=tau1, tau0=tau0, tau=tau, sigma2=sigma2,
        ci_lower=tau - half, ci_upper=tau + half,
        events1=events1, events0=events0, flagged=flagged,
        bandwidth=bw, alpha=alpha, n=dataset.n, n0=dataset.n0, n1=dataset.n1,
    )
    return est, theta


def estimate_on_grid(dataset: Dataset, grid: EvaluationGrid, *, alpha: float = 0.05,
                     bandwidth=None, varpi: float = 1.0,
                     kernel: KernelSpec = EPANECHNIKOV) -> EstimateGrid:
    """Estimate tau_1, tau_0, tau, sigma2 and pointwise intervals on a grid.

    Parameters
    ----------
    dataset : Dataset
        Validated marked survival data with both arms non-empty.
    grid : EvaluationGrid
        Mark values to evaluate at; output rows follow grid order.
    alpha : float
        Pointwise miscoverage level for the confidence intervals.
    bandwidth : Bandwidth, float, or None
        Explicit bandwidth; None selects the rule of thumb with scale
        ``varpi`` from the observed marks of both arms pooled.

    Grid points whose window (v - h, v + h) contains no observed event in
    either arm are flagged, not errors; they carry tau = 0, sigma2 = 0.
    """
    est, _ = _estimate_with_terms(
        dataset, grid, alpha=alpha, bandwidth=bandwidth, varpi=varpi, kernel=kernel
    )
    return est
