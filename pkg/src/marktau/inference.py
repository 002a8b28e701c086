"""Hypothesis tests for mark-specific effects via Gaussian multiplier resampling.

Two null hypotheses about tau(v) on the evaluation grid:

* global: tau(v) = 0 at every grid point (no effect at any mark);
* constancy: tau(v) does not vary with v (a flat, possibly nonzero, effect).

Both statistics are maxima of studentized squares, and both critical values
come from resampling the subject contributions with independent standard
normal multipliers, holding the data fixed. Grid points flagged by the
estimator (or with a zero variance estimate) are excluded from the maxima;
constancy pairs with a zero pair-variance are skipped with a diagnostic
count rather than failing the test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data_model import Dataset
from .estimator import (
    EstimateGrid,
    EstimationError,
    EvaluationGrid,
    _estimate_with_terms,
)
from .kernels import EPANECHNIKOV, Bandwidth, KernelSpec

__all__ = [
    "InferenceError",
    "TEST_KINDS",
    "TestConfig",
    "TestResult",
    "multiplier_draws",
    "xi_matrix",
    "global_statistic",
    "global_resample",
    "pair_variance_table",
    "constancy_statistic",
    "constancy_resample",
    "critical_value",
    "p_value",
    "run_test",
]

TEST_KINDS = ("global", "constancy")


class InferenceError(ValueError):
    """Invalid test configuration or a grid unusable for the requested test."""


@dataclass(frozen=True)
class TestConfig:
    """Configuration for one test run.

    ``pi_design`` optionally replaces the empirical treated fraction in the
    resampling weights with the design randomization probability.
    """

    grid: EvaluationGrid
    resamples: int = 500
    alpha: float = 0.05
    seed: int = 0
    bandwidth: Bandwidth | float | None = None
    varpi: float = 1.0
    pi_design: float | None = None
    add_one_correction: bool = False
    kernel: KernelSpec = EPANECHNIKOV

    def __post_init__(self) -> None:
        if self.resamples < 1:
            raise InferenceError(f"resamples must be >= 1, got {self.resamples}")
        if not 0.0 < self.alpha < 1.0:
            raise InferenceError(f"alpha must be in (0,1), got {self.alpha!r}")
        if self.pi_design is not None and not 0.0 < self.pi_design < 1.0:
            raise InferenceError(f"pi_design must be in (0,1), got {self.pi_design!r}")


@dataclass(frozen=True, eq=False)
class TestResult:
    """Observed statistic, resampling reference, and the accept/reject call.

    ``resampled`` holds the sorted resampled statistics. ``excluded_points``
    are grid values left out of the maxima (no events in the kernel window,
    or a zero variance estimate); ``skipped_pairs`` counts constancy pairs
    dropped for a zero pair-variance.
    """

    kind: str
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    resampled: np.ndarray
    alpha: float
    resamples: int
    seed: int
    excluded_points: tuple[float, ...]
    skipped_pairs: int
    estimate: EstimateGrid


def multiplier_draws(n: int, resamples: int, seed) -> np.ndarray:
    """Standard normal multipliers, one row per draw, shape (resamples, n).

    Each draw's row comes from its own child stream of the master seed, so
    any execution schedule over draws sees identical multipliers.
    """
    if n < 1 or resamples < 1:
        raise InferenceError("need n >= 1 subjects and resamples >= 1")
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty((resamples, n))
    for b, child in enumerate(base.spawn(resamples)):
        out[b] = np.random.default_rng(child).standard_normal(n)
    return out


def xi_matrix(theta: np.ndarray, arm: np.ndarray, pi_hat: float) -> np.ndarray:
    """Signed, inverse-assignment-weighted contributions used by the resampler.

    Row i is theta_i / pi_hat for treated subjects and -theta_i / (1 - pi_hat)
    for controls, so that sum_i xi_i / n reproduces the treatment contrast of
    group means.
    """
    if not 0.0 < pi_hat < 1.0:
        raise InferenceError(f"treated fraction must be in (0,1), got {pi_hat!r}")
    sign = np.where(arm == 1, 1.0 / pi_hat, -1.0 / (1.0 - pi_hat))
    return sign[:, None] * theta


def _usable_points(est: EstimateGrid) -> np.ndarray:
    return ~est.flagged & (est.sigma2 > 0.0)


def global_statistic(est: EstimateGrid) -> float:
    """max over usable grid points of (n h) * tau(v)^2 / sigma2(v)."""
    usable = _usable_points(est)
    if not np.any(usable):
        raise InferenceError("no usable grid points: every point is flagged")
    values = est.nh * est.tau[usable] ** 2 / est.sigma2[usable]
    return float(np.max(values))


def global_resample(est: EstimateGrid, theta: np.ndarray, arm: np.ndarray,
                    draws: np.ndarray, pi_hat: float) -> np.ndarray:
    """Resampled analogue of the global statistic, one value per draw.

    Each draw replaces tau(v) with the multiplier-weighted mean of subject
    contributions and studentizes by the same sigma2(v).
    """
    usable = _usable_points(est)
    if not np.any(usable):
        raise InferenceError("no usable grid points: every point is flagged")
    xi = xi_matrix(theta, arm, pi_hat)
    sums = draws @ xi[:, usable]  # (B, usable points)
    scaled = (est.h / est.n) * sums**2 / est.sigma2[usable]
    return scaled.max(axis=1)


def pair_variance_table(theta: np.ndarray, arm: np.ndarray, n: int, h) -> np.ndarray:
    """Variance estimates for sqrt(n h) * (tau(v1) - tau(v2)), all grid pairs.

    Entry (j, k) is (n h) * sum over arms of n_a^(-2) * sum_i of
    (theta_i(v_j) - theta_i(v_k))^2, computed via per-arm Gram matrices.
    """
    hval = h.h if isinstance(h, Bandwidth) else float(h)
    g = theta.shape[1]
    table = np.zeros((g, g))
    for a in (0, 1):
        rows = theta[arm == a]
        n_a = rows.shape[0]
        if n_a == 0:
            raise InferenceError(f"treatment group {a} is empty")
        gram = rows.T @ rows
        diag = np.diag(gram)
        table += (diag[:, None] + diag[None, :] - 2.0 * gram) / n_a**2
    return n * hval * table


def _constancy_pairs(est: EstimateGrid, zeta: np.ndarray,
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Index pairs (j < k) of usable points with positive pair-variance."""
    usable = np.flatnonzero(_usable_points(est))
    if usable.size < 2:
        raise InferenceError(
            f"constancy test needs at least 2 usable grid points, got {usable.size}"
        )
    jj, kk = np.triu_indices(usable.size, k=1)
    j_idx, k_idx = usable[jj], usable[kk]
    zeta_pairs = zeta[j_idx, k_idx]
    keep = zeta_pairs > 0.0
    skipped = int(np.count_nonzero(~keep))
    if not np.any(keep):
        raise InferenceError("every constancy pair has zero pair-variance")
    return j_idx[keep], k_idx[keep], zeta_pairs[keep], skipped


def constancy_statistic(est: EstimateGrid, zeta: np.ndarray) -> float:
    """max over usable pairs v1 < v2 of (n h) * (tau(v1) - tau(v2))^2 / zeta."""
    j_idx, k_idx, zeta_pairs, _ = _constancy_pairs(est, zeta)
    diffs = est.tau[j_idx] - est.tau[k_idx]
    return float(np.max(est.nh * diffs**2 / zeta_pairs))


def constancy_resample(est: EstimateGrid, theta: np.ndarray, arm: np.ndarray,
                       draws: np.ndarray, pi_hat: float, zeta: np.ndarray) -> np.ndarray:
    """Resampled analogue of the constancy statistic, one value per draw."""
    j_idx, k_idx, zeta_pairs, _ = _constancy_pairs(est, zeta)
    xi = xi_matrix(theta, arm, pi_hat)
    sums = draws @ xi  # (B, g); pair differences are differences of columns
    diffs = sums[:, j_idx] - sums[:, k_idx]
    scaled = (est.h / est.n) * diffs**2 / zeta_pairs
    return scaled.max(axis=1)


def critical_value(resampled: np.ndarray, alpha: float) -> float:
    """The k-th smallest resampled value with k = ceil((1 - alpha) * B).

    With B = 5000 and alpha = 0.05 this is the 4750th order statistic. The
    product is rounded at the 9th decimal before the ceiling so that binary
    float noise cannot shift the order-statistic index.
    """
    if not 0.0 < alpha < 1.0:
        raise InferenceError(f"alpha must be in (0,1), got {alpha!r}")
    values = np.sort(np.asarray(resampled, dtype=float))
    if values.size == 0:
        raise InferenceError("no resampled values")
    k = math.ceil(round((1.0 - alpha) * values.size, 9))
    k = min(max(k, 1), values.size)
    return float(values[k - 1])


def p_value(resampled: np.ndarray, statistic: float, add_one_correction: bool = False,
            ) -> float:
    """Proportion of resampled values at or above the observed statistic.

    With ``add_one_correction`` both numerator and denominator are increased
    by one, which keeps the p-value strictly positive.
    """
    resampled = np.asarray(resampled, dtype=float)
    count = int(np.count_nonzero(resampled >= statistic))
    if add_one_correction:
        return (count + 1) / (resampled.size + 1)
    return count / resampled.size


def _test_from_estimate(kind: str, dataset: Dataset, est: EstimateGrid,
                        theta: np.ndarray, draws: np.ndarray, config: TestConfig,
                        ) -> TestResult:
    pi = config.pi_design if config.pi_design is not None else dataset.pi_hat
    if not 0.0 < pi < 1.0:
        raise InferenceError(f"treated fraction must be in (0,1), got {pi!r}")
    skipped_pairs = 0
    if kind == "global":
        stat = global_statistic(est)
        resampled = global_resample(est, theta, dataset.arm, draws, pi)
    elif kind == "constancy":
        zeta = pair_variance_table(theta, dataset.arm, dataset.n, est.bandwidth)
        stat = constancy_statistic(est, zeta)
        skipped_pairs = _constancy_pairs(est, zeta)[3]
        resampled = constancy_resample(est, theta, dataset.arm, draws, pi, zeta)
    else:
        raise InferenceError(f"unknown test kind {kind!r}; expected one of {TEST_KINDS}")
    resampled = np.sort(resampled)
    crit = critical_value(resampled, config.alpha)
    pval = p_value(resampled, stat, config.add_one_correction)
    excluded = tuple(float(v) for v in est.points[~_usable_points(est)])
    return TestResult(
        kind=kind, statistic=stat, critical_value=crit, p_value=pval,
        reject=stat > crit, resampled=resampled, alpha=config.alpha,
        resamples=int(draws.shape[0]), seed=config.seed,
        excluded_points=excluded, skipped_pairs=skipped_pairs, estimate=est,
    )


def run_test(kind: str, dataset: Dataset, config: TestConfig) -> TestResult:
    """Run one test end to end: estimate, resample, compare, report.

    Deterministic given (dataset, config): the multiplier draws derive from
    ``config.seed`` alone. The null is rejected when the observed statistic
    exceeds the (1 - alpha) resampling critical value.
    """
    if kind not in TEST_KINDS:
        raise InferenceError(f"unknown test kind {kind!r}; expected one of {TEST_KINDS}")
    est, theta = _estimate_with_terms(
        dataset, config.grid, alpha=config.alpha,
        bandwidth=config.bandwidth, varpi=config.varpi, kernel=config.kernel,
    )
    draws = multiplier_draws(dataset.n, config.resamples, config.seed)
    return _test_from_estimate(kind, dataset, est, theta, draws, config)
