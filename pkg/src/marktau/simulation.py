"""Monte Carlo engine: data generation, censoring calibration, and study drivers.

The generating model draws treatment A ~ Bernoulli(p_treat), a latent mark
V ~ Uniform[0,1], a residual from a standard normal truncated to [-1, 1],
and sets the failure time to the arm's mean curve at V plus the residual.
Censoring is exponential with an arm-specific mean, calibrated by bisection
so that roughly a target fraction of subjects is censored. The mark is
observed only on uncensored subjects.

Mean curves:

    control:  3 - 2 sin(2 pi v)
    treated:  c1 + c2 (1 - v) + c3 sin(2 pi v)

so the true contrast is (c1 - 3) + c2 (1 - v) + (c3 + 2) sin(2 pi v); the
contrast vanishes identically at (c1, c2, c3) = (3, 0, -2).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data_model import Dataset, MarkInterval
from .estimator import EvaluationGrid, _estimate_with_terms
from .inference import TestConfig, _test_from_estimate, multiplier_draws

__all__ = [
    "SimulationError",
    "Scenario",
    "MetricsTable",
    "PowerTable",
    "control_curve",
    "treated_curve",
    "true_tau",
    "truncated_std_normal",
    "generate_dataset",
    "calibrate_censoring",
    "resolve_censoring",
    "run_replications",
    "size_power_curve",
]

# Seed-space tags: calibration uses (0, arm), replication r uses (1, r).
_CALIBRATION_SPACE = 0
_REPLICATION_SPACE = 1


class SimulationError(ValueError):
    """Invalid scenario configuration or a failed calibration."""


@dataclass(frozen=True)
class Scenario:
    """One simulation configuration; all randomness derives from ``seed``.

    ``censor_mean0``/``censor_mean1`` of None mean "calibrate to
    ``censor_target``"; :func:`resolve_censoring` fills them in.
    """

    c1: float
    c2: float
    c3: float
    n: int
    p_treat: float = 2.0 / 3.0
    censor_mean0: float | None = None
    censor_mean1: float | None = None
    censor_target: float = 0.4
    interval: MarkInterval = MarkInterval(0.1, 0.9)
    grid_points: int = 20
    grid: EvaluationGrid | None = None
    reps: int = 500
    seed: int = 0
    alpha: float = 0.05
    varpi: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise SimulationError(f"n must be >= 2, got {self.n}")
        if not 0.0 < self.p_treat < 1.0:
            raise SimulationError(f"p_treat must be in (0,1), got {self.p_treat!r}")
        if self.reps < 1:
            raise SimulationError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise SimulationError(f"alpha must be in (0,1), got {self.alpha!r}")
        for mu in (self.censor_mean0, self.censor_mean1):
            if mu is not None and not mu > 0.0:
                raise SimulationError(f"censoring means must be positive, got {mu!r}")
        if not 0.0 < self.censor_target < 1.0:
            raise SimulationError(
                "censoring target must be strictly inside (0,1); "
                f"got {self.censor_target!r} and 0 is unreachable under "
                "exponential censoring"
            )

    def resolve_grid(self) -> EvaluationGrid:
        if self.grid is not None:
            return self.grid
        return EvaluationGrid.evenly_spaced(self.interval, self.grid_points)


def control_curve(v):
    """Mean failure time of the control arm at mark v."""
    v = np.asarray(v, dtype=float)
    out = 3.0 - 2.0 * np.sin(2.0 * np.pi * v)
    return float(out) if out.ndim == 0 else out


def treated_curve(scenario: Scenario, v):
    """Mean failure time of the treated arm at mark v."""
    v = np.asarray(v, dtype=float)
    out = scenario.c1 + scenario.c2 * (1.0 - v) + scenario.c3 * np.sin(2.0 * np.pi * v)
    return float(out) if out.ndim == 0 else out


def true_tau(scenario: Scenario, v):
    """True contrast (c1 - 3) + c2 (1 - v) + (c3 + 2) sin(2 pi v)."""
    v = np.asarray(v, dtype=float)
    out = (
        (scenario.c1 - 3.0)
        + scenario.c2 * (1.0 - v)
        + (scenario.c3 + 2.0) * np.sin(2.0 * np.pi * v)
    )
    return float(out) if out.ndim == 0 else out


def truncated_std_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal conditioned on [-1, 1], by rejection (acceptance ~ 0.683)."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = rng.standard_normal(max(16, int(need * 1.6) + 8))
        keep = batch[np.abs(batch) <= 1.0]
        take = min(keep.size, need)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def generate_dataset(scenario: Scenario, rng: np.random.Generator) -> Dataset:
    """Draw one dataset of size scenario.n from the generating model.

    Requires resolved censoring means (see :func:`resolve_censoring`). Marks
    are recorded only where the failure is observed. Fails if the configured
    coefficients produce a negative failure time.
    """
    mu0, mu1 = scenario.censor_mean0, scenario.censor_mean1
    if mu0 is None or mu1 is None:
        raise SimulationError(
            "censoring means are unresolved; call resolve_censoring() first"
        )
    n = scenario.n
    arm = (rng.random(n) < scenario.p_treat).astype(np.int64)
    v = rng.random(n)
    eps = truncated_std_normal(rng, n)
    t = np.where(arm == 1, treated_curve(scenario, v), control_curve(v)) + eps
    if np.any(t < 0.0):
        raise SimulationError(
            "generating model produced a negative failure time; "
            "check the coefficient configuration"
        )
    c = rng.exponential(np.where(arm == 1, mu1, mu0))
    delta = (t <= c).astype(np.int64)
    y = np.minimum(t, c)
    mark = np.where(delta == 1, v, np.nan)
    return Dataset.from_arrays(y, delta, mark, arm)


def calibrate_censoring(scenario: Scenario, target: float | None = None, *,
                        mc_draws: int = 200_000, tol: float = 0.005,
                        ) -> tuple[float, float]:
    """Per-arm exponential censoring means hitting the target censoring rate.

    For each arm, one Monte Carlo set of (V, residual, unit-exponential)
    draws is held fixed while the mean is bisected; the estimated censoring
    rate is then monotone in the mean, so bisection is exact up to the MC
    grid. Deterministic given ``scenario.seed``. Fails when the final rate
    misses the target by more than ``tol`` (0.5 percentage points).
    """
    if target is None:
        target = scenario.censor_target
    if not 0.0 < target < 1.0:
        raise SimulationError(
            f"target censoring rate must be in (0,1), got {target!r} (0 is unreachable "
            "under exponential censoring)"
        )
    if mc_draws < 100_000:
        raise SimulationError(f"calibration needs >= 100000 draws, got {mc_draws}")
    means = []
    for arm in (0, 1):
        ss = np.random.SeedSequence(entropy=scenario.seed,
                                    spawn_key=(_CALIBRATION_SPACE, arm))
        rng = np.random.default_rng(ss)
        v = rng.random(mc_draws)
        eps = truncated_std_normal(rng, mc_draws)
        t = (treated_curve(scenario, v) if arm == 1 else control_curve(v)) + eps
        unit_exp = rng.exponential(1.0, mc_draws)

        def rate(mu: float) -> float:
            # censored exactly when C = mu * E falls strictly below T
            return np.count_nonzero(mu * unit_exp < t) / mc_draws

        lo, hi = 1e-3, 8.0
        while rate(hi) > target:
            hi *= 4.0
            if hi > 1e9:
                raise SimulationError("calibration bracket blew up; target too small?")
        while rate(lo) < target:
            lo /= 4.0
            if lo < 1e-12:
                raise SimulationError("calibration bracket collapsed; target too large?")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if rate(mid) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-10 * max(1.0, hi):
                break
        mu = 0.5 * (lo + hi)
        achieved = rate(mu)
        if abs(achieved - target) > tol:
            raise SimulationError(
                f"calibration for arm {arm} converged to rate {achieved:.4f}, "
                f"more than {tol:.3f} from target {target:.3f}"
            )
        means.append(mu)
    return means[0], means[1]


def resolve_censoring(scenario: Scenario) -> Scenario:
    """Fill in any unresolved censoring means by calibration."""
    if scenario.censor_mean0 is not None and scenario.censor_mean1 is not None:
        return scenario
    mu0, mu1 = calibrate_censoring(scenario)
    return replace(
        scenario,
        censor_mean0=scenario.censor_mean0 if scenario.censor_mean0 is not None else mu0,
        censor_mean1=scenario.censor_mean1 if scenario.censor_mean1 is not None else mu1,
    )


def _replication_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(_REPLICATION_SPACE, rep))


@dataclass(frozen=True, eq=False)
class MetricsTable:
    """Per-grid-point bias, sd-ratio and interval coverage across replications.

    ``ratio`` is the mean estimated standard deviation of tau over the
    empirical standard deviation of the replicated estimates; NaN (with a
    warning at build time) when only one replication was run. ``*_se`` are
    Monte Carlo standard errors; the ratio one is a delta-method
    approximation.
    """

    points: np.ndarray
    true_tau: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    ratio: np.ndarray
    ratio_se: np.ndarray
    coverage: np.ndarray
    coverage_se: np.ndarray
    reps: int
    n: int


def _metrics_rep(args: tuple[Scenario, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    scenario, rep = args
    grid = scenario.resolve_grid()
    rng = np.random.default_rng(_replication_seed(scenario.seed, rep).spawn(2)[0])
    dataset = generate_dataset(scenario, rng)
    est, _ = _estimate_with_terms(dataset, grid, alpha=scenario.alpha,
                                  varpi=scenario.varpi)
    sd_hat = np.sqrt(est.sigma2 / est.nh)
    truth = true_tau(scenario, grid.points)
    covered = (est.ci_lower <= truth) & (truth <= est.ci_upper)
    return est.tau, sd_hat, covered


def _map_replications(worker, items, workers: int, reps: int):
    if workers <= 1:
        return [worker(item) for item in items]
    chunk = max(1, reps // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, items, chunksize=chunk))


def run_replications(scenario: Scenario, *, workers: int = 1) -> MetricsTable:
    """Replicate estimation under a scenario and aggregate quality metrics.

    Replication r draws its dataset from a stream derived from
    (scenario.seed, r), so the table is identical for any worker count;
    aggregation runs in replication order.
    """
    scenario = resolve_censoring(scenario)
    grid = scenario.resolve_grid()
    rows = _map_replications(
        _metrics_rep, [(scenario, r) for r in range(scenario.reps)],
        workers, scenario.reps,
    )
    taus = np.stack([row[0] for row in rows])
    sds = np.stack([row[1] for row in rows])
    covered = np.stack([row[2] for row in rows])
    reps = scenario.reps
    truth = true_tau(scenario, grid.points)

    bias = taus.mean(axis=0) - truth
    coverage = covered.mean(axis=0)
    coverage_se = np.sqrt(coverage * (1.0 - coverage) / reps)
    if reps < 2:
        warnings.warn("ratio requires at least 2 replications; reporting NaN")
        nan = np.full(grid.points.size, np.nan)
        return MetricsTable(
            points=grid.points, true_tau=truth, bias=bias, bias_se=nan.copy(),
            ratio=nan.copy(), ratio_se=nan.copy(), coverage=coverage,
            coverage_se=coverage_se, reps=reps, n=scenario.n,
        )
    emp_sd = taus.std(axis=0, ddof=1)
    bias_se = emp_sd / math.sqrt(reps)
    mean_sd = sds.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = mean_sd / emp_sd
        # delta method, treating the replications as iid and the estimated
        # sd as roughly chi-distributed
        ratio_se = ratio * np.sqrt(
            sds.var(axis=0, ddof=1) / reps / mean_sd**2 + 1.0 / (2.0 * (reps - 1))
        )
    return MetricsTable(
        points=grid.points, true_tau=truth, bias=bias, bias_se=bias_se,
        ratio=ratio, ratio_se=ratio_se, coverage=coverage,
        coverage_se=coverage_se, reps=reps, n=scenario.n,
    )


@dataclass(frozen=True, eq=False)
class PowerTable:
    """Rejection rates of one test kind across a sweep of c3 values."""

    kind: str
    c3: np.ndarray
    rate: np.ndarray
    se: np.ndarray
    rejections: np.ndarray
    reps: int
    n: int
    resamples: int
    alpha: float


def _test_rep(args: tuple[Scenario, int, str, int]) -> bool:
    scenario, rep, kind, resamples = args
    grid = scenario.resolve_grid()
    data_ss, mult_ss = _replication_seed(scenario.seed, rep).spawn(2)
    dataset = generate_dataset(scenario, np.random.default_rng(data_ss))
    est, theta = _estimate_with_terms(dataset, grid, alpha=scenario.alpha,
                                      varpi=scenario.varpi)
    draws = multiplier_draws(dataset.n, resamples, mult_ss)
    config = TestConfig(grid=grid, resamples=resamples, alpha=scenario.alpha,
                        seed=scenario.seed)
    return bool(_test_from_estimate(kind, dataset, est, theta, draws, config).reject)


def rejection_rate(scenario: Scenario, kind: str, *, resamples: int = 500,
                   workers: int = 1) -> tuple[float, int]:
    """Fraction of replications on which the test rejects, with the raw count."""
    scenario = resolve_censoring(scenario)
    flags = _map_replications(
        _test_rep, [(scenario, r, kind, resamples) for r in range(scenario.reps)],
        workers, scenario.reps,
    )
    count = int(np.count_nonzero(flags))
    return count / scenario.reps, count


def size_power_curve(scenario: Scenario, c3_values, kind: str, *,
                     resamples: int = 500, workers: int = 1) -> PowerTable:
    """Rejection rate of one test across c3 values, recalibrating per point.

    Any censoring mean left unresolved on the base scenario is recalibrated
    for every c3, since the failure-time scale moves with the coefficients.
    """
    c3_values = np.asarray(c3_values, dtype=float)
    if c3_values.size == 0:
        raise SimulationError("need at least one c3 value")
    rates = np.empty(c3_values.size)
    rejections = np.empty(c3_values.size, dtype=np.int64)
    for k, c3 in enumerate(c3_values):
        rates[k], rejections[k] = rejection_rate(
            replace(scenario, c3=float(c3)), kind,
            resamples=resamples, workers=workers,
        )
    se = np.sqrt(rates * (1.0 - rates) / scenario.reps)
    return PowerTable(
        kind=kind, c3=c3_values, rate=rates, se=se, rejections=rejections,
        reps=scenario.reps, n=scenario.n, resamples=resamples, alpha=scenario.alpha,
    )
