"""Brute-force reference implementations that pin the closed-form code paths.

Everything here trades speed for obviousness: explicit loops, no shared
helpers with the package, and independent formulas wherever possible.
"""

import math


def product_limit_censoring(y, delta, t):
    """P(C >= t) by explicit risk-set iteration, left-continuous in t.

    Censored rows (delta == 0) are the events; the risk set at time s is
    everyone with y >= s, so tied failures are still at risk.
    """
    y = [float(v) for v in y]
    delta = [int(d) for d in delta]
    value = 1.0
    for s in sorted({yi for yi, di in zip(y, delta) if di == 0}):
        if s >= t:
            break
        at_risk = sum(1 for yi in y if yi >= s)
        events = sum(1 for yi, di in zip(y, delta) if yi == s and di == 0)
        value *= (at_risk - events) / at_risk
    return value


def _epanechnikov(x):
    ax = abs(x)
    return 0.0 if ax >= 1.0 else 0.75 * (1.0 - ax * ax)


def stieltjes_group_mean(y, delta, mark, surv_evaluate, v, h, follow_up):
    """Group-level effect at v by double Stieltjes integration, one subject at a time.

    Iterates over the candidate jump set (all observed times crossed with all
    observed marks), measures each point's mass of the subject's counting
    process N_i(t, u) = delta_i * 1{y_i <= t, mark_i <= u} by
    inclusion-exclusion, and sums integrand * mass over the rectangle
    [0, follow_up] x [0, 1]. The closed form in the package must agree to
    near machine precision.
    """
    n = len(y)
    times = sorted({float(t) for t in y})
    marks = sorted({float(u) for u, d in zip(mark, delta) if int(d) == 1})
    total = 0.0
    for i in range(n):
        if int(delta[i]) != 1:
            continue

        def process(t, u):
            return 1.0 if (y[i] <= t and mark[i] <= u) else 0.0

        for j, t in enumerate(times):
            if t > follow_up:
                continue
            t_prev = times[j - 1] if j > 0 else times[0] - 1.0
            for k, u in enumerate(marks):
                u_prev = marks[k - 1] if k > 0 else marks[0] - 1.0
                mass = (
                    process(t, u)
                    - process(t_prev, u)
                    - process(t, u_prev)
                    + process(t_prev, u_prev)
                )
                if mass != 0.0:
                    total += mass * (t / surv_evaluate(t)) * _epanechnikov((u - v) / h) / h
    return total / n


def normal_quantile_bisect(p, tol=1e-13):
    """Standard normal quantile by bisection on the erfc-based CDF."""
    def cdf(z):
        return 0.5 * math.erfc(-z / math.sqrt(2.0))

    lo, hi = -12.0, 12.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
