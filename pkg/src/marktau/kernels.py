"""Smoothing kernels, their scaled forms, and the rule-of-thumb bandwidth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "KernelError",
    "KernelSpec",
    "Bandwidth",
    "epanechnikov",
    "EPANECHNIKOV",
    "KERNELS",
    "scaled_kernel",
    "rule_of_thumb_bandwidth",
    "bandwidth_value",
]


class KernelError(ValueError):
    """Invalid kernel or bandwidth configuration."""


def epanechnikov(x):
    """Epanechnikov density 0.75 * (1 - x^2) on (-1, 1), zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric density on [-1, 1] together with its squared integral.

    ``nu0`` is the integral of the squared density, which scales the variance
    of kernel-weighted means. Values are analytic and pinned by quadrature in
    the test suite.
    """

    name: str
    pdf: Callable
    nu0: float


EPANECHNIKOV = KernelSpec(name="epanechnikov", pdf=epanechnikov, nu0=0.6)

KERNELS = {EPANECHNIKOV.name: EPANECHNIKOV}


@dataclass(frozen=True)
class Bandwidth:
    """A bandwidth plus, when rule-of-thumb derived, the pieces it came from."""

    h: float
    varpi: float | None = None
    sigma_v: float | None = None
    m: int | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.h) and self.h > 0.0):
            raise KernelError(f"bandwidth must be positive, got {self.h!r}")


def bandwidth_value(h) -> float:
    """Accept a Bandwidth or a plain positive float; return the float."""
    if isinstance(h, Bandwidth):
        return h.h
    h = float(h)
    if not (math.isfinite(h) and h > 0.0):
        raise KernelError(f"bandwidth must be positive, got {h!r}")
    return h


def scaled_kernel(u, v, h, kernel: KernelSpec = EPANECHNIKOV):
    """K((u - v) / h) / h: the bandwidth-h kernel weight of u at center v.

    Integrates to one in u for any center and any positive bandwidth.
    """
    hval = bandwidth_value(h)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = kernel.pdf((u - v) / hval) / hval
    return float(out) if np.ndim(out) == 0 else out


def rule_of_thumb_bandwidth(observed_marks, varpi: float = 1.0) -> Bandwidth:
    """h = varpi * sd(marks) * m^(-1/4) from the m observed (uncensored) marks.

    The sample standard deviation uses the m - 1 denominator. Fails when
    m < 2 or when all observed marks coincide, since no data-driven scale
    exists; pass an explicit bandwidth in that case.
    """
    marks = np.asarray(observed_marks, dtype=float)
    m = int(marks.size)
    if m < 2:
        raise KernelError(f"need at least 2 observed marks for a bandwidth, got {m}")
    if not np.all(np.isfinite(marks)):
        raise KernelError("observed marks must be finite")
    if not (math.isfinite(varpi) and varpi > 0.0):
        raise KernelError(f"bandwidth scale must be positive, got {varpi!r}")
    sigma_v = float(np.std(marks, ddof=1))
    if sigma_v == 0.0:
        raise KernelError("observed marks have zero variance; supply an explicit bandwidth")
    return Bandwidth(h=varpi * sigma_v * m ** (-0.25), varpi=varpi, sigma_v=sigma_v, m=m)
