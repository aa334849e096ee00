"""Density, distribution function and quantiles of ``mu1 [+] mu2``.

The density is ``rho(x) = Im m(x + i0) / pi`` from extrapolated boundary values.
The distribution function integrates ``rho`` in the angle variable
``x = c - (W/2) cos(theta)`` over ``[E_-, E_+]``; the Jacobian ``sin(theta)``
cancels the square-root edges so the integrand is smooth and a cubic-spline
antiderivative is accurate to near machine precision.
"""
from __future__ import annotations

import csv
import functools
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .edge import EdgeReport, _shift_point_mass, locate_lower_edge
from .errors import MeasureError
from .measure import CONTINUOUS, SpectralMeasure, quantile
from .subordination import SolverConfig, boundary_array

#: extrapolation error above which a density value is flagged unresolved
RESOLUTION_TOL = 1e-6
#: angle nodes used for the distribution function
CDF_NODES = 2049


@dataclass(frozen=True)
class DensityTable:
    """Boundary values and density on a grid."""

    x: np.ndarray
    rho: np.ndarray
    im_m: np.ndarray
    re_m: np.ndarray
    resolved: np.ndarray
    mass: float
    eta_floor: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "rho", "im_m", "re_m", "resolved"])
        for row in zip(self.x, self.rho, self.im_m, self.re_m, self.resolved):
            w.writerow([repr(float(v)) for v in row[:4]] + [int(row[4])])
        return buf.getvalue()


@dataclass(frozen=True)
class QuantileTable:
    """``gamma_j`` for ``j = 1..N``; ``failed`` lists indices whose bisection did not settle."""

    N: int
    gamma: np.ndarray
    source: str
    failed: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "gamma_j"])
        for j, g in enumerate(self.gamma, start=1):
            w.writerow([j, repr(float(g))])
        return buf.getvalue()


def _cosine_grid(a, b, n):
    theta = np.linspace(0.0, np.pi, n)
    return 0.5 * (a + b) - 0.5 * (b - a) * np.cos(theta)


def density_grid(mu1: SpectralMeasure, mu2: SpectralMeasure, grid=None,
                 config: SolverConfig | None = None, n_points: int = 2048) -> DensityTable:
    """Density on ``grid``; default is ``n_points`` cosine-clustered nodes on
    ``[E_- - 0.1, E_+ + 0.1]``.

    Points whose extrapolation error exceeds ``1e-6`` (or whose ladder was
    unstable) are flagged ``resolved = False`` rather than raising.
    """
    cfg = config or SolverConfig()
    if grid is None:
        rep = locate_lower_edge(mu1, mu2, cfg)
        grid = _cosine_grid(rep.E_minus - 0.1, rep.E_plus + 0.1, n_points)
    x = np.asarray(grid, float)
    if x.size > 1 and np.any(np.diff(x) <= 0):
        raise MeasureError("density grid must be strictly increasing")
    pairs, stable = boundary_array(mu1, mu2, x, cfg)
    im, re = pairs.m.imag, pairs.m.real
    rho = im / np.pi
    resolved = stable & (pairs.extrapolation_error <= RESOLUTION_TOL)
    mass = float(np.trapezoid(rho, x)) if x.size > 1 else 0.0
    return DensityTable(x, rho, im, re, resolved, mass, float(cfg.ladder()[-1]))


class ConvolutionLaw:
    """Distribution function and quantiles of ``mu1 [+] mu2``.

    Built once per measure pair (see :func:`convolution_law`); evaluation is
    then a spline lookup.
    """

    def __init__(self, mu1: SpectralMeasure, mu2: SpectralMeasure,
                 config: SolverConfig | None = None, nodes: int = CDF_NODES):
        self.config = cfg = config or SolverConfig()
        self.report: EdgeReport = locate_lower_edge(mu1, mu2, cfg)
        self.source = ("continuous pair" if mu1.kind == CONTINUOUS and mu2.kind == CONTINUOUS
                       else "discretized pair")
        lo, hi = self.report.E_minus, self.report.E_plus
        self.lower, self.upper = lo, hi
        self._mid, self._half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        theta = np.linspace(0.0, np.pi, nodes)
        x = self._mid - self._half * np.cos(theta[1:-1])
        pairs, stable = boundary_array(mu1, mu2, x, cfg)
        rho = np.maximum(pairs.m.imag, 0.0) / np.pi
        g = np.zeros(nodes)
        g[1:-1] = rho * self._half * np.sin(theta[1:-1])
        self.unresolved = int(np.count_nonzero(~stable
                                               | (pairs.extrapolation_error > RESOLUTION_TOL)))
        self._theta = theta
        self._C = CubicSpline(theta, g).antiderivative()
        self.mass = float(self._C(np.pi))

    def _angle(self, x):
        c = np.clip((self._mid - np.asarray(x, float)) / self._half, -1.0, 1.0)
        return np.arccos(c)

    def cdf(self, x):
        """``mu1 [+] mu2((-inf, x])``; 0 below ``E_-`` and 1 above ``E_+``."""
        xa = np.asarray(x, float)
        v = np.clip(self._C(self._angle(xa)), 0.0, 1.0)
        v = np.where(xa <= self.lower, 0.0, np.where(xa >= self.upper, 1.0, v))
        return float(v) if v.ndim == 0 else v

    def inverse_cdf(self, p) -> np.ndarray:
        """Smallest ``x`` with ``cdf(x) >= p`` for ``p`` in ``(0, 1]``, by bisection in the angle."""
        p = np.atleast_1d(np.asarray(p, float))
        if np.any((p <= 0) | (p > 1)):
            raise MeasureError("levels must lie in (0, 1]")
        a = np.zeros(p.size)
        b = np.full(p.size, np.pi)
        for _ in range(64):
            c = 0.5 * (a + b)
            below = self._C(c) < p
            a = np.where(below, c, a)
            b = np.where(below, b, c)
        x = self._mid - self._half * np.cos(b)
        return np.where(p >= 1.0, self.upper, x)

    def quantiles(self, N: int) -> QuantileTable:
        """``gamma_j = inverse_cdf(j/N)`` for ``j = 1..N``."""
        if N < 1:
            raise MeasureError("N must be positive")
        p = np.arange(1, N + 1) / N
        gamma = np.maximum.accumulate(self.inverse_cdf(p))
        err = np.abs(self.cdf(gamma) - p)
        failed = tuple(int(j) + 1 for j in np.flatnonzero(err[:-1] > 1e-6))
        return QuantileTable(N, gamma, self.source, failed)


class ShiftedLaw(ConvolutionLaw):
    """``mu1 [+] mu2`` when one factor is a point mass: a translate of the other."""

    def __init__(self, mu1: SpectralMeasure, mu2: SpectralMeasure,
                 config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.report = locate_lower_edge(mu1, mu2, self.config)
        a, other = ((mu1.locations[0], mu2) if mu1.is_point_mass
                    else (mu2.locations[0], mu1))
        self._mu = other.shift(a)
        self.source = ("continuous pair" if other.kind == CONTINUOUS
                       else "discretized pair")
        self.lower, self.upper = _shift_point_mass(mu1, mu2)
        self.unresolved = 0
        self.mass = 1.0

    def cdf(self, x):
        v = self._mu.cdf(x)
        return float(v) if np.ndim(v) == 0 else v

    def inverse_cdf(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, float))
        if np.any((p <= 0) | (p > 1)):
            raise MeasureError("levels must lie in (0, 1]")
        return np.atleast_1d(quantile(self._mu, p))


@functools.lru_cache(maxsize=16)
def convolution_law(mu1: SpectralMeasure, mu2: SpectralMeasure,
                    config: SolverConfig | None = None) -> ConvolutionLaw:
    """Cached :class:`ConvolutionLaw` (measures are keyed by identity)."""
    if mu1.is_point_mass or mu2.is_point_mass:
        return ShiftedLaw(mu1, mu2, config)
    return ConvolutionLaw(mu1, mu2, config)


def cdf(mu1: SpectralMeasure, mu2: SpectralMeasure, x, config: SolverConfig | None = None):
    """Distribution function of ``mu1 [+] mu2`` at ``x``."""
    return convolution_law(mu1, mu2, config).cdf(x)


def quantiles(mu1: SpectralMeasure, mu2: SpectralMeasure, N: int,
              config: SolverConfig | None = None) -> QuantileTable:
    """The ``N``-quantiles ``gamma_1 <= ... <= gamma_N`` of ``mu1 [+] mu2``."""
    return convolution_law(mu1, mu2, config).quantiles(N)


def kolmogorov_distance(eigenvalues, mu1: SpectralMeasure, mu2: SpectralMeasure,
                        config: SolverConfig | None = None, law: ConvolutionLaw | None = None) -> float:
    """``sup_x |F_N(x) - F(x)|`` for the empirical distribution of ``eigenvalues``.

    The supremum is attained at a jump, so both one-sided limits are compared.
    """
    lam = np.asarray(eigenvalues, float)
    if lam.ndim != 1 or lam.size == 0:
        raise MeasureError("eigenvalues must be a non-empty 1-d array")
    if np.any(np.diff(lam) < 0):
        raise MeasureError("eigenvalues must be sorted ascending")
    law = law or convolution_law(mu1, mu2, config)
    F = law.cdf(lam)
    n = lam.size
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - F)), np.max(np.abs((i - 1) / n - F))))
