"""Spectral measures on the real line and their Stieltjes-type transforms.

Two kinds of probability measure are supported:

* atomic measures ``sum_j w_j delta_{x_j}`` (the empirical spectra ``mu_A``,
  ``mu_B`` of the random-matrix model);
* continuous measures on a single interval ``[lo, hi]`` with density
  proportional to ``p(u) u**t_minus (1-u)**t_plus``, ``u = (x-lo)/(hi-lo)``,
  where ``p`` is a polynomial profile (``1`` for the pure power law).

Continuous transforms use Gauss-Jacobi quadrature matched to the edge
exponents, with node doubling; points too close to the support fall back to
an exact hypergeometric representation evaluated with mpmath.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import mpmath
import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize, special

from .errors import DegenerateTransformError, DomainError, MeasureError

ATOMIC = "atomic"
CONTINUOUS = "continuous"

#: default distance from the support below which real evaluations are refused
STANDOFF = 1e-9
#: successive quadrature levels must agree to this (relative) accuracy
QUAD_TOL = 1e-11
_QUAD_LEVELS = (32, 64, 128, 256, 512, 1024, 2048)
#: normalised distance to [0, 1] below which quadrature is skipped entirely
_NEAR_SUPPORT = 2e-3
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """A probability measure on the real line.

    Use the constructors :func:`atomic`, :func:`power_law` or
    :func:`make_reference_measure` rather than instantiating directly.
    """

    kind: str
    locations: np.ndarray | None = None
    weights: np.ndarray | None = None
    support: tuple[float, float] = (0.0, 1.0)
    t_minus: float = 0.0
    t_plus: float = 0.0
    profile: tuple[float, ...] = (1.0,)
    family: str = ATOMIC
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == ATOMIC:
            x = np.asarray(self.locations, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if x.ndim != 1 or x.shape != w.shape or x.size == 0:
                raise MeasureError("atom locations and weights must be equal-length 1-d arrays")
            if not np.all(np.isfinite(x)) or not np.all(np.isfinite(w)):
                raise MeasureError("atoms must be finite")
            if np.any(w <= 0):
                raise MeasureError("atom weights must be strictly positive")
            if abs(w.sum() - 1.0) > 1e-12:
                raise MeasureError(f"atom weights sum to {w.sum()!r}, not 1 within 1e-12")
            if np.any(np.diff(x) <= 0):
                raise MeasureError("atom locations must be strictly increasing")
            x.setflags(write=False)
            w.setflags(write=False)
            object.__setattr__(self, "locations", x)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "support", (float(x[0]), float(x[-1])))
        elif self.kind == CONTINUOUS:
            lo, hi = map(float, self.support)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise MeasureError(f"support must be a finite interval, got {self.support!r}")
            for name in ("t_minus", "t_plus"):
                t = getattr(self, name)
                if not -1.0 < t < 1.0:
                    raise MeasureError(f"{name}={t} violates -1 < t < 1")
            object.__setattr__(self, "support", (lo, hi))
            object.__setattr__(self, "profile", tuple(float(c) for c in self.profile))
            u = np.linspace(0.0, 1.0, 401)
            if np.any(Polynomial(self.profile)(u) < 0):
                raise MeasureError("density profile must be non-negative on the support")
            if abs(self._mass - 1.0) > 1e-10:
                raise MeasureError("continuous density does not integrate to 1")
        else:
            raise MeasureError(f"unknown measure kind {self.kind!r}")

    # -- basic properties -------------------------------------------------

    @property
    def lower(self) -> float:
        """``inf supp``."""
        return self.support[0]

    @property
    def upper(self) -> float:
        """``sup supp``."""
        return self.support[1]

    @property
    def width(self) -> float:
        return self.support[1] - self.support[0]

    @property
    def is_atomic(self) -> bool:
        return self.kind == ATOMIC

    @property
    def is_point_mass(self) -> bool:
        return self.kind == ATOMIC and self.locations.size == 1

    @cached_property
    def _components(self) -> tuple[np.ndarray, np.ndarray]:
        # density = sum_k pi_k Beta(t_minus + 1 + k, t_plus + 1) in the u variable
        p0, q = self.t_minus + 1.0, self.t_plus + 1.0
        k = np.arange(len(self.profile))
        b = special.beta(p0 + k, q)
        raw = np.asarray(self.profile) * b
        z = _jacobi_normaliser(self.profile, self.t_minus, self.t_plus)
        return p0 + k, raw / z

    @cached_property
    def _mass(self) -> float:
        return float(self._components[1].sum())

    def density(self, x):
        """Density at ``x`` (continuous measures only)."""
        if self.kind != CONTINUOUS:
            raise MeasureError("atomic measures have no density")
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        u = (x - lo) / (hi - lo)
        inside = (u > 0) & (u < 1)
        uc = np.clip(u, 1e-300, 1 - 1e-16)
        z = _jacobi_normaliser(self.profile, self.t_minus, self.t_plus)
        val = Polynomial(self.profile)(uc) * uc**self.t_minus * (1 - uc) ** self.t_plus / z / (hi - lo)
        return np.where(inside, val, 0.0)

    def cdf(self, x):
        """``mu((-inf, x])``, vectorised over ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == ATOMIC:
            cw = np.concatenate([[0.0], np.cumsum(self.weights)])
            idx = np.searchsorted(self.locations, x, side="right")
            return np.minimum(cw[idx], 1.0)
        lo, hi = self.support
        u = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        ps, pis = self._components
        q = self.t_plus + 1.0
        out = sum(pi * special.betainc(p, q, u) for p, pi in zip(ps, pis))
        return np.clip(out, 0.0, 1.0)

    def mean(self) -> float:
        if self.kind == ATOMIC:
            return float(self.locations @ self.weights)
        ps, pis = self._components
        q = self.t_plus + 1.0
        mean_u = float(sum(pi * p / (p + q) for p, pi in zip(ps, pis)))
        return self.lower + self.width * mean_u

    def second_moment(self) -> float:
        if self.kind == ATOMIC:
            return float(self.locations**2 @ self.weights)
        ps, pis = self._components
        q = self.t_plus + 1.0
        eu = sum(pi * p / (p + q) for p, pi in zip(ps, pis))
        eu2 = sum(pi * p * (p + 1) / ((p + q) * (p + q + 1)) for p, pi in zip(ps, pis))
        lo, L = self.lower, self.width
        return float(lo**2 + 2 * lo * L * eu + L**2 * eu2)

    # -- affine images ----------------------------------------------------

    def shift(self, a: float) -> "SpectralMeasure":
        """Push-forward under ``x -> x + a``."""
        if self.kind == ATOMIC:
            return atomic(self.locations + a, self.weights)
        lo, hi = self.support
        return _continuous(lo + a, hi + a, self.t_minus, self.t_plus, self.profile,
                           self.family, self.params)

    def scale(self, s: float) -> "SpectralMeasure":
        """Push-forward under ``x -> s x`` for ``s > 0``."""
        if s <= 0:
            raise MeasureError("dilation factor must be positive")
        if self.kind == ATOMIC:
            return atomic(self.locations * s, self.weights)
        lo, hi = self.support
        return _continuous(lo * s, hi * s, self.t_minus, self.t_plus, self.profile,
                           self.family, self.params)

    def reflect(self) -> "SpectralMeasure":
        """Push-forward under ``x -> -x``; upper edges become lower edges."""
        if self.kind == ATOMIC:
            return atomic(-self.locations[::-1], self.weights[::-1])
        lo, hi = self.support
        flipped = Polynomial(self.profile)(Polynomial([1.0, -1.0]))
        return _continuous(-hi, -lo, self.t_plus, self.t_minus, tuple(flipped.coef),
                           self.family, self.params)

    # -- serialisation ----------------------------------------------------

    def to_spec(self) -> dict:
        """JSON-ready description; atomic measures round-trip bit-exactly."""
        if self.kind == ATOMIC:
            return {"family": "atomic",
                    "atoms": [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]}
        spec = {"family": "power_law", "support": list(self.support),
                "t_minus": self.t_minus, "t_plus": self.t_plus}
        if self.profile != (1.0,):
            spec["profile"] = list(self.profile)
        return spec

    def __repr__(self):
        if self.kind == ATOMIC:
            return f"SpectralMeasure(atomic, n={self.locations.size}, support={self.support})"
        return (f"SpectralMeasure({self.family}, support={self.support}, "
                f"t=({self.t_minus}, {self.t_plus}))")


@dataclass(frozen=True)
class TransformValue:
    """Stieltjes transform ``m`` and ``F = -1/m`` with derivatives, at ``w``."""

    w: complex | np.ndarray
    m: complex | np.ndarray
    dm: complex | np.ndarray
    d2m: complex | np.ndarray
    F: complex | np.ndarray
    dF: complex | np.ndarray
    d2F: complex | np.ndarray


# ---------------------------------------------------------------------------
# constructors

def atomic(locations, weights=None) -> SpectralMeasure:
    """Atomic measure; equal weights when ``weights`` is omitted."""
    x = np.atleast_1d(np.asarray(locations, dtype=float))
    if weights is None:
        w = np.full(x.size, 1.0 / x.size)
    else:
        w = np.atleast_1d(np.asarray(weights, dtype=float))
    if x.size > 1 and np.any(np.diff(x) < 0):
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
    return SpectralMeasure(ATOMIC, locations=x, weights=w)


def _continuous(lo, hi, t_minus, t_plus, profile=(1.0,), family="power_law", params=None):
    return SpectralMeasure(CONTINUOUS, support=(lo, hi), t_minus=float(t_minus),
                           t_plus=float(t_plus), profile=tuple(profile), family=family,
                           params=dict(params or {}))


def power_law(lo: float, hi: float, t_minus: float, t_plus: float, profile=(1.0,)) -> SpectralMeasure:
    """Density proportional to ``p(u) (x-lo)**t_minus (hi-x)**t_plus`` on ``[lo, hi]``."""
    return _continuous(lo, hi, t_minus, t_plus, profile, "power_law",
                       {"support": [lo, hi], "t_minus": t_minus, "t_plus": t_plus})


def make_reference_measure(family: str, **params) -> SpectralMeasure:
    """Build one of the named fixture measures.

    Families: ``power_law`` (support, t_minus, t_plus[, profile]),
    ``semicircle`` (variance, center), ``uniform`` (support), ``arcsine``
    (support), ``two_atoms`` (locations, weights), ``point_mass`` (location).
    """
    if family == "power_law":
        lo, hi = params.get("support", (0.0, 1.0))
        return power_law(lo, hi, params.get("t_minus", 0.0), params.get("t_plus", 0.0),
                         params.get("profile", (1.0,)))
    if family == "semicircle":
        var = float(params.get("variance", 1.0))
        c = float(params.get("center", 0.0))
        if var <= 0:
            raise MeasureError("semicircle variance must be positive")
        r = 2.0 * math.sqrt(var)
        return _continuous(c - r, c + r, 0.5, 0.5, (1.0,), "semicircle", {"variance": var, "center": c})
    if family == "uniform":
        lo, hi = params.get("support", (0.0, 1.0))
        return _continuous(lo, hi, 0.0, 0.0, (1.0,), "uniform", {"support": [lo, hi]})
    if family == "arcsine":
        lo, hi = params.get("support", (-2.0, 2.0))
        return _continuous(lo, hi, -0.5, -0.5, (1.0,), "arcsine", {"support": [lo, hi]})
    if family == "two_atoms":
        locs = params.get("locations", (-1.0, 1.0))
        w = params.get("weights", (0.5, 0.5))
        return atomic(locs, w)
    if family == "point_mass":
        return atomic([params.get("location", 0.0)], [1.0])
    if family == "atomic":
        atoms = np.asarray(params["atoms"], dtype=float)
        return atomic(atoms[:, 0], atoms[:, 1])
    raise MeasureError(f"unknown measure family {family!r}")


def measure_from_spec(spec: dict) -> SpectralMeasure:
    """Inverse of :meth:`SpectralMeasure.to_spec` (named families also accepted)."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise MeasureError("measure spec must be a JSON object with a 'family' key")
    params = {k: v for k, v in spec.items() if k != "family"}
    if spec["family"] == "atomic":
        atoms = params.get("atoms")
        if not atoms:
            raise MeasureError("atomic spec needs a non-empty 'atoms' list")
        if any(len(a) != 2 for a in atoms):
            raise MeasureError("each atom must be a [location, weight] pair")
        return atomic([a[0] for a in atoms], [a[1] for a in atoms])
    return make_reference_measure(spec["family"], **params)


def load_measure(path) -> SpectralMeasure:
    with open(path) as fh:
        return measure_from_spec(json.load(fh))


def save_measure(mu: SpectralMeasure, path) -> None:
    with open(path, "w") as fh:
        json.dump(mu.to_spec(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# quadrature

@functools.lru_cache(maxsize=64)
def _jacobi_nodes(n: int, t_minus: float, t_plus: float):
    # roots_jacobi weight is (1-x)**alpha (1+x)**beta on [-1, 1]
    x, w = special.roots_jacobi(n, t_plus, t_minus)
    u = 0.5 * (1.0 + x)
    return u, w


@functools.lru_cache(maxsize=64)
def _jacobi_normaliser(profile: tuple, t_minus: float, t_plus: float) -> float:
    """``int_0^1 p(u) u**t_minus (1-u)**t_plus du`` by Gauss-Jacobi (exact for polynomials)."""
    n = max(8, len(profile) + 2)
    u, w = _jacobi_nodes(n, t_minus, t_plus)
    scale = 2.0 ** -(t_minus + t_plus + 1.0)
    return float(scale * np.sum(w * Polynomial(profile)(u)))


@functools.lru_cache(maxsize=64)
def _rule(n: int, t_minus: float, t_plus: float, profile: tuple):
    u, w = _jacobi_nodes(n, t_minus, t_plus)
    W = w * Polynomial(profile)(u)
    return u, W / W.sum()


def _sum_moments(x, wt, w):
    """``sum_k wt_k (x_k - w)**-j`` for j = 1, 2, 3 (times 2 for j = 3), chunked."""
    m = np.empty(w.shape, complex)
    m1 = np.empty_like(m)
    m2 = np.empty_like(m)
    for s in range(0, w.size, _CHUNK):
        inv = 1.0 / (x[None, :] - w[s:s + _CHUNK, None])
        inv2 = inv * inv
        m[s:s + _CHUNK] = inv @ wt
        m1[s:s + _CHUNK] = inv2 @ wt
        m2[s:s + _CHUNK] = 2.0 * ((inv2 * inv) @ wt)
    return m, m1, m2


def _hyp_moments(mu: SpectralMeasure, zeta: complex):
    """Exact ``m, m', m''`` of the normalised density at ``zeta`` via 2F1."""
    ps, pis = mu._components
    q = mu.t_plus + 1.0
    with mpmath.workdps(25):
        zt = mpmath.mpc(zeta.real, zeta.imag)
        wv = 1 / zt
        acc = [mpmath.mpc(0), mpmath.mpc(0), mpmath.mpc(0)]
        for p, pi in zip(ps, pis):
            for j in (1, 2, 3):
                acc[j - 1] += pi * (-zt) ** (-j) * mpmath.hyp2f1(j, p, p + q, wv)
        return complex(acc[0]), complex(acc[1]), 2.0 * complex(acc[2])


def _continuous_moments(mu: SpectralMeasure, zeta: np.ndarray):
    re, im = zeta.real, np.abs(zeta.imag)
    dist = np.hypot(np.maximum(np.maximum(-re, re - 1.0), 0.0), im)
    m = np.full(zeta.shape, np.nan + 0j)
    m1 = m.copy()
    m2 = m.copy()
    todo = np.flatnonzero(dist >= _NEAR_SUPPORT)
    prev = None
    for n in _QUAD_LEVELS:
        if todo.size == 0:
            break
        u, W = _rule(n, mu.t_minus, mu.t_plus, mu.profile)
        cur = _sum_moments(u, W, zeta[todo])
        if prev is not None:
            ok = np.ones(todo.size, bool)
            for a, b in zip(cur, prev):
                ok &= np.abs(a - b) <= QUAD_TOL * np.maximum(1.0, np.abs(a))
            m[todo[ok]], m1[todo[ok]], m2[todo[ok]] = cur[0][ok], cur[1][ok], cur[2][ok]
            todo = todo[~ok]
            cur = tuple(c[~ok] for c in cur)
        prev = cur
    rest = np.concatenate([np.flatnonzero(dist < _NEAR_SUPPORT), todo])
    for k in rest:
        m[k], m1[k], m2[k] = _hyp_moments(mu, complex(zeta[k]))
    return m, m1, m2


def moments(mu: SpectralMeasure, w):
    """Raw ``(m, m', m'')`` at points ``w`` without domain validation.

    ``m(w) = int dmu(x)/(x-w)``; derivatives are with respect to ``w``.
    """
    w = np.asarray(w, dtype=complex)
    shape = w.shape
    w = w.ravel()
    if mu.kind == ATOMIC:
        m, m1, m2 = _sum_moments(mu.locations, mu.weights, w)
    else:
        lo, L = mu.lower, mu.width
        zeta = (w - lo) / L
        m, m1, m2 = _continuous_moments(mu, zeta)
        m, m1, m2 = m / L, m1 / L**2, m2 / L**3
    return m.reshape(shape), m1.reshape(shape), m2.reshape(shape)


def f_values(mu: SpectralMeasure, w):
    """``(F, F', F'')`` at ``w`` without validation (vectorised)."""
    m, m1, m2 = moments(mu, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = -1.0 / m
        dF = m1 / m**2
        d2F = m2 / m**2 - 2.0 * m1**2 / m**3
    return F, dF, d2F


def distance_to_support(mu: SpectralMeasure, x):
    """Distance from real ``x`` to ``supp mu``."""
    x = np.asarray(x, dtype=float)
    if mu.kind == ATOMIC:
        locs = mu.locations
        idx = np.searchsorted(locs, x)
        left = locs[np.clip(idx - 1, 0, locs.size - 1)]
        right = locs[np.clip(idx, 0, locs.size - 1)]
        return np.minimum(np.abs(x - left), np.abs(x - right))
    lo, hi = mu.support
    return np.maximum(np.maximum(lo - x, x - hi), 0.0)


def stieltjes_transform(mu: SpectralMeasure, z, standoff: float = STANDOFF) -> TransformValue:
    """Stieltjes transform ``m``, ``F = -1/m`` and their first two derivatives.

    ``z`` may be a scalar or an array. Every point must lie in the open upper
    half-plane or on the real axis at distance greater than ``standoff`` from
    the support.
    """
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag < 0):
        raise DomainError("transforms are evaluated on the closed upper half-plane only")
    real = zz.imag == 0
    if np.any(real):
        d = distance_to_support(mu, zz.real[real])
        if np.any(d <= standoff):
            raise DomainError(f"real evaluation point within {standoff:g} of the support")
    m, m1, m2 = moments(mu, zz)
    if np.any(m == 0):
        raise DegenerateTransformError("Stieltjes transform vanishes; F = -1/m undefined")
    F = -1.0 / m
    dF = m1 / m**2
    d2F = m2 / m**2 - 2.0 * m1**2 / m**3
    if zz.ndim == 0:
        return TransformValue(complex(zz), complex(m), complex(m1), complex(m2),
                              complex(F), complex(dF), complex(d2F))
    return TransformValue(zz, m, m1, m2, F, dF, d2F)


def f_prime_gap(mu: SpectralMeasure, x: float) -> float:
    """``F'(x) - 1`` for real ``x`` below the support.

    Strictly positive unless ``mu`` is a point mass, in which case ``F(z) = z - a``
    and exactly ``0.0`` is returned.
    """
    if x >= mu.lower - STANDOFF:
        raise DomainError(f"x={x} is not below inf supp={mu.lower} by more than the standoff")
    if mu.is_point_mass:
        return 0.0
    m, m1, _ = moments(mu, complex(x))
    return float((m1 / m**2).real - 1.0)


# ---------------------------------------------------------------------------
# quantiles, discretisation, distances

def quantile(mu: SpectralMeasure, p):
    """Smallest ``x`` with ``mu((-inf, x]) >= p`` for ``p`` in ``(0, 1]``."""
    pa = np.asarray(p, dtype=float)
    if np.any(~((pa > 0) & (pa <= 1))):
        raise MeasureError("quantile level must lie in (0, 1]")
    if mu.kind == ATOMIC:
        cw = np.cumsum(mu.weights)
        idx = np.searchsorted(cw, pa - 1e-13, side="left")
        out = mu.locations[np.minimum(idx, mu.locations.size - 1)]
    else:
        lo, L = mu.lower, mu.width
        ps, pis = mu._components
        q = mu.t_plus + 1.0
        if len(ps) == 1:
            u = special.betaincinv(ps[0], q, pa)
        else:
            flat = np.atleast_1d(pa).ravel()
            u = np.array([1.0 if pk >= 1 else optimize.brentq(
                lambda v: sum(pi * special.betainc(pp, q, v) for pp, pi in zip(ps, pis)) - pk,
                0.0, 1.0, xtol=1e-15, rtol=1e-15) for pk in flat]).reshape(pa.shape)
        u = np.where(pa >= 1.0, 1.0, u)
        out = lo + L * u
    return float(out) if np.ndim(out) == 0 else out


def discretize(mu: SpectralMeasure, N: int, levels: str = "midpoint") -> SpectralMeasure:
    """``N`` equal-weight atoms at quantiles of ``mu``.

    ``levels="midpoint"`` uses levels ``(j - 1/2)/N`` (the default);
    ``levels="upper"`` uses ``j/N``, which saturates the ``1/N`` Levy rate.
    """
    if N < 2:
        raise MeasureError("discretisation needs N >= 2")
    if mu.kind != CONTINUOUS:
        raise MeasureError("only continuous measures can be discretised")
    j = np.arange(1, N + 1)
    if levels == "midpoint":
        p = (j - 0.5) / N
    elif levels == "upper":
        p = j / N
    else:
        raise MeasureError(f"unknown quantile levels {levels!r}")
    return atomic(quantile(mu, p), np.full(N, 1.0 / N))


def _levy_grid(mu1, mu2, max_points):
    lo = min(mu1.lower, mu2.lower) - 1.0
    hi = max(mu1.upper, mu2.upper) + 1.0
    pieces = [np.linspace(lo, hi, max_points // 2)]
    for mu in (mu1, mu2):
        if mu.kind == CONTINUOUS:
            r = mu.width * np.logspace(-12, -1, 400)
            pieces += [mu.lower + r, mu.upper - r]
    return np.unique(np.concatenate(pieces))


def levy_distance(mu1: SpectralMeasure, mu2: SpectralMeasure, tol: float = 1e-7,
                  max_points: int = 100_000) -> float:
    """Levy distance between two probability measures.

    Bisection on the inflation parameter ``eps``; the two defining inequalities
    are tested on a shared grid made of a uniform mesh, edge-clustered points,
    and every jump point (with left limits) shifted by ``+-eps``.
    """
    base = _levy_grid(mu1, mu2, max_points)
    jumps = [mu.locations for mu in (mu1, mu2) if mu.kind == ATOMIC]
    jumps = np.concatenate(jumps) if jumps else np.empty(0)
    span = max(mu1.upper, mu2.upper) - min(mu1.lower, mu2.lower) + 1.0
    tiny = 1e-12 * span

    def violated(eps):
        extra = np.concatenate([jumps, jumps + eps, jumps - eps])
        x = np.concatenate([base, extra, extra - tiny])
        F, G = mu1.cdf, mu2.cdf
        gx, fx = G(x), F(x)
        bad1 = F(x - eps) - eps - gx
        bad2 = gx - F(x + eps) - eps
        bad3 = G(x - eps) - eps - fx
        bad4 = fx - G(x + eps) - eps
        return max(bad1.max(), bad2.max(), bad3.max(), bad4.max()) > 1e-15

    if not violated(0.0):
        return 0.0
    a, b = 0.0, 1.0
    while b - a > tol:
        c = 0.5 * (a + b)
        if violated(c):
            a = c
        else:
            b = c
    return b


def transform_sup(mu: SpectralMeasure, n_energy: int = 41, etas=None) -> float:
    """Grid estimate of ``sup_{z in C+} |m(z)|``.

    Energies span the support padded by one width on each side and include both
    endpoints; heights default to ``geomspace(1e-6, 10, 8)``.  A value that keeps growing as the smallest
    height is lowered signals an unbounded transform (e.g. a jump of the density
    at an edge).
    """
    etas = np.geomspace(1e-6, 10.0, 8) if etas is None else np.asarray(etas, float)
    if np.any(etas <= 0):
        raise DomainError("heights must be positive")
    E = np.linspace(mu.lower - mu.width, mu.upper + mu.width, n_energy)
    E = np.union1d(E, [mu.lower, mu.upper])
    z = (E[None, :] + 1j * etas[:, None]).ravel()
    return float(np.max(np.abs(moments(mu, z)[0])))


def bounded_transform_pair(mu1: SpectralMeasure, mu2: SpectralMeasure, C: float,
                           **grid) -> bool:
    """Whether at least one of the two transforms stays below ``C`` on the grid."""
    return min(transform_sup(mu1, **grid), transform_sup(mu2, **grid)) <= C
