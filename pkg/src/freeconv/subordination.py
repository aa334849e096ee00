"""Subordination functions of the free additive convolution.

For probability measures ``mu1``, ``mu2`` and ``z`` in the upper half-plane the
pair ``(omega1, omega2)`` is the unique solution in C+ x C+ of

    F1(omega2) = F2(omega1),    omega1 + omega2 - z = F1(omega2),

with ``F_j = -1/m_j``.  Then ``m_{mu1 [+] mu2}(z) = m1(omega2) = m2(omega1)``.

The solver iterates the composed map

    omega1 = z + F1(omega2) - omega2,    omega2 <- z + F2(omega1) - omega1

which sends C+ into itself, and finishes with damped Newton steps on

    Phi1 = F1(omega2) - omega1 - omega2 + z,    Phi2 = F2(omega1) - omega1 - omega2 + z.

All kernels are vectorised over arrays of spectral points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainError, InstabilityError, NumericalConsistencyError,
                     BoundaryExtensionError, SingularJacobianError, SolverDivergedError)
from .measure import SpectralMeasure, f_values, moments

_EPS = np.finfo(float).eps
#: |S| below which the linearisation is treated as singular
SINGULAR_THRESHOLD = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the subordination solver.

    Attributes
    ----------
    tol : float
        Absolute tolerance on both defining residuals.
    max_iter : int
        Fixed-point iteration budget per point.
    damping : float
        Initial relaxation factor in ``(0, 1]``; halved whenever the step grows.
    newton : bool
        Polish fixed-point iterates with damped Newton steps.
    ladder_start, ladder_factor, eta_floor : float
        Geometric ladder ``eta_k = ladder_start * ladder_factor**k >= eta_floor``
        used to extend values to the real axis.
    newton_switch : float
        Fixed-point residual at which Newton takes over.
    max_newton : int
        Newton iteration budget.
    max_halvings : int
        Damping halvings tolerated before restarting from ``z + 2i``.
    """

    tol: float = 1e-12
    max_iter: int = 500
    damping: float = 1.0
    newton: bool = True
    ladder_start: float = 2.0
    ladder_factor: float = 0.5
    eta_floor: float = 1e-9
    newton_switch: float = 1e-4
    max_newton: int = 60
    max_halvings: int = 5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.ladder_factor < 1:
            raise ValueError("ladder factor must lie in (0, 1)")
        if not 0 < self.eta_floor < self.ladder_start:
            raise ValueError("need 0 < eta_floor < ladder_start")
        if self.max_iter < 1 or self.max_newton < 0:
            raise ValueError("iteration budgets must be positive")

    def ladder(self) -> np.ndarray:
        """The descending eta ladder."""
        n = int(np.floor(np.log(self.eta_floor / self.ladder_start)
                         / np.log(self.ladder_factor) + 1e-9))
        return self.ladder_start * self.ladder_factor ** np.arange(n + 1)


@dataclass(frozen=True)
class SubordinationPair:
    """Solution of the subordination system at one spectral point."""

    z: complex
    omega1: complex
    omega2: complex
    m: complex
    residual1: float
    residual2: float
    iterations: int
    converged: bool
    extrapolation_error: float = 0.0


@dataclass(frozen=True)
class PairArray:
    """Vectorised counterpart of :class:`SubordinationPair`."""

    z: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    m: np.ndarray
    residual1: np.ndarray
    residual2: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    extrapolation_error: np.ndarray = field(default=None)

    def __len__(self):
        return self.z.size

    def __getitem__(self, k) -> SubordinationPair:
        err = 0.0 if self.extrapolation_error is None else float(self.extrapolation_error[k])
        return SubordinationPair(complex(self.z[k]), complex(self.omega1[k]),
                                 complex(self.omega2[k]), complex(self.m[k]),
                                 float(self.residual1[k]), float(self.residual2[k]),
                                 int(self.iterations[k]), bool(self.converged[k]), err)


# ---------------------------------------------------------------------------
# vectorised kernels

class _Eval:
    """F-values and residuals of the system at ``(z, w1, w2)``."""

    def __init__(self, mu1, mu2, z, w1, w2):
        self.F1, self.dF1, self.d2F1 = f_values(mu1, w2)
        self.F2, self.dF2, self.d2F2 = f_values(mu2, w1)
        s = w1 + w2 - z
        self.phi1 = self.F1 - s
        self.phi2 = self.F2 - s
        with np.errstate(invalid="ignore"):
            r1 = np.abs(self.F1 - self.F2)
            r2 = np.abs(self.phi1)
            r = np.maximum(r1, r2)
        self.r1 = np.where(np.isfinite(r1), r1, np.inf)
        self.r2 = np.where(np.isfinite(r2), r2, np.inf)
        self.r = np.where(np.isfinite(r), r, np.inf)

    def put(self, idx, other, sub=None):
        for k, v in vars(other).items():
            getattr(self, k)[idx] = v if sub is None else v[sub]


def _floor_tol(cfg, z, w1, w2):
    """Tolerance actually achievable in floating point at each point."""
    scale = 1.0 + np.abs(z) + np.abs(w1) + np.abs(w2)
    return np.maximum(cfg.tol, 64.0 * _EPS * scale)


def _fixed_point(mu1, mu2, z, w2, cfg, stop):
    """Damped iteration of the composed map; returns the best ``omega2`` per point."""
    n = z.size
    w2 = w2.copy()
    d = np.full(n, cfg.damping)
    halvings = np.zeros(n, int)
    prev = np.full(n, np.inf)
    best = w2.copy()
    best_r = np.full(n, np.inf)
    iters = np.zeros(n, int)
    act = np.arange(n)
    for _ in range(cfg.max_iter):
        if act.size == 0:
            break
        zz, w = z[act], w2[act]
        F1 = f_values(mu1, w)[0]
        w1 = zz + F1 - w
        F2 = f_values(mu2, w1)[0]
        step = zz + F2 - w1 - w
        r = np.abs(step)
        r = np.where(np.isfinite(r), r, np.inf)
        iters[act] += 1
        better = r < best_r[act]
        best[act[better]] = w[better]
        best_r[act[better]] = r[better]
        done = r <= stop[act]
        grow = (r > prev[act]) & ~done
        d[act[grow]] *= 0.5
        halvings[act[grow]] += 1
        restart = halvings[act] > cfg.max_halvings
        move = ~done & ~restart & np.isfinite(r)
        w2[act[move]] = w[move] + d[act[move]] * step[move]
        ra = act[restart | ~np.isfinite(r)]
        w2[ra] = z[ra] + 2j
        d[ra] = cfg.damping
        halvings[ra] = 0
        prev[act] = np.where(restart, np.inf, r)
        act = act[~done]
    return best, best_r, iters


def _newton(mu1, mu2, z, w1, w2, cfg):
    """Damped Newton on ``(Phi1, Phi2)`` with an upper half-plane guard."""
    w1, w2 = w1.copy(), w2.copy()
    ev = _Eval(mu1, mu2, z, w1, w2)
    tol = _floor_tol(cfg, z, w1, w2)
    iters = np.zeros(z.size, int)
    active = ev.r > tol
    floor_im = z.imag - cfg.tol
    for _ in range(cfg.max_newton):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iters[idx] += 1
        a = ev.dF1[idx] - 1.0
        b = ev.dF2[idx] - 1.0
        det = 1.0 - a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = (ev.phi1[idx] + a * ev.phi2[idx]) / det
            d2 = (b * ev.phi1[idx] + ev.phi2[idx]) / det
        t = np.ones(idx.size)
        pend = np.isfinite(d1) & np.isfinite(d2)
        accepted = np.zeros(idx.size, bool)
        for _ in range(40):
            p = np.flatnonzero(pend)
            if p.size == 0:
                break
            g = idx[p]
            t1 = w1[g] + t[p] * d1[p]
            t2 = w2[g] + t[p] * d2[p]
            ok = (t1.imag >= floor_im[g]) & (t2.imag >= floor_im[g])
            acc = np.zeros(p.size, bool)
            if ok.any():
                q = np.flatnonzero(ok)
                trial = _Eval(mu1, mu2, z[g[q]], t1[q], t2[q])
                good = (trial.r < ev.r[g[q]]) | (trial.r <= tol[g[q]])
                if good.any():
                    sel = q[good]
                    w1[g[sel]] = t1[sel]
                    w2[g[sel]] = t2[sel]
                    ev.put(g[sel], trial, good)
                    acc[sel] = True
            accepted[p[acc]] = True
            pend[p[acc]] = False
            t[p[~acc]] *= 0.5
        tol[idx] = _floor_tol(cfg, z[idx], w1[idx], w2[idx])
        active[idx] = accepted & (ev.r[idx] > tol[idx])
    return w1, w2, ev, iters, ev.r <= tol


def _solve(mu1, mu2, z, cfg, w1=None, w2=None):
    """Solve at every point of ``z``; optional warm starts ``w1``, ``w2``."""
    z = np.asarray(z, complex).ravel()
    n = z.size
    iters = np.zeros(n, int)
    conv = np.zeros(n, bool)
    out1 = np.empty(n, complex)
    out2 = np.empty(n, complex)
    ev = None
    todo = np.arange(n)
    if w2 is not None and cfg.newton:
        w2 = np.asarray(w2, complex).ravel()
        w1 = (np.asarray(w1, complex).ravel() if w1 is not None
              else z + f_values(mu1, w2)[0] - w2)
        r1, r2, ev, it, ok = _newton(mu1, mu2, z, w1, w2, cfg)
        out1[:], out2[:] = r1, r2
        iters += it
        conv[:] = ok
        todo = np.flatnonzero(~ok)
    if todo.size:
        start = (w2[todo] if w2 is not None else z[todo] + 1j)
        zt = z[todo]
        stop = np.full(todo.size, cfg.newton_switch if cfg.newton else cfg.tol)
        b2, br, it = _fixed_point(mu1, mu2, zt, start, cfg, stop)
        iters[todo] += it
        b1 = zt + f_values(mu1, b2)[0] - b2
        if cfg.newton:
            n1, n2, _, it, ok = _newton(mu1, mu2, zt, b1, b2, cfg)
            iters[todo] += it
        else:
            n1, n2 = b1, b2
        out1[todo], out2[todo] = n1, n2
    ev = _Eval(mu1, mu2, z, out1, out2)
    conv = (ev.r1 <= _floor_tol(cfg, z, out1, out2)) & (ev.r2 <= _floor_tol(cfg, z, out1, out2))
    with np.errstate(divide="ignore", invalid="ignore"):
        m = -1.0 / ev.F1
    return out1, out2, m, ev, iters, conv


def _as_pairs(z, w1, w2, m, ev, iters, conv, err=None) -> PairArray:
    return PairArray(z, w1, w2, m, ev.r1, ev.r2, iters, conv, err)


# ---------------------------------------------------------------------------
# public API

def _check_upper(z):
    if np.any(np.asarray(z).imag <= 0):
        raise DomainError("subordination is solved for Im z > 0 only")


def solve_grid(mu1: SpectralMeasure, mu2: SpectralMeasure, z, config: SolverConfig | None = None,
               warm_start: PairArray | None = None) -> PairArray:
    """Solve independently at every point of ``z`` (vectorised); no error on failure.

    Inspect ``converged`` on the result.
    """
    cfg = config or SolverConfig()
    z = np.asarray(z, complex).ravel()
    _check_upper(z)
    w1 = w2 = None
    if warm_start is not None:
        w1, w2 = warm_start.omega1, warm_start.omega2
    w1, w2, m, ev, iters, conv = _solve(mu1, mu2, z, cfg, w1, w2)
    return _as_pairs(z, w1, w2, m, ev, iters, conv)


def solve_subordination(mu1: SpectralMeasure, mu2: SpectralMeasure, z: complex,
                        config: SolverConfig | None = None,
                        warm_start: SubordinationPair | None = None) -> SubordinationPair:
    """Subordination pair ``(omega1, omega2)`` and ``m_{mu1 [+] mu2}`` at ``z``.

    Parameters
    ----------
    mu1, mu2 : SpectralMeasure
    z : complex
        Spectral point with ``Im z > 0``.
    config : SolverConfig, optional
    warm_start : SubordinationPair, optional
        Initial guess; otherwise the iteration starts from ``omega2 = z + i``.

    Raises
    ------
    SolverDivergedError
        Tolerance not reached; ``best`` carries the last iterate.
    InstabilityError
        The returned iterate lies below the upper half-plane.
    """
    cfg = config or SolverConfig()
    z = complex(z)
    _check_upper(z)
    w1 = w2 = None
    if warm_start is not None:
        w1, w2 = [warm_start.omega1], [warm_start.omega2]
    res = _as_pairs(np.array([z]), *_solve(mu1, mu2, np.array([z]), cfg, w1, w2))
    pair = res[0]
    if min(pair.omega1.imag, pair.omega2.imag) < z.imag - cfg.tol:
        raise InstabilityError(f"iterate left the upper half-plane at z={z}", best=pair)
    if not pair.converged:
        raise SolverDivergedError(
            f"no convergence at z={z}: residuals {pair.residual1:.3g}, {pair.residual2:.3g}",
            best=pair)
    return pair


def free_conv_m(mu1: SpectralMeasure, mu2: SpectralMeasure, z, config: SolverConfig | None = None):
    """Stieltjes transform of ``mu1 [+] mu2`` at ``z`` (scalar or array).

    The three expressions ``m1(omega2)``, ``m2(omega1)`` and
    ``-1/(omega1 + omega2 - z)`` are checked against each other.
    """
    cfg = config or SolverConfig()
    zz = np.asarray(z, complex)
    res = solve_grid(mu1, mu2, zz.ravel(), cfg)
    if not res.converged.all():
        k = int(np.flatnonzero(~res.converged)[0])
        raise SolverDivergedError(f"no convergence at z={res.z[k]}", best=res[k], index=k)
    m = res.m
    m2 = moments(mu2, res.omega1)[0]
    m3 = -1.0 / (res.omega1 + res.omega2 - res.z)
    bound = 10 * _floor_tol(cfg, res.z, res.omega1, res.omega2) * np.maximum(1.0, np.abs(m)) ** 2
    if np.any(np.abs(m - m2) > bound) or np.any(np.abs(m - m3) > bound):
        raise NumericalConsistencyError("subordination representations of m disagree")
    return complex(m[0]) if zz.ndim == 0 else m.reshape(zz.shape)


def _derivative_parts(mu1, mu2, w1, w2):
    _, dF1, _ = f_values(mu1, w2)
    _, dF2, _ = f_values(mu2, w1)
    S = (dF1 - 1.0) * (dF2 - 1.0) - 1.0
    return dF1, dF2, S


def subordination_derivatives(mu1: SpectralMeasure, mu2: SpectralMeasure,
                              pair: SubordinationPair) -> tuple[complex, complex, complex]:
    """``(omega1', omega2', m')`` from the linearised system.

    ``omega1' = F1'(omega2)/(-S)`` and ``omega2' = F2'(omega1)/(-S)`` with
    ``S = (F1'(omega2) - 1)(F2'(omega1) - 1) - 1``; ``m' = m1'(omega2) omega2'``.

    Raises
    ------
    SingularJacobianError
        When ``|S| <= 1e-10``; use :func:`finite_difference_derivatives` instead.
    """
    dF1, dF2, S = _derivative_parts(mu1, mu2, pair.omega1, pair.omega2)
    if abs(S) <= SINGULAR_THRESHOLD:
        raise SingularJacobianError(f"|S| = {abs(S):.3g} at z={pair.z}")
    d1 = -dF1 / S
    d2 = -dF2 / S
    dm = moments(mu1, pair.omega2)[1]
    return complex(d1), complex(d2), complex(dm * d2)


def finite_difference_derivatives(mu1: SpectralMeasure, mu2: SpectralMeasure,
                                  pair: SubordinationPair, config: SolverConfig | None = None,
                                  step: float | None = None) -> tuple[complex, complex, complex]:
    """Central differences in ``Re z`` of ``(omega1, omega2, m)``.

    The default step is ``max(1e-7, Im z / 100)``.
    """
    cfg = config or SolverConfig()
    h = step if step is not None else max(1e-7, pair.z.imag / 100.0)
    zs = np.array([pair.z + h, pair.z - h])
    r = solve_grid(mu1, mu2, zs, cfg, PairArray(zs, np.full(2, pair.omega1), np.full(2, pair.omega2),
                                                 np.zeros(2), np.zeros(2), np.zeros(2),
                                                 np.zeros(2, int), np.ones(2, bool)))
    if not r.converged.all():
        raise SolverDivergedError(f"finite-difference neighbours of z={pair.z} did not converge")
    return tuple(complex((v[0] - v[1]) / (2 * h)) for v in (r.omega1, r.omega2, r.m))


def _predict(mu1, mu2, z_old, z_new, w1, w2, dF1=None, dF2=None):
    """First-order continuation predictor, falling back to the old point when unsafe."""
    if dF1 is None:
        dF1, dF2, S = _derivative_parts(mu1, mu2, w1, w2)
    else:
        S = (dF1 - 1.0) * (dF2 - 1.0) - 1.0
    dz = z_new - z_old
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = w1 - dF1 / S * dz
        p2 = w2 - dF2 / S * dz
    ok = np.isfinite(p1) & np.isfinite(p2) & (p1.imag >= z_new.imag) & (p2.imag >= z_new.imag)
    return np.where(ok, p1, w1), np.where(ok, p2, w2)


def continuation_solve(mu1: SpectralMeasure, mu2: SpectralMeasure, points,
                       config: SolverConfig | None = None) -> list[SubordinationPair]:
    """Warm-started sweep over ``points``.

    Points must be sorted by descending ``Im`` (ties by ascending ``Re``) and the
    first must satisfy ``Im >= 2``.  On the first failure a
    :class:`SolverDivergedError` is raised whose ``index`` is the failing
    position and whose ``partial`` attribute holds the pairs solved so far.
    """
    cfg = config or SolverConfig()
    pts = [complex(p) for p in points]
    if not pts:
        return []
    _check_upper(np.array(pts))
    if pts[0].imag < 2.0:
        raise ValueError("a sweep must start at Im z >= 2")
    for a, b in zip(pts, pts[1:]):
        if b.imag > a.imag or (b.imag == a.imag and b.real < a.real):
            raise ValueError("points must be sorted by descending Im, then ascending Re")
    out: list[SubordinationPair] = []
    prev = None
    for k, z in enumerate(pts):
        try:
            if prev is None:
                pair = solve_subordination(mu1, mu2, z, cfg)
            else:
                p1, p2 = _predict(mu1, mu2, np.array([prev.z]), np.array([z]),
                                  np.array([prev.omega1]), np.array([prev.omega2]))
                warm = SubordinationPair(z, complex(p1[0]), complex(p2[0]), 0j, 0.0, 0.0, 0, True)
                pair = solve_subordination(mu1, mu2, z, cfg, warm_start=warm)
        except SolverDivergedError as exc:
            exc.index = k
            exc.partial = out
            raise
        out.append(pair)
        prev = pair
    return out


# ---------------------------------------------------------------------------
# boundary values on the real axis

@dataclass(frozen=True)
class LadderTrace:
    """Values along the eta ladder for an array of real points ``x``."""

    x: np.ndarray
    eta: np.ndarray            # (L,)
    omega1: np.ndarray         # (L, n)
    omega2: np.ndarray
    m: np.ndarray
    converged: np.ndarray      # (n,) all levels converged


def eta_ladder(mu1: SpectralMeasure, mu2: SpectralMeasure, x, config: SolverConfig | None = None,
               eta=None) -> LadderTrace:
    """Descend the eta ladder at every real ``x`` simultaneously."""
    cfg = config or SolverConfig()
    x = np.atleast_1d(np.asarray(x, float))
    eta = cfg.ladder() if eta is None else np.asarray(eta, float)
    L, n = eta.size, x.size
    W1 = np.empty((L, n), complex)
    W2 = np.empty((L, n), complex)
    M = np.empty((L, n), complex)
    conv = np.ones(n, bool)
    w1 = w2 = None
    dF1 = dF2 = None
    z_old = None
    for k, h in enumerate(eta):
        z = x + 1j * h
        if w1 is not None:
            w1, w2 = _predict(mu1, mu2, z_old, z, w1, w2, dF1, dF2)
        w1, w2, m, ev, _, ok = _solve(mu1, mu2, z, cfg, w1, w2)
        dF1, dF2 = ev.dF1, ev.dF2
        conv &= ok
        W1[k], W2[k], M[k] = w1, w2, m
        z_old = z
    return LadderTrace(x, eta, W1, W2, M, conv)


def _extrapolate(eta, vals):
    """Quadratic extrapolation to ``eta = 0`` through the last three levels.

    Returns the value and the gap to the linear extrapolation as an error
    estimate, plus a stability flag (successive differences must contract).
    """
    e = eta[-3:]
    v = vals[-3:]

    def lagrange(nodes, values):
        out = 0.0
        for k in range(len(nodes)):
            wk = 1.0
            for j in range(len(nodes)):
                if j != k:
                    wk *= (0.0 - nodes[j]) / (nodes[k] - nodes[j])
            out = out + wk * values[k]
        return out

    quad = lagrange(e, v)
    lin = lagrange(e[1:], v[1:])
    err = np.abs(quad - lin)
    d1 = np.abs(v[1] - v[0])
    d2 = np.abs(v[2] - v[1])
    stable = (d2 <= d1) | (d2 <= 1e-10)
    return quad, err, stable


def boundary_array(mu1: SpectralMeasure, mu2: SpectralMeasure, x,
                   config: SolverConfig | None = None) -> tuple[PairArray, np.ndarray]:
    """Boundary values at every real ``x``; returns ``(pairs, stable)`` without raising."""
    cfg = config or SolverConfig()
    tr = eta_ladder(mu1, mu2, x, cfg)
    w1, e1, s1 = _extrapolate(tr.eta, tr.omega1)
    w2, e2, s2 = _extrapolate(tr.eta, tr.omega2)
    m, em, sm = _extrapolate(tr.eta, tr.m)
    err = np.maximum(np.maximum(e1, e2), em)
    # defect of the system at the last ladder level
    ev = _Eval(mu1, mu2, tr.x + 1j * tr.eta[-1], tr.omega1[-1], tr.omega2[-1])
    n = tr.x.size
    pairs = PairArray(tr.x.astype(complex), w1, w2, m, ev.r1, ev.r2,
                      np.full(n, tr.eta.size, int), tr.converged, err)
    return pairs, s1 & s2 & sm & tr.converged


def boundary_values(mu1: SpectralMeasure, mu2: SpectralMeasure, x: float,
                    config: SolverConfig | None = None) -> SubordinationPair:
    """Limits of ``omega1``, ``omega2`` and ``m`` as ``z -> x`` from C+.

    Raises
    ------
    BoundaryExtensionError
        When successive ladder differences fail to contract.
    """
    pairs, stable = boundary_array(mu1, mu2, [float(x)], config)
    pair = pairs[0]
    if not stable[0]:
        raise BoundaryExtensionError(
            f"eta-ladder extrapolation unstable at x={x} (error estimate {pair.extrapolation_error:.3g})")
    return pair
