"""Regular edges of a free additive convolution and their local behaviour.

Below the lower edge ``E_-`` of ``mu1 [+] mu2`` both subordination functions are
real and lie below the supports.  Parametrising that branch by the real value
``w2 = omega2 < inf supp mu1`` gives

    omega1(w2) = F2^{-1}(F1(w2)),     x(w2) = omega1 + w2 - F1(w2),

where ``F2^{-1}`` is the inverse of the increasing map ``F2`` on
``(-inf, inf supp mu2)``.  The stability determinant

    S = (F1'(omega2) - 1)(F2'(omega1) - 1) - 1

is strictly increasing along the branch, and ``E_- = x(w2*)`` at its unique zero.
``x(w2)`` is stationary there with negative curvature, so near the edge
``omega2(z) - omega2(E_-) ~ -sqrt(2/|x''|) sqrt(E_- - z)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import DomainError, EdgeNotFoundError, ExpansionFitError
from .measure import STANDOFF, SpectralMeasure, f_values, moments
from .subordination import (PairArray, SolverConfig, SubordinationPair, boundary_array,
                            eta_ladder)

#: tolerance on |S| at an accepted edge
EDGE_RESIDUAL_TOL = 1e-9
#: relative agreement required between fitted and predicted expansion coefficients
COEFFICIENT_RTOL = 0.01


@dataclass(frozen=True)
class StabilityTriple:
    """``S`` and the second-order coefficients ``T1``, ``T2`` at ``z``.

    With ``F1`` evaluated at ``omega2`` and ``F2`` at ``omega1``::

        S  = (F1' - 1)(F2' - 1) - 1
        T1 = (F1'' (F2' - 1)**2 + F2'' (F1' - 1)) / 2
        T2 = (F2'' (F1' - 1)**2 + F1'' (F2' - 1)) / 2
    """

    z: complex
    S: complex
    T1: complex
    T2: complex


def _triple(dF1, d2F1, dF2, d2F2):
    a, b = dF1 - 1.0, dF2 - 1.0
    return a * b - 1.0, 0.5 * (d2F1 * b * b + d2F2 * a), 0.5 * (d2F2 * a * a + d2F1 * b)


def stability_quantities(mu1: SpectralMeasure, mu2: SpectralMeasure,
                         pair: SubordinationPair) -> StabilityTriple:
    """Stability determinant and second-order coefficients at a solved pair."""
    for w, mu in ((pair.omega2, mu1), (pair.omega1, mu2)):
        if w.imag == 0 and not (w.real < mu.lower - STANDOFF or w.real > mu.upper + STANDOFF):
            raise DomainError(f"subordination value {w} lies on the support")
    _, dF1, d2F1 = f_values(mu1, pair.omega2)
    _, dF2, d2F2 = f_values(mu2, pair.omega1)
    S, T1, T2 = _triple(dF1, d2F1, dF2, d2F2)
    return StabilityTriple(pair.z, complex(S), complex(T1), complex(T2))


# ---------------------------------------------------------------------------
# the real branch below the edge

def _F(mu, w):
    F, dF, d2F = f_values(mu, complex(w))
    return F.real, dF.real, d2F.real


def invert_f(mu: SpectralMeasure, y: float, xtol: float = 1e-15) -> float | None:
    """The ``w < inf supp mu`` with ``F_mu(w) = y``; ``None`` if ``y`` is out of range."""
    hi = mu.lower - STANDOFF * max(1.0, abs(mu.lower))
    Fhi = _F(mu, hi)[0]
    if not y < Fhi:
        return None
    lo = min(y + mu.mean(), hi) - 1.0
    while _F(mu, lo)[0] >= y:
        lo -= 2.0 * (hi - lo)
    w = lo
    # safeguarded Newton: F is increasing with F' >= 1
    for _ in range(200):
        Fw, dFw, _ = _F(mu, w)
        g = Fw - y
        if g < 0:
            lo = w
        else:
            hi = w
        step = w - g / dFw
        w_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(w_new - w) <= xtol * max(1.0, abs(w)) or hi - lo <= xtol * max(1.0, abs(w)):
            return w_new
        w = w_new
    return w


@dataclass(frozen=True)
class BranchPoint:
    """Real branch of the subordination functions below the edge."""

    omega2: float
    omega1: float
    x: float
    S: float
    F1: tuple
    F2: tuple


def branch_point(mu1: SpectralMeasure, mu2: SpectralMeasure, w2: float) -> BranchPoint | None:
    """Evaluate the real branch at ``omega2 = w2``; ``None`` when ``omega1`` does not exist."""
    F1 = _F(mu1, w2)
    w1 = invert_f(mu2, F1[0])
    if w1 is None:
        return None
    F2 = _F(mu2, w1)
    S = (F1[1] - 1.0) * (F2[1] - 1.0) - 1.0
    return BranchPoint(w2, w1, w1 + w2 - F1[0], S, F1, F2)


def curvature(bp: BranchPoint) -> float:
    """Second derivative of ``x(omega2)`` along the branch (negative at the edge)."""
    _, dF1, d2F1 = bp.F1
    _, dF2, d2F2 = bp.F2
    return d2F1 * (1.0 - dF2) / dF2 - d2F2 * dF1**2 / dF2**3


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class EdgeReport:
    """Location and local shape of the lower edge (plus the upper edge location).

    ``z_second`` is the signed second derivative of ``x(omega2)`` at the edge,
    ``curvature`` its modulus.  ``sqrt_coefficient`` is the fitted ``c`` in
    ``omega2(z) - omega2(E_-) ~ c sqrt(E_- - z)`` for real ``z < E_-``.
    """

    E_minus: float
    E_plus: float
    omega1: float
    omega2: float
    k0: tuple
    z_second: float
    curvature: float
    density_coefficient: float
    bracket: tuple
    edge_residual: float
    S: float = math.nan
    T1: float = math.nan
    T2: float = math.nan
    degenerate: bool = False
    sqrt_coefficient: float = math.nan
    sqrt_coefficient_predicted: float = math.nan
    expansion_exponent: float = math.nan
    coefficient_form: str = ""
    fit_residual: float = math.nan
    diagnostics: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["k0"] = list(self.k0)
        d["bracket"] = list(self.bracket)
        d["diagnostics"] = list(self.diagnostics)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _lower_edge(mu1, mu2):
    lo1, lo2 = mu1.lower, mu2.lower
    target = lo1 + lo2 - 1.0
    D = 1.0
    while True:
        left = branch_point(mu1, mu2, lo1 - D)
        if left is not None and left.x <= target and left.S < 0:
            break
        D *= 2.0
        if D > 1e8:
            raise EdgeNotFoundError(f"no far-field point with S < 0 below x = {target}")
    # march towards inf supp mu1 until S >= 0 or omega1 ceases to exist
    scanned = [left]
    a = left
    b_w2 = None
    d = D
    while d > 1e-14 * max(1.0, abs(lo1)):
        d *= 0.5
        bp = branch_point(mu1, mu2, lo1 - d)
        if bp is None or bp.S >= 0:
            b_w2 = lo1 - d
            break
        scanned.append(bp)
        a = bp
    if b_w2 is None:
        raise EdgeNotFoundError(
            f"S stays negative on omega2 in [{lo1 - D}, {lo1}); x scanned up to {a.x}")
    lo, hi = a.omega2, b_w2
    best = a
    for _ in range(200):
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        bp = branch_point(mu1, mu2, mid)
        if bp is None or bp.S >= 0:
            hi = mid
            if bp is not None and abs(bp.S) < abs(best.S):
                best = bp
        else:
            lo = mid
            if abs(bp.S) < abs(best.S):
                best = bp
    # secant polish from the two best bracketing evaluations
    p0 = branch_point(mu1, mu2, lo)
    p1 = branch_point(mu1, mu2, hi)
    if p0 is not None and p1 is not None and p1.S != p0.S:
        w = p1.omega2 - p1.S * (p1.omega2 - p0.omega2) / (p1.S - p0.S)
        if lo <= w <= hi:
            bp = branch_point(mu1, mu2, w)
            if bp is not None and abs(bp.S) < abs(best.S):
                best = bp
    diagnostics = []
    xs = np.array([p.x for p in scanned])
    w1s = np.array([p.omega1 for p in scanned])
    if np.any(np.diff(xs) < -1e-12) or np.any(np.diff(w1s) < -1e-12):
        diagnostics.append("subordination values not monotone along the scan")
    return best, (left.x, best.x), (left.omega2, hi), diagnostics


def _shift_point_mass(mu1, mu2):
    """Edges for the translation case; returns None if neither is a point mass."""
    if mu1.is_point_mass:
        a, other = mu1.locations[0], mu2
    elif mu2.is_point_mass:
        a, other = mu2.locations[0], mu1
    else:
        return None
    return a + other.lower, a + other.upper


def locate_lower_edge(mu1: SpectralMeasure, mu2: SpectralMeasure,
                      config: SolverConfig | None = None) -> EdgeReport:
    """Lower edge ``E_-`` of ``mu1 [+] mu2`` with curvature and density coefficient.

    The upper edge is obtained from the reflected measures.  When one measure
    is a point mass the convolution is a translation and a degenerate report
    (no square-root data) is returned.

    Raises
    ------
    EdgeNotFoundError
        No zero of ``S`` on the branch, or the residual exceeds ``1e-9``.
    """
    shifted = _shift_point_mass(mu1, mu2)
    if shifted is not None:
        lo, hi = shifted
        return EdgeReport(lo, hi, math.nan, math.nan, (math.nan, math.nan), math.nan, math.nan,
                          math.nan, (lo, lo), 0.0, degenerate=True,
                          diagnostics=("point mass: translation",))
    bp, bracket, wbracket, diag = _lower_edge(mu1, mu2)
    if abs(bp.S) > EDGE_RESIDUAL_TOL:
        raise EdgeNotFoundError(f"edge equation residual {abs(bp.S):.3g} above tolerance")
    up, _, _, diag_up = _lower_edge(mu1.reflect(), mu2.reflect())
    zpp = curvature(bp)
    dm1 = moments(mu1, complex(bp.omega2))[1].real
    coef = math.sqrt(2.0 / abs(zpp))
    S, T1, T2 = _triple(bp.F1[1], bp.F1[2], bp.F2[1], bp.F2[2])
    if not zpp < 0:
        diag.append(f"edge curvature has unexpected sign: {zpp}")
    return EdgeReport(
        E_minus=bp.x, E_plus=-up.x, omega1=bp.omega1, omega2=bp.omega2,
        k0=(mu2.lower - bp.omega1, mu1.lower - bp.omega2),
        z_second=zpp, curvature=abs(zpp), density_coefficient=dm1 * coef / math.pi,
        bracket=bracket, edge_residual=abs(bp.S), S=S, T1=T1, T2=T2,
        sqrt_coefficient_predicted=-coef, diagnostics=tuple(diag + diag_up))


def locate_upper_edge(mu1: SpectralMeasure, mu2: SpectralMeasure,
                      config: SolverConfig | None = None) -> float:
    """Upper edge ``E_+`` (lower edge of the reflected pair, negated)."""
    return -locate_lower_edge(mu1.reflect(), mu2.reflect(), config).E_minus


def branch_below_edge(mu1: SpectralMeasure, mu2: SpectralMeasure, report: EdgeReport,
                      z: float) -> BranchPoint:
    """Real branch point with ``x(omega2) = z`` for real ``z < E_-``."""
    if not z < report.E_minus:
        raise DomainError("branch_below_edge needs z < E_-")
    w_star = report.omega2
    guess = math.sqrt(2.0 * (report.E_minus - z) / report.curvature)
    left = w_star - 2.0 * guess - 1e-12
    bp_left = branch_point(mu1, mu2, left)
    while bp_left.x > z:
        guess *= 2.0
        left = w_star - 2.0 * guess
        bp_left = branch_point(mu1, mu2, left)
    w = optimize.brentq(lambda v: branch_point(mu1, mu2, v).x - z, left, w_star,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps)
    bp = branch_point(mu1, mu2, w)
    return bp


def edge_expansion(mu1: SpectralMeasure, mu2: SpectralMeasure, report: EdgeReport,
                   ks=range(8, 21), fit_tol: float = 1e-2) -> EdgeReport:
    """Fit the square-root expansion of ``omega2`` on ``z = E_- - 2**-k``.

    Least squares of ``omega2(z) - omega2(E_-)`` against ``c s + d s**2`` with
    ``s = sqrt(E_- - z)``; the leading coefficient is compared with
    ``-sqrt(2/|x''|)`` and with the alternative ``-2/|x''|``.

    Raises
    ------
    ExpansionFitError
        Degenerate report, or relative RMS residual of the fit above ``fit_tol``.
    """
    if report.degenerate:
        raise ExpansionFitError("translation by a point mass has no square-root edge")
    ks = np.asarray(list(ks), float)
    dz = 2.0 ** -ks
    y = np.array([branch_below_edge(mu1, mu2, report, report.E_minus - h).omega2
                  for h in dz]) - report.omega2
    s = np.sqrt(dz)
    X = np.column_stack([s, s * s])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)) / np.sqrt(np.mean(y ** 2)))
    if resid > fit_tol:
        raise ExpansionFitError(f"square-root fit residual {resid:.3g} above {fit_tol}")
    slope = float(np.polyfit(np.log(dz), np.log(np.abs(y)), 1)[0])
    c = float(coef[0])
    forms = {"sqrt(2/z'')": math.sqrt(2.0 / report.curvature), "2/z''": 2.0 / report.curvature}
    form = ",".join(k for k, v in forms.items() if abs(abs(c) - v) <= COEFFICIENT_RTOL * v)
    return replace(report, sqrt_coefficient=c, expansion_exponent=slope,
                   coefficient_form=form or "none", fit_residual=resid)


# ---------------------------------------------------------------------------
# scaling probe

@dataclass(frozen=True)
class ScalingGrid:
    """Ladders used by :func:`scaling_probe`.

    ``vertical_eta``: heights above ``E_-``; ``inside_kappa``: distances into the
    support (boundary values); ``outside_kappa`` at height ``outside_eta``.
    """

    vertical_eta: tuple = tuple(np.geomspace(1e-7, 1e-3, 9))
    inside_kappa: tuple = tuple(np.geomspace(1e-6, 1e-3, 7))
    outside_kappa: tuple = tuple(np.geomspace(1e-4, 1e-1, 7))
    outside_eta: float = 1e-6


COLUMNS = ("E", "eta", "kappa", "re_m", "im_m", "abs_S", "abs_omega1_prime", "abs_omega2_prime")


@dataclass(frozen=True)
class ScalingTable:
    """Probe rows (columns :data:`COLUMNS`), the region of each row and fitted exponents."""

    rows: np.ndarray
    region: tuple
    exponents: dict
    outside_ratio: float
    failed: np.ndarray

    def column(self, name) -> np.ndarray:
        return self.rows[:, COLUMNS.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


def _slope(x, y):
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _rows(mu1, mu2, pairs: PairArray, E, eta, kappa):
    _, dF1, _ = f_values(mu1, pairs.omega2)
    _, dF2, _ = f_values(mu2, pairs.omega1)
    S = (dF1 - 1.0) * (dF2 - 1.0) - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        d1, d2 = -dF1 / S, -dF2 / S
    return np.column_stack([E, eta, kappa, pairs.m.real, pairs.m.imag,
                            np.abs(S), np.abs(d1), np.abs(d2)])


def scaling_probe(mu1: SpectralMeasure, mu2: SpectralMeasure, report: EdgeReport,
                  grid: ScalingGrid | None = None,
                  config: SolverConfig | None = None) -> ScalingTable:
    """Evaluate ``Im m``, ``|S|`` and ``|omega'|`` on ladders around ``E_-``.

    Fitted exponents (keys of ``exponents``): ``im_m_inside`` against kappa,
    ``abs_S`` and ``abs_omega_prime`` against ``kappa + eta`` over all rows.
    ``outside_ratio`` is ``max Im m * sqrt(kappa) / eta`` over the outside rows.
    """
    g = grid or ScalingGrid()
    cfg = config or SolverConfig()
    E0 = report.E_minus
    blocks, regions, failed = [], [], []
    # vertical ladder at the edge
    ve = np.sort(np.asarray(g.vertical_eta))[::-1]
    eta = np.concatenate([cfg.ladder()[cfg.ladder() > ve[0]], ve])
    tr = eta_ladder(mu1, mu2, [E0], cfg, eta=eta)
    sel = slice(eta.size - ve.size, None)
    pv = PairArray(E0 + 1j * ve, tr.omega1[sel, 0], tr.omega2[sel, 0], tr.m[sel, 0],
                   None, None, None, np.full(ve.size, tr.converged[0]))
    blocks.append(_rows(mu1, mu2, pv, np.full(ve.size, E0), ve, np.zeros(ve.size)))
    regions += ["edge"] * ve.size
    failed.append(~pv.converged)
    # inside, on the real axis
    ki = np.asarray(g.inside_kappa)
    pin, stable = boundary_array(mu1, mu2, E0 + ki, cfg)
    blocks.append(_rows(mu1, mu2, pin, E0 + ki, np.zeros(ki.size), ki))
    regions += ["inside"] * ki.size
    failed.append(~stable)
    # outside, at fixed small eta
    ko = np.asarray(g.outside_kappa)
    lad = cfg.ladder()
    eta = np.concatenate([lad[lad > g.outside_eta], [g.outside_eta]])
    tr = eta_ladder(mu1, mu2, E0 - ko, cfg, eta=eta)
    po = PairArray(E0 - ko + 1j * g.outside_eta, tr.omega1[-1], tr.omega2[-1], tr.m[-1],
                   None, None, None, tr.converged)
    blocks.append(_rows(mu1, mu2, po, E0 - ko, np.full(ko.size, g.outside_eta), ko))
    regions += ["outside"] * ko.size
    failed.append(~tr.converged)
    rows = np.vstack(blocks)
    region = tuple(regions)
    failed = np.concatenate(failed)
    r = np.array(region)
    kap, et = rows[:, 2], rows[:, 1]
    scale = kap + et
    near = (scale <= 1e-3) & ~failed
    ins = (r == "inside") & ~failed
    outs = (r == "outside") & ~failed
    exps = {
        "im_m_inside": _slope(kap[ins], rows[ins, 4]),
        "abs_S": _slope(scale[near], rows[near, 5]),
        "abs_omega1_prime": _slope(scale[near], rows[near, 6]),
        "abs_omega2_prime": _slope(scale[near], rows[near, 7]),
    }
    ratio = float(np.max(rows[outs, 4] * np.sqrt(kap[outs]) / et[outs]))
    return ScalingTable(rows, region, exps, ratio, failed)
