"""The random-matrix model ``H = A + U B U*`` and its Green-function observables.

``A = diag(a)``, ``B = diag(b)`` are deterministic and ``U`` is Haar on the
unitary or orthogonal group.  Normalised traces ``tr X = (1/N) Tr X`` are used
throughout, ``B~ = U B U*`` and ``G = (H - z)^{-1}``.

Randomness comes from a counter-based generator (Philox) with one substream per
``(seed, purpose)``, so runs are bit-reproducible on a fixed platform.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (DegeneratePivotError, DegenerateTransformError, InsufficientDataError,
                     NumericalConsistencyError, WeightSingularityError)
from .measure import atomic, f_values
from .subordination import SolverConfig, SubordinationPair, solve_subordination

UNITARY = "unitary"
ORTHOGONAL = "orthogonal"
#: substream identifiers
PURPOSES = {"haar": 1, "weights": 2, "shuffle": 3}
#: tolerance of the exact identities (relative)
IDENTITY_TOL = 1e-9


def substream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for ``(seed, purpose)``."""
    if int(seed) < 0:
        raise ValueError("seeds must be non-negative integers")
    ss = np.random.SeedSequence([int(seed), PURPOSES[purpose]])
    return np.random.Generator(np.random.Philox(ss))


def sample_haar(N: int, seed: int, field: str = UNITARY) -> np.ndarray:
    """Haar-distributed unitary (or real orthogonal) ``N x N`` matrix.

    QR of a Ginibre matrix with the columns rotated by the phases of
    ``diag(R)``, which makes the distribution exactly Haar.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = substream(seed, "haar")
    if field == UNITARY:
        Z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2.0)
    elif field == ORTHOGONAL:
        Z = rng.standard_normal((N, N))
    else:
        raise ValueError(f"unknown field {field!r}")
    Q, R = linalg.qr(Z, overwrite_a=True, check_finite=False)
    d = np.diagonal(R)
    ph = d / np.abs(d)
    return Q * ph[None, :]


@dataclass(frozen=True, eq=False)
class EnsembleSample:
    """One draw of ``H = A + U B U*`` with its spectrum (ascending)."""

    a: np.ndarray
    b: np.ndarray
    U: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    seed: int | None = None
    field: str = UNITARY

    @property
    def N(self) -> int:
        return self.a.size

    @property
    def shift(self) -> float:
        """``tr A + tr B``, removed when observables are centred."""
        return float(self.a.mean() + self.b.mean())

    def eigen_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "lambda"])
        for k, lam in enumerate(self.eigenvalues, start=1):
            w.writerow([k, repr(float(lam))])
        return buf.getvalue()


def assemble(a, b, U) -> np.ndarray:
    """``diag(a) + U diag(b) U*`` after a hermiticity check."""
    Bt = (U * b[None, :]) @ U.conj().T
    H = Bt
    H[np.diag_indices_from(H)] += a
    scale = max(1.0, float(np.max(np.abs(a))) + float(np.max(np.abs(b))))
    if np.max(np.abs(H - H.conj().T)) > 1e-12 * scale:
        raise NumericalConsistencyError("assembled matrix is not Hermitian")
    return 0.5 * (H + H.conj().T)


def assemble_and_diagonalize(a, b, U, vectors: bool = True, seed: int | None = None,
                             field: str = UNITARY) -> EnsembleSample:
    """Dense Hermitian eigendecomposition of ``diag(a) + U diag(b) U*``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape or U.shape != (a.size, a.size):
        raise ValueError("shape mismatch between A, B and U")
    H = assemble(a, b, U)
    if vectors:
        lam, V = linalg.eigh(H, check_finite=False)
    else:
        lam, V = linalg.eigvalsh(H, check_finite=False), None
    return EnsembleSample(a, b, U, lam, V, seed, field)


def draw(a, b, N: int, seed: int, field: str = UNITARY, vectors: bool = True) -> EnsembleSample:
    """Sample ``U`` and diagonalise in one call."""
    return assemble_and_diagonalize(a, b, sample_haar(N, seed, field), vectors, seed, field)


# ---------------------------------------------------------------------------
# Green function

def green_diagonal(sample: EnsembleSample, z) -> np.ndarray:
    """``G_ii(z)`` for every ``i`` and every point of ``z``; shape ``(len(z), N)``."""
    if sample.eigenvectors is None:
        raise ValueError("eigenvectors required")
    z = np.atleast_1d(np.asarray(z, complex))
    W = np.abs(sample.eigenvectors) ** 2
    return (W @ (1.0 / (sample.eigenvalues[:, None] - z[None, :]))).T


def stieltjes_empirical(eigenvalues, z):
    """``m_H(z) = (1/N) sum 1/(lambda_k - z)``."""
    z = np.asarray(z, complex)
    return np.mean(1.0 / (np.asarray(eigenvalues)[:, None] - np.atleast_1d(z)[None, :]),
                   axis=0).reshape(z.shape)


@dataclass(frozen=True, eq=False)
class GreenProbe:
    """Green function of the (optionally centred) model at ``z``."""

    z: complex
    a: np.ndarray
    b: np.ndarray
    U: np.ndarray
    G: np.ndarray
    Bt: np.ndarray
    BtG: np.ndarray
    m_H: complex
    trBtG: complex
    trAG: complex
    centered: bool


def green_probe(sample: EnsembleSample, z: complex, centered: bool = True,
                perturb: float = 0.0) -> GreenProbe:
    """Resolvent ``G = V diag(1/(lambda - z)) V*`` and the traces built from it.

    ``centered`` shifts ``A`` and ``B`` to trace zero (eigenvectors unchanged).
    ``perturb`` adds a constant to the diagonal of ``B~G``; a test hook for the
    negative control of the identity checks.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("Im z must be positive")
    if sample.eigenvectors is None:
        raise ValueError("eigenvectors required")
    a, b, lam = sample.a, sample.b, sample.eigenvalues
    if centered:
        sa, sb = a.mean(), b.mean()
        a, b, lam = a - sa, b - sb, lam - (sa + sb)
    V = sample.eigenvectors
    G = (V * (1.0 / (lam - z))[None, :]) @ V.conj().T
    Bt = (sample.U * b[None, :]) @ sample.U.conj().T
    BtG = Bt @ G
    if perturb:
        BtG = BtG + perturb * np.eye(a.size)
    N = a.size
    m_H = np.trace(G) / N
    return GreenProbe(z, a, b, sample.U, G, Bt, BtG, complex(m_H), complex(np.trace(BtG) / N),
                      complex(np.sum(a * np.diagonal(G)) / N), centered)


def approx_subordination(probe: GreenProbe) -> tuple[complex, complex]:
    """``(omega_A^c, omega_B^c) = (z - tr AG/m_H, z - tr B~G/m_H)``."""
    if abs(probe.m_H) < 1e-12:
        raise DegenerateTransformError("m_H vanishes")
    return probe.z - probe.trAG / probe.m_H, probe.z - probe.trBtG / probe.m_H


# ---------------------------------------------------------------------------
# partial randomness decomposition

@dataclass(frozen=True, eq=False)
class DecompositionParts:
    """Splitting of column ``i`` of ``U`` off by a reflection.

    ``U = -exp(i theta) R U_i`` with ``R = I - r r*``, ``U_i e_i = e_i``.
    Only the direction of the Gaussian vector behind column ``i`` is
    determined by ``U``; ``g`` is therefore stored normalised (``g = h``).
    """

    index: int
    theta: float
    g: np.ndarray
    h: np.ndarray
    ell: float
    r: np.ndarray
    R: np.ndarray
    U_minor: np.ndarray
    residuals: dict = field(default_factory=dict)


def partial_decomposition(U: np.ndarray, i: int, tol: float = 1e-10) -> DecompositionParts:
    """Decompose ``U`` around column ``i`` and verify the defining relations."""
    N = U.shape[0]
    u = U[:, i]
    if abs(u[i]) < 1e-14:
        raise DegeneratePivotError(f"|u_ii| = {abs(u[i]):.3g} at i={i}")
    theta = float(np.angle(u[i]))
    ph = np.exp(-1j * theta)
    h = ph * u
    e = np.zeros(N, complex)
    e[i] = 1.0
    v = e + h
    nv = np.linalg.norm(v)
    r = math.sqrt(2.0) * v / nv
    R = np.eye(N) - np.outer(r, r.conj())
    Ui = -ph * (R @ U)
    res = {
        "R_hermitian": float(np.max(np.abs(R - R.conj().T))),
        "R_involution": float(np.max(np.abs(R @ R - np.eye(N)))),
        "R_e_eq_minus_h": float(np.max(np.abs(R @ e + h))),
        "R_h_eq_minus_e": float(np.max(np.abs(R @ h + e))),
        "U_factorisation": float(np.max(np.abs(U + np.exp(1j * theta) * (R @ Ui)))),
        "column_identity": float(np.max(np.abs(U @ e + np.exp(1j * theta) * (R @ e)))),
        "minor_fixes_e": float(np.max(np.abs(Ui @ e - e))),
    }
    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise NumericalConsistencyError(f"decomposition relations violated: {bad}")
    return DecompositionParts(i, theta, h.copy(), h, math.sqrt(2.0) / nv, r, R, Ui, res)


# ---------------------------------------------------------------------------
# fluctuation observables

def _rel(lhs, rhs):
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs)) / scale)


@dataclass(frozen=True, eq=False)
class FluctuationReport:
    """Green-function observables at ``z`` and residuals of the exact identities."""

    z: complex
    S: np.ndarray
    S_ring: np.ndarray
    T: np.ndarray
    T_ring: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    K: np.ndarray
    Q_swap: np.ndarray
    m_H: complex
    trBtG: complex
    trAG: complex
    Upsilon: complex
    omega_A_c: complex
    omega_B_c: complex
    Phi1_c: complex
    Phi2_c: complex
    Z1: complex
    Z2: complex
    Psi: float
    Pi: float
    Pi_i: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    Lambda_A: complex | None
    Lambda_B: complex | None
    Lambda_d: float | None
    residuals: dict

    @property
    def passed(self) -> bool:
        return all(v <= IDENTITY_TOL for v in self.residuals.values())

    def to_json(self) -> str:
        def enc(v):
            if isinstance(v, np.ndarray):
                if np.iscomplexobj(v):
                    return [[float(x.real), float(x.imag)] for x in v]
                return [float(x) for x in v]
            if isinstance(v, complex):
                return [v.real, v.imag]
            return v
        d = {k: enc(getattr(self, k)) for k in self.__dataclass_fields__}
        return json.dumps(d, indent=2, sort_keys=True)


def _centered_measures(a, b):
    return atomic(a), atomic(b)


def fluctuation_observables(sample: EnsembleSample, z: complex,
                            pair: SubordinationPair | None = None,
                            config: SolverConfig | None = None,
                            perturb: float = 0.0) -> FluctuationReport:
    """All per-index and scalar observables at ``z`` plus identity residuals.

    Observables use the centred model (``tr A = tr B = 0``).  ``pair`` is the
    subordination pair of the centred ``(mu_A, mu_B)`` at ``z``; it is solved
    for when omitted.  Residuals (relative) are reported under

    * ``approx_subordination``: ``omega_A^c + omega_B^c - z = -1/m_H``
    * ``resolvent_BtG``: ``B~G = I - (A - z) G`` on the diagonal and traced
    * ``K_linear``: ``K_i = (1 + b_i tr G - tr B~G) T_i + Q_i``
    * ``Upsilon_alt``: ``Upsilon = tr AG tr B~G - tr G tr B~GA``
    * ``Q_sum``: ``sum_i Q_i = 0``
    * ``Phi1_rep`` / ``Phi2_rep``: ``Phi^c`` as weighted averages of ``Q`` / ``Q_swap``
    * ``Z1_rep`` / ``Z2_rep``: the weighted representations of ``Z1``, ``Z2``
    * ``S_direct``: closed form of ``S_i`` against ``h* R B~ R G e_i`` on a few ``i``
    """
    pr = green_probe(sample, z, centered=True, perturb=perturb)
    N = pr.a.size
    a, b, G, Bt, BtG, U = pr.a, pr.b, pr.G, pr.Bt, pr.BtG, pr.U
    eta = pr.z.imag
    Gd = np.diagonal(G).copy()
    BtGd = np.diagonal(BtG).copy()
    Btd = np.diagonal(Bt).real.copy()
    trG, trBtG, trAG = pr.m_H, pr.trBtG, pr.trAG
    # column phases and reflections, vectorised over i
    ud = np.diagonal(U)
    if np.any(np.abs(ud) < 1e-14):
        raise DegeneratePivotError("a diagonal entry of U vanishes")
    theta = np.angle(ud)
    hii = np.abs(ud)
    ell2 = 1.0 / (1.0 + hii)
    UsG = U.conj().T @ G
    T = np.exp(1j * theta) * np.diagonal(UsG)
    S = -BtGd + ell2 * (Btd + b * hii) * (Gd + T)
    S_ring = S - hii * b * Gd
    T_ring = T - hii * Gd
    Q = BtGd * trG - Gd * trBtG
    trBtGBt = np.sum(BtG * Bt.T) / N
    Ups = trBtG - trBtG**2 + trG * trBtGBt
    P = Q + (Gd + T) * Ups
    K = T + (b * T + BtGd) * trG - (Gd + T) * trBtG
    # swapped ensemble: calligraphic G = U* G U, A~ = U* A U
    Gs = UsG @ U
    Gsd = np.diagonal(Gs).copy()
    At = (U.conj().T * a[None, :]) @ U
    AtGs_d = np.sum(At * Gs.T, axis=1)
    Q_swap = AtGs_d * trG - Gsd * trAG
    # approximate subordination and Phi's with the empirical F's
    wA, wB = approx_subordination(pr)
    muA, muB = _centered_measures(a, b)
    if np.min(np.abs(a - wB)) < 1e-10 or np.min(np.abs(b - wA)) < 1e-10:
        raise WeightSingularityError("weight 1/(a_i - omega_B^c) or 1/(b_i - omega_A^c) singular")
    FA_c = complex(f_values(muA, wB)[0])
    FB_c = complex(f_values(muB, wA)[0])
    Phi1 = FA_c - wA - wB + pr.z
    Phi2 = FB_c - wA - wB + pr.z
    if pair is None:
        pair = solve_subordination(muA, muB, pr.z, config)
    omA, omB = pair.omega1, pair.omega2
    dFA = complex(f_values(muA, omB)[1])
    dFB = complex(f_values(muB, omA)[1])
    mH2 = pr.m_H**2
    wa = 1.0 / (a - wB)
    wb = 1.0 / (b - wA)
    d1 = -FA_c / mH2 * wa
    d2 = -(dFA - 1.0) * FB_c / mH2 * wb
    Z1 = Phi1 + (dFA - 1.0) * Phi2
    Z2 = Phi2 + (dFB - 1.0) * Phi1
    e1 = -FB_c / mH2 * wb
    e2 = -(dFB - 1.0) * FA_c / mH2 * wa
    # control parameters and deviations
    Psi = math.sqrt(1.0 / (N * eta))
    Pi = math.sqrt(max(pr.m_H.imag, 0.0) / (N * eta))
    Pi_i = np.sqrt(np.maximum((Gd + Gsd).imag, 0.0) / (N * eta))
    Lambda_d = float(np.max(np.abs(Gd - 1.0 / (a - omB))))
    # identity residuals
    res = {
        "approx_subordination": _rel(wA + wB - pr.z, -1.0 / pr.m_H),
        "resolvent_BtG": max(_rel(BtGd, 1.0 - (a - pr.z) * Gd),
                             _rel(trBtG, 1.0 - trAG + pr.z * trG)),
        "K_linear": _rel(K, (1.0 + b * trG - trBtG) * T + Q),
        "Upsilon_alt": _rel(Ups, trAG * trBtG - trG * np.sum(BtGd * a) / N),
        "Q_sum": float(abs(Q.sum()) / (N * max(1.0, float(np.max(np.abs(Q)))))),
        "Phi1_rep": _rel(Phi1, -FA_c / mH2 * np.mean(Q * wa)),
        "Phi2_rep": _rel(Phi2, -FB_c / mH2 * np.mean(Q_swap * wb)),
        "Z1_rep": _rel(Z1, np.mean(d1 * Q) + np.mean(d2 * Q_swap)),
        "Z2_rep": _rel(Z2, np.mean(e1 * Q_swap) + np.mean(e2 * Q)),
    }
    # direct evaluation of S_i for a few indices as a cross-check of the closed form
    worst = 0.0
    for i in sorted({0, N // 2, N - 1}):
        h = np.exp(-1j * theta[i]) * U[:, i]
        ei = np.zeros(N, complex)
        ei[i] = 1.0
        r = math.sqrt(2.0) * (ei + h) / np.linalg.norm(ei + h)
        Rv = lambda x: x - r * (r.conj() @ x)
        lhs = Rv(Bt @ Rv(G[:, i]))
        worst = max(worst, _rel(h.conj() @ lhs, S[i]))
    res["S_direct"] = worst
    LA = LB = None
    if pair is not None:
        LA, LB = complex(wA - omA), complex(wB - omB)
    return FluctuationReport(pr.z, S, S_ring, T, T_ring, Q, P, K, Q_swap, pr.m_H, trBtG, trAG,
                             complex(Ups), complex(wA), complex(wB), complex(Phi1), complex(Phi2),
                             complex(Z1), complex(Z2), Psi, Pi, Pi_i, d1, d2, LA, LB, Lambda_d,
                             res)


# ---------------------------------------------------------------------------
# stochastic domination surrogate

@dataclass(frozen=True)
class DominationReport:
    passed: bool
    fraction_exceeding: float
    threshold: float
    trials: int
    max_ratio: float


def stochastic_domination_test(values, bound, N: int, eps: float = 0.25,
                               max_fraction: float = 0.05, min_trials: int = 10) -> DominationReport:
    """Finite-sample surrogate of ``X < Y``: at most ``max_fraction`` of trials exceed ``N**eps * Y``.

    ``values`` has one row per trial (extra axes are reduced by ``max``);
    ``bound`` broadcasts against it.
    """
    v = np.asarray(values, float)
    if v.shape[0] < min_trials:
        raise InsufficientDataError(f"{v.shape[0]} trials; at least {min_trials} required")
    thr = N**eps * np.broadcast_to(np.asarray(bound, float), v.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(thr > 0, v / thr, np.where(v > 0, np.inf, 0.0))
    per_trial = ratio.reshape(v.shape[0], -1).max(axis=1)
    frac = float(np.mean(per_trial > 1.0))
    return DominationReport(frac <= max_fraction, frac, float(N**eps), int(v.shape[0]),
                            float(per_trial.max()))
