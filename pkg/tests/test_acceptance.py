"""Acceptance criteria 1-12.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see ``conftest.py``).  Run on its own with
``pytest tests/test_acceptance.py`` (about 10 minutes on one core).
"""
import math
import time

import numpy as np
import pytest

from conftest import semicircle_sum_m
from freeconv.edge import edge_expansion, locate_lower_edge, scaling_probe
from freeconv.experiments import ExperimentConfig, run_experiment
from freeconv.measure import discretize, make_reference_measure
from freeconv.rmt import (IDENTITY_TOL, ORTHOGONAL, UNITARY, draw, fluctuation_observables,
                          partial_decomposition, sample_haar)
from freeconv.subordination import solve_grid

RESULTS: list[str] = []

SC = make_reference_measure("semicircle", variance=1.0)
UNI = make_reference_measure("uniform")

# tolerances
SUBORDINATION_TOL = 1e-10
EDGE_TOL = 1e-6
EDGE_RESIDUAL_TOL = 1e-9
EXPONENT_TOL = 0.05
OMEGA_EXPONENT_TOL = 0.1
COEFFICIENT_RTOL = 0.01
OUTSIDE_CONSTANT = 3.0
DECOMPOSITION_TOL = 1e-10
ENTRYWISE_P90 = 10.0


def record(k: int, ok: bool, detail: str, elapsed: float, budget: float):
    ok = ok and elapsed < budget
    RESULTS.append(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}  "
                   f"[{elapsed:.1f} s / {budget:g} s]")
    assert ok, RESULTS[-1]


def gate(rep, name):
    (g,) = [g for g in rep.gates if g["name"] == name]
    return g


def test_01_subordination_closed_form():
    z = np.linspace(-4.0, 4.0, 50) + 0.01j
    t0 = time.perf_counter()
    res = solve_grid(SC, SC, z)
    el = time.perf_counter() - t0
    err = float(np.max(np.abs(res.m - semicircle_sum_m(z))))
    record(1, bool(res.converged.all()) and err <= SUBORDINATION_TOL,
           f"max |m - closed form| = {err:.2e} (tol {SUBORDINATION_TOL:g})", el, 1.0)


def test_02_edge_location():
    t0 = time.perf_counter()
    rep = locate_lower_edge(SC, SC)
    el = time.perf_counter() - t0
    err = abs(rep.E_minus + 2 * math.sqrt(2))
    record(2, err <= EDGE_TOL and rep.edge_residual <= EDGE_RESIDUAL_TOL,
           f"|E_- + 2 sqrt 2| = {err:.2e}, edge residual = {rep.edge_residual:.2e}", el, 60.0)


@pytest.fixture(scope="module")
def uniform_edge():
    t0 = time.perf_counter()
    rep = edge_expansion(UNI, UNI, locate_lower_edge(UNI, UNI))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def uniform_scaling(uniform_edge):
    t0 = time.perf_counter()
    table = scaling_probe(UNI, UNI, uniform_edge[0])
    return table, time.perf_counter() - t0


def test_03_square_root_edge(uniform_edge, uniform_scaling):
    rep, t_edge = uniform_edge
    table, t_scale = uniform_scaling
    expo = table.exponents["im_m_inside"]
    rel = abs(rep.sqrt_coefficient / rep.sqrt_coefficient_predicted - 1)
    ok = abs(expo - 0.5) <= EXPONENT_TOL and rel <= COEFFICIENT_RTOL
    record(3, ok and "sqrt(2/z'')" in rep.coefficient_form,
           f"density exponent {expo:.4f}, coefficient {rep.sqrt_coefficient:.5f} vs "
           f"{rep.sqrt_coefficient_predicted:.5f} (rel {rel:.1e}, form {rep.coefficient_form})",
           t_edge + t_scale, 30.0)


def test_04_scaling_laws(uniform_edge, uniform_scaling):
    table, el = uniform_scaling
    e = table.exponents
    checks = {
        "|S|": abs(e["abs_S"] - 0.5) <= EXPONENT_TOL,
        "|omega'|": max(abs(e["abs_omega1_prime"] + 0.5),
                        abs(e["abs_omega2_prime"] + 0.5)) <= OMEGA_EXPONENT_TOL,
        "Im m inside": abs(e["im_m_inside"] - 0.5) <= EXPONENT_TOL,
        "Im m outside": table.outside_ratio <= OUTSIDE_CONSTANT,
    }
    failed = [k for k, v in checks.items() if not v]
    record(4, not failed and not table.failed.any(),
           f"|S| {e['abs_S']:.3f}, |omega'| {e['abs_omega2_prime']:.3f}, Im m inside "
           f"{e['im_m_inside']:.3f}, max Im m sqrt(kappa)/eta = {table.outside_ratio:.3f} "
           f"(bound {OUTSIDE_CONSTANT:g}); failing: {failed or 'none'}",
           el + uniform_edge[1], 60.0)


def test_05_exact_identities():
    t0 = time.perf_counter()
    worst, name = 0.0, ""
    for N in (64, 512):
        a = discretize(UNI, N).locations
        for field in (UNITARY, ORTHOGONAL):
            for seed in range(5):
                s = draw(a, a, N, seed, field)
                rep = fluctuation_observables(s, 0.1 + 0.05j)
                k = max(rep.residuals, key=rep.residuals.get)
                if rep.residuals[k] > worst:
                    worst, name = rep.residuals[k], f"{k} (N={N}, {field}, seed {seed})"
    el = time.perf_counter() - t0
    record(5, worst <= IDENTITY_TOL, f"worst relative residual {worst:.2e} at {name}", el, 30.0)


def test_06_partial_decomposition():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(10):
        U = sample_haar(64, int(rng.integers(1 << 30)))
        parts = partial_decomposition(U, int(rng.integers(64)), tol=DECOMPOSITION_TOL)
        worst = max(worst, max(parts.residuals.values()))
    el = time.perf_counter() - t0
    record(6, worst <= DECOMPOSITION_TOL, f"worst residual {worst:.2e}", el, 5.0)


def test_07_entrywise_magnitudes():
    N, eta = 500, 0.05
    a = discretize(UNI, N).locations
    t0 = time.perf_counter()
    T, Y = [], []
    for seed in range(20):
        rep = fluctuation_observables(draw(a, a, N, seed), 0.0 + 1j * eta)
        T.append(math.sqrt(N * eta) * float(np.max(np.abs(rep.T))))
        Y.append(math.sqrt(N * eta) * abs(rep.Upsilon))
    el = time.perf_counter() - t0
    pT, pY = float(np.quantile(T, 0.9)), float(np.quantile(Y, 0.9))
    record(7, pT <= ENTRYWISE_P90 and pY <= ENTRYWISE_P90,
           f"p90 sqrt(N eta) max_i |T_i| = {pT:.3f}, p90 sqrt(N eta)|Upsilon| = {pY:.4f}",
           el, 300.0)


def _campaign(name, **kw):
    cfg = ExperimentConfig(seeds=tuple(range(kw.pop("n_seeds", 20))), **kw)
    t0 = time.perf_counter()
    rep = run_experiment(name, cfg)
    return rep, time.perf_counter() - t0


def test_08_local_law():
    rep, el = _campaign("local-law", N_list=(500,))
    b, o = gate(rep, "local_law_bulk_N500"), gate(rep, "local_law_outside_N500")
    record(8, b["status"] == "pass" and o["status"] == "pass",
           f"bulk p90 max N eta|m_H - m| = {b['value']:.3f} (<= 10), outside p90 "
           f"N kappa|m_H - m| = {o['value']:.3f} (<= 20)", el, 600.0)


def test_09_rigidity():
    rep, el = _campaign("rigidity", N_list=(500, 1000))
    p, r = gate(rep, "rigidity_p90_N500"), gate(rep, "rigidity_ratio_500_1000")
    record(9, p["status"] == "pass" and r["status"] == "pass",
           f"p90 rigidity statistic {p['value']:.3f} (<= 10), median ratio {r['value']:.3f} "
           f"in [{r['threshold'][0]:.3f}, {r['threshold'][1]:.3f}]", el, 600.0)


def test_10_edge_fluctuation():
    rep, el = _campaign("edge-fluct", N_list=(250, 500, 1000, 2000), n_seeds=50)
    p, s = gate(rep, "edge_p95_N1000"), gate(rep, "edge_slope")
    bound = gate(rep, "operator_bound")
    record(10, p["status"] == "pass" and s["status"] == "pass" and bound["status"] == "pass",
           f"p95 N^(2/3)|lambda_1 - E_-| = {p['value']:.3f} (<= 10), slope {s['value']:.3f} "
           f"(-2/3 +- 0.15)", el, 1200.0)


def test_11_kolmogorov_rate():
    rep, el = _campaign("ks", N_list=(1000,))
    g = gate(rep, "ks_p90_N1000")
    record(11, g["status"] == "pass",
           f"p90 N KS = {g['value']:.3f} (<= 5 log N = {g['threshold']:.3f})", el, 600.0)


def test_12_determinism():
    cfg = ExperimentConfig(N_list=(200,), seeds=tuple(range(10)))
    first = run_experiment("rigidity", cfg).to_json()
    t0 = time.perf_counter()
    second = run_experiment("rigidity", cfg).to_json()
    rerun = time.perf_counter() - t0
    t1 = time.perf_counter()
    ExperimentConfig.from_dict(cfg.to_dict()).hash()
    overhead = time.perf_counter() - t1
    record(12, first == second,
           f"byte-identical reports: {first == second} (rerun {rerun:.2f} s, "
           f"config/hash overhead {overhead * 1e3:.2f} ms)", overhead, 1.0)
