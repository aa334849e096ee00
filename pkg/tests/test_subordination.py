import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import semicircle_sum_m
from freeconv.errors import DomainError, SolverDivergedError
from freeconv.measure import atomic, discretize, make_reference_measure, moments
from freeconv.subordination import (SolverConfig, boundary_values, continuation_solve,
                                    finite_difference_derivatives, free_conv_m, solve_grid,
                                    solve_subordination, subordination_derivatives)

SC = make_reference_measure("semicircle")
UNI = make_reference_measure("uniform")
upper = st.builds(complex, st.floats(-4, 4), st.floats(1e-2, 4))


@given(upper)
def test_semicircle_pair_closed_form(z):
    assert abs(free_conv_m(SC, SC, z) - semicircle_sum_m(z)) < 1e-10


@given(upper)
def test_subordination_equations_hold(z):
    p = solve_subordination(UNI, SC, z)
    F1 = -1 / moments(UNI, p.omega2)[0]
    F2 = -1 / moments(SC, p.omega1)[0]
    assert abs(F1 - F2) < 1e-10
    assert abs(p.omega1 + p.omega2 - z - F1) < 1e-10
    assert p.omega1.imag >= z.imag - 1e-12 and p.omega2.imag >= z.imag - 1e-12


@given(upper)
def test_symmetry_in_arguments(z):
    p = solve_subordination(UNI, SC, z)
    q = solve_subordination(SC, UNI, z)
    assert abs(p.m - q.m) < 1e-10
    assert abs(p.omega1 - q.omega2) < 1e-10


def test_point_mass_translates():
    z = 0.4 + 0.1j
    m = free_conv_m(atomic([0.7]), UNI, z)
    assert abs(m - moments(UNI, z - 0.7)[0]) < 1e-12


def test_grid_vectorised_matches_scalar():
    z = np.linspace(-3, 3, 50) + 0.05j
    res = solve_grid(SC, SC, z)
    assert res.converged.all()
    assert np.max(np.abs(res.m - semicircle_sum_m(z))) < 1e-10


def test_derivatives_agree_with_finite_differences():
    p = solve_subordination(UNI, UNI, 0.6 + 0.05j)
    an = subordination_derivatives(UNI, UNI, p)
    fd = finite_difference_derivatives(UNI, UNI, p)
    for a, b in zip(an, fd):
        assert abs(a - b) <= 1e-5 * max(1.0, abs(a))


def test_lower_half_plane_is_rejected():
    with pytest.raises(DomainError):
        solve_subordination(SC, SC, 0.1 - 0.1j)


def test_budget_exhaustion_reports_best_iterate():
    cfg = SolverConfig(max_iter=1, newton=False, tol=1e-15)
    with pytest.raises(SolverDivergedError) as exc:
        solve_subordination(UNI, UNI, 0.5 + 1e-3j, cfg)
    assert exc.value.best is not None


def test_continuation_sweep_and_order_checks():
    pts = [0.1 + 2j, 0.1 + 1j, 0.1 + 0.1j, 0.2 + 0.1j, 0.2 + 0.01j]
    out = continuation_solve(SC, SC, pts)
    assert max(abs(p.m - semicircle_sum_m(p.z)) for p in out) < 1e-10
    with pytest.raises(ValueError):
        continuation_solve(SC, SC, [0.1 + 1j])
    with pytest.raises(ValueError):
        continuation_solve(SC, SC, [0.1 + 2j, 0.1 + 3j])


@settings(max_examples=15)
@given(st.floats(-2.7, 2.7))
def test_boundary_values_inside_bulk(x):
    p = boundary_values(SC, SC, x)
    exact = (-x + 1j * np.sqrt(8 - x * x)) / 4
    assert abs(p.m - exact) < 1e-6


def test_boundary_values_outside_support_are_real():
    p = boundary_values(SC, SC, -3.5)
    assert abs(p.m.imag) < 1e-8
    assert abs(p.m - semicircle_sum_m(-3.5 + 1e-14j)) < 1e-8


def test_discretized_pair_close_to_continuous():
    A, B = discretize(UNI, 500), discretize(UNI, 500)
    z = 1.0 + 0.1j
    assert abs(free_conv_m(A, B, z) - free_conv_m(UNI, UNI, z)) < 1e-3


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(damping=0)
    with pytest.raises(ValueError):
        SolverConfig(eta_floor=5.0)
    lad = SolverConfig().ladder()
    assert lad[0] == 2.0 and lad[-1] >= 1e-9 and lad[-1] / 2 < 1e-9


BERN = atomic([-1.0, 1.0])


def test_semicircle_pair_at_i():
    p = solve_subordination(SC, SC, 1j)
    assert abs(p.omega1 - 1.5j) < 1e-12 and abs(p.omega2 - 1.5j) < 1e-12
    assert abs(p.m - 0.5j) < 1e-12


def test_point_mass_pair_at_i():
    p = solve_subordination(atomic([1.0]), UNI, 1j)
    assert abs(p.omega1 - (-1 + 1j)) < 1e-12
    assert abs(p.m - moments(UNI, -1 + 1j)[0]) < 1e-12
    d1, _, _ = subordination_derivatives(atomic([1.0]), UNI, p)
    assert abs(d1 - 1) < 1e-12


def test_bernoulli_pair_is_arcsine():
    assert abs(free_conv_m(BERN, BERN, 2j) - 1j / (2 * np.sqrt(2))) < 1e-12
    assert abs(boundary_values(BERN, BERN, 0.0).m.imag - 0.5) < 1e-6


def test_boundary_values_examples():
    assert abs(boundary_values(SC, SC, 0.0).m.imag - np.sqrt(2) / 2) < 1e-6
    p = boundary_values(UNI, UNI, -5.0)
    assert abs(p.m.imag) <= 1e-8
    assert abs(p.m - free_conv_m(UNI, UNI, -5.0 + 1e-12j)) <= 1e-8


def test_continuation_vertical_ladder_and_single_point():
    pts = [0.4 + 2.0 * 0.5**k * 1j for k in range(20)]
    out = continuation_solve(SC, SC, pts)
    assert max(max(p.residual1, p.residual2) for p in out) <= 1e-12
    single = continuation_solve(SC, SC, [0.4 + 2j])[0]
    assert single == solve_subordination(SC, SC, 0.4 + 2j)


@given(upper)
def test_initialization_independence(z):
    a = solve_subordination(UNI, SC, z)
    warm = a.__class__(z, z + 3j, z + 5j, 0j, 0.0, 0.0, 0, True)
    b = solve_subordination(UNI, SC, z, warm_start=warm)
    assert abs(a.m - b.m) <= 10 * 1e-12 * max(1, abs(a.m)) ** 2 + 1e-11


@pytest.mark.parametrize("a", [-1.0, -0.3, 0.3, 1.0])
def test_translation_covariance(a):
    z = 0.2 + 0.3j
    shifted = make_reference_measure("uniform", support=(a, 1 + a))
    assert abs(free_conv_m(shifted, SC, z) - free_conv_m(UNI, SC, z - a)) < 1e-11


def test_dilation_covariance():
    s, z = 2.5, 0.3 + 0.2j
    big = make_reference_measure("uniform", support=(0.0, s))
    sc_big = make_reference_measure("semicircle", variance=s * s)
    p, q = solve_subordination(UNI, SC, z), solve_subordination(big, sc_big, s * z)
    assert abs(q.m - p.m / s) < 1e-11
    assert abs(q.omega1 - s * p.omega1) < 1e-10


def test_imaginary_part_budget():
    z = np.array([E + 1j * h for E in np.linspace(-1, 2, 13) for h in (1e-3, 1e-2, 0.1, 1.0)])
    r = solve_grid(UNI, SC, z)
    excess = (r.omega1.imag + r.omega2.imag - z.imag) / r.m.imag
    C = excess.max()
    # frozen on the reference grid, then checked on a shifted one
    z2 = z + 0.05
    r2 = solve_grid(UNI, SC, z2)
    assert np.all(r2.omega1.imag + r2.omega2.imag <= z2.imag + 1.1 * C * r2.m.imag)


def test_edge_gap():
    from freeconv.edge import locate_lower_edge
    rep = locate_lower_edge(UNI, UNI)
    assert min(rep.k0) > 0
    assert rep.omega1 <= UNI.lower - rep.k0[0] + 1e-15
