import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeconv.errors import DomainError, MeasureError
from freeconv.measure import (atomic, discretize, f_prime_gap, levy_distance, load_measure,
                              make_reference_measure, measure_from_spec, moments, quantile,
                              save_measure, stieltjes_transform, transform_sup)

upper = st.builds(complex, st.floats(-4, 4), st.floats(1e-3, 5))


def semicircle_m(z):
    z = complex(z)
    return (-z + np.sqrt(z - 2) * np.sqrt(z + 2)) / 2


@given(upper)
def test_semicircle_transform_closed_form(z):
    mu = make_reference_measure("semicircle")
    assert abs(stieltjes_transform(mu, z).m - semicircle_m(z)) < 1e-9


@given(upper)
def test_uniform_transform_closed_form(z):
    mu = make_reference_measure("uniform")
    assert abs(stieltjes_transform(mu, z).m - np.log((z - 1) / z)) < 1e-9


@given(upper)
def test_nevanlinna_bounds(z):
    for mu in (make_reference_measure("arcsine"), atomic([-1.0, 0.5, 2.0])):
        tv = stieltjes_transform(mu, z)
        assert tv.m.imag > 0
        assert abs(tv.m) <= 1 / z.imag + 1e-12
        # F(z) - z has non-positive imaginary part growth: Im F >= Im z
        assert tv.F.imag >= z.imag * (1 - 1e-9)


def test_derivatives_match_finite_differences(uniform):
    z, h = 0.3 + 0.2j, 1e-5
    tv = stieltjes_transform(uniform, z)
    fd = (stieltjes_transform(uniform, z + h).F - stieltjes_transform(uniform, z - h).F) / (2 * h)
    assert abs(fd - tv.dF) < 1e-8
    fd2 = (stieltjes_transform(uniform, z + h).dF - stieltjes_transform(uniform, z - h).dF) / (2 * h)
    assert abs(fd2 - tv.d2F) < 1e-6


def test_real_axis_refused_near_support(uniform):
    with pytest.raises(DomainError):
        stieltjes_transform(uniform, 0.5)
    with pytest.raises(DomainError):
        stieltjes_transform(uniform, 1 + 1e-12)
    assert stieltjes_transform(uniform, -0.5).m.imag == 0


def test_lower_half_plane_refused(uniform):
    with pytest.raises(DomainError):
        stieltjes_transform(uniform, 0.5 - 0.1j)


@given(st.floats(-5, -1e-3))
def test_f_prime_gap_positive_below_support(x):
    assert f_prime_gap(make_reference_measure("uniform"), x) > 0


def test_point_mass_has_zero_gap():
    assert f_prime_gap(atomic([0.3]), -1.0) == 0.0


@given(st.integers(2, 400))
def test_discretize_equal_weights_and_sorted(N):
    mu = discretize(make_reference_measure("uniform"), N)
    assert mu.locations.size == N
    assert np.all(np.diff(mu.locations) > 0)
    assert np.allclose(mu.weights, 1 / N)


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 200))
def test_discretization_levy_rate(N):
    mu = make_reference_measure("uniform")
    assert levy_distance(mu, discretize(mu, N)) <= 1.0 / N + 1e-6
    assert levy_distance(mu, discretize(mu, N, levels="upper")) <= 1.0 / N + 1e-6


@given(st.floats(1e-6, 1.0))
def test_quantile_inverts_cdf(p):
    mu = make_reference_measure("semicircle")
    assert abs(mu.cdf(quantile(mu, p)) - p) < 1e-9


def test_quantile_rejects_bad_levels(uniform):
    with pytest.raises(MeasureError):
        quantile(uniform, 0.0)


def test_atomic_moments_exact():
    mu = atomic([0.0, 1.0], [0.25, 0.75])
    w = 2.0 + 1j
    m, dm, _ = moments(mu, w)
    assert abs(m - (0.25 / (0 - w) + 0.75 / (1 - w))) < 1e-15
    assert abs(dm - (0.25 / (0 - w) ** 2 + 0.75 / (1 - w) ** 2)) < 1e-15


def test_mean_and_reflection(uniform):
    assert abs(uniform.mean() - 0.5) < 1e-14
    r = uniform.reflect()
    assert r.lower == -1.0 and r.upper == 0.0


def test_spec_round_trip(tmp_path):
    for mu in (make_reference_measure("semicircle", variance=2.0),
               make_reference_measure("power_law", support=(0, 2), t_minus=0.5, t_plus=-0.5),
               atomic([0.0, 1.0, 3.0], [0.2, 0.3, 0.5])):
        path = tmp_path / "mu.json"
        save_measure(mu, path)
        back = load_measure(path)
        z = 0.7 + 0.3j
        assert abs(stieltjes_transform(mu, z).m - stieltjes_transform(back, z).m) < 1e-13


@pytest.mark.parametrize("spec", [
    {"family": "semicircle", "variance": -1},
    {"family": "nope"},
    {"family": "atomic", "atoms": []},
    {"family": "atomic", "atoms": [[0.0, 0.4], [1.0, 0.4]]},
    {"variance": 1},
])
def test_invalid_specs_rejected(spec):
    with pytest.raises((MeasureError, ValueError)):
        measure_from_spec(json.loads(json.dumps(spec)))


def test_point_mass_transform():
    tv = stieltjes_transform(atomic([0.0]), 1j)
    assert abs(tv.m - 1j) < 1e-15 and abs(tv.F - 1j) < 1e-15


def test_semicircle_at_i():
    m = stieltjes_transform(make_reference_measure("semicircle"), 1j).m
    assert abs(m - 1j * (math.sqrt(5) - 1) / 2) < 1e-12


def test_two_atom_gap_by_hand():
    assert abs(f_prime_gap(atomic([-1.0, 1.0]), -3.0) - 1 / 9) < 1e-14


def test_uniform_gap_against_quadrature():
    from scipy.integrate import quad
    m = quad(lambda x: 1 / (x + 1), 0, 1)[0]
    dm = quad(lambda x: 1 / (x + 1) ** 2, 0, 1)[0]
    assert abs(f_prime_gap(make_reference_measure("uniform"), -1.0) - (dm / m**2 - 1)) < 1e-12


def test_reference_densities():
    assert abs(make_reference_measure("semicircle").density(0.0) - 1 / math.pi) < 1e-12
    assert abs(make_reference_measure("arcsine").density(0.0) - 1 / (2 * math.pi)) < 1e-12
    pl = make_reference_measure("power_law", support=(0, 1), t_minus=0.0, t_plus=0.0)
    z = 0.3 + 0.2j
    assert abs(stieltjes_transform(pl, z).m - stieltjes_transform(make_reference_measure("uniform"), z).m) < 1e-13


def test_quantile_examples():
    sc = make_reference_measure("semicircle")
    assert abs(quantile(sc, 0.5)) < 1e-12
    assert quantile(sc, 1.0) == 2.0
    assert np.allclose(discretize(make_reference_measure("uniform"), 2).locations, [0.25, 0.75])


def test_semicircle_levy_rate():
    sc = make_reference_measure("semicircle")
    assert levy_distance(sc, discretize(sc, 100)) <= 0.01


def test_levy_identity_and_point_masses():
    sc = make_reference_measure("semicircle")
    assert levy_distance(sc, sc) == 0.0
    a = 0.01
    eps = np.linspace(0, 0.05, 50001)
    brute = eps[np.argmax(eps >= a)]
    assert abs(levy_distance(atomic([0.0]), atomic([a])) - brute) < 1e-6


@given(st.floats(10, 100))
def test_large_eta_decay(eta):
    mu = make_reference_measure("uniform")
    m = stieltjes_transform(mu, 1j * eta).m
    assert abs(eta * m - 1j) <= 1.0 / eta


def test_atomic_spec_round_trip_is_bit_exact(tmp_path):
    mu = atomic([0.1, 0.2 + 1e-16, 1 / 3], [0.2, 0.3, 0.5])
    save_measure(mu, tmp_path / "a.json")
    back = load_measure(tmp_path / "a.json")
    assert np.array_equal(mu.locations, back.locations)
    assert np.array_equal(mu.weights, back.weights)


def test_discretized_quantiles_within_one_spacing():
    mu = make_reference_measure("semicircle")
    N = 200
    d = discretize(mu, N)
    p = np.arange(1, N + 1) / N
    gap = np.max(np.diff(d.locations))
    assert np.max(np.abs(quantile(d, p) - quantile(mu, p))) <= gap


def test_transform_bound_on_grid():
    assert transform_sup(make_reference_measure("semicircle")) <= 1.0 + 1e-9
    arc = make_reference_measure("arcsine")
    assert transform_sup(arc, etas=[1e-8]) > 10 * transform_sup(arc, etas=[1e-4])
