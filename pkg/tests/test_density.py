import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeconv.density import (ConvolutionLaw, convolution_law, density_grid,
                              kolmogorov_distance, quantiles)
from freeconv.errors import MeasureError
from freeconv.measure import atomic, discretize, make_reference_measure

SC = make_reference_measure("semicircle")
UNI = make_reference_measure("uniform")
R = math.sqrt(8)


def sc2_cdf(x):
    # semicircle of radius R
    x = np.clip(x, -R, R)
    return 0.5 + (x * np.sqrt(R * R - x * x) / R**2 + np.arcsin(x / R)) / np.pi


@given(st.floats(-3.0, 3.0))
def test_semicircle_cdf(x):
    assert abs(convolution_law(SC, SC).cdf(x) - sc2_cdf(x)) < 1e-10


def test_density_mass_and_resolution():
    t = density_grid(UNI, UNI)
    assert abs(t.mass - 1) < 1e-4
    assert np.all(t.rho >= -1e-12)
    assert t.resolved.mean() > 0.95
    assert t.to_csv().splitlines()[0] == "x,rho,im_m,re_m,resolved"


def test_density_grid_rejects_unsorted():
    with pytest.raises(MeasureError):
        density_grid(SC, SC, grid=[0.0, -1.0])


def test_point_mass_density_is_shifted_input():
    x = np.linspace(0.35, 1.25, 7)
    t = density_grid(atomic([0.3]), UNI, grid=x)
    assert np.allclose(t.rho, 1.0, atol=1e-6)


def test_quantiles_monotone_and_consistent():
    q = quantiles(UNI, UNI, 200)
    law = convolution_law(UNI, UNI)
    assert np.all(np.diff(q.gamma) >= 0)
    assert not q.failed
    assert np.allclose(law.cdf(q.gamma[:-1]), np.arange(1, 200) / 200, atol=1e-9)
    assert q.gamma[-1] == pytest.approx(law.upper)


def test_kolmogorov_of_quantiles():
    N = 300
    law = convolution_law(UNI, UNI)
    mid = law.inverse_cdf((np.arange(1, N + 1) - 0.5) / N)
    assert kolmogorov_distance(mid, UNI, UNI) <= 1 / (2 * N) + 1e-9
    upper = quantiles(UNI, UNI, N).gamma
    assert kolmogorov_distance(upper, UNI, UNI) <= 1 / N + 1e-9


def test_kolmogorov_input_checks():
    with pytest.raises(MeasureError):
        kolmogorov_distance(np.array([1.0, 0.0]), UNI, UNI)


def test_discretized_law_close_to_continuous():
    A = discretize(UNI, 400)
    law = ConvolutionLaw(A, A)
    x = np.linspace(0.3, 1.7, 15)
    assert abs(law.mass - 1) < 1e-6
    assert np.max(np.abs(law.cdf(x) - convolution_law(UNI, UNI).cdf(x))) < 5e-3


BERN = atomic([-1.0, 1.0])


def test_density_point_values():
    t = density_grid(SC, SC, grid=[-3.5, 0.0])
    assert abs(t.rho[1] - math.sqrt(2) / (2 * math.pi)) < 1e-6
    assert t.rho[0] <= 1e-8
    b = density_grid(BERN, BERN, grid=[0.0])
    assert abs(b.rho[0] - 1 / (2 * math.pi)) < 1e-6


def test_cdf_examples():
    law = convolution_law(SC, SC)
    assert abs(law.cdf(law.upper) - 1) <= 5e-3
    assert abs(law.cdf(0.0) - 0.5) <= 1e-3
    assert abs(law.cdf(-2.0) - sc2_cdf(-2.0)) < 1e-8
    assert law.cdf(-10.0) == 0.0 and law.cdf(10.0) == 1.0


def test_quantile_examples():
    q = quantiles(SC, SC, 100)
    assert abs(q.gamma[49]) <= 1e-6
    assert abs(q.gamma[-1] - R) <= 1e-4
    from scipy.optimize import brentq
    g1 = brentq(lambda x: sc2_cdf(x) - 0.01, -R, 0, xtol=1e-14)
    assert abs(q.gamma[0] - g1) < 1e-9
    assert q.gamma[0] >= -R - 1e-6 and q.source == "continuous pair"


@given(st.floats(0.01, 0.3))
def test_kolmogorov_detects_shift(s):
    law = convolution_law(UNI, UNI)
    N = 200
    g = law.inverse_cdf((np.arange(1, N + 1) - 0.5) / N)
    shifted = g + s
    mass = float(np.max(law.cdf(g + s) - law.cdf(g)))
    assert kolmogorov_distance(shifted, UNI, UNI) >= mass - 1 / (2 * N) - 1e-9


def test_density_stable_under_finer_floor():
    from freeconv.subordination import SolverConfig
    x = np.linspace(0.3, 1.7, 21)
    a = density_grid(UNI, UNI, grid=x, config=SolverConfig(eta_floor=1e-9))
    b = density_grid(UNI, UNI, grid=x, config=SolverConfig(eta_floor=5e-10))
    ok = a.resolved & b.resolved
    assert ok.all() and np.max(np.abs(a.rho - b.rho)) < 1e-5


def test_square_root_quantile_spacing():
    N = 2000
    law = convolution_law(UNI, UNI)
    g = law.quantiles(N).gamma
    j = np.arange(int(np.sqrt(N)), N // 10 + 1)
    r = (g[j - 1] - law.lower) * (N / j) ** (2 / 3)
    assert 0 < r.min() and r.max() / r.min() < 2


def test_point_mass_law_is_a_translate():
    P = make_reference_measure("point_mass", location=0.5)
    law = convolution_law(P, UNI)
    assert (law.lower, law.upper) == (0.5, 1.5)
    x = np.linspace(0.4, 1.6, 13)
    assert np.allclose(law.cdf(x), np.clip(x - 0.5, 0, 1), atol=1e-14)
    g = convolution_law(discretize(UNI, 10), P).quantiles(10).gamma
    assert np.allclose(g, discretize(UNI, 10).locations + 0.5, atol=1e-14)
