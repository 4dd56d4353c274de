import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from viscowave.grid import Grid, NonFiniteFieldError


def test_quadratic_is_exact():
    g = Grid.interval(31)
    (x,) = g.coordinates()
    np.testing.assert_allclose(g.laplacian(x * (1 - x)), -2.0, rtol=1e-10)


def test_zero_field():
    g = Grid((1.0, 2.0), (5, 7))
    f = g.zeros()
    assert not np.any(g.laplacian(f))
    assert g.norm_l2(f) == g.norm_lp(f, 4) == g.h1_seminorm(f) == 0.0


def test_sine_eigenfunction(grid255):
    f = grid255.sine_mode()
    lap = grid255.laplacian(f)
    rel = np.linalg.norm(lap + math.pi**2 * f) / np.linalg.norm(math.pi**2 * f)
    assert rel <= 1e-4


def test_laplacian_eigenvalue_closed_form():
    g = Grid((1.0, 2.0), (9, 13))
    f = g.sine_mode((2, 3))
    np.testing.assert_allclose(g.laplacian(f), -g.laplacian_eigenvalue((2, 3)) * f,
                               atol=1e-10)


def test_sine_norms(grid255):
    f = grid255.sine_mode()
    assert abs(grid255.norm_l2(f) - math.sqrt(0.5)) <= 1e-4
    assert abs(grid255.h1_seminorm(f) ** 2 - math.pi**2 / 2) <= 1e-2
    assert abs(grid255.lp_power(f, 4) - 3 / 8) <= 1e-4


def test_lp_two_is_l2_and_inner_grad_is_seminorm(rng):
    g = Grid((1.0, 1.5), (11, 8))
    f = rng.standard_normal(g.shape)
    assert g.norm_lp(f, 2) == pytest.approx(g.norm_l2(f), rel=1e-13)
    assert g.inner_grad(f, f) == pytest.approx(g.h1_seminorm(f) ** 2, rel=1e-13)


def test_exponent_below_one_rejected():
    g = Grid.interval(5)
    with pytest.raises(ValueError):
        g.norm_lp(g.sine_mode(), 0.5)


def test_non_finite_detected():
    g = Grid.interval(5)
    f = g.sine_mode()
    f[2] = np.nan
    with pytest.raises(NonFiniteFieldError):
        g.laplacian(f)


@pytest.mark.parametrize("extent,n", [((1.0,), (2,)), ((1.0, 1.0), (5,)), ((0.0,), (5,)),
                                      ((1.0,) * 4, (3,) * 4)])
def test_bad_grids(extent, n):
    with pytest.raises(ValueError):
        Grid(extent, n)


def test_gradient_faces():
    g = Grid((1.0, 1.0), (4, 5))
    gx, gy = g.gradient(g.sine_mode())
    assert gx.shape == (5, 5) and gy.shape == (4, 6)
    f = g.sine_mode()
    total = g.weight * (np.sum(gx**2) + np.sum(gy**2))
    assert total == pytest.approx(g.grad_sq(f), rel=1e-13)


def _fields(dim):
    shape = {1: (9,), 2: (5, 6), 3: (4, 3, 5)}[dim]
    return arrays(np.float64, shape, elements=st.floats(-10, 10))


@pytest.mark.parametrize("dim", [1, 2, 3])
@given(data=st.data())
def test_summation_by_parts(dim, data):
    f = data.draw(_fields(dim))
    h = data.draw(_fields(dim))
    g = Grid(tuple(0.5 + 0.3 * k for k in range(dim)), f.shape)
    lhs = g.inner_l2(g.laplacian(f), h)
    rhs = -g.inner_grad(f, h)
    scale = g.weight * np.sum(np.abs(f)) * np.sum(np.abs(h)) * max(g._inv_h2) * 4 + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(arrays(np.float64, (7, 4), elements=st.floats(-5, 5)), st.floats(-100, 100))
def test_norm_homogeneity(f, c):
    g = Grid((1.0, 2.0), (7, 4))
    for norm in (g.norm_l2, g.h1_seminorm, lambda u: g.norm_lp(u, 3.5)):
        assert norm(c * f) == pytest.approx(abs(c) * norm(f), rel=1e-12, abs=1e-300)


def test_refinement_is_second_order():
    errs = []
    for n in (31, 63, 127):
        g = Grid.interval(n)
        (x,) = g.coordinates()
        f = x**2 * (1 - x) * np.exp(x)
        errs.append(abs(g.h1_seminorm(f) ** 2 - _exact_h1()))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def _exact_h1():
    from scipy.integrate import quad
    d = lambda x: (2 * x - 3 * x**2) * math.exp(x) + x**2 * (1 - x) * math.exp(x)
    return quad(lambda x: d(x) ** 2, 0, 1, epsabs=1e-14)[0]


def test_export_csv(tmp_path):
    g = Grid((1.0, 2.0), (3, 4))
    f = g.sine_mode()
    path = tmp_path / "field.csv"
    g.export_csv(f, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["index", "x", "y", "value"]
    assert len(rows) == 13
    x, y = (c.ravel() for c in g.coordinates())
    assert float(rows[5][1]) == x[4] and float(rows[5][2]) == y[4]
    assert float(rows[5][3]) == f.ravel()[4]
