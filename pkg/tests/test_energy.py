import math

import numpy as np
import pytest
from scipy.optimize import brentq
from hypothesis import given, strategies as st

from viscowave.criteria import d as d_const, sobolev_gamma
from viscowave.dynamics import ModelParams, initial_state, run, StepControl
from viscowave.energy import (CSV_COLUMNS, Accumulators, EnergyRecorder, check_invariants,
                              mountain_pass_sup, potential_functional_J, read_csv, report,
                              write_csv)
from viscowave.experiment import random_dirichlet_field
from viscowave.grid import Grid
from viscowave.kernel import KernelSpec
from viscowave.memory import InitialHistory

P32 = ModelParams(3.0, 2.0)
K11 = KernelSpec(((1.0, 1.0),))


def _initial_report(grid, u0, params=P32, kernel=K11):
    s = initial_state(grid, kernel, InitialHistory(u0), params)
    return report(s, params, kernel, grid, Accumulators())


def test_zero_state_all_zero():
    grid = Grid.interval(31)
    r = _initial_report(grid, grid.zeros())
    for name in CSV_COLUMNS[1:-1]:
        assert getattr(r, name) == 0.0, name


def test_A6_energies(grid255):
    r = _initial_report(grid255, 6.0 * grid255.sine_mode())
    assert r.scriptE == pytest.approx(9 * math.pi**2, rel=1e-3)
    assert r.potential == pytest.approx(121.5, rel=1e-3)
    assert r.totalE == pytest.approx(36 * math.pi**2 / 4 - 3 * 6**4 / 32, rel=1e-3)
    assert r.history == 0.0 and r.kinetic == 0.0
    assert r.Nprime == 0.0 and r.G == -r.totalE


def test_potential_zero_with_source_off(grid255):
    params = ModelParams(3.0, 2.0, source=False)
    r = _initial_report(grid255, 6.0 * grid255.sine_mode(), params)
    assert r.potential == 0.0 and r.totalE == r.scriptE


def test_Y_uses_alpha_eps(grid255):
    s = initial_state(grid255, K11, InitialHistory(6.0 * grid255.sine_mode()), P32)
    r = report(s, P32, K11, grid255, Accumulators(), alpha=0.25, eps=0.5)
    assert r.Y == pytest.approx(r.G ** 0.75)
    assert math.isnan(report(s, P32, K11, grid255, Accumulators()).Y)


def test_mountain_pass_ratio_one():
    # the ratio is scale invariant, so pick the domain length that makes it 1
    def gap(L):
        g = Grid.interval(63, L)
        return g.h1_seminorm(g.sine_mode()) - g.norm_lp(g.sine_mode(), 4.0)
    grid = Grid.interval(63, brentq(gap, 0.5, 5.0, xtol=1e-15))
    u = grid.sine_mode()
    assert grid.h1_seminorm(u) == pytest.approx(grid.norm_lp(u, 4.0), rel=1e-12)
    assert mountain_pass_sup(grid, u, 3.0) == pytest.approx(0.25, rel=1e-12)


def test_mountain_pass_attained_at_one():
    grid = Grid.interval(63)
    u = grid.sine_mode()
    # s^2 g = s^4 lp  ->  stationary point of J(lambda u) at lambda = 1
    u = u * math.sqrt(grid.grad_sq(u) / grid.lp_power(u, 4.0))
    assert potential_functional_J(grid, u, 3.0) == pytest.approx(mountain_pass_sup(grid, u, 3.0),
                                                                 rel=1e-12)


def test_mountain_pass_errors():
    grid = Grid.interval(15)
    with pytest.raises(ValueError):
        mountain_pass_sup(grid, grid.zeros(), 3.0)
    with pytest.raises(ValueError):
        mountain_pass_sup(grid, grid.sine_mode(), 1.0)


def test_mountain_pass_above_d(grid255):
    dd = d_const(sobolev_gamma(grid255, 3.0), 3.0)
    rng = np.random.default_rng(7)
    sups = [mountain_pass_sup(grid255, random_dirichlet_field(grid255, rng), 3.0)
            for _ in range(100)]
    assert min(sups) >= dd - 1e-9


@given(st.floats(0.0, 4.0))
def test_mountain_pass_is_sup(lam):
    grid = Grid.interval(31)
    u = grid.sine_mode() + 0.3 * grid.sine_mode(2)
    assert potential_functional_J(grid, lam * u, 3.0) <= mountain_pass_sup(grid, u, 3.0) + 1e-12


def _cols(**over):
    n = 5
    base = {c: np.zeros(n) for c in CSV_COLUMNS}
    base["t"] = np.arange(n, dtype=float)
    base["G"] = np.linspace(1.0, 2.0, n)
    base["potential"] = np.full(n, 10.0)
    base["scriptE"] = base["potential"] - base["G"]
    base["totalE"] = -base["G"]
    base.update(over)
    return base


def test_invariants_clean():
    assert check_invariants(_cols()) == []


@pytest.mark.parametrize("col,vals,name,hard", [
    ("scriptE", [1, 1, -1, 1, 1], "scriptE_nonnegative", True),
    ("history", [0, 0, -1, 0, 0], "history_nonnegative", True),
    ("damping_cum", [0, 1, 0.5, 2, 3], "damping_cum_monotone", True),
    ("memory_cum", [0, 1, 2, 1, 3], "memory_cum_monotone", True),
    ("G", [1, 2, 1.5, 3, 4], "G_monotone", False),
])
def test_invariant_violations(col, vals, name, hard):
    out = check_invariants(_cols(**{col: np.array(vals, dtype=float)}))
    assert (name, hard) in [(v.name, v.hard) for v in out]


def test_G_above_potential_is_hard():
    out = check_invariants(_cols(potential=np.full(5, 1.5)))
    assert ("G_below_potential", True) in [(v.name, v.hard) for v in out]


def test_csv_round_trip(tmp_path):
    grid = Grid.interval(31)
    rec = EnergyRecorder(P32, K11, grid)
    run(InitialHistory(2.0 * grid.sine_mode()), P32, K11, StepControl(), grid, 0.05,
        recorder=rec, cadence=5)
    path = tmp_path / "e.csv"
    write_csv(rec.reports, path)
    cols = read_csv(path)
    for name in CSV_COLUMNS:
        np.testing.assert_array_equal(cols[name], rec.column(name))
    assert check_invariants(cols) == []


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x\n0,1\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_dissipation_monotone_on_run():
    grid = Grid.interval(63)
    rec = EnergyRecorder(P32, K11, grid)
    run(InitialHistory(3.0 * grid.sine_mode(), kind="oscillatory", beta=0.5, omega=3.0), P32,
        K11, StepControl(), grid, 0.5, recorder=rec)
    for name in ("damping_cum", "memory_cum"):
        assert np.all(np.diff(rec.column(name)) >= -1e-12)
    assert np.all(rec.column("history") >= 0.0)
