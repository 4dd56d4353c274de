import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from viscowave.grid import Grid
from viscowave.kernel import KernelSpec
from viscowave.memory import (InitialHistory, MemoryStateError, PronyMemory, QuadratureMemory,
                              advance_memory, history_energy, make_memory, memory_force,
                              per_mode_energies)
from viscowave.experiment import driven_memory_comparison

G = Grid.interval(63)
PHI = G.sine_mode()
K1 = KernelSpec(((0.7, 1.3),))


@pytest.mark.parametrize("mode", ["prony", "quadrature"])
def test_zero_history_zero_force(mode):
    mem = make_memory(mode, G, K1, InitialHistory(np.zeros(G.shape)))
    assert not np.any(memory_force(mem, K1, G.zeros()))
    assert history_energy(mem, K1, G.zeros()) == 0.0


def test_constant_history_prony_state():
    mem = PronyMemory(G, K1, InitialHistory(PHI))
    np.testing.assert_allclose(mem.z[0], 0.7 * PHI)
    assert mem.q[0] == pytest.approx(0.7 * G.grad_sq(PHI))


@pytest.mark.parametrize("mode", ["prony", "quadrature"])
def test_constant_history_force(mode):
    mem = make_memory(mode, G, K1, InitialHistory(PHI))
    np.testing.assert_allclose(memory_force(mem, K1, PHI), -0.7 * G.laplacian(PHI),
                               rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("mode", ["prony", "quadrature"])
def test_constant_history_energy_zero_at_start(mode):
    mem = make_memory(mode, G, K1, InitialHistory(PHI))
    assert abs(history_energy(mem, K1, PHI)) <= 1e-10 * G.grad_sq(PHI)


@pytest.mark.parametrize("mode", ["prony", "quadrature"])
def test_zero_past_full_jump(mode):
    mem = make_memory(mode, G, K1, InitialHistory(np.zeros(G.shape)))
    assert history_energy(mem, K1, PHI) == pytest.approx(0.7 * G.grad_sq(PHI), rel=1e-12)
    np.testing.assert_allclose(per_mode_energies(mem, K1, PHI), [0.7 * G.grad_sq(PHI)])


def test_pure_decay():
    mem = PronyMemory(G, K1, InitialHistory(PHI))
    zero = G.zeros()
    mem.advance(zero, 0.0, 1e-9)   # the first step averages with phi; make it negligible
    for _ in range(40):
        mem.advance(zero, 0.0, 0.05)
    t = mem.t
    np.testing.assert_allclose(mem.z[0], 0.7 * math.exp(-t / 1.3) * PHI, rtol=1e-8)


def test_fixed_point():
    mem = PronyMemory(G, K1, InitialHistory(np.zeros(G.shape)))
    g = G.grad_sq(PHI)
    for _ in range(200):
        mem.advance(PHI, g, 0.5)
    np.testing.assert_allclose(mem.z[0], 0.7 * PHI, rtol=1e-12)
    assert mem.q[0] == pytest.approx(0.7 * g, rel=1e-12)


def test_single_step_exact_solution():
    kern = KernelSpec(((2.0, 0.4),))
    mem = PronyMemory(G, kern, InitialHistory(np.zeros(G.shape)))
    mem._u_last = PHI.copy()     # u = phi over the whole step
    mem.advance(PHI, G.grad_sq(PHI), 0.4)
    np.testing.assert_allclose(mem.z[0], 2.0 * (1 - math.exp(-1)) * PHI, rtol=0, atol=1e-10)


def test_advance_rejects_nonpositive_dt():
    for mem in (PronyMemory(G, K1, InitialHistory(PHI)), QuadratureMemory(G, K1, InitialHistory(PHI))):
        with pytest.raises(ValueError):
            advance_memory(mem, K1, PHI, 1.0, 0.0)


def test_mismatch_and_desync_detected():
    mem = PronyMemory(G, K1, InitialHistory(PHI))
    with pytest.raises(MemoryStateError):
        memory_force(mem, KernelSpec(((1.0, 1.0), (1.0, 2.0))), PHI)
    with pytest.raises(MemoryStateError):
        memory_force(mem, K1, PHI, t=0.5)


def test_zero_modes():
    k0 = KernelSpec()
    for mode in ("prony", "quadrature"):
        mem = make_memory(mode, G, k0, InitialHistory(PHI))
        assert not np.any(mem.force(PHI))
        assert history_energy(mem, k0, PHI) == 0.0


def test_unknown_mode():
    with pytest.raises(ValueError):
        make_memory("fft", G, K1, InitialHistory(PHI))


@pytest.mark.parametrize("kind,kw", [("ramp", {"eps": 0.8}),
                                     ("oscillatory", {"beta": 0.4, "omega": 3.0})])
def test_history_moments_match_quadrature(kind, kw):
    hist = InitialHistory(PHI, kind=kind, **kw)
    for tau in (0.3, 1.0, 4.0):
        g = lambda r: float(hist.profile(-r))
        m1 = quad(lambda r: math.exp(-r / tau) * g(r), 0, np.inf, limit=400)[0] / tau
        m2 = quad(lambda r: math.exp(-r / tau) * g(r) ** 2, 0, np.inf, limit=400)[0] / tau
        c1, c2 = hist.moments(tau)
        assert c1 == pytest.approx(m1, rel=1e-9)
        assert c2 == pytest.approx(m2, rel=1e-9)


def test_history_profile_validation():
    with pytest.raises(ValueError):
        InitialHistory(PHI, kind="ramp", eps=-1.0)
    with pytest.raises(ValueError):
        InitialHistory(PHI, kind="sawtooth")
    with pytest.raises(ValueError):
        InitialHistory(PHI).profile(0.5)
    h = InitialHistory(PHI, kind="oscillatory", beta=0.5, omega=2.0)
    np.testing.assert_allclose(h.v0(), 1.0 * PHI)
    assert h.profile(0.0) == 1.0


def test_driven_run_oracle():
    # z for u = phi sin t, zero past, kernel (1, 1): phi (sin t - cos t + e^-t) / 2
    rows = driven_memory_comparison(G, KernelSpec(((1.0, 1.0),)), PHI, 5.0, 1e-3, 2.5)
    for r in rows:
        for key in ("force_prony_vs_exact", "force_quadrature_vs_exact",
                    "energy_prony_vs_exact", "energy_quadrature_vs_exact",
                    "force_prony_vs_quadrature", "energy_prony_vs_quadrature"):
            assert r[key] <= 1e-3, (key, r)


def _driven_pair(kern, hist, dt, T, u_of_t):
    pr, qu = PronyMemory(G, kern, hist), QuadratureMemory(G, kern, hist)
    for k in range(1, int(round(T / dt)) + 1):
        u = u_of_t(k * dt)
        g = G.grad_sq(u)
        pr.advance(u, g, dt)
        qu.advance(u, g, dt)
    return pr, qu, u


def _rel(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


@given(st.sampled_from(["constant", "ramp", "oscillatory"]),
       st.floats(0.2, 1.5), st.floats(0.3, 3.0), st.floats(0.5, 2.0))
def test_mode_equivalence(kind, tau, amp, freq):
    kern = KernelSpec(((amp, tau), (0.3, 2 * tau)))
    hist = InitialHistory(PHI, kind=kind, eps=0.5, beta=0.3, omega=2.0)
    dt = kern.tau_min / 100
    u_of_t = lambda t: PHI * (1.0 + 0.5 * math.sin(freq * t)) + 0.2 * t * G.sine_mode(2)
    pr, qu, u = _driven_pair(kern, hist, dt, 1.0, u_of_t)
    assert _rel(pr.force(u), qu.force(u)) <= 1e-3
    hp, hq = history_energy(pr, kern, u), history_energy(qu, kern, u)
    assert abs(hp - hq) <= 1e-3 * max(abs(hp), abs(hq), 1e-12)
    assert np.all(pr.mode_energies(u) >= -1e-9 * G.grad_sq(u))


def test_quadrature_eviction():
    kern = KernelSpec(((1.0, 0.01),))
    qu = QuadratureMemory(G, kern, InitialHistory(PHI), capacity=8)
    for _ in range(2000):
        qu.advance(PHI, G.grad_sq(PHI), 1e-3)
    # samples older than S_max (about 0.28) are dropped, one extra kept
    assert qu.n_samples <= int(qu.s_max / 1e-3) + 3
    # trapezoid error on a constant signal is about (dt/tau)^2 / 12
    np.testing.assert_allclose(qu.force(PHI), -G.laplacian(PHI), rtol=1e-3)


def test_copy_is_independent():
    mem = PronyMemory(G, K1, InitialHistory(PHI))
    c = mem.copy()
    c.advance(G.zeros(), 0.0, 0.1)
    assert mem.t == 0.0 and c.t == 0.1
    np.testing.assert_allclose(mem.z[0], 0.7 * PHI)
