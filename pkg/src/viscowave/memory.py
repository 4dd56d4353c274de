"""Hereditary (memory) term and history energy.

Two interchangeable representations of the past:

* :class:`PronyMemory` keeps, per kernel mode, the auxiliary field
  ``z_i(t) = int_0^inf mu_i(s) u(t - s) ds`` and the scalar
  ``q_i(t) = int_0^inf mu_i(s) ||grad u(t - s)||^2 ds``. Both obey linear
  relaxation ODEs that are advanced exactly over a step.
* :class:`QuadratureMemory` stores past displacement samples and integrates
  the convolution directly with the trapezoid rule. The part of the history
  older than ``t = 0`` comes from the analytic initial history.

With the equation written as ``u_tt = k(0) lap u + F_mem - damping + source``
the memory force is ``F_mem = -lap(sum_i z_i)``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .grid import Grid
from .kernel import KernelSpec, mu_cutoff

PROFILE_KINDS = ("constant", "ramp", "oscillatory")


class MemoryStateError(RuntimeError):
    """Memory state does not match the kernel or the simulation clock."""


@dataclass(frozen=True)
class InitialHistory:
    """Separable past ``u0(x, t) = g(t) * shape(x)`` for ``t <= 0``.

    Profiles: ``constant`` (g = 1), ``ramp`` (g = exp(eps t), eps >= 0) and
    ``oscillatory`` (g = 1 + beta sin(omega t)). ``velocity`` overrides the
    initial velocity, which otherwise is ``g'(0) * shape``.
    """

    shape: np.ndarray
    kind: str = "constant"
    eps: float = 0.0
    beta: float = 0.0
    omega: float = 0.0
    velocity: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown history profile {self.kind!r}")
        if self.kind == "ramp" and self.eps < 0.0:
            raise ValueError("ramp rate must be >= 0 so the history stays bounded")
        object.__setattr__(self, "shape", np.asarray(self.shape, dtype=float))

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > 0.0):
            raise ValueError("history profile is defined for t <= 0 only")
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "ramp":
            return np.exp(self.eps * t)
        return 1.0 + self.beta * np.sin(self.omega * t)

    @property
    def slope0(self) -> float:
        return {"constant": 0.0, "ramp": self.eps,
                "oscillatory": self.beta * self.omega}[self.kind]

    def u0(self) -> np.ndarray:
        return self.shape.copy()

    def v0(self) -> np.ndarray:
        if self.velocity is not None:
            return np.asarray(self.velocity, dtype=float).copy()
        return self.slope0 * self.shape

    def scaled(self, factor: float) -> "InitialHistory":
        vel = None if self.velocity is None else factor * np.asarray(self.velocity)
        return replace(self, shape=factor * self.shape, velocity=vel)

    def moments(self, tau: float) -> tuple:
        """``(int e^{-r/tau} g(-r) dr / tau, int e^{-r/tau} g(-r)^2 dr / tau)`` over ``r >= 0``."""
        if self.kind == "constant":
            return 1.0, 1.0
        if self.kind == "ramp":
            e = self.eps * tau
            return 1.0 / (1.0 + e), 1.0 / (1.0 + 2.0 * e)
        wt = self.omega * tau
        s1 = wt / (1.0 + wt**2)                   # mean of sin(omega r)
        s2 = 2.0 * wt**2 / (1.0 + 4.0 * wt**2)    # mean of sin(omega r)^2
        return 1.0 - self.beta * s1, 1.0 - 2.0 * self.beta * s1 + self.beta**2 * s2


def _mode_tails(kernel, history, t):
    # per mode: int_t^inf mu_i, int_t^inf mu_i g(t-s), int_t^inf mu_i g(t-s)^2
    mass = np.empty(kernel.n_modes)
    first = np.empty(kernel.n_modes)
    second = np.empty(kernel.n_modes)
    for i, (a, tau) in enumerate(kernel.modes):
        c1, c2 = history.moments(tau)
        w = a * np.exp(-t / tau)
        mass[i], first[i], second[i] = w, w * c1, w * c2
    return mass, first, second


class PronyMemory:
    """Auxiliary-field memory, ``O(n_modes)`` fields regardless of run length."""

    variant = "prony"

    def __init__(self, grid: Grid, kernel: KernelSpec, history: InitialHistory):
        self.grid = grid
        self.kernel = kernel
        self.t = 0.0
        phi = history.shape
        gphi = grid.grad_sq(phi)
        c = np.array([history.moments(tau) for tau in kernel.taus]).reshape(-1, 2)
        a = kernel.amplitudes
        self.z = (a * c[:, 0]).reshape((-1,) + (1,) * grid.dim) * phi[None, ...]
        self.q = a * c[:, 1] * gphi
        self._u_last = history.u0()
        self._g_last = gphi

    @property
    def n_modes(self) -> int:
        return self.kernel.n_modes

    def copy(self) -> "PronyMemory":
        return copy.deepcopy(self)

    def memory_sum(self) -> np.ndarray:
        if self.n_modes == 0:
            return self.grid.zeros()
        return self.z.sum(axis=0)

    def force(self, u_now=None) -> np.ndarray:
        if self.n_modes == 0:
            return self.grid.zeros()
        return -self.grid.laplacian(self.memory_sum())

    def mode_energies(self, u_now) -> np.ndarray:
        g = self.grid
        gu = g.grad_sq(u_now)
        a = self.kernel.amplitudes
        return np.array([a[i] * gu - 2.0 * g.inner_grad(u_now, self.z[i]) + self.q[i]
                         for i in range(self.n_modes)])

    def advance(self, u_now, grad_sq_now, dt):
        if not dt > 0.0:
            raise ValueError("time step must be positive")
        if self.n_modes:
            decay = np.exp(-dt / self.kernel.taus)
            gain = self.kernel.amplitudes * (1.0 - decay)
            u_avg = 0.5 * (self._u_last + u_now)
            self.z = _kernels.prony_update(self.z, u_avg, decay, gain)
            self.q = decay * self.q + gain * 0.5 * (self._g_last + grad_sq_now)
        self._u_last = np.array(u_now, dtype=float)
        self._g_last = float(grad_sq_now)
        self.t += dt
        return self


class QuadratureMemory:
    """Direct trapezoid convolution over stored past displacements.

    Samples older than ``S_max`` (where ``mu`` has fallen below ``1e-12``
    of ``mu(0)``) are evicted. The segment ``s >= t`` reaching into the
    initial history is added in closed form.
    """

    variant = "quadrature"

    def __init__(self, grid: Grid, kernel: KernelSpec, history: InitialHistory,
                 capacity: int = 1024):
        self.grid = grid
        self.kernel = kernel
        self.history = history
        self.t = 0.0
        self.s_max = mu_cutoff(kernel)
        npts = int(np.prod(grid.shape))
        self._times = np.empty(capacity)
        self._u = np.empty((capacity, npts))
        self._g = np.empty(capacity)
        self._start = 0
        self._end = 0
        self._phi_grad_sq = grid.grad_sq(history.shape)
        self._cache_key = None
        self._push(0.0, history.u0(), self._phi_grad_sq)

    @property
    def n_modes(self) -> int:
        return self.kernel.n_modes

    @property
    def n_samples(self) -> int:
        return self._end - self._start

    def copy(self) -> "QuadratureMemory":
        return copy.deepcopy(self)

    def _push(self, t, u, g):
        if self._end == self._times.size:
            live = slice(self._start, self._end)
            n_live = self._end - self._start
            cap = max(2 * n_live, 16)
            times, us, gs = np.empty(cap), np.empty((cap, self._u.shape[1])), np.empty(cap)
            times[:n_live], us[:n_live], gs[:n_live] = self._times[live], self._u[live], self._g[live]
            self._times, self._u, self._g = times, us, gs
            self._start, self._end = 0, n_live
        self._times[self._end] = t
        self._u[self._end] = np.ravel(u)
        self._g[self._end] = g
        self._end += 1
        # keep one sample beyond S_max so the quadrature reaches the cutoff
        while self._end - self._start > 2 and self.t - self._times[self._start + 1] > self.s_max:
            self._start += 1
        self._cache_key = None

    def advance(self, u_now, grad_sq_now, dt):
        if not dt > 0.0:
            raise ValueError("time step must be positive")
        self.t += dt
        self._push(self.t, u_now, float(grad_sq_now))
        return self

    def _weights(self):
        # per-mode trapezoid weights W[i, j] = w_j * mu_i(t - t_j)
        times = self._times[self._start:self._end]
        n = times.size
        w = np.zeros(n)
        if n > 1:
            dt = np.diff(times)
            w[:-1] += 0.5 * dt
            w[1:] += 0.5 * dt
        s = self.t - times
        W = np.array([a / tau * np.exp(-s / tau) * w for a, tau in self.kernel.modes])
        return W.reshape(self.n_modes, n)

    def _moments(self):
        key = (self._start, self._end)
        if self._cache_key != key:
            W = self._weights()
            live = slice(self._start, self._end)
            shape = self.grid.shape
            self._Z = (W @ self._u[live]).reshape((self.n_modes,) + shape)
            self._mass = W.sum(axis=1)
            self._gsum = W @ self._g[live]
            self._tails = _mode_tails(self.kernel, self.history, self.t)
            self._cache_key = key
        return self._Z, self._mass, self._gsum, self._tails

    def memory_sum(self) -> np.ndarray:
        if self.n_modes == 0:
            return self.grid.zeros()
        Z, _, _, (_, first, _) = self._moments()
        return Z.sum(axis=0) + first.sum() * self.history.shape

    def force(self, u_now=None) -> np.ndarray:
        if self.n_modes == 0:
            return self.grid.zeros()
        return -self.grid.laplacian(self.memory_sum())

    def mode_energies(self, u_now) -> np.ndarray:
        if self.n_modes == 0:
            return np.zeros(0)
        g = self.grid
        Z, mass, gsum, (tmass, tfirst, tsecond) = self._moments()
        gu = g.grad_sq(u_now)
        cross_phi = g.inner_grad(u_now, self.history.shape)
        out = np.empty(self.n_modes)
        for i in range(self.n_modes):
            body = mass[i] * gu - 2.0 * g.inner_grad(u_now, Z[i]) + gsum[i]
            tail = tmass[i] * gu - 2.0 * tfirst[i] * cross_phi + tsecond[i] * self._phi_grad_sq
            out[i] = body + tail
        return out


def make_memory(mode: str, grid: Grid, kernel: KernelSpec, history: InitialHistory):
    if mode == "prony":
        return PronyMemory(grid, kernel, history)
    if mode == "quadrature":
        return QuadratureMemory(grid, kernel, history)
    raise ValueError(f"unknown memory mode {mode!r}")


def _check(state, kernel, t=None):
    if state.kernel != kernel or state.n_modes != kernel.n_modes:
        raise MemoryStateError("memory state was built for a different kernel")
    if t is not None and abs(state.t - t) > 1e-9 * max(1.0, abs(t)):
        raise MemoryStateError(f"memory state at t={state.t} but simulation at t={t}")


def memory_force(state, kernel: KernelSpec, u_now, t=None) -> np.ndarray:
    _check(state, kernel, t)
    return state.force(u_now)


def per_mode_energies(state, kernel: KernelSpec, u_now, t=None) -> np.ndarray:
    _check(state, kernel, t)
    return state.mode_energies(u_now)


def history_energy(state, kernel: KernelSpec, u_now, t=None) -> float:
    """``int_0^inf ||grad(u(t) - u(t - s))||^2 mu(s) ds``."""
    return float(np.sum(per_mode_energies(state, kernel, u_now, t)))


def advance_memory(state, kernel: KernelSpec, u_now, grad_sq_now, dt):
    _check(state, kernel)
    return state.advance(u_now, grad_sq_now, dt)
