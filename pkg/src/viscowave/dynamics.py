"""Time integration with blow-up-aware step control.

Semi-discrete system::

    u_tt = k(0) lap u + F_mem - |u_t|^{m-1} u_t + |u|^{p-1} u

One step of size ``dt`` is a kick-drift-kick split. Stiffness, memory and
source are explicit. The damping is handled pointwise-implicitly on the
first half kick, ``v + (dt/2)|v|^{m-1} v = v_n + (dt/2) a_n``, and the same
half-step damping value is reused on the second kick, so the dissipation
over the step is the midpoint rule and the scheme stays second order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import Grid
from .kernel import KernelSpec
from .memory import InitialHistory, make_memory

log = logging.getLogger(__name__)


class AssumptionError(ValueError):
    """Exponents outside the admissible range."""


@dataclass(frozen=True)
class ModelParams:
    p: float
    m: float
    damping: bool = True
    source: bool = True
    allow_out_of_assumption: bool = False

    def __post_init__(self):
        reasons = self.assumption_violations()
        if reasons and not self.allow_out_of_assumption:
            raise AssumptionError("; ".join(reasons))
        if self.m < 1.0 or self.p < 1.0:
            raise AssumptionError("exponents must be >= 1")

    def assumption_violations(self) -> list:
        out = []
        if self.m < 1.0:
            out.append(f"damping exponent m={self.m} < 1")
        if not 1.0 <= self.p < 6.0:
            out.append(f"source exponent p={self.p} outside [1, 6)")
        if self.p * (self.m + 1.0) / self.m >= 6.0:
            out.append(f"p(m+1)/m = {self.p * (self.m + 1.0) / self.m:.6g} >= 6")
        return out

    @property
    def out_of_assumption(self) -> bool:
        return bool(self.assumption_violations())


@dataclass(frozen=True)
class StepControl:
    cfl: float = 0.5
    dt_max: float = 1e-3
    dt_min: float = 1e-12
    amp_safety: float = 0.05
    max_abs_threshold: float = 1e8
    grad_threshold: float = 1e8

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if not 0.0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")
        if self.amp_safety <= 0.0:
            raise ValueError("amp_safety must be positive")


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    memory: object
    step_count: int = 0
    accel: np.ndarray | None = field(default=None, repr=False)

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.memory.copy(),
                     self.step_count, None if self.accel is None else self.accel.copy())


class BlowUpEvent(Exception):
    """Raised when the solution leaves the resolvable range.

    ``reason`` is one of ``max_abs``, ``grad_norm``, ``dt_collapse`` or
    ``non_finite``; ``state`` is the last accepted state.
    """

    def __init__(self, reason, state, max_abs, grad_norm, dt):
        self.reason = reason
        self.state = state
        self.t = state.t
        self.max_abs = max_abs
        self.grad_norm = grad_norm
        self.dt = dt
        super().__init__(f"blow-up ({reason}) at t={state.t:.9g}: max|u|={max_abs:.3e}, "
                         f"||grad u||={grad_norm:.3e}, dt={dt:.3e}")


def solve_damping(r, c, m):
    """Solve ``v + c |v|^{m-1} v = r`` pointwise (unique root by monotonicity)."""
    return _kernels.damping_solve(np.asarray(r, dtype=float), float(c), float(m))


def source_term(u, p):
    if p == 1.0:
        return u.copy()
    if p == 3.0:
        return u * u * u
    return np.abs(u) ** (p - 1.0) * u


def acceleration(grid, params, kernel, u, memory):
    """Everything in ``u_tt`` except the damping."""
    a = kernel.k0 * _kernels.laplacian(u, grid._inv_h2)
    if kernel.n_modes:
        a += memory.force(u)
    if params.source:
        a += source_term(u, params.p)
    return a


def initial_state(grid, kernel, history: InitialHistory, params, memory_mode="prony") -> State:
    u = grid.check(history.u0())
    v = grid.check(history.v0())
    mem = make_memory(memory_mode, grid, kernel, history)
    return State(0.0, u, v, mem, 0, acceleration(grid, params, kernel, u, mem))


def stable_dt(grid, params, kernel, ctrl, u) -> float:
    # Verlet limit: dt * omega_max <= 2 with omega_max^2 = k0 * sum 4/h_d^2
    dt_cfl = ctrl.cfl / (math.sqrt(kernel.k0) * math.sqrt(sum(1.0 / h**2 for h in grid.h)))
    dt = min(dt_cfl, ctrl.dt_max)
    if params.source:
        peak = float(np.max(np.abs(u)))
        dt = min(dt, ctrl.amp_safety / (1.0 + peak ** ((params.p - 1.0) / 2.0)))
    return dt


def step(state: State, params: ModelParams, kernel: KernelSpec, ctrl: StepControl,
         grid: Grid, dt: float | None = None) -> State:
    """Advance one step; raises :class:`BlowUpEvent` instead of returning garbage."""
    if dt is None:
        dt = stable_dt(grid, params, kernel, ctrl, state.u)
        if dt < ctrl.dt_min:
            raise BlowUpEvent("dt_collapse", state, float(np.max(np.abs(state.u))),
                              grid.h1_seminorm(state.u), dt)
    if not dt > 0.0:
        raise ValueError("time step must be positive")
    a0 = state.accel
    if a0 is None:
        a0 = acceleration(grid, params, kernel, state.u, state.memory)
    half = 0.5 * dt
    r = state.v + half * a0
    if params.damping:
        v_half = solve_damping(r, half, params.m)
        kick_back = 2.0 * v_half - r          # v_half - (dt/2) D(v_half)
    else:
        v_half = r
        kick_back = r
    u1 = state.u + dt * v_half
    with np.errstate(all="ignore"):
        max_abs = float(np.max(np.abs(u1)))
        g1 = grid.grad_sq(u1) if np.isfinite(max_abs) else np.inf
    if not (np.isfinite(max_abs) and np.isfinite(g1)):
        raise BlowUpEvent("non_finite", state, max_abs, math.sqrt(g1) if g1 >= 0 else np.inf, dt)
    grad_norm = math.sqrt(g1)
    if max_abs > ctrl.max_abs_threshold:
        raise BlowUpEvent("max_abs", state, max_abs, grad_norm, dt)
    if grad_norm > ctrl.grad_threshold:
        raise BlowUpEvent("grad_norm", state, max_abs, grad_norm, dt)
    memory = state.memory
    memory.advance(u1, g1, dt)
    a1 = acceleration(grid, params, kernel, u1, memory)
    v1 = kick_back + half * a1
    if not np.isfinite(v1).all():
        raise BlowUpEvent("non_finite", state, max_abs, grad_norm, dt)
    return State(state.t + dt, u1, v1, memory, state.step_count + 1, a1)


@dataclass
class RunOutcome:
    status: str                 # "completed" or "blew_up"
    t_final: float
    state: State
    steps: int
    T_obs: float | None = None
    blowup_reason: str | None = None
    blowup_max_abs: float | None = None
    blowup_grad_norm: float | None = None
    rate_exponent: float | None = None
    snapshots: dict = field(default_factory=dict)

    @property
    def blew_up(self) -> bool:
        return self.status == "blew_up"


def estimate_blowup_time(times, amplitudes, tail: int = 20):
    """Fit ``A(t) ~ C (T - t)^(-beta)`` to the last samples.

    ``1 / (d ln A / dt) = (T - t) / beta`` is linear in ``t``; its root gives
    ``T`` and its slope ``-1/beta``. Diagnostic only.
    """
    t = np.asarray(times, dtype=float)[-tail:]
    A = np.asarray(amplitudes, dtype=float)[-tail:]
    if t.size < 4 or np.any(A <= 0):
        return None, None
    lnA = np.log(A)
    rate = np.gradient(lnA, t)
    ok = rate > 0
    if ok.sum() < 3:
        return None, None
    inv = 1.0 / rate[ok]
    slope, icpt = np.polyfit(t[ok], inv, 1)
    if slope >= 0:
        return None, None
    T = -icpt / slope
    return max(float(T), float(t[-1])), float(-1.0 / slope)


def run(history: InitialHistory, params: ModelParams, kernel: KernelSpec, ctrl: StepControl,
        grid: Grid, horizon: float, recorder=None, cadence: int = 1,
        memory_mode: str = "prony", snapshot_times=None, dt_fixed: float | None = None,
        max_steps: int = 50_000_000) -> RunOutcome:
    """Integrate up to ``horizon`` or until blow-up.

    ``recorder(state)`` is called at ``t = 0``, every ``cadence`` steps and at
    the final accepted state. Steps are clipped so that every time in
    ``snapshot_times`` and the horizon itself are hit exactly; ``u`` is
    stored at those times in ``outcome.snapshots``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    state = initial_state(grid, kernel, history, params, memory_mode)
    marks = sorted(set(float(s) for s in (snapshot_times or ()) if 0 <= s <= horizon))
    snapshots = {}
    if marks and marks[0] == 0.0:
        snapshots[0.0] = state.u.copy()
        marks.pop(0)
    if recorder is not None:
        recorder(state)
    recorded_step = 0
    peak_t, peak_a = [0.0], [float(np.max(np.abs(state.u)))]
    eps_t = 1e-12 * max(1.0, horizon)
    try:
        while horizon - state.t > eps_t:
            if state.step_count >= max_steps:
                raise RuntimeError("step budget exhausted")
            dt = dt_fixed if dt_fixed is not None else stable_dt(grid, params, kernel, ctrl, state.u)
            if dt < ctrl.dt_min:
                raise BlowUpEvent("dt_collapse", state, peak_a[-1], grid.h1_seminorm(state.u), dt)
            target = marks[0] if marks else horizon
            landed = state.t + dt >= target - eps_t
            if landed:
                dt = target - state.t
            state = step(state, params, kernel, ctrl, grid, dt=dt)
            if landed:
                state.t = state.memory.t = target
                if marks and target == marks[0]:
                    snapshots[target] = state.u.copy()
                    marks.pop(0)
            peak_t.append(state.t)
            peak_a.append(float(np.max(np.abs(state.u))))
            if recorder is not None and (state.step_count % cadence == 0):
                recorder(state)
                recorded_step = state.step_count
    except BlowUpEvent as ev:
        last = ev.state
        if recorder is not None and recorded_step != last.step_count:
            recorder(last)
        T_obs, beta = estimate_blowup_time(peak_t, peak_a)
        if T_obs is None:
            T_obs = last.t
        log.info("%s", ev)
        return RunOutcome("blew_up", last.t, last, last.step_count, T_obs=T_obs,
                          blowup_reason=ev.reason, blowup_max_abs=ev.max_abs,
                          blowup_grad_norm=ev.grad_norm, rate_exponent=beta,
                          snapshots=snapshots)
    if recorder is not None and recorded_step != state.step_count:
        recorder(state)
    return RunOutcome("completed", state.t, state, state.step_count, snapshots=snapshots)
