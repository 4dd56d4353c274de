"""Energy bookkeeping along a run.

Per recorded state this computes the quadratic energy (kinetic + elastic +
history), the source potential, the total energy, the functionals used by
the blow-up argument (``G = -E``, ``N = ||u||^2 / 2``, ``N' = <u, u_t>``,
``Y = G^(1-alpha) + eps N'``) and the running dissipation integrals. The
balance

    E(t) + int_0^t ||u_t||_{m+1}^{m+1} + (1/2) int_0^t sum_i H_i / tau_i = E(0)

is tracked as ``identity_residual``; with Prony kernels
``-(1/2) int mu'(s) ||grad w||^2 ds = (1/2) sum_i H_i / tau_i`` exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import Grid
from .kernel import KernelSpec
from .memory import per_mode_energies

CSV_COLUMNS = ("t", "kinetic", "elastic", "history", "scriptE", "potential", "totalE",
               "G", "N", "Nprime", "damping_cum", "memory_cum", "identity_residual", "Y")


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    elastic: float
    history: float
    scriptE: float
    potential: float
    totalE: float
    G: float
    N: float
    Nprime: float
    damping_cum: float
    memory_cum: float
    identity_residual: float
    Y: float = float("nan")
    # not exported: extra diagnostics used by invariant checks
    lp_power: float = float("nan")
    grad_sq: float = float("nan")
    min_mode_energy: float = float("nan")
    post_blowup: bool = False

    def row(self) -> list:
        return [getattr(self, name) for name in CSV_COLUMNS]


@dataclass
class Accumulators:
    """Running trapezoid state for the dissipation integrals."""

    t: float | None = None
    damping_rate: float = 0.0
    memory_rate: float = 0.0
    damping_cum: float = 0.0
    memory_cum: float = 0.0
    E0: float | None = None


def potential_functional_J(grid: Grid, u, p: float) -> float:
    """``J(u) = ||grad u||^2 / 2 - ||u||_{p+1}^{p+1} / (p+1)``."""
    return 0.5 * grid.grad_sq(u) - grid.lp_power(u, p + 1.0) / (p + 1.0)


def mountain_pass_sup(grid: Grid, u, p: float) -> float:
    """``sup_{lambda >= 0} J(lambda u)`` in closed form (needs ``p > 1``)."""
    if p <= 1.0:
        raise ValueError("mountain pass level needs p > 1")
    g = grid.h1_seminorm(u)
    lp = grid.norm_lp(u, p + 1.0)
    if lp == 0.0:
        raise ValueError("mountain pass level undefined for the zero field")
    return (0.5 - 1.0 / (p + 1.0)) * (g / lp) ** (2.0 * (p + 1.0) / (p - 1.0))


def report(state, params, kernel: KernelSpec, grid: Grid, acc: Accumulators,
           alpha: float | None = None, eps: float | None = None) -> EnergyReport:
    """Energy report for ``state``; updates ``acc`` in place."""
    u, v = state.u, state.v
    with np.errstate(all="ignore"):
        kinetic = 0.5 * grid.inner_l2(v, v)
        gsq = grid.grad_sq(u)
        elastic = 0.5 * gsq
        modes = per_mode_energies(state.memory, kernel, u) if kernel.n_modes else np.zeros(0)
        history = 0.5 * float(modes.sum())
        scriptE = kinetic + elastic + history
        lp = grid.lp_power(u, params.p + 1.0)
        potential = lp / (params.p + 1.0) if params.source else 0.0
        totalE = scriptE - potential
        damping_rate = grid.lp_power(v, params.m + 1.0) if params.damping else 0.0
        memory_rate = 0.5 * float(np.sum(modes / kernel.taus)) if kernel.n_modes else 0.0

    if acc.t is None:
        acc.E0 = totalE
    else:
        dt = state.t - acc.t
        acc.damping_cum += 0.5 * dt * (acc.damping_rate + damping_rate)
        acc.memory_cum += 0.5 * dt * (acc.memory_rate + memory_rate)
    acc.t = state.t
    acc.damping_rate = damping_rate
    acc.memory_rate = memory_rate

    G = -totalE
    Nprime = grid.inner_l2(u, v)
    Y = float("nan")
    if alpha is not None and eps is not None and G > 0.0:
        Y = G ** (1.0 - alpha) + eps * Nprime
    values = [kinetic, elastic, history, potential, totalE]
    return EnergyReport(
        t=state.t, kinetic=kinetic, elastic=elastic, history=history, scriptE=scriptE,
        potential=potential, totalE=totalE, G=G, N=0.5 * grid.inner_l2(u, u), Nprime=Nprime,
        damping_cum=acc.damping_cum, memory_cum=acc.memory_cum,
        identity_residual=totalE + acc.damping_cum + acc.memory_cum - acc.E0, Y=Y,
        lp_power=lp, grad_sq=gsq,
        min_mode_energy=float(modes.min()) if modes.size else 0.0,
        post_blowup=not all(np.isfinite(values)),
    )


class EnergyRecorder:
    """Callable recorder for :func:`viscowave.dynamics.run`."""

    def __init__(self, params, kernel: KernelSpec, grid: Grid,
                 alpha: float | None = None, eps: float | None = None):
        self.params = params
        self.kernel = kernel
        self.grid = grid
        self.alpha = alpha
        self.eps = eps
        self.acc = Accumulators()
        self.reports: list[EnergyReport] = []

    def __call__(self, state) -> None:
        self.reports.append(report(state, self.params, self.kernel, self.grid, self.acc,
                                   self.alpha, self.eps))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])

    def write_csv(self, path) -> None:
        write_csv(self.reports, path)


def write_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow([repr(float(x)) for x in r.row()])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected energy CSV header: {header}")
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


class Violation(NamedTuple):
    name: str
    hard: bool
    message: str


def check_invariants(cols: dict, g_tol: float = 1e-8) -> list:
    """Post-hoc checks on energy columns.

    Hard invariants hold exactly for every accepted state (they follow from
    the definitions): ``scriptE >= 0``, ``history >= 0``, nondecreasing
    dissipation integrals and ``G <= potential`` when ``G > 0``. The
    monotonicity of ``G`` is a property of the time integrator and is
    reported as soft, since it degrades where a run approaches blow-up.
    Rows with non-finite energies are skipped.
    """
    out = []
    t = cols["t"]
    if len(t) == 0:
        return out
    finite = np.isfinite(cols["totalE"]) & np.isfinite(cols["scriptE"])
    scale = max(1.0, float(np.max(np.abs(cols["scriptE"][finite]), initial=0.0)))

    def flag(mask, name, hard, what):
        idx = np.flatnonzero(mask)
        if idx.size:
            out.append(Violation(name, hard, f"{what} ({idx.size} rows, first at t={t[idx[0]]:.6g})"))

    flag(finite & (cols["scriptE"] < -1e-12 * scale), "scriptE_nonnegative", True,
         "quadratic energy negative")
    hist_scale = np.maximum(1.0, np.abs(cols["elastic"]))
    flag(finite & (cols["history"] < -1e-9 * hist_scale), "history_nonnegative", True,
         "history energy negative")
    for name in ("damping_cum", "memory_cum"):
        c = cols[name]
        dec = np.r_[False, np.diff(c) < -1e-12 * np.maximum(1.0, np.abs(c[1:]))]
        flag(dec, f"{name}_monotone", True, f"{name} decreasing")
    G = cols["G"]
    flag(finite & (G > 0) & (G > cols["potential"] + 1e-9 * np.maximum(1.0, np.abs(G))),
         "G_below_potential", True, "G exceeds the source potential")
    drop = np.r_[False, np.diff(G) < -g_tol * np.maximum(1.0, np.abs(G[:-1]))]
    flag(drop & np.r_[False, finite[1:] & finite[:-1]], "G_monotone", False, "G decreasing")
    return out
