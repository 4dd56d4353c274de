"""Closed-form blow-up constants, hypothesis checks and proof parameters.

Everything here is a function of the Sobolev constant ``gamma`` of the grid,
``gamma = max ||u||_{p+1} / ||grad u||_2`` over discrete Dirichlet fields,
together with ``p``, ``m`` and ``k0 = k(0)``:

    F(y)  = y - (2 gamma^2 y)^((p+1)/2) / (p+1)
    y0    = gamma^(-2(p+1)/(p-1)) / 2           argmax of F
    d     = F(y0) = (1/2 - 1/(p+1)) gamma^(-2(p+1)/(p-1))
    y*    = (sqrt(k0) + 1)^(2/(p-1)) (2 gamma^2)^(-(p+1)/(p-1))
    M     = F(y*) = y* (p - sqrt(k0)) / (p + 1)
    y1    : F(y1) = E(0), y1 > y*
    C0    = (2 gamma^2 y1)^((p+1)/2)
    c     = (C0 - (sqrt(k0) + 1) y1) / (2 C0)
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Grid
from .kernel import KernelSpec

log = logging.getLogger(__name__)


# -- Sobolev constant -------------------------------------------------------

@dataclass(frozen=True)
class SobolevResult:
    gamma: float
    field: np.ndarray = field(repr=False)
    converged: bool
    iterations: int
    restarts: int


def _neg_laplacian(grid: Grid):
    # -lap with zero ghosts; u^T A u * weight == grid.grad_sq(u) exactly
    blocks = []
    for n, h in zip(grid.n, grid.h):
        blocks.append(sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)],
                               [-1, 0, 1]) / h**2)
    A = blocks[0]
    for B in blocks[1:]:
        A = sp.kronsum(A, B)      # kronsum(A, B) = kron(I_B, A) + kron(B, I_A)
    if grid.dim > 1:
        # kronsum orders the last axis slowest; reorder to row-major
        perm = np.arange(int(np.prod(grid.n))).reshape(grid.n[::-1]).T.ravel()
        A = A[perm][:, perm]
    return A.tocsc()


def _ratio(grid: Grid, u, q: float) -> float:
    g = grid.grad_sq(u)
    return grid.norm_lp(u, q) / math.sqrt(g) if g > 0.0 else 0.0


def optimize_sobolev_ratio(grid: Grid, p: float, n_random: int = 8, seed: int = 0,
                           tol: float = 1e-10, window: int = 50,
                           max_iter: int = 20_000) -> SobolevResult:
    """Maximise ``||u||_{p+1} / ||grad u||_2`` over grid fields.

    Uses the fixed-point map ``u <- (-lap)^{-1} (|u|^{p-1} u)`` followed by
    normalisation ``||grad u|| = 1``. For ``p = 1`` this is inverse power
    iteration; for ``p > 1`` it is the monotone ascent scheme for a convex
    functional on the energy sphere, so the ratio never decreases. Starts
    from the first eigenmode and ``n_random`` random fields and keeps the
    best. A start counts as converged once the ratio has moved less than
    ``tol`` (relative) over the last ``window`` iterations.
    """
    if not 1.0 <= p <= 5.0:
        raise ValueError("Sobolev exponent p must lie in [1, 5]")
    q = p + 1.0
    lu = splu(_neg_laplacian(grid))
    rng = np.random.default_rng(seed)
    starts = [grid.sine_mode()]
    for _ in range(n_random):
        starts.append(rng.standard_normal(grid.shape))

    best, best_u, all_conv, total = -1.0, None, True, 0
    for u in starts:
        u = u / grid.h1_seminorm(u)
        hist = [_ratio(grid, u, q)]
        conv = False
        for it in range(max_iter):
            rhs = np.abs(u) ** (p - 1.0) * u if p != 1.0 else u
            w = lu.solve(rhs.ravel()).reshape(grid.shape)
            u = w / grid.h1_seminorm(w)
            hist.append(_ratio(grid, u, q))
            if len(hist) > window and abs(hist[-1] - hist[-1 - window]) <= tol * hist[-1]:
                conv = True
                break
        total += it + 1
        all_conv &= conv
        if hist[-1] > best:
            best, best_u = hist[-1], u
    if not all_conv:
        log.warning("Sobolev optimiser hit the iteration cap on at least one start")
    # fix sign so the maximiser is positive where it is largest
    if best_u[np.unravel_index(np.argmax(np.abs(best_u)), best_u.shape)] < 0:
        best_u = -best_u
    return SobolevResult(best, best_u, all_conv, total, len(starts))


@lru_cache(maxsize=64)
def _gamma_cached(extent, n, p):
    return optimize_sobolev_ratio(Grid(extent, n), p).gamma


def sobolev_gamma(grid: Grid, p: float) -> float:
    """Discrete Sobolev constant for ``grid`` (cached per grid and ``p``)."""
    return _gamma_cached(grid.extent, grid.n, float(p))


# -- closed forms -----------------------------------------------------------

def _need(p, gamma):
    if not p > 1.0:
        raise ValueError("needs p > 1")
    if not gamma > 0.0:
        raise ValueError("needs gamma > 0")


def F_eval(y, gamma: float, p: float):
    _need(p, gamma)
    y = np.asarray(y, dtype=float)
    out = y - (2.0 * gamma**2 * y) ** ((p + 1.0) / 2.0) / (p + 1.0)
    return float(out) if out.ndim == 0 else out


def F_prime(y, gamma: float, p: float):
    _need(p, gamma)
    y = np.asarray(y, dtype=float)
    out = 1.0 - gamma**2 * (2.0 * gamma**2 * y) ** ((p - 1.0) / 2.0)
    return float(out) if out.ndim == 0 else out


def y0(gamma: float, p: float) -> float:
    _need(p, gamma)
    return 0.5 * gamma ** (-2.0 * (p + 1.0) / (p - 1.0))


def d(gamma: float, p: float) -> float:
    _need(p, gamma)
    return (0.5 - 1.0 / (p + 1.0)) * gamma ** (-2.0 * (p + 1.0) / (p - 1.0))


def ystar(gamma: float, p: float, k0: float) -> float:
    _need(p, gamma)
    if not k0 > 1.0:
        raise ValueError("needs k0 > 1")
    return (math.sqrt(k0) + 1.0) ** (2.0 / (p - 1.0)) * (2.0 * gamma**2) ** (-(p + 1.0) / (p - 1.0))


def M(gamma: float, p: float, k0: float) -> float:
    if not p > math.sqrt(k0):
        raise ValueError("M is positive only for p > sqrt(k0)")
    return ystar(gamma, p, k0) * (p - math.sqrt(k0)) / (p + 1.0)


class NoRootError(ValueError):
    """``F(y) = E0`` has no root on the decreasing branch beyond ``y*``."""


def solve_y1(E0: float, gamma: float, p: float, k0: float, rtol: float = 1e-12) -> float:
    """Root of ``F(y) = E0`` with ``y > y*``; requires ``0 <= E0 < M``."""
    if E0 < 0.0:
        raise NoRootError("E0 < 0: use the negative-energy blow-up path instead")
    Mv = M(gamma, p, k0)
    if E0 >= Mv:
        raise NoRootError(f"E0 = {E0:.6g} >= M = {Mv:.6g}; positive-energy hypotheses fail")
    lo = ystar(gamma, p, k0)
    hi = 2.0 * lo
    while F_eval(hi, gamma, p) >= E0:
        hi *= 2.0
    # bisection to a tight bracket, then Newton on the (strictly decreasing) branch
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if F_eval(mid, gamma, p) >= E0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    for _ in range(3):
        step = (F_eval(y, gamma, p) - E0) / F_prime(y, gamma, p)
        if not lo <= y - step <= hi:
            break
        y -= step
    return y


def C0(y1: float, gamma: float, p: float) -> float:
    return (2.0 * gamma**2 * y1) ** ((p + 1.0) / 2.0)


def c_const(y1: float, gamma: float, p: float, k0: float) -> float:
    c0 = C0(y1, gamma, p)
    return (c0 - (math.sqrt(k0) + 1.0) * y1) / (2.0 * c0)


# -- proof parameters -------------------------------------------------------

@dataclass(frozen=True)
class ProofParameters:
    """Parameters of the Lyapunov argument ``Y = G^(1-alpha) + eps N'``.

    ``epsilon_constraints`` maps a readable name to each upper bound on
    ``eps``; ``epsilon`` is the largest admissible value (their minimum).
    ``Tmax_bound`` is ``None`` unless constants are tracked, in which case
    ``Tmax_note`` records the reconstruction policy.
    """

    delta: float
    alpha: float
    alpha_limits: tuple
    sigma: float
    lambda_target: float
    lam: float | None
    C_lambda: float | None
    epsilon_constraints: dict
    epsilon: float | None
    Tmax_bound: float | None
    Tmax_note: str


def alpha_policy(p: float, m: float) -> tuple:
    """Midpoint of the admissible range; returns ``(alpha, (lim1, lim2))``."""
    lim1 = 1.0 / (m + 1.0) - 1.0 / (p + 1.0)
    lim2 = (p - 1.0) / (2.0 * (p + 1.0))
    return 0.5 * min(lim1, lim2), (lim1, lim2)


def _measure_constants(measure: float, p: float, m: float):
    # Hoelder on a set of finite measure: ||u||_a <= |Omega|^(1/a - 1/b) ||u||_b
    ch1 = measure ** (1.0 / (m + 1.0) - 1.0 / (p + 1.0))
    ch2 = measure ** (0.5 - 1.0 / (p + 1.0))
    return ch1, ch2


def proof_parameters(p: float, m: float, k0: float, G0: float, Nprime0: float,
                     measure: float | None = None, track_constants: bool = False,
                     positive_energy_c: float | None = None) -> ProofParameters:
    """Fixed conventions for ``delta, alpha, sigma, lambda, eps`` and the life-span bound.

    ``G0`` is ``-E(0)`` on the negative-energy path, or ``M - E(0)`` on the
    positive-energy path (pass ``positive_energy_c = c`` there; the
    ``lambda`` target becomes ``c / 2``).

    With ``track_constants`` and a domain ``measure`` every generic
    constant is made explicit:

    * ``|int u |u_t|^(m-1) u_t| <= K G^b ||u||^((p+1)/(m+1)) ||u_t||^m``,
      ``b = 1/(p+1) - 1/(m+1)``, ``K = |Omega|^(-b) (p+1)^b``; Young with
      exponents ``m+1`` and ``(m+1)/m`` gives
      ``C_lambda = m/(m+1) K^((m+1)/m) ((m+1) lambda)^(-1/m)``.
    * ``Y' >= eps k1 S`` with ``S = G + ||u_t||^2 + ||u||_{p+1}^{p+1}``.
    * ``Y^r <= K3 eps^(-sigma) S`` with ``r = 1/(1-alpha)`` from convexity
      ``(a+b)^r <= 2^(r-1)(a^r + b^r)``, Cauchy-Schwarz, Hoelder and Young
      with exponents ``2/r``, ``2/(2-r)``.
    * Then ``Y' >= eps^(1+sigma) (k1/K3) Y^r`` integrates to
      ``T <= (1-alpha)/alpha eps^(-(1+sigma)) Y0^(-alpha/(1-alpha)) K3/k1``.
    """
    if not G0 > 0.0:
        raise ValueError("proof parameters need G0 > 0")
    sk = math.sqrt(k0)
    delta = (sk + 1.0) / 2.0
    alpha, limits = alpha_policy(p, m)
    if not alpha > 0.0:
        raise ValueError("no admissible alpha: needs p > m and p > 1")
    sigma = 1.0 - 2.0 / ((1.0 - 2.0 * alpha) * (p + 1.0))
    if positive_energy_c is None:
        target = (p - sk) / (2.0 * (p + 1.0))
    else:
        target = positive_energy_c / 2.0
    b = 1.0 / (p + 1.0) - 1.0 / (m + 1.0)

    cons = {"eps<=1": 1.0, "eps<=G0": G0}
    if Nprime0 < 0.0:
        cons["eps<=-G0^(1-alpha)/(2N'0)"] = -G0 ** (1.0 - alpha) / (2.0 * Nprime0)
    if not track_constants or measure is None:
        cons["eps*C_lambda*G0^(b+alpha)<=1-alpha"] = float("nan")
        return ProofParameters(delta, alpha, limits, sigma, target, None, None, cons,
                               None, None, "finite, constant-dependent")

    ch1, ch2 = _measure_constants(measure, p, m)
    K = ch1 * (p + 1.0) ** b
    lam = target * G0 ** (-b)
    C_lam = m / (m + 1.0) * K ** ((m + 1.0) / m) * ((m + 1.0) * lam) ** (-1.0 / m)
    cons["eps*C_lambda*G0^(b+alpha)<=1-alpha"] = (1.0 - alpha) / (C_lam * G0 ** (b + alpha))
    eps = min(cons.values())

    r = 1.0 / (1.0 - alpha)
    if positive_energy_c is None:
        k1 = min((sk + 3.0) / 2.0, sk + 1.0, target)
    else:
        c = positive_energy_c
        k1 = 0.5 * min(sk + 3.0, c / 2.0, c * (p + 1.0) / 2.0)
    k2 = max(r / 2.0, (1.0 - r / 2.0) * (p + 1.0) ** (-sigma))
    K3 = 2.0 ** (r - 1.0) * max(1.0, ch2**r * k2)
    Y0 = G0 ** (1.0 - alpha) + eps * Nprime0
    bound = (1.0 - alpha) / alpha * eps ** (-(1.0 + sigma)) * Y0 ** (-alpha / (1.0 - alpha)) * K3 / k1
    note = ("explicit Hoelder/Young constants on a domain of measure "
            f"{measure:.6g}; comparison only, not an assertion on discrete runs")
    return ProofParameters(delta, alpha, limits, sigma, target, lam, C_lam, cons, eps, bound, note)


# -- hypothesis report ------------------------------------------------------

REGIME_NEGATIVE = "negative-energy blow-up applies"
REGIME_POSITIVE = "positive-energy blow-up applies"
REGIME_GLOBAL = "damping-dominated global existence applies"
REGIME_NONE = "no blow-up or global result applies"


@dataclass
class CriteriaReport:
    p: float
    m: float
    k0: float
    gamma: float
    E0: float
    scriptE0: float
    y0: float
    d: float
    ystar: float | None = None
    M: float | None = None
    y1: float | None = None
    C0: float | None = None
    c: float | None = None
    F_E0: float | None = None
    delta: float | None = None
    alpha: float | None = None
    sigma: float | None = None
    epsilon_max: float | None = None
    lambda_target: float | None = None
    p_gt_m: bool = False
    p_gt_sqrtk0: bool = False
    E0_negative: bool = False
    E0_below_M: bool = False
    scriptE0_above_y0: bool = False
    corollary_condition: bool = False
    corollary_consistent: bool = True
    m_ge_p: bool = False
    regime: str = REGIME_NONE
    Tmax_bound: float | None = None
    Tmax_note: str = ""
    out_of_assumption: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def check_hypotheses(params, kernel: KernelSpec, E0: float, scriptE0: float,
                     u0_norms: dict, gamma: float, Nprime0: float = 0.0,
                     measure: float | None = None,
                     track_constants: bool = False) -> CriteriaReport:
    """Fill every hypothesis flag and the constants that apply.

    ``u0_norms`` holds ``lp_power`` (``||u0||_{p+1}^{p+1}``) and ``grad_sq``
    (``||grad u0||_2^2``). Report-only: nothing here raises for failed
    hypotheses. A violated implication ``lp_power > grad_sq => scriptE0 > y0``
    is flagged through ``corollary_consistent = False``.
    """
    p, m, k0 = params.p, params.m, kernel.k0
    rep = CriteriaReport(p=p, m=m, k0=k0, gamma=gamma, E0=E0, scriptE0=scriptE0,
                         y0=y0(gamma, p), d=d(gamma, p))
    rep.out_of_assumption = params.out_of_assumption
    sk = math.sqrt(k0)
    rep.p_gt_m = p > m
    rep.p_gt_sqrtk0 = p > sk
    rep.m_ge_p = m >= p
    rep.E0_negative = E0 < 0.0
    rep.scriptE0_above_y0 = scriptE0 > rep.y0
    rep.corollary_condition = u0_norms["lp_power"] > u0_norms["grad_sq"]
    rep.corollary_consistent = (not rep.corollary_condition) or rep.scriptE0_above_y0
    rep.F_E0 = F_eval(max(scriptE0, 0.0), gamma, p)
    if rep.corollary_condition and not rep.corollary_consistent:
        log.error("consistency error: ||u0||^(p+1) > ||grad u0||^2 but scriptE0 <= y0")

    if k0 > 1.0 and rep.p_gt_sqrtk0:
        rep.ystar = ystar(gamma, p, k0)
        rep.M = M(gamma, p, k0)
        rep.E0_below_M = 0.0 <= E0 < rep.M
        if rep.E0_below_M:
            rep.y1 = solve_y1(E0, gamma, p, k0)
            rep.C0 = C0(rep.y1, gamma, p)
            rep.c = c_const(rep.y1, gamma, p, k0)

    dominant = rep.p_gt_m and rep.p_gt_sqrtk0
    pp = None
    if dominant and rep.E0_negative:
        rep.regime = REGIME_NEGATIVE
        pp = proof_parameters(p, m, k0, -E0, Nprime0, measure, track_constants)
    elif dominant and rep.E0_below_M and rep.scriptE0_above_y0:
        rep.regime = REGIME_POSITIVE
        pp = proof_parameters(p, m, k0, rep.M - E0, Nprime0, measure, track_constants,
                              positive_energy_c=rep.c)
    elif rep.m_ge_p:
        rep.regime = REGIME_GLOBAL
    if pp is not None:
        rep.delta, rep.alpha, rep.sigma = pp.delta, pp.alpha, pp.sigma
        rep.lambda_target, rep.epsilon_max = pp.lambda_target, pp.epsilon
        rep.Tmax_bound, rep.Tmax_note = pp.Tmax_bound, pp.Tmax_note
    return rep
