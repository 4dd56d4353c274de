"""Prony-series relaxation kernels.

The relaxation modulus is ``k(s) = 1 + sum_i a_i exp(-s / tau_i)`` with memory
density ``mu(s) = -k'(s)``. Every mode has ``a_i > 0`` and ``tau_i > 0`` so
``k' < 0``, ``mu' <= 0``, ``mu`` is integrable and ``k(inf) = 1`` hold by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class KernelError(ValueError):
    """Raised for an invalid kernel specification."""


@dataclass(frozen=True)
class KernelValidation:
    accepted: bool
    k0: float
    mu_integral: float
    checks: dict = field(default_factory=dict)
    reason: str = ""


def _as_pairs(modes):
    pairs = []
    for mode in modes:
        if isinstance(mode, dict):
            a, tau = mode["a"], mode["tau"]
        else:
            a, tau = mode
        pairs.append((float(a), float(tau)))
    return tuple(pairs)


def validate(modes) -> KernelValidation:
    """Check a list of ``(a, tau)`` pairs (or ``{"a", "tau"}`` dicts).

    Never raises for bad values; the first violated condition is reported
    in ``reason``.
    """
    pairs = _as_pairs(modes)
    reason = ""
    for i, (a, tau) in enumerate(pairs):
        if not (np.isfinite(a) and np.isfinite(tau)):
            reason = f"mode {i}: parameters must be finite"
        elif a <= 0.0:
            reason = f"mode {i}: amplitude must be positive (a={a})"
        elif tau <= 0.0:
            reason = f"mode {i}: relaxation time must be positive (tau={tau})"
        if reason:
            break
    ok = not reason
    k0 = 1.0 + sum(a for a, _ in pairs)
    checks = {
        "k_prime_negative": ok and len(pairs) > 0,
        "mu_nonincreasing": ok,
        "mu_integrable": ok,
        "k_infinity_is_one": ok,
    }
    return KernelValidation(accepted=ok, k0=k0, mu_integral=k0 - 1.0,
                            checks=checks, reason=reason)


@dataclass(frozen=True)
class KernelSpec:
    """Validated Prony kernel; ``modes`` is a tuple of ``(a, tau)`` pairs."""

    modes: tuple = ()

    def __post_init__(self):
        pairs = _as_pairs(self.modes)
        report = validate(pairs)
        if not report.accepted:
            raise KernelError(report.reason)
        object.__setattr__(self, "modes", pairs)

    @classmethod
    def from_config(cls, entries) -> "KernelSpec":
        return cls(tuple(_as_pairs(entries)))

    def to_config(self) -> list:
        return [{"a": a, "tau": tau} for a, tau in self.modes]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.modes], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return np.array([tau for _, tau in self.modes], dtype=float)

    @property
    def k0(self) -> float:
        return 1.0 + float(self.amplitudes.sum())

    @property
    def tau_min(self) -> float:
        return float(self.taus.min()) if self.modes else np.inf

    @property
    def tau_max(self) -> float:
        return float(self.taus.max()) if self.modes else 0.0


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("kernel argument s must be >= 0")
    return s


def _mode_sum(spec, s, power):
    # sum_i a_i / tau_i**power * exp(-s / tau_i)
    s = _check_s(s)
    out = np.zeros_like(s)
    for a, tau in spec.modes:
        out = out + a / tau**power * np.exp(-s / tau)
    return out if out.ndim else float(out)


def eval_k(spec: KernelSpec, s):
    return 1.0 + _mode_sum(spec, s, 0)


def eval_mu(spec: KernelSpec, s):
    return _mode_sum(spec, s, 1)


def eval_mu_prime(spec: KernelSpec, s):
    return -_mode_sum(spec, s, 2)


def tail_mass(spec: KernelSpec, s):
    """Integral of ``mu`` over ``[s, inf)``, equal to ``k(s) - 1``."""
    return _mode_sum(spec, s, 0)


def mu_cutoff(spec: KernelSpec, rel: float = 1e-12) -> float:
    """Smallest ``S`` with ``mu(S) <= rel * mu(0)``; 0 for an empty kernel."""
    if not spec.modes:
        return 0.0
    mu0 = eval_mu(spec, 0.0)
    target = rel * mu0
    hi = spec.tau_max
    while eval_mu(spec, hi) > target:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eval_mu(spec, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi
