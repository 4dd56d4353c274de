"""Viscoelastic wave equation lab: Prony-series memory, nonlinear damping,
power-law source, blow-up detection and the closed-form blow-up constants."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

from .kernel import KernelSpec, validate, eval_k, eval_mu, eval_mu_prime, tail_mass  # noqa: E402
from .grid import Grid  # noqa: E402
from .memory import InitialHistory, PronyMemory, QuadratureMemory  # noqa: E402
from .dynamics import BlowUpEvent, ModelParams, StepControl, run, step  # noqa: E402
from .energy import EnergyRecorder, EnergyReport  # noqa: E402
from .criteria import CriteriaReport, check_hypotheses, sobolev_gamma  # noqa: E402

__all__ = [
    "KernelSpec", "validate", "eval_k", "eval_mu", "eval_mu_prime", "tail_mass",
    "Grid", "InitialHistory", "PronyMemory", "QuadratureMemory",
    "BlowUpEvent", "ModelParams", "StepControl", "run", "step",
    "EnergyRecorder", "EnergyReport",
    "CriteriaReport", "check_hypotheses", "sobolev_gamma",
]
