"""Configuration, orchestration and persistence.

A config is one JSON document validated against :data:`CONFIG_SCHEMA`
(``schema_version`` 1, unknown keys rejected) before anything is computed.
Each experiment kind writes an energy CSV and/or a table CSV plus flat
``key=value`` summary files into the output directory.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import sympy
from scipy.integrate import quad

from . import __version__, criteria
from .dynamics import AssumptionError, ModelParams, StepControl, run
from .energy import EnergyRecorder, check_invariants, potential_functional_J
from .grid import Grid
from .kernel import KernelError, KernelSpec
from .memory import InitialHistory, PronyMemory, QuadratureMemory

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("run", "check", "sweep", "compare-memory", "perturb")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4


class ConfigError(ValueError):
    """Schema violation or inconsistent configuration (exit 2)."""


class NumericalFault(RuntimeError):
    """Non-finite data or a run that cannot proceed (exit 3)."""


class InvariantViolation(RuntimeError):
    """A hard invariant failed (exit 4)."""


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_FIELD = {"oneOf": [{"type": "string"},
                    {"type": "array", "items": {"type": ["number", "array"]}}]}

CONFIG_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "kind": {"enum": list(KINDS)},
    "grid": _obj({
        "extent": {"type": "array", "items": _POS, "minItems": 1, "maxItems": 3},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 3},
              "minItems": 1, "maxItems": 3},
    }, ["extent", "n"]),
    "kernel": {"type": "array", "items": _obj({"a": _NUM, "tau": _NUM}, ["a", "tau"])},
    "model": _obj({
        "p": _NUM, "m": _NUM,
        "damping": {"type": "boolean"}, "source": {"type": "boolean"},
        "allow_out_of_assumption": {"type": "boolean"},
    }, ["p", "m"]),
    "initial": _obj({
        "shape": _FIELD,
        "amplitude": _NUM,
        "velocity": {"oneOf": [{"type": "null"}, _FIELD]},
        "profile": _obj({
            "kind": {"enum": ["constant", "ramp", "oscillatory"]},
            "eps": _NUM, "beta": _NUM, "omega": _NUM,
        }, ["kind"]),
    }, ["shape"]),
    "step": _obj({
        "cfl": _POS, "dt_max": _POS, "dt_min": _POS, "amp_safety": _POS,
        "max_abs_threshold": _POS, "grad_threshold": _POS,
        "dt_fixed": {"oneOf": [{"type": "null"}, _POS]},
    }),
    "horizon": {"type": "number", "minimum": 0},
    "memory_mode": {"enum": ["prony", "quadrature"]},
    "recorder": _obj({"cadence": {"type": "integer", "minimum": 1}}),
    "lyapunov": _obj({"track_constants": {"type": "boolean"}}),
    "check": _obj({"samples": {"type": "integer", "minimum": 0}}),
    "sweep": _obj({
        "A_min": _NUM, "A_max": _NUM,
        "count": {"type": "integer", "minimum": 2},
        "bisect": {"type": "boolean"},
        "resolution": _POS,
    }, ["A_min", "A_max", "count"]),
    "compare": _obj({"T": _POS, "dt": _POS, "tol": _POS,
                     "report_every": _POS}),
    "perturb": _obj({"deltas": {"type": "array", "items": _NUM, "minItems": 1},
                     "samples": {"type": "integer", "minimum": 2}}),
    "output_dir": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
}, ["schema_version", "kind", "grid", "model", "initial"])

DEFAULTS = {
    "kernel": [],
    "horizon": 1.0,
    "memory_mode": "prony",
    "recorder": {"cadence": 1},
    "lyapunov": {"track_constants": True},
    "step": {},
    "output_dir": "out",
    "seed": 0,
}


# -- config ingestion -------------------------------------------------------

@dataclass
class ExperimentConfig:
    raw: dict
    grid: Grid
    kernel: KernelSpec
    params: ModelParams
    history: InitialHistory
    ctrl: StepControl
    dt_fixed: float | None

    @property
    def kind(self) -> str:
        return self.raw["kind"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def horizon(self) -> float:
        return float(self.raw["horizon"])

    @property
    def cadence(self) -> int:
        return int(self.raw["recorder"]["cadence"])

    @property
    def memory_mode(self) -> str:
        return self.raw["memory_mode"]

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SHAPE_SYMBOLS = {name: sympy.Symbol(name, real=True) for name in ("x", "y", "z")}


def evaluate_field(grid: Grid, spec, what: str = "shape") -> np.ndarray:
    """Node values from an expression in ``x, y, z`` or an explicit array.

    Expressions may use ``pi``, ``sin``, ``exp`` and the like, plus ``Lx,
    Ly, Lz`` for the box extents. They must vanish on the boundary.
    """
    if isinstance(spec, str):
        names = ["x", "y", "z"][: grid.dim]
        local = {k: _SHAPE_SYMBOLS[k] for k in names}
        local.update({f"L{k}": L for k, L in zip(names, grid.extent)})
        try:
            expr = sympy.parse_expr(spec, local_dict=local, evaluate=True)
        except Exception as exc:  # sympy raises a zoo of exception types here
            raise ConfigError(f"cannot parse {what} expression {spec!r}: {exc}") from exc
        extra = expr.free_symbols - {local[k] for k in names}
        if extra:
            raise ConfigError(f"{what} expression uses unknown symbols {sorted(map(str, extra))}")
        fn = sympy.lambdify([local[k] for k in names], expr, "numpy")
        values = np.broadcast_to(np.asarray(fn(*grid.coordinates()), dtype=float),
                                 grid.shape).copy()
        # boundary check: evaluate on each face of the closed box
        scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
        for axis, L in enumerate(grid.extent):
            for edge in (0.0, L):
                pts = [np.linspace(0.0, Lk, 17) for Lk in grid.extent]
                pts[axis] = np.array([edge])
                face = np.asarray(fn(*np.meshgrid(*pts, indexing="ij")), dtype=float)
                if np.max(np.abs(face)) > 1e-10 * scale:
                    raise ConfigError(f"{what} expression does not vanish on the boundary")
    else:
        values = np.asarray(spec, dtype=float)
        if values.shape != grid.shape:
            raise ConfigError(f"{what} array has shape {values.shape}, grid is {grid.shape}")
    if not np.isfinite(values).all():
        raise NumericalFault(f"{what} contains non-finite values")
    return values


def load_config(source, overrides: dict | None = None) -> ExperimentConfig:
    """Validate and build a config from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc
    for key, value in DEFAULTS.items():
        raw.setdefault(key, copy.deepcopy(value))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return _build(raw)


def _build(raw: dict) -> ExperimentConfig:
    g = raw["grid"]
    if len(g["extent"]) != len(g["n"]):
        raise ConfigError("grid.extent and grid.n must have the same length")
    try:
        grid = Grid(tuple(g["extent"]), tuple(g["n"]))
        kernel = KernelSpec.from_config(raw["kernel"])
        mp = raw["model"]
        params = ModelParams(mp["p"], mp["m"], mp.get("damping", True), mp.get("source", True),
                             mp.get("allow_out_of_assumption", False))
        st = dict(raw["step"])
        dt_fixed = st.pop("dt_fixed", None)
        ctrl = StepControl(**st)
    except (KernelError, AssumptionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ini = raw["initial"]
    amp = float(ini.get("amplitude", 1.0))
    shape = evaluate_field(grid, ini["shape"])
    vel = ini.get("velocity")
    velocity = None if vel is None else amp * evaluate_field(grid, vel, "velocity")
    prof = dict(ini.get("profile", {"kind": "constant"}))
    try:
        history = InitialHistory(amp * shape, kind=prof.pop("kind"), velocity=velocity, **prof)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if raw["kind"] == "sweep":
        sw = raw["sweep"]
        if not sw["A_max"] > sw["A_min"]:
            raise ConfigError("sweep.A_max must exceed sweep.A_min")
    if raw["kind"] == "perturb" and "perturb" not in raw:
        raise ConfigError("kind=perturb needs a 'perturb' section")
    return ExperimentConfig(raw, grid, kernel, params, history, ctrl, dt_fixed)


def resolve_threads(value: int | None) -> int:
    """``--threads`` if given, else ``VISCOWAVE_THREADS``, else 1."""
    if value is None:
        env = os.environ.get("VISCOWAVE_THREADS", "").strip()
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"VISCOWAVE_THREADS must be an integer, got {env!r}") from exc
        else:
            value = 1
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return value


# -- persistence ------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v).replace("\n", " ")


def write_kv(path, data: dict) -> None:
    with open(path, "w") as fh:
        for key, value in data.items():
            fh.write(f"{key}={_fmt(value)}\n")


def read_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and "=" in line:
                key, value = line.split("=", 1)
                out[key] = value
    return out


def write_table(path, rows: list) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _versions() -> dict:
    return {"version.viscowave": __version__, "version.numpy": np.__version__,
            "version.python": platform.python_version()}


# -- shared pieces ----------------------------------------------------------

def initial_report(cfg: ExperimentConfig, history: InitialHistory | None = None,
                   gamma: float | None = None) -> tuple:
    """Energies at ``t = 0`` and the criteria report for a config."""
    history = history or cfg.history
    grid, params, kernel = cfg.grid, cfg.params, cfg.kernel
    from .dynamics import initial_state
    from .energy import Accumulators, report
    state = initial_state(grid, kernel, history, params, "prony")
    rep0 = report(state, params, kernel, grid, Accumulators())
    crit = None
    if 1.0 < params.p <= 5.0:
        if gamma is None:
            gamma = criteria.sobolev_gamma(grid, params.p)
        norms = {"lp_power": rep0.lp_power, "grad_sq": rep0.grad_sq}
        crit = criteria.check_hypotheses(
            params, kernel, rep0.totalE, rep0.scriptE, norms, gamma,
            Nprime0=rep0.Nprime, measure=grid.measure,
            track_constants=cfg.raw["lyapunov"]["track_constants"])
    return rep0, crit


def _single_run(cfg: ExperimentConfig, history: InitialHistory, recorder=None,
                snapshot_times=None, horizon=None):
    return run(history, cfg.params, cfg.kernel, cfg.ctrl, cfg.grid,
               cfg.horizon if horizon is None else horizon,
               recorder=recorder, cadence=cfg.cadence, memory_mode=cfg.memory_mode,
               snapshot_times=snapshot_times, dt_fixed=cfg.dt_fixed)


def _criteria_kv(crit) -> dict:
    if crit is None:
        return {"regime": "criteria unavailable for this p"}
    return {f"criteria.{k}": v for k, v in crit.as_dict().items()} | {"regime": crit.regime}


# -- experiment kinds -------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Single run: ``energy.csv``, ``summary.txt`` and ``criteria.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    _, crit = initial_report(cfg)
    alpha = eps = None
    if crit is not None and crit.regime == criteria.REGIME_NEGATIVE:
        alpha, eps = crit.alpha, crit.epsilon_max
    rec = EnergyRecorder(cfg.params, cfg.kernel, cfg.grid, alpha, eps)
    outcome = _single_run(cfg, cfg.history, rec)
    wall = time.perf_counter() - t0
    rec.write_csv(out / "energy.csv")
    cols = {name: rec.column(name) for name in rec.reports[0].__dataclass_fields__
            if name != "post_blowup"}
    problems = check_invariants(cols)
    final = rec.reports[-1]
    summary = {
        "kind": "run", "status": outcome.status, "t_final": outcome.t_final,
        "steps": outcome.steps, "T_obs": outcome.T_obs,
        "blowup_reason": outcome.blowup_reason, "blowup_max_abs": outcome.blowup_max_abs,
        "blowup_grad_norm": outcome.blowup_grad_norm, "rate_exponent": outcome.rate_exponent,
        "E0": rec.reports[0].totalE, "scriptE0": rec.reports[0].scriptE,
        **{f"final.{k}": getattr(final, k) for k in ("t", "scriptE", "totalE", "G",
                                                     "identity_residual")},
        "out_of_assumption": cfg.params.out_of_assumption,
        "regime": crit.regime if crit else "criteria unavailable for this p",
        "hard_violations": ";".join(v.message for v in problems if v.hard) or "none",
        "soft_violations": ";".join(v.message for v in problems if not v.hard) or "none",
        "seed": cfg.seed, "config_sha256": cfg.digest(), "wall_clock_s": wall,
        **_versions(),
        "config": json.dumps(cfg.raw, sort_keys=True),
    }
    write_kv(out / "summary.txt", summary)
    write_kv(out / "criteria.txt", _criteria_kv(crit))
    if any(v.hard for v in problems):
        raise InvariantViolation("; ".join(v.message for v in problems if v.hard))
    return summary


def random_dirichlet_field(grid: Grid, rng: np.random.Generator, modes: int = 8) -> np.ndarray:
    """Random smooth field: sum of low sine modes with Gaussian weights."""
    out = grid.zeros()
    for _ in range(modes):
        k = tuple(int(v) for v in rng.integers(1, 6, size=grid.dim))
        out += rng.standard_normal() * grid.sine_mode(k)
    if not np.any(out):
        out = grid.sine_mode()
    return out


def corollary_samples(grid: Grid, p: float, gamma: float, count: int, seed: int) -> list:
    """Random fields scaled so that ``||u||_{p+1}^{p+1} > ||grad u||^2``.

    Returns ``(scriptE0, lp_power, grad_sq)`` per sample with ``v = 0`` and
    zero history, so ``scriptE0 = ||grad u||^2 / 2``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        u = random_dirichlet_field(grid, rng)
        g, lp = grid.grad_sq(u), grid.lp_power(u, p + 1.0)
        # scale s with s^(p+1) lp > s^2 g, times a random margin in (1, 3)
        s = (g / lp) ** (1.0 / (p - 1.0)) * rng.uniform(1.0, 3.0) ** (1.0 / (p - 1.0)) * 1.000001
        u = s * u
        rows.append((0.5 * grid.grad_sq(u), grid.lp_power(u, p + 1.0), grid.grad_sq(u)))
    return rows


def check_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Hypotheses and constants for the initial data; no time stepping."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep0, crit = initial_report(cfg)
    summary = {"kind": "check", "E0": rep0.totalE, "scriptE0": rep0.scriptE,
               "potential0": rep0.potential, "Nprime0": rep0.Nprime,
               "k0": cfg.kernel.k0,
               "out_of_assumption": cfg.params.out_of_assumption,
               "assumption_violations": "; ".join(cfg.params.assumption_violations()) or "none"}
    if crit is not None:
        samples = cfg.raw.get("check", {}).get("samples", 200)
        rows = corollary_samples(cfg.grid, cfg.params.p, crit.gamma, samples, cfg.seed)
        bad = sum(1 for e, _, _ in rows if not e > crit.y0)
        summary |= {"corollary_samples": samples, "corollary_counterexamples": bad,
                    "mountain_pass_J0": potential_functional_J(cfg.grid, cfg.history.u0(),
                                                               cfg.params.p)}
        if bad or not crit.corollary_consistent:
            log.error("corollary implication violated")
    summary |= _criteria_kv(crit) | {"seed": cfg.seed, "config_sha256": cfg.digest(),
                                     **_versions()}
    write_kv(out / "summary.txt", summary)
    write_kv(out / "criteria.txt", _criteria_kv(crit))
    if crit is not None and (summary["corollary_counterexamples"] or not crit.corollary_consistent):
        raise InvariantViolation("corollary implication violated")
    return summary


def _sweep_worker(args) -> dict:
    raw, A, seed = args
    cfg = _build(raw)
    hist = cfg.history.scaled(A)
    t0 = time.perf_counter()
    rep0, crit = initial_report(cfg, hist)
    outcome = _single_run(cfg, hist)
    row = {"A": A, "status": outcome.status, "t_final": outcome.t_final,
           "T_obs": outcome.T_obs, "steps": outcome.steps,
           "E0": rep0.totalE, "scriptE0": rep0.scriptE, "seed": seed}
    if crit is not None:
        for key in ("E0_negative", "E0_below_M", "scriptE0_above_y0", "corollary_condition",
                    "p_gt_m", "p_gt_sqrtk0"):
            row[key] = getattr(crit, key)
        row["regime"] = crit.regime
    row["wall_clock_s"] = time.perf_counter() - t0
    return row


def _map(fn, jobs, threads):
    if threads == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def sweep_amplitude(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Outcome per amplitude factor on a uniform grid, then optional bisection.

    The configured initial amplitude is multiplied by each sweep value ``A``.
    Per-row seeds are spawned from the master seed so a row can be rerun on
    its own.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sw = cfg.raw["sweep"]
    amps = np.linspace(sw["A_min"], sw["A_max"], sw["count"])
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(cfg.seed).spawn(len(amps))]
    raw = cfg.raw
    rows = _map(_sweep_worker, [(raw, float(A), s) for A, s in zip(amps, seeds)], threads)
    summary = {"kind": "sweep", "rows": len(rows), "threads": threads}

    blown = [r["status"] == "blew_up" for r in rows]
    if any(blown):
        first = blown.index(True)
        summary["monotone_tail"] = all(blown[first:])
    if sw.get("bisect", False):
        if blown[0] == blown[-1]:
            raise ConfigError("bisection needs endpoints with different outcomes")
        # first adjacent pair where the outcome changes
        i = next(j for j in range(len(rows) - 1) if blown[j] != blown[j + 1])
        lo, hi = amps[i], amps[i + 1]
        lo_blows = blown[i]
        res = sw.get("resolution", 1e-3)
        ss = np.random.SeedSequence(cfg.seed + 1)
        while hi - lo > res:
            mid = 0.5 * (lo + hi)
            row = _sweep_worker((raw, float(mid), int(ss.spawn(1)[0].generate_state(1)[0])))
            row["bisection"] = True
            rows.append(row)
            if (row["status"] == "blew_up") == lo_blows:
                lo = mid
            else:
                hi = mid
        summary |= {"threshold_low": lo, "threshold_high": hi, "threshold": 0.5 * (lo + hi)}
    rows.sort(key=lambda r: r["A"])
    for r in rows:
        r.setdefault("bisection", False)
    write_table(out / "sweep.csv", rows)
    summary |= {"seed": cfg.seed, "config_sha256": cfg.digest(), **_versions()}
    write_kv(out / "summary.txt", summary)
    return summary


def analytic_prony_response(kernel: KernelSpec, t: float) -> np.ndarray:
    """Per-mode ``int_0^t mu_i(s) sin(t - s) ds`` for ``u = sin(t)`` and zero past."""
    a, tau = kernel.amplitudes, kernel.taus
    return a * (np.sin(t) - tau * np.cos(t) + tau * np.exp(-t / tau)) / (1.0 + tau**2)


def analytic_history_energy(kernel: KernelSpec, t: float, grad_sq_phi: float) -> float:
    """``int mu(s) ||grad(u(t) - u(t-s))||^2 ds`` for ``u = phi sin t``, zero past."""
    total = 0.0
    for a, tau in kernel.modes:
        mu = lambda s: a / tau * math.exp(-s / tau)
        body = quad(lambda s: mu(s) * (math.sin(t) - math.sin(t - s)) ** 2, 0.0, t,
                    epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        tail = a * math.exp(-t / tau) * math.sin(t) ** 2
        total += body + tail
    return total * grad_sq_phi


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def driven_memory_comparison(grid: Grid, kernel: KernelSpec, phi: np.ndarray, T: float,
                             dt: float, report_every: float = 0.5) -> list:
    """Feed ``u = phi sin t`` (zero past) to both memory variants and compare.

    Each row holds relative L2 differences of ``memory_force`` and of the
    history energy between the variants and against the closed forms.
    """
    zero = InitialHistory(np.zeros(grid.shape))
    pr, qu = PronyMemory(grid, kernel, zero), QuadratureMemory(grid, kernel, zero)
    gphi = grid.grad_sq(phi)
    nsteps = int(round(T / dt))
    every = max(1, int(round(report_every / dt)))
    rows = []
    for k in range(1, nsteps + 1):
        t = k * dt
        u = phi * math.sin(t)
        g = grid.grad_sq(u)
        pr.advance(u, g, dt)
        qu.advance(u, g, dt)
        if k % every and k != nsteps:
            continue
        z_exact = analytic_prony_response(kernel, t).sum() * phi
        f_exact = -grid.laplacian(z_exact)
        f_p, f_q = pr.force(u), qu.force(u)
        h_p, h_q = float(pr.mode_energies(u).sum()), float(qu.mode_energies(u).sum())
        h_exact = analytic_history_energy(kernel, t, gphi)
        rows.append({
            "t": t,
            "force_prony_vs_quadrature": _rel(f_p, f_q),
            "force_prony_vs_exact": _rel(f_p, f_exact),
            "force_quadrature_vs_exact": _rel(f_q, f_exact),
            "energy_prony_vs_quadrature": _rel(h_p, h_q),
            "energy_prony_vs_exact": _rel(h_p, h_exact),
            "energy_quadrature_vs_exact": _rel(h_q, h_exact),
            "history_energy_prony": h_p,
            "history_energy_quadrature": h_q,
            "history_energy_exact": h_exact,
        })
    return rows


def compare_memory(cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = cfg.raw.get("compare", {})
    T, dt, tol = opts.get("T", 5.0), opts.get("dt", 1e-3), opts.get("tol", 1e-3)
    if cfg.kernel.n_modes == 0:
        raise ConfigError("compare-memory needs at least one kernel mode")
    rows = driven_memory_comparison(cfg.grid, cfg.kernel, cfg.history.shape, T, dt,
                                    opts.get("report_every", 0.5))
    write_table(out / "compare.csv", rows)
    keys = [k for k in rows[0] if k.endswith(("_vs_quadrature", "_vs_exact"))]
    worst = {f"max_{k}": max(r[k] for r in rows) for k in keys}
    summary = {"kind": "compare-memory", "T": T, "dt": dt, "tol": tol, **worst,
               "max_relative_discrepancy": max(worst.values()),
               "within_tol": max(worst.values()) <= tol,
               "seed": cfg.seed, "config_sha256": cfg.digest(), **_versions()}
    write_kv(out / "summary.txt", summary)
    if not summary["within_tol"]:
        raise InvariantViolation(f"memory modes disagree by {summary['max_relative_discrepancy']:.3e}")
    return summary


def _perturb_worker(args):
    raw, factor, times = args
    cfg = _build(raw)
    outcome = _single_run(cfg, cfg.history.scaled(factor), snapshot_times=times)
    return outcome.status, outcome.snapshots


def perturb(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Sensitivity to ``u0 -> (1 + delta) u0`` over ``[0, horizon]``.

    The difference for each ``delta`` is ``sup_t ||grad(u_delta - u)|| /
    sup_t ||grad u||`` over a fixed set of snapshot times.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = cfg.raw["perturb"]
    deltas = [float(d) for d in opts["deltas"]]
    times = list(np.linspace(0.0, cfg.horizon, opts.get("samples", 101)))
    jobs = [(cfg.raw, 1.0, times)] + [(cfg.raw, 1.0 + d, times) for d in deltas]
    results = _map(_perturb_worker, jobs, threads)
    base_status, base = results[0]
    if base_status != "completed":
        raise ConfigError("perturb needs a base run that reaches the horizon without blow-up")
    g = cfg.grid
    base_scale = max(g.h1_seminorm(base[t]) for t in base) or 1.0
    rows = []
    for d, (status, snaps) in zip(deltas, results[1:]):
        shared = [t for t in base if t in snaps]
        diff = max(g.h1_seminorm(snaps[t] - base[t]) for t in shared) / base_scale
        rows.append({"delta": d, "status": status, "difference": diff,
                     "samples": len(shared)})
    for prev, row in zip(rows, rows[1:]):
        row["ratio_to_previous"] = prev["difference"] / row["difference"] if row["difference"] else math.inf
    if rows:
        rows[0]["ratio_to_previous"] = None
    write_table(out / "perturb.csv", rows)
    nz = sorted((r for r in rows if r["delta"] != 0.0), key=lambda r: abs(r["delta"]))
    monotone = all(a["difference"] <= b["difference"] for a, b in zip(nz, nz[1:]))
    summary = {"kind": "perturb", "horizon": cfg.horizon, "deltas": len(deltas),
               "monotone_in_delta": monotone, "seed": cfg.seed,
               "config_sha256": cfg.digest(), **_versions()}
    write_kv(out / "summary.txt", summary)
    return summary


def execute(cfg: ExperimentConfig, out_dir, threads: int = 1, kind: str | None = None) -> dict:
    kind = kind or cfg.kind
    if kind == "run":
        return run_experiment(cfg, out_dir)
    if kind == "check":
        return check_experiment(cfg, out_dir)
    if kind == "sweep":
        if "sweep" not in cfg.raw:
            raise ConfigError("kind=sweep needs a 'sweep' section")
        return sweep_amplitude(cfg, out_dir, threads)
    if kind == "compare-memory":
        return compare_memory(cfg, out_dir)
    if kind == "perturb":
        if "perturb" not in cfg.raw:
            raise ConfigError("kind=perturb needs a 'perturb' section")
        return perturb(cfg, out_dir, threads)
    raise ConfigError(f"unknown experiment kind {kind!r}")


@dataclass(frozen=True)
class PositiveEnergyData:
    amplitude: float
    kernel: KernelSpec
    E0: float
    M: float
    gamma: float


def find_positive_energy_data(grid: Grid, p: float, m: float, shape=None,
                              kernel_amplitudes=(1.0, 0.5, 0.25, 0.1), tau: float = 1.0,
                              target: float = 0.5) -> PositiveEnergyData:
    """Search amplitude ``A`` and kernel amplitude for ``0 <= E(0) < M``.

    Uses ``u0 = A * shape`` (first eigenmode by default), ``v0 = 0`` and a
    constant history, so ``E(0) = A^2 ||grad phi||^2 / 2 - A^(p+1) ||phi||^(p+1) / (p+1)``.
    ``A`` is taken on the decreasing branch of that curve, where
    ``||u0||^(p+1) > ||grad u0||^2`` and hence ``scriptE(0) > y0``, with
    ``E(0) = target * M``. Kernel amplitudes are tried in order until
    ``p > max(m, sqrt(k0))`` holds and the branch reaches ``target * M``.
    """
    from scipy.optimize import brentq

    phi = grid.sine_mode() if shape is None else np.asarray(shape, dtype=float)
    gs, lp = grid.grad_sq(phi), grid.lp_power(phi, p + 1.0)
    gamma = criteria.sobolev_gamma(grid, p)
    energy = lambda A: 0.5 * A * A * gs - A ** (p + 1.0) * lp / (p + 1.0)
    a_peak = (gs / lp) ** (1.0 / (p - 1.0))
    a_zero = ((p + 1.0) * gs / (2.0 * lp)) ** (1.0 / (p - 1.0))
    for amp in kernel_amplitudes:
        kernel = KernelSpec(((amp, tau),))
        if not (p > m and p > math.sqrt(kernel.k0)):
            continue
        Mv = criteria.M(gamma, p, kernel.k0)
        goal = target * Mv
        if energy(a_peak) <= goal:
            continue
        A = brentq(lambda A: energy(A) - goal, a_peak, a_zero, xtol=1e-14, rtol=1e-14)
        return PositiveEnergyData(A, kernel, energy(A), Mv, gamma)
    raise ValueError("no kernel amplitude admits 0 <= E(0) < M on this grid")
