"""Box domains with homogeneous Dirichlet data.

Fields are plain ``numpy`` arrays of shape ``grid.shape`` holding values at
interior nodes (row-major). Node ``i`` along an axis of length ``L`` with
``n`` interior nodes sits at ``(i + 1) * h`` where ``h = L / (n + 1)``.

The Laplacian is the usual central stencil with zero ghost values. The
gradient is a forward difference over every cell face, boundary faces
included. With that pairing ``<lap f, g> = -<grad f, grad g>`` holds to
round-off, which is what keeps the discrete energy balance free of any
spatial defect.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels


class NonFiniteFieldError(FloatingPointError):
    """A field contains NaN or Inf."""


@dataclass(frozen=True)
class Grid:
    extent: tuple
    n: tuple

    def __post_init__(self):
        extent = tuple(float(L) for L in np.atleast_1d(self.extent))
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        if len(extent) != len(n) or not 1 <= len(n) <= 3:
            raise ValueError("grid needs 1 to 3 axes with matching extent and n")
        if any(k < 3 for k in n):
            raise ValueError("each axis needs at least 3 interior nodes")
        if any(not (L > 0.0) for L in extent):
            raise ValueError("extents must be positive")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "n", n)

    @classmethod
    def interval(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((length,), (n,))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @cached_property
    def h(self) -> tuple:
        return tuple(L / (k + 1) for L, k in zip(self.extent, self.n))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @cached_property
    def weight(self) -> float:
        """Quadrature weight per node (cell volume)."""
        return float(np.prod(self.h))

    @cached_property
    def _inv_h2(self) -> np.ndarray:
        return np.array([1.0 / h**2 for h in self.h])

    @property
    def measure(self) -> float:
        """Discrete measure of the domain, ``weight * number_of_nodes``."""
        return self.weight * float(np.prod(self.n))

    def axes(self) -> list:
        return [(np.arange(k) + 1) * h for k, h in zip(self.n, self.h)]

    def coordinates(self) -> tuple:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def sine_mode(self, k=None) -> np.ndarray:
        """Product of ``sin(k_d pi x_d / L_d)``; first Dirichlet eigenmode by default."""
        k = (1,) * self.dim if k is None else tuple(np.atleast_1d(k))
        out = np.ones(self.shape)
        for x, kd, L in zip(self.coordinates(), k, self.extent):
            out = out * np.sin(kd * np.pi * x / L)
        return out

    def laplacian_eigenvalue(self, k=None) -> float:
        """Eigenvalue of ``-laplacian`` for :meth:`sine_mode`, in closed form."""
        k = (1,) * self.dim if k is None else tuple(np.atleast_1d(k))
        return float(sum(4.0 / h**2 * np.sin(kd * np.pi * h / (2.0 * L)) ** 2
                         for kd, h, L in zip(k, self.h, self.extent)))

    # -- operators --------------------------------------------------------

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        if not np.isfinite(f).all():
            raise NonFiniteFieldError("field contains non-finite values")
        return f

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return _kernels.laplacian(self.check(f), self._inv_h2)

    def gradient(self, f: np.ndarray) -> list:
        """Forward differences on all faces; one array per axis with ``n_d + 1`` entries along it."""
        f = np.asarray(f, dtype=float)
        out = []
        for axis, h in enumerate(self.h):
            pad = [(0, 0)] * self.dim
            pad[axis] = (1, 1)
            out.append(np.diff(np.pad(f, pad), axis=axis) / h)
        return out

    # -- norms and inner products ----------------------------------------

    def lp_power(self, f: np.ndarray, q: float) -> float:
        """``||f||_q ** q``."""
        if q < 1:
            raise ValueError("norm exponent must be >= 1")
        return self.weight * _kernels.abs_power_sum(np.asarray(f, dtype=float), q)

    def norm_lp(self, f: np.ndarray, q: float) -> float:
        return self.lp_power(f, q) ** (1.0 / q)

    def norm_l2(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner_l2(f, f)))

    def inner_l2(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.weight * float(np.vdot(f, g))

    def inner_grad(self, f: np.ndarray, g: np.ndarray) -> float:
        f = np.asarray(f, dtype=float)
        g = f if g is f else np.asarray(g, dtype=float)
        return self.weight * _kernels.grad_dot(f, g, self._inv_h2)

    def grad_sq(self, f: np.ndarray) -> float:
        """``||grad f||_2 ** 2``."""
        f = np.asarray(f, dtype=float)
        return self.weight * _kernels.grad_dot(f, f, self._inv_h2)

    def h1_seminorm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.grad_sq(f)))

    # -- export -----------------------------------------------------------

    def export_csv(self, f: np.ndarray, path) -> None:
        """Write ``index, x[, y[, z]], value`` rows for every interior node."""
        names = ["x", "y", "z"][: self.dim]
        coords = [c.ravel() for c in self.coordinates()]
        values = np.asarray(f, dtype=float).ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", *names, "value"])
            for i in range(values.size):
                w.writerow([i, *(repr(float(c[i])) for c in coords), repr(float(values[i]))])
