"""Hot inner loops, each in two flavours: a numba ``@njit`` kernel and a
pure-numpy fallback with identical semantics.

The active backend is picked once at import time from ``VISCOWAVE_BACKEND``
(``numba`` or ``numpy``). Unset means numba when it imports, numpy otherwise.
Both variants stay reachable through :data:`BACKENDS` so tests and the
benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


# --------------------------------------------------------------------------
# numpy fallback
# --------------------------------------------------------------------------

def _laplacian_np(f, inv_h2):
    out = np.zeros_like(f)
    for axis in range(f.ndim):
        pad = [(0, 0)] * f.ndim
        pad[axis] = (1, 1)
        g = np.pad(f, pad)
        lo = [slice(None)] * f.ndim
        mid = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[axis] = slice(0, -2)
        mid[axis] = slice(1, -1)
        hi[axis] = slice(2, None)
        out += (g[tuple(lo)] - 2.0 * g[tuple(mid)] + g[tuple(hi)]) * inv_h2[axis]
    return out


def _damping_solve_np(r, c, m):
    # v + c|v|^{m-1} v = r, solved for |v| and re-signed (the map is odd).
    r = np.asarray(r, dtype=np.float64)
    if c == 0.0:
        return r.copy()
    if m == 1.0:
        return r / (1.0 + c)
    ar = np.abs(r)
    lo = np.zeros_like(ar)
    hi = ar.copy()
    # Starting above the root of a convex increasing map: Newton descends
    # monotonically; the bracket only guards against round-off.
    x = np.minimum(ar, (ar / c) ** (1.0 / m))
    for _ in range(200):
        f = x + c * x**m - ar
        above = f > 0.0
        hi = np.where(above, x, hi)
        lo = np.where(above, lo, x)
        fp = 1.0 + c * m * x ** (m - 1.0)
        xn = x - f / fp
        bad = (xn < lo) | (xn > hi) | ~np.isfinite(xn)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        done = np.abs(xn - x) <= 1e-13 * np.maximum(xn, 1e-300)
        x = xn
        if done.all():
            break
    return np.copysign(x, r)


def _prony_update_np(z, u_avg, decay, gain):
    # z[i] <- decay[i] * z[i] + gain[i] * u_avg for every mode i
    shape = (-1,) + (1,) * u_avg.ndim
    return decay.reshape(shape) * z + gain.reshape(shape) * u_avg[None, ...]


def _abs_power_sum_np(f, q):
    return float(np.sum(np.abs(f) ** q))


def _grad_dot_np(f, g, inv_h2):
    # sum over all faces of forward differences, zero ghosts, axis-weighted
    total = 0.0
    for axis in range(f.ndim):
        pad = [(0, 0)] * f.ndim
        pad[axis] = (1, 1)
        df = np.diff(np.pad(f, pad), axis=axis)
        dg = df if g is f else np.diff(np.pad(g, pad), axis=axis)
        total += inv_h2[axis] * float(np.vdot(df, dg))
    return total


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

if HAS_NUMBA:
    _jit = numba.njit(cache=True, fastmath=False)

    @_jit
    def _lap1(f, c0):
        n = f.shape[0]
        out = np.empty_like(f)
        for i in range(n):
            left = f[i - 1] if i > 0 else 0.0
            right = f[i + 1] if i < n - 1 else 0.0
            out[i] = (left - 2.0 * f[i] + right) * c0
        return out

    @_jit
    def _lap2(f, c0, c1):
        n0, n1 = f.shape
        out = np.empty_like(f)
        for i in range(n0):
            for j in range(n1):
                fc = f[i, j]
                xm = f[i - 1, j] if i > 0 else 0.0
                xp = f[i + 1, j] if i < n0 - 1 else 0.0
                ym = f[i, j - 1] if j > 0 else 0.0
                yp = f[i, j + 1] if j < n1 - 1 else 0.0
                out[i, j] = (xm - 2.0 * fc + xp) * c0 + (ym - 2.0 * fc + yp) * c1
        return out

    @_jit
    def _lap3(f, c0, c1, c2):
        n0, n1, n2 = f.shape
        out = np.empty_like(f)
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    fc = f[i, j, k]
                    xm = f[i - 1, j, k] if i > 0 else 0.0
                    xp = f[i + 1, j, k] if i < n0 - 1 else 0.0
                    ym = f[i, j - 1, k] if j > 0 else 0.0
                    yp = f[i, j + 1, k] if j < n1 - 1 else 0.0
                    zm = f[i, j, k - 1] if k > 0 else 0.0
                    zp = f[i, j, k + 1] if k < n2 - 1 else 0.0
                    out[i, j, k] = ((xm - 2.0 * fc + xp) * c0
                                    + (ym - 2.0 * fc + yp) * c1
                                    + (zm - 2.0 * fc + zp) * c2)
        return out

    @_jit
    def _powi(x, m):
        # generic pow is the bottleneck; the common exponents get products
        if m == 1.0:
            return x
        if m == 2.0:
            return x * x
        if m == 3.0:
            return x * x * x
        return x**m

    @_jit
    def _damping_scalar(r, c, m):
        if r == 0.0:
            return 0.0
        ar = abs(r)
        lo = 0.0
        hi = ar
        x = min(ar, (ar / c) ** (1.0 / m))
        for _ in range(200):
            xm1 = _powi(x, m - 1.0)
            f = x + c * xm1 * x - ar
            if f > 0.0:
                hi = x
            else:
                lo = x
            xn = x - f / (1.0 + c * m * xm1)
            if not (xn >= lo and xn <= hi):
                xn = 0.5 * (lo + hi)
            if abs(xn - x) <= 1e-13 * max(xn, 1e-300):
                x = xn
                break
            x = xn
        return x if r > 0.0 else -x

    @_jit
    def _damping_flat(r, c, m):
        out = np.empty_like(r)
        for i in range(r.shape[0]):
            out[i] = _damping_scalar(r[i], c, m)
        return out

    @_jit
    def _prony_flat(z, u_avg, decay, gain):
        nm, n = z.shape
        out = np.empty_like(z)
        for i in range(nm):
            d = decay[i]
            g = gain[i]
            for j in range(n):
                out[i, j] = d * z[i, j] + g * u_avg[j]
        return out

    @_jit
    def _abs_power_flat(f, q):
        s = 0.0
        if q == 2.0:
            for i in range(f.shape[0]):
                s += f[i] * f[i]
        elif q == 4.0:
            for i in range(f.shape[0]):
                t = f[i] * f[i]
                s += t * t
        else:
            for i in range(f.shape[0]):
                s += abs(f[i]) ** q
        return s

    @_jit
    def _gd1(f, g, c0):
        n = f.shape[0]
        s = f[0] * g[0] + f[n - 1] * g[n - 1]
        for i in range(n - 1):
            s += (f[i + 1] - f[i]) * (g[i + 1] - g[i])
        return s * c0

    @_jit
    def _gd2(f, g, c0, c1):
        n0, n1 = f.shape
        sx = 0.0
        sy = 0.0
        for i in range(n0 + 1):
            for j in range(n1):
                a = (f[i, j] if i < n0 else 0.0) - (f[i - 1, j] if i > 0 else 0.0)
                b = (g[i, j] if i < n0 else 0.0) - (g[i - 1, j] if i > 0 else 0.0)
                sx += a * b
        for i in range(n0):
            for j in range(n1 + 1):
                a = (f[i, j] if j < n1 else 0.0) - (f[i, j - 1] if j > 0 else 0.0)
                b = (g[i, j] if j < n1 else 0.0) - (g[i, j - 1] if j > 0 else 0.0)
                sy += a * b
        return sx * c0 + sy * c1

    def _grad_dot_nb(f, g, inv_h2):
        f = np.ascontiguousarray(f, dtype=np.float64)
        g = f if g is f else np.ascontiguousarray(g, dtype=np.float64)
        if f.ndim == 1:
            return float(_gd1(f, g, inv_h2[0]))
        if f.ndim == 2:
            return float(_gd2(f, g, inv_h2[0], inv_h2[1]))
        return _grad_dot_np(f, g, inv_h2)

    def _laplacian_nb(f, inv_h2):
        f = np.ascontiguousarray(f, dtype=np.float64)
        if f.ndim == 1:
            return _lap1(f, inv_h2[0])
        if f.ndim == 2:
            return _lap2(f, inv_h2[0], inv_h2[1])
        return _lap3(f, inv_h2[0], inv_h2[1], inv_h2[2])

    def _damping_solve_nb(r, c, m):
        r = np.ascontiguousarray(r, dtype=np.float64)
        if c == 0.0:
            return r.copy()
        if m == 1.0:
            return r / (1.0 + c)
        return _damping_flat(r.ravel(), float(c), float(m)).reshape(r.shape)

    def _prony_update_nb(z, u_avg, decay, gain):
        nm = z.shape[0]
        flat = _prony_flat(np.ascontiguousarray(z).reshape(nm, -1),
                           np.ascontiguousarray(u_avg).ravel(), decay, gain)
        return flat.reshape(z.shape)

    def _abs_power_sum_nb(f, q):
        return float(_abs_power_flat(np.ascontiguousarray(f).ravel(), float(q)))


BACKENDS = {
    "numpy": {
        "laplacian": _laplacian_np,
        "damping_solve": _damping_solve_np,
        "prony_update": _prony_update_np,
        "abs_power_sum": _abs_power_sum_np,
        "grad_dot": _grad_dot_np,
    },
}
if HAS_NUMBA:
    BACKENDS["numba"] = {
        "laplacian": _laplacian_nb,
        "damping_solve": _damping_solve_nb,
        "prony_update": _prony_update_nb,
        "abs_power_sum": _abs_power_sum_nb,
        "grad_dot": _grad_dot_nb,
    }


def _select_backend():
    want = os.environ.get("VISCOWAVE_BACKEND", "").strip().lower()
    if want in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if want not in ("numba", "numpy"):
        raise ValueError(f"VISCOWAVE_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAS_NUMBA:
        raise ImportError("VISCOWAVE_BACKEND=numba but numba is not importable")
    return want


BACKEND = _select_backend()
laplacian = BACKENDS[BACKEND]["laplacian"]
damping_solve = BACKENDS[BACKEND]["damping_solve"]
prony_update = BACKENDS[BACKEND]["prony_update"]
abs_power_sum = BACKENDS[BACKEND]["abs_power_sum"]
grad_dot = BACKENDS[BACKEND]["grad_dot"]
