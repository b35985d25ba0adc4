"""Hot iteration kernels: banded channel application and environment step.

All channels here are one-band ladder channels (see `kraus.bands`), so one
cycle costs O(dim^2) instead of the O(dim^3) of dense Kraus application. Long
runs (10^3 to 10^5 cycles) spend essentially all their time in these loops,
which therefore exist twice: an njit-compiled version and a pure-numpy
fallback with identical semantics. The numba path is used unless it is
unavailable or the environment variable FOCKSTAB_NO_NUMBA is set to a
non-empty value; `active_backend()` reports the selection, and
benchmarks/bench_kernels.py compares the two.

Index conventions (dim = D, 0-based levels):
    g[n] = <n+1|M_g|n>, g[D-1] = 0 (truncated top row)
    e[n] = <n|M_e|n>
    m[n] = <n-1|M_m|n>, m[0] = 0
    environment: out[i,j] = rho[i,j] (1 - gm(i+j)/2 - gp(i+j+2)/2)
                 + gm sqrt((i+1)(j+1)) rho[i+1,j+1] + gp sqrt(ij) rho[i-1,j-1]
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "FOCKSTAB_NO_NUMBA"


def _numba_requested() -> bool:
    return not os.environ.get(_ENV_FLAG, "")


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def channel_step_numpy(g: np.ndarray, e: np.ndarray, m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """rho -> M_g rho M_g^dag + M_e rho M_e^dag + M_m rho M_m^dag (banded)."""
    out = (e[:, None] * rho) * e.conj()[None, :]
    out[1:, 1:] += (g[:-1, None] * rho[:-1, :-1]) * g.conj()[None, :-1]
    out[:-1, :-1] += (m[1:, None] * rho[1:, 1:]) * m.conj()[None, 1:]
    return out


def thermal_step_numpy(rho: np.ndarray, gm: float, gp: float) -> np.ndarray:
    """First-order photon loss/gain step (no sanitization)."""
    dim = rho.shape[0]
    n = np.arange(dim, dtype=np.float64)
    out = rho * (1.0 - 0.5 * gm * (n[:, None] + n[None, :]) - 0.5 * gp * (n[:, None] + n[None, :] + 2.0))
    root = np.sqrt(n + 1.0)
    out[:-1, :-1] += gm * np.outer(root[:-1], root[:-1]) * rho[1:, 1:]
    out[1:, 1:] += gp * np.outer(root[:-1], root[:-1]) * rho[:-1, :-1]
    return out


def _cycle_numpy(g, e, m, rho, gm, gp, p_at):
    mixed = channel_step_numpy(g, e, m, rho)
    if p_at != 1.0:
        mixed = (1.0 - p_at) * rho + p_at * mixed
    if gm != 0.0 or gp != 0.0:
        mixed = thermal_step_numpy(mixed, gm, gp)
    return mixed


def evolve_numpy(g, e, m, rho0, gm, gp, p_at, n_steps):
    dim = rho0.shape[0]
    diag = np.empty((n_steps + 1, dim), dtype=np.float64)
    trace = np.empty(n_steps + 1, dtype=np.float64)
    rho = rho0.astype(np.complex128, copy=True)
    diag[0] = np.diag(rho).real
    trace[0] = diag[0].sum()
    for k in range(1, n_steps + 1):
        rho = _cycle_numpy(g, e, m, rho, gm, gp, p_at)
        diag[k] = np.diag(rho).real
        trace[k] = diag[k].sum()
    return rho, diag, trace


def evolve_to_fixed_point_numpy(g, e, m, rho0, gm, gp, p_at, tol, max_steps):
    rho = rho0.astype(np.complex128, copy=True)
    rho /= np.trace(rho).real
    delta = math.inf
    for k in range(1, max_steps + 1):
        nxt = _cycle_numpy(g, e, m, rho, gm, gp, p_at)
        nxt /= np.trace(nxt).real
        delta = float(np.abs(nxt - rho).max())
        rho = nxt
        if delta < tol:
            return rho, k, delta
    return rho, max_steps, delta


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_HAVE_NUMBA = False
if _numba_requested():
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised only without numba
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _cycle_jit(g, e, m, rho, gm, gp, p_at, out):  # pragma: no cover - jitted
        dim = rho.shape[0]
        for i in range(dim):
            for j in range(dim):
                acc = e[i] * rho[i, j] * np.conj(e[j])
                if i >= 1 and j >= 1:
                    acc += g[i - 1] * rho[i - 1, j - 1] * np.conj(g[j - 1])
                if i + 1 < dim and j + 1 < dim:
                    acc += m[i + 1] * rho[i + 1, j + 1] * np.conj(m[j + 1])
                out[i, j] = (1.0 - p_at) * rho[i, j] + p_at * acc
        if gm != 0.0 or gp != 0.0:
            for i in range(dim):
                for j in range(dim):
                    v = out[i, j] * (1.0 - 0.5 * gm * (i + j) - 0.5 * gp * (i + j + 2))
                    if i + 1 < dim and j + 1 < dim:
                        v += gm * math.sqrt((i + 1.0) * (j + 1.0)) * out[i + 1, j + 1]
                    if i >= 1 and j >= 1:
                        v += gp * math.sqrt(float(i) * float(j)) * out[i - 1, j - 1]
                    rho[i, j] = v
        else:
            for i in range(dim):
                for j in range(dim):
                    rho[i, j] = out[i, j]

    @njit(cache=True)
    def _evolve_jit(g, e, m, rho0, gm, gp, p_at, n_steps):  # pragma: no cover - jitted
        dim = rho0.shape[0]
        diag = np.empty((n_steps + 1, dim), dtype=np.float64)
        trace = np.empty(n_steps + 1, dtype=np.float64)
        rho = rho0.copy()
        scratch = np.empty_like(rho)
        t = 0.0
        for n in range(dim):
            diag[0, n] = rho[n, n].real
            t += rho[n, n].real
        trace[0] = t
        for k in range(1, n_steps + 1):
            _cycle_jit(g, e, m, rho, gm, gp, p_at, scratch)
            t = 0.0
            for n in range(dim):
                diag[k, n] = rho[n, n].real
                t += rho[n, n].real
            trace[k] = t
        return rho, diag, trace

    @njit(cache=True)
    def _fixed_point_jit(g, e, m, rho0, gm, gp, p_at, tol, max_steps):  # pragma: no cover - jitted
        dim = rho0.shape[0]
        rho = rho0.copy()
        t = 0.0
        for n in range(dim):
            t += rho[n, n].real
        for i in range(dim):
            for j in range(dim):
                rho[i, j] /= t
        scratch = np.empty_like(rho)
        prev = np.empty_like(rho)
        delta = 1e300
        steps = max_steps
        for k in range(1, max_steps + 1):
            for i in range(dim):
                for j in range(dim):
                    prev[i, j] = rho[i, j]
            _cycle_jit(g, e, m, rho, gm, gp, p_at, scratch)
            t = 0.0
            for n in range(dim):
                t += rho[n, n].real
            delta = 0.0
            for i in range(dim):
                for j in range(dim):
                    rho[i, j] /= t
                    dv = abs(rho[i, j] - prev[i, j])
                    if dv > delta:
                        delta = dv
            if delta < tol:
                steps = k
                break
        return rho, steps, delta


# ---------------------------------------------------------------------------
# dispatching API
# ---------------------------------------------------------------------------

def active_backend() -> str:
    """Either "numba" or "numpy", fixed at import time."""
    return "numba" if _HAVE_NUMBA else "numpy"


def channel_step(g: np.ndarray, e: np.ndarray, m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Single banded channel application on the active backend."""
    if _HAVE_NUMBA:
        out = np.empty_like(rho, dtype=np.complex128)
        work = rho.astype(np.complex128, copy=True)
        _cycle_jit(g, e, m, work, 0.0, 0.0, 1.0, out)
        return work
    return channel_step_numpy(g, e, m, np.asarray(rho, dtype=np.complex128))


def thermal_step(rho: np.ndarray, gm: float, gp: float) -> np.ndarray:
    """Single environment step (no sanitization) on the active backend."""
    if _HAVE_NUMBA:
        work = rho.astype(np.complex128, copy=True)
        out = np.empty_like(work)
        zero = np.zeros(rho.shape[0], dtype=np.complex128)
        one = np.ones(rho.shape[0], dtype=np.complex128)
        # identity channel (e = 1, g = m = 0) followed by the thermal update
        _cycle_jit(zero, one, zero, work, gm, gp, 1.0, out)
        return work
    return thermal_step_numpy(np.asarray(rho, dtype=np.complex128), gm, gp)


def evolve(
    g: np.ndarray,
    e: np.ndarray,
    m: np.ndarray,
    rho0: np.ndarray,
    gm: float,
    gp: float,
    p_at: float,
    n_steps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iterate n_steps cycles, recording the population diagonal and raw trace.

    No per-step renormalization: a decaying trace exposes exactly the
    population lost through the truncated top level.
    """
    args = (np.ascontiguousarray(g), np.ascontiguousarray(e), np.ascontiguousarray(m),
            np.ascontiguousarray(rho0, dtype=np.complex128), float(gm), float(gp),
            float(p_at), int(n_steps))
    if _HAVE_NUMBA:
        return _evolve_jit(*args)
    return evolve_numpy(*args)


def evolve_to_fixed_point(
    g: np.ndarray,
    e: np.ndarray,
    m: np.ndarray,
    rho0: np.ndarray,
    gm: float,
    gp: float,
    p_at: float,
    tol: float = 1e-10,
    max_steps: int = 1_000_000,
) -> tuple[np.ndarray, int, float]:
    """Iterate with per-step trace renormalization until the max-norm change
    of the state falls below tol; returns (state, steps, last change)."""
    args = (np.ascontiguousarray(g), np.ascontiguousarray(e), np.ascontiguousarray(m),
            np.ascontiguousarray(rho0, dtype=np.complex128), float(gm), float(gp),
            float(p_at), float(tol), int(max_steps))
    if _HAVE_NUMBA:
        return _fixed_point_jit(*args)
    return evolve_to_fixed_point_numpy(*args)
