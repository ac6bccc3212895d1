"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The compiled path is used when numba imports cleanly; set the environment
variable NLTGCR_DISABLE_NUMBA=1 before import to force the numpy path.
Both implementations of every kernel stay importable so the benchmark in
benchmarks/kernel_bench.py can time them side by side.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("NLTGCR_DISABLE_NUMBA", "") not in ("", "0")

if not _DISABLE:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# Bratu: 5-point Laplacian plus exponential source on the unit square,
# zero Dirichlet boundary. u is the (n, n) interior grid, spacing h.
# ---------------------------------------------------------------------------

def bratu_residual_numpy(u: np.ndarray, lam: float, h: float) -> np.ndarray:
    out = -4.0 * u
    out[1:, :] += u[:-1, :]
    out[:-1, :] += u[1:, :]
    out[:, 1:] += u[:, :-1]
    out[:, :-1] += u[:, 1:]
    out /= h * h
    out += lam * np.exp(u)
    return out


def bratu_jv_numpy(u: np.ndarray, p: np.ndarray, lam: float, h: float) -> np.ndarray:
    out = -4.0 * p
    out[1:, :] += p[:-1, :]
    out[:-1, :] += p[1:, :]
    out[:, 1:] += p[:, :-1]
    out[:, :-1] += p[:, 1:]
    out /= h * h
    out += lam * np.exp(u) * p
    return out


# ---------------------------------------------------------------------------
# Lennard-Jones cluster in reduced units: E = sum_{i<j} 4 (r^-12 - r^-6).
# pos is (n_atoms, 3); the gradient is dE/dpos.
# ---------------------------------------------------------------------------

def lj_energy_numpy(pos: np.ndarray) -> float:
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(pos.shape[0], 1)
    inv6 = 1.0 / r2[iu] ** 3
    return float(np.sum(4.0 * (inv6 * inv6 - inv6)))


def lj_gradient_numpy(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, 1.0)
    inv2 = 1.0 / r2
    inv6 = inv2 * inv2 * inv2
    coef = (24.0 * inv6 - 48.0 * inv6 * inv6) * inv2
    np.fill_diagonal(coef, 0.0)
    return np.einsum("ij,ijk->ik", coef, diff)


def lj_min_pair_distance_numpy(pos: np.ndarray) -> float:
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(pos.shape[0], 1)
    return float(np.sqrt(r2[iu].min()))


if HAVE_NUMBA:

    @njit(cache=True)
    def bratu_residual_numba(u, lam, h):  # pragma: no cover - numba source
        n0, n1 = u.shape
        out = np.empty_like(u)
        ih2 = 1.0 / (h * h)
        for i in range(n0):
            for j in range(n1):
                s = -4.0 * u[i, j]
                if i > 0:
                    s += u[i - 1, j]
                if i < n0 - 1:
                    s += u[i + 1, j]
                if j > 0:
                    s += u[i, j - 1]
                if j < n1 - 1:
                    s += u[i, j + 1]
                out[i, j] = s * ih2 + lam * np.exp(u[i, j])
        return out

    @njit(cache=True)
    def bratu_jv_numba(u, p, lam, h):  # pragma: no cover - numba source
        n0, n1 = u.shape
        out = np.empty_like(p)
        ih2 = 1.0 / (h * h)
        for i in range(n0):
            for j in range(n1):
                s = -4.0 * p[i, j]
                if i > 0:
                    s += p[i - 1, j]
                if i < n0 - 1:
                    s += p[i + 1, j]
                if j > 0:
                    s += p[i, j - 1]
                if j < n1 - 1:
                    s += p[i, j + 1]
                out[i, j] = s * ih2 + lam * np.exp(u[i, j]) * p[i, j]
        return out

    @njit(cache=True)
    def lj_energy_numba(pos):  # pragma: no cover - numba source
        n = pos.shape[0]
        e = 0.0
        for i in range(n):
            for j in range(i):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                inv6 = 1.0 / (r2 * r2 * r2)
                e += 4.0 * (inv6 * inv6 - inv6)
        return e

    @njit(cache=True)
    def lj_gradient_numba(pos):  # pragma: no cover - numba source
        n = pos.shape[0]
        g = np.zeros_like(pos)
        for i in range(n):
            for j in range(i):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                inv2 = 1.0 / r2
                inv6 = inv2 * inv2 * inv2
                c = (24.0 * inv6 - 48.0 * inv6 * inv6) * inv2
                g[i, 0] += c * dx
                g[i, 1] += c * dy
                g[i, 2] += c * dz
                g[j, 0] -= c * dx
                g[j, 1] -= c * dy
                g[j, 2] -= c * dz
        return g

    @njit(cache=True)
    def lj_min_pair_distance_numba(pos):  # pragma: no cover - numba source
        n = pos.shape[0]
        best = np.inf
        for i in range(n):
            for j in range(i):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < best:
                    best = r2
        return np.sqrt(best)

    bratu_residual = bratu_residual_numba
    bratu_jv = bratu_jv_numba
    lj_energy = lj_energy_numba
    lj_gradient = lj_gradient_numba
    lj_min_pair_distance = lj_min_pair_distance_numba
else:
    bratu_residual = bratu_residual_numpy
    bratu_jv = bratu_jv_numpy
    lj_energy = lj_energy_numpy
    lj_gradient = lj_gradient_numpy
    lj_min_pair_distance = lj_min_pair_distance_numpy


def active_backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
