"""Scenario-path kernels: a numba-compiled version and a pure-numpy fallback.

The backend is chosen by the ``PARPA_BACKEND`` environment variable
(``"numba"`` or ``"numpy"``; default numba when importable). Both kernels
consume the same pre-drawn standard normals and apply operations in the same
order, so a given seed yields the same panel to within floating-point
library differences; within one backend results are bit-identical regardless
of thread count because every scenario writes only its own slice.

State per scenario and subsystem: the ``P`` most recent normalized values
(most recent first) and, for annual-variant models, a 12-slot circular
buffer of raw values for the trailing-annual average.

Failure signalling: ``status[w]`` stays -1 while scenario ``w`` is healthy
and records ``k * S + s`` at its first nonnegative shift (conditional mean
<= 0), at which point that scenario stops evolving.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]

    prange = range

_ENV_VAR = "PARPA_BACKEND"


def active_backend(override: str | None = None) -> str:
    """Resolve the kernel backend: explicit override > env var > numba if available."""
    choice = override or os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "":
        choice = "numba" if HAS_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}, expected 'numba' or 'numpy'")
    if choice == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    return choice


def _sim_numpy(normals, month0, mu, sigma, sig_eps, phi, orders, psi, has_annual,
               a_mean, a_std, b_chol, init_lags, init_ann):
    """Vectorized over scenarios; sequential over steps and subsystems."""
    n_omega, horizon, n_sub = normals.shape
    p_width = init_lags.shape[1]
    out = np.empty((n_omega, horizon, n_sub))
    lags = np.broadcast_to(init_lags, (n_omega, n_sub, p_width)).copy()
    ann = np.broadcast_to(init_ann, (n_omega, n_sub, 12)).copy()
    ptr = 0
    for k in range(horizon):
        m = month0[k]
        for s in range(n_sub):
            eta = np.zeros(n_omega)
            for j in range(n_sub):
                eta += b_chol[m, s, j] * normals[:, k, j]
            c = np.zeros(n_omega)
            for i in range(orders[s, m]):
                c += phi[s, m, i] * lags[:, s, i]
            if has_annual[s]:
                abar = np.zeros(n_omega)
                for j in range(12):
                    abar += ann[:, s, j]
                abar /= 12.0
                c += psi[s, m] * ((abar - a_mean[s, m]) / a_std[s, m])
            lam = -mu[s, m] / sigma[s, m] - c
            viol = lam >= 0.0
            if viol.any():
                w = int(np.flatnonzero(viol)[0])
                status = np.full(n_omega, -1, dtype=np.int64)
                status[w] = k * n_sub + s
                return out, status
            se2 = sig_eps[s, m] * sig_eps[s, m]
            theta = 1.0 + se2 / (lam * lam)
            sig_xi = np.sqrt(np.log(theta))
            mu_xi = 0.5 * np.log((lam * lam) / theta)
            eps = np.exp(sig_xi * eta + mu_xi) + lam
            x = c + eps
            out[:, k, s] = mu[s, m] + sigma[s, m] * x
            lags[:, s, 1:] = lags[:, s, :-1]
            lags[:, s, 0] = x
            if has_annual[s]:
                ann[:, s, ptr] = out[:, k, s]
        ptr = (ptr + 1) % 12
    return out, np.full(n_omega, -1, dtype=np.int64)


@njit(parallel=True, cache=True)
def _sim_numba(normals, month0, mu, sigma, sig_eps, phi, orders, psi, has_annual,
               a_mean, a_std, b_chol, init_lags, init_ann):  # pragma: no cover - numba
    n_omega, horizon, n_sub = normals.shape
    p_width = init_lags.shape[1]
    out = np.empty((n_omega, horizon, n_sub))
    status = np.full(n_omega, -1, dtype=np.int64)
    for w in prange(n_omega):
        lags = init_lags.copy()
        ann = init_ann.copy()
        ptr = 0
        failed = False
        for k in range(horizon):
            m = month0[k]
            for s in range(n_sub):
                eta = 0.0
                for j in range(n_sub):
                    eta += b_chol[m, s, j] * normals[w, k, j]
                c = 0.0
                for i in range(orders[s, m]):
                    c += phi[s, m, i] * lags[s, i]
                if has_annual[s]:
                    abar = 0.0
                    for j in range(12):
                        abar += ann[s, j]
                    abar /= 12.0
                    c += psi[s, m] * ((abar - a_mean[s, m]) / a_std[s, m])
                lam = -mu[s, m] / sigma[s, m] - c
                if lam >= 0.0:
                    status[w] = k * n_sub + s
                    failed = True
                    break
                se2 = sig_eps[s, m] * sig_eps[s, m]
                theta = 1.0 + se2 / (lam * lam)
                sig_xi = math.sqrt(math.log(theta))
                mu_xi = 0.5 * math.log((lam * lam) / theta)
                eps = math.exp(sig_xi * eta + mu_xi) + lam
                x = c + eps
                y = mu[s, m] + sigma[s, m] * x
                out[w, k, s] = y
                for i in range(p_width - 1, 0, -1):
                    lags[s, i] = lags[s, i - 1]
                lags[s, 0] = x
                if has_annual[s]:
                    ann[s, ptr] = y
            if failed:
                break
            ptr = (ptr + 1) % 12
    return out, status


def run_paths(normals, month0, mu, sigma, sig_eps, phi, orders, psi, has_annual,
              a_mean, a_std, b_chol, init_lags, init_ann, backend: str | None = None):
    """Dispatch to the selected kernel. Returns ``(paths, status)``."""
    kernel = _sim_numba if active_backend(backend) == "numba" else _sim_numpy
    return kernel(
        np.ascontiguousarray(normals),
        np.ascontiguousarray(month0, dtype=np.int64),
        np.ascontiguousarray(mu),
        np.ascontiguousarray(sigma),
        np.ascontiguousarray(sig_eps),
        np.ascontiguousarray(phi),
        np.ascontiguousarray(orders, dtype=np.int64),
        np.ascontiguousarray(psi),
        np.ascontiguousarray(has_annual, dtype=np.uint8),
        np.ascontiguousarray(a_mean),
        np.ascontiguousarray(a_std),
        np.ascontiguousarray(b_chol),
        np.ascontiguousarray(init_lags),
        np.ascontiguousarray(init_ann),
    )
