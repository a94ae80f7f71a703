"""Compiled inner loop of the block coordinate descent."""

import numpy as np
from numba import njit


@njit(cache=True)
def bcd_sweep(theta, R, G, half, L, rows, active_only):
    """One cyclic pass over the blocks of each response in ``rows``.

    ``theta`` and ``R`` are ``(p, p*L)`` (response by whitened coefficient),
    ``R = C - theta @ G``. Updated in place.
    """
    m = theta.shape[1]
    nblk = m // L
    z = np.empty(L)
    for j in rows:
        for k in range(nblk):
            s = k * L
            nz = False
            for l in range(L):
                if theta[j, s + l] != 0.0:
                    nz = True
                    break
            if active_only and not nz:
                continue
            norm2 = 0.0
            for l in range(L):
                z[l] = R[j, s + l] + theta[j, s + l]
                norm2 += z[l] * z[l]
            norm = np.sqrt(norm2)
            # ties at 2 ||z|| == lam go to zero
            scale = 1.0 - half / norm if norm > half else 0.0
            if scale == 0.0 and not nz:
                continue
            for l in range(L):
                new = z[l] * scale
                d = new - theta[j, s + l]
                if d != 0.0:
                    theta[j, s + l] = new
                    for c in range(m):
                        R[j, c] -= d * G[s + l, c]


@njit(cache=True)
def bcd_sweep_resid(theta, resid, PhiT, half, L, rows, active_only):
    """Residual-form pass for orthonormal blocks (``Phi_k' Phi_k / n = I``).

    ``resid`` is ``(p, n)`` with ``resid[j] = Y_j - Phi theta_j``; ``PhiT`` is
    the whitened design transposed, ``(p*L, n)``.
    """
    m, n = PhiT.shape
    nblk = m // L
    inv_n = 1.0 / n
    z = np.empty(L)
    for j in rows:
        for k in range(nblk):
            s = k * L
            nz = False
            for l in range(L):
                if theta[j, s + l] != 0.0:
                    nz = True
                    break
            if active_only and not nz:
                continue
            norm2 = 0.0
            for l in range(L):
                acc = 0.0
                for t in range(n):
                    acc += PhiT[s + l, t] * resid[j, t]
                z[l] = theta[j, s + l] + acc * inv_n
                norm2 += z[l] * z[l]
            norm = np.sqrt(norm2)
            scale = 1.0 - half / norm if norm > half else 0.0
            if scale == 0.0 and not nz:
                continue
            for l in range(L):
                new = z[l] * scale
                d = new - theta[j, s + l]
                if d != 0.0:
                    theta[j, s + l] = new
                    for t in range(n):
                        resid[j, t] -= d * PhiT[s + l, t]
