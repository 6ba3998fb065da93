"""Compiled grid kernels for summing beam fields.

Every beam is described by a stack of polynomials in the offset y = Y - x:

    0 phase phi          1 envelope W = sum_j eps^j a_j
    2 phase rate Psi_t   3 envelope rate W_t (without the cutoff term)
    4, 5 d phi / d y_i   6, 7 d W / d y_i

The kernel loops over grid rows in parallel. Inside a row the beams are
visited in a fixed order, so each node's sum is independent of the number
of threads. One-dimensional problems reuse the 2D kernel with a single
column.
"""
import math

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old; prefer layers that load without warnings
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True, fastmath=False)
def cutoff_scalar(r, eta):
    """R(r) and R'(r) for the smooth radial cutoff (see beam.cutoff_profile)."""
    if r <= eta:
        return 1.0, 0.0
    if r >= 2.0 * eta:
        return 0.0, 0.0
    u = (2.0 * eta - r) / eta
    w = 1.0 / (1.0 - u) - 1.0 / u
    if w >= 0:
        sig = 1.0 / (1.0 + math.exp(-w))
    else:
        e = math.exp(w)
        sig = e / (1.0 + e)
    s1 = sig * (1.0 - sig)
    if s1 == 0.0:
        return sig, 0.0
    w1 = 1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u))
    return sig, -s1 * w1 / eta


@njit(parallel=True, cache=True, fastmath=False)
def accumulate(ax0, ax1, centers, radius, polys, plen, exps, weights, eta,
               inv_eps, xdot, want_t, want_g, out_u, out_t, out_g0, out_g1):
    n_rows = ax0.shape[0]
    n_cols = ax1.shape[0]
    n_beams = centers.shape[0]
    ncoef = exps.shape[0]
    maxdeg = 0
    for m in range(ncoef):
        maxdeg = max(maxdeg, exps[m, 0] + exps[m, 1])
    h1 = ax1[1] - ax1[0] if n_cols > 1 else 1.0
    finite_eta = eta < np.inf
    for i0 in prange(n_rows):
        mon = np.empty(ncoef)
        pw0 = np.empty(maxdeg + 1)
        pw1 = np.empty(maxdeg + 1)
        vals = np.empty(8, dtype=np.complex128)
        y0 = ax0[i0]
        for b in range(n_beams):
            d0 = y0 - centers[b, 0]
            rad = radius[b]
            if abs(d0) > rad:
                continue
            if n_cols > 1:
                half = math.sqrt(max(rad * rad - d0 * d0, 0.0))
                j_lo = int(math.ceil((centers[b, 1] - half - ax1[0]) / h1))
                j_hi = int(math.floor((centers[b, 1] + half - ax1[0]) / h1))
                j_lo = max(j_lo, 0)
                j_hi = min(j_hi, n_cols - 1)
            else:
                j_lo = 0
                j_hi = 0
            w = weights[b]
            for i1 in range(j_lo, j_hi + 1):
                d1 = ax1[i1] - centers[b, 1]
                r = math.sqrt(d0 * d0 + d1 * d1)
                if r > rad:
                    continue
                rho = 1.0
                drho = 0.0
                if finite_eta:
                    rho, drho = cutoff_scalar(r, eta)
                    if rho == 0.0:
                        continue
                pw0[0] = 1.0
                pw1[0] = 1.0
                for d in range(1, maxdeg + 1):
                    pw0[d] = pw0[d - 1] * d0
                    pw1[d] = pw1[d - 1] * d1
                for m in range(ncoef):
                    mon[m] = pw0[exps[m, 0]] * pw1[exps[m, 1]]
                n_poly = 2
                if want_t:
                    n_poly = 4
                if want_g:
                    n_poly = 8
                for q in range(n_poly):
                    if not want_t and (q == 2 or q == 3):
                        vals[q] = 0.0
                        continue
                    acc = 0.0 + 0.0j
                    for m in range(plen[q]):
                        acc += polys[b, q, m] * mon[m]
                    vals[q] = acc
                phi = vals[0]
                env = vals[1]
                mag = math.exp(-phi.imag * inv_eps)
                ang = phi.real * inv_eps
                carrier = complex(mag * math.cos(ang), mag * math.sin(ang)) * w
                out_u[i0, i1] += carrier * (rho * env)
                if want_t or want_g:
                    if r > 0.0:
                        gr0 = drho * d0 / r
                        gr1 = drho * d1 / r
                    else:
                        gr0 = 0.0
                        gr1 = 0.0
                if want_t:
                    rho_t = -(xdot[b, 0] * gr0 + xdot[b, 1] * gr1)
                    term = rho_t * env + rho * vals[3] + rho * env * 1j * inv_eps * vals[2]
                    out_t[i0, i1] += carrier * term
                if want_g:
                    term0 = gr0 * env + rho * vals[6] + rho * env * 1j * inv_eps * vals[4]
                    term1 = gr1 * env + rho * vals[7] + rho * env * 1j * inv_eps * vals[5]
                    out_g0[i0, i1] += carrier * term0
                    out_g1[i0, i1] += carrier * term1


def set_threads(n):
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
