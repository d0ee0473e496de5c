"""Compiled inner loop for one data pass of SGD.

Arithmetic mirrors the reference single-step functions in ``trainer``:
``w_j <- w_j + eta * ((y * v_j * g_j) * x)`` with ``g_j`` the activity
indicator (or leaky derivative).
"""
import numba
import numpy as np

VANILLA = 0
NOISY = 1
LEAKY = 2


@numba.njit(cache=True, nogil=True)
def sgd_pass(W, X, y, v, order, eps, eta, mode, alpha, zero_run, stop_after,
             max_updates, record, omega_mat, phi_out, psi_out, picked_out, w_max_sq):
    """Run SGD over ``order`` in place on ``W``.

    Stops early once ``zero_run`` reaches ``stop_after`` consecutive zero
    updates or ``max_updates`` non-zero updates have been made. Returns
    ``(iterations, updates, zero_run, w_max_sq)``; the first ``updates`` slots of ``picked_out`` (and of ``phi_out`` / ``psi_out`` when
    ``record``) are filled.
    """
    k, d = W.shape
    z = np.empty(k)
    g = np.empty(k)
    updates = 0
    it = 0
    for t in range(order.shape[0]):
        if zero_run >= stop_after or updates >= max_updates:
            break
        it += 1
        i = order[t]
        yi = y[i]
        out = 0.0
        for j in range(k):
            s = 0.0
            for l in range(d):
                s += W[j, l] * X[i, l]
            z[j] = s
            if s >= 0.0:
                out += v[j] * s
            elif mode == LEAKY:
                out += v[j] * (alpha * s)
        if not (1.0 - yi * out > 0.0):
            zero_run += 1
            continue
        fired = False
        for j in range(k):
            if mode == NOISY:
                e = eps[t, j] if yi * v[j] >= 0.0 else 0.0
                g[j] = 1.0 if z[j] + e >= 0.0 else 0.0
            elif mode == LEAKY:
                g[j] = 1.0 if z[j] >= 0.0 else alpha
            else:
                g[j] = 1.0 if z[j] >= 0.0 else 0.0
            if g[j] != 0.0:
                fired = True
        if not fired:
            zero_run += 1
            continue
        changed = False
        for j in range(k):
            if g[j] != 0.0:
                c = yi * v[j] * g[j]
                nrm = 0.0
                for l in range(d):
                    old = W[j, l]
                    new = old + eta * (c * X[i, l])
                    if new != old:
                        W[j, l] = new
                        changed = True
                    nrm += W[j, l] * W[j, l]
                if nrm > w_max_sq:
                    w_max_sq = nrm
        if not changed:
            zero_run += 1
            continue
        picked_out[updates] = i
        if record:
            phi = 0.0
            psi = 0.0
            for j in range(k):
                for l in range(d):
                    phi += W[j, l] * omega_mat[j, l]
                    psi += W[j, l] * W[j, l]
            phi_out[updates] = phi
            psi_out[updates] = psi
        updates += 1
        zero_run = 0
    return it, updates, zero_run, w_max_sq
