"""Inner coordinate-descent sweeps, compiled with numba.

Both kernels update `zeta` in place in ascending coordinate order, reading
already-updated coordinates within a sweep, and stop once the largest
coordinate change of a sweep is at most `tol` or `max_sweeps` is reached.
They return the number of sweeps performed.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _shrink(u, t):
    if u > t:
        return u - t
    if u < -t:
        return u + t
    return 0.0


@njit(cache=True, nogil=True)
def master_sweeps(zeta, zsum, gsum, mu, c, thresh, K, rho, max_sweeps, tol):
    """Consensus-master update.

    zeta_j <- Shrink(gsum_j/rho + zsum_j - mu c_j/rho - c_j sum_{m!=j} c_m zeta_m,
                     thresh_j) / (c_j^2 + K)
    """
    d = zeta.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        s = 0.0
        for m in range(d):
            s += c[m] * zeta[m]
        delta = 0.0
        for j in range(d):
            old = zeta[j]
            rest = s - c[j] * old
            u = gsum[j] / rho + zsum[j] - mu * c[j] / rho - c[j] * rest
            new = _shrink(u, thresh[j]) / (c[j] * c[j] + K)
            if new != old:
                zeta[j] = new
                s = rest + c[j] * new
                ch = abs(new - old)
                if ch > delta:
                    delta = ch
        if delta <= tol:
            break
    return sweeps


@njit(cache=True, nogil=True)
def chain_sweeps(zeta, G, b, c, mu, lin, n_neighbors, lam_w, rho, max_sweeps, tol):
    """Head/tail machine update on a chain.

    With A_j = b_j - sum_{m!=j} G_jm zeta_m - mu c_j - rho c_j sum_{m!=j} c_m zeta_m,

        zeta_j <- Shrink(A_j + lin_j, lam_w_j) / (rho (n_neighbors + c_j^2) + G_jj)

    where `lin` carries the neighbor and edge-dual terms.
    """
    d = zeta.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        s = 0.0
        for m in range(d):
            s += c[m] * zeta[m]
        delta = 0.0
        for j in range(d):
            old = zeta[j]
            gz = 0.0
            for m in range(d):
                if m != j:
                    gz += G[j, m] * zeta[m]
            rest = s - c[j] * old
            a = b[j] - gz - mu * c[j] - rho * c[j] * rest
            new = _shrink(a + lin[j], lam_w[j]) / (rho * (n_neighbors + c[j] * c[j]) + G[j, j])
            if new != old:
                zeta[j] = new
                s = rest + c[j] * new
                ch = abs(new - old)
                if ch > delta:
                    delta = ch
        if delta <= tol:
            break
    return sweeps


def warmup():
    """Trigger compilation so that the first timed call is not a compile."""
    z = np.zeros(2)
    master_sweeps(z, np.zeros(2), np.zeros(2), 0.0, np.ones(2), np.zeros(2), 1, 1.0, 1, 1e-8)
    chain_sweeps(z, np.eye(2), np.zeros(2), np.ones(2), 0.0, np.zeros(2), 1, np.zeros(2), 1.0, 1, 1e-8)
