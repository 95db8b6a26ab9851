"""Pure-numpy implementations of the SU(2) chain kernels.

Same contract as the compiled module: step ``i`` applies
``exp(-i v_i . sigma / 2)`` and steps are applied in array order.
"""

import numpy as np

_CHUNK = 1 << 16


def _step_matrices(vx, vy, vz):
    n = np.sqrt(vx * vx + vy * vy + vz * vz)
    co = np.cos(0.5 * n)
    with np.errstate(invalid="ignore", divide="ignore"):
        si = np.where(n > 1e-300, np.sin(0.5 * n) / n, 0.5)
    E = np.empty((vx.size, 2, 2), dtype=complex)
    E[:, 0, 0] = co - 1j * si * vz
    E[:, 1, 1] = co + 1j * si * vz
    E[:, 0, 1] = -1j * si * vx - si * vy
    E[:, 1, 0] = -1j * si * vx + si * vy
    return E


def _ordered_product(E):
    # pairwise tree reduction, later steps multiply from the left
    while E.shape[0] > 1:
        if E.shape[0] % 2:
            E = np.concatenate([E, np.eye(2, dtype=complex)[None]], axis=0)
        E = E[1::2] @ E[0::2]
    return E[0]


def _prefix_products(E):
    # Hillis-Steele scan: P[k] = E[k] ... E[0]
    P = E.copy()
    d = 1
    while d < P.shape[0]:
        P[d:] = P[d:] @ P[:-d].copy()
        d *= 2
    return P


def su2_chain(vx, vy, vz, U0=None):
    U = np.eye(2, dtype=complex) if U0 is None else np.array(U0, dtype=complex)
    for k in range(0, len(vx), _CHUNK):
        sl = slice(k, k + _CHUNK)
        U = _ordered_product(_step_matrices(vx[sl], vy[sl], vz[sl])) @ U
    return U


def su2_track_p2(vx, vy, vz, psi0, stride=1):
    psi = np.array(psi0, dtype=complex)
    acc = 0.0
    count = 0
    n = len(vx)
    chunk = max(stride, (_CHUNK // stride) * stride)
    for k in range(0, n, chunk):
        sl = slice(k, k + chunk)
        P = _prefix_products(_step_matrices(vx[sl], vy[sl], vz[sl]))
        states = P @ psi
        local = np.arange(k, min(k + chunk, n))
        pick = (local + 1) % stride == 0
        az = np.abs(states[pick, 0]) ** 2 - np.abs(states[pick, 1]) ** 2
        acc += float(np.sum(1.5 * az * az - 0.5))
        count += int(pick.sum())
        psi = states[-1]
    return psi, acc, count
