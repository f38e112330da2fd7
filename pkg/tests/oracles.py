"""Independent reference computations used to freeze expected values in tests.

Nothing here calls into the package solvers; the reference family formulas
are written out again from scratch.
"""

import numpy as np


def gs_demand(rho, w, rho_m=1.0):
    sigma = rho_m / 2
    r = np.minimum(rho, sigma)
    return w * r * (1 - r / rho_m)


def gs_supply(w_bar, v_plus, rho_m=1.0):
    """Supply on the ``w_bar`` curve at the density carrying velocity ``v_plus``."""
    rd = np.maximum(0.0, rho_m * (1 - v_plus / w_bar))
    r = np.maximum(rd, rho_m / 2)
    return w_bar * r * (1 - r / rho_m)


def walk_oracle(states, p, A, step=1e-4, rho_m=1.0):
    """Walk the adaptive priority ray q_i = min(p_i h, d_i) in steps of ``step``.

    Stops at the last grid point before some outgoing road receives more
    than its supply at the current mixed attribute. Returns incoming fluxes.
    """
    p = np.asarray(p, float)
    A = np.asarray(A, float)
    n = len(p)
    rho = np.array([s[0] for s in states[:n]])
    w = np.array([s[1] for s in states[:n]])
    d = gs_demand(rho, w, rho_m)
    v_out = np.array([s[1] * (1 - s[0] / rho_m) for s in states[n:]])
    active = (p > 0) & (d > 0)
    if not active.any():
        return np.zeros(n)
    h_top = max(d[active] / p[active])
    hs = np.arange(0.0, h_top + 2 * step, step)
    q = np.minimum(p[:, None] * hs[None, :], d[:, None])
    bad = np.zeros(hs.shape, bool)
    for j in range(A.shape[0]):
        flow = A[j] @ q
        with np.errstate(invalid="ignore", divide="ignore"):
            wmix = (A[j] * w) @ q / flow
        s = np.where(flow > 0, gs_supply(np.where(flow > 0, wmix, 1.0), v_out[j], rho_m), np.inf)
        bad |= flow > s
    hit = np.flatnonzero(bad)
    if hit.size == 0:
        return d.copy()
    k = max(hit[0] - 1, 0)
    return q[:, k]
