"""Numba-jitted closed-loop simulation kernel.

One fused loop advances the plant and evaluates the selected feedback law
at every grid instant.  All matrix exponentials are folded into one-step
transition matrices outside the kernel; inside, every prediction is a
sequence of exact zero-order-hold steps, so the kernel only does small
dense mat-vecs.

Controller kinds: 0 open loop, 1 average predictor, 2 averaging of
per-mode predictors, 3 exact oracle.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, nogil=True)
def _roll_family(z, tmp, Ad, Bd, m, u_all, base, j0, j1):
    # z <- one ZOH step per cell in mode m, inputs u_all[base + j0 .. base + j1)
    q = z.shape[0]
    for j in range(j0, j1):
        u = u_all[base + j]
        for r in range(q):
            acc = Bd[m, r] * u
            for c in range(q):
                acc += Ad[m, r, c] * z[c]
            tmp[r] = acc
        for r in range(q):
            z[r] = tmp[r]


@njit(cache=True, nogil=True)
def _roll_single(z, tmp, Ad, Bd, u_all, base, j0, j1):
    q = z.shape[0]
    for j in range(j0, j1):
        u = u_all[base + j]
        for r in range(q):
            acc = Bd[r] * u
            for c in range(q):
                acc += Ad[r, c] * z[c]
            tmp[r] = acc
        for r in range(q):
            z[r] = tmp[r]


@njit(cache=True, nogil=True)
def _roll_exact(z, tmp, x, Ad, Bd, mode_steps, u_all, s, n_hist, n_pre):
    # z <- state rolled from x at step s to step s + n_hist with true modes
    q = x.shape[0]
    for r in range(q):
        z[r] = x[r]
    for f in range(s, s + n_hist):
        m = mode_steps[f]
        u = u_all[f - n_hist + n_pre]
        for r in range(q):
            acc = Bd[m, r] * u
            for c in range(q):
                acc += Ad[m, r, c] * z[c]
            tmp[r] = acc
        for r in range(q):
            z[r] = tmp[r]


@njit(cache=True, nogil=True)
def simulate_loop(n_steps, n_hist, n_ctrl, n_pre,
                  Ad, Bd, Ad_bar, Bd_bar, K_bar, K_list,
                  mode_steps, tau_steps, x0, u_pre, kind, record_w):
    q = x0.shape[0]
    p = Bd.shape[0]
    states = np.zeros((n_steps + 1, q))
    inputs = np.zeros(n_steps + 1)
    ws = np.zeros(n_steps + 1)
    u_all = np.zeros(n_pre + n_steps + 1)
    for i in range(n_pre):
        u_all[i] = u_pre[i]

    x = np.empty(q)
    z = np.empty(q)
    zi = np.empty(q)
    tmp = np.empty(q)
    for r in range(q):
        x[r] = x0[r]
        states[0, r] = x0[r]

    for s in range(n_steps + 1):
        m = mode_steps[s]
        base = s - n_ctrl + n_pre
        u_t = 0.0

        if kind == 1:
            ntau = tau_steps[s]
            for r in range(q):
                z[r] = x[r]
            _roll_family(z, tmp, Ad, Bd, m, u_all, base, 0, ntau)
            _roll_single(z, tmp, Ad_bar, Bd_bar, u_all, base, ntau, n_ctrl)
            for r in range(q):
                u_t += K_bar[r] * z[r]
        elif kind == 2:
            ntau = tau_steps[s]
            for r in range(q):
                z[r] = x[r]
            _roll_family(z, tmp, Ad, Bd, m, u_all, base, 0, ntau)
            acc_u = 0.0
            for i in range(p):
                for r in range(q):
                    zi[r] = z[r]
                _roll_family(zi, tmp, Ad, Bd, i, u_all, base, ntau, n_ctrl)
                for r in range(q):
                    acc_u += K_list[i, r] * zi[r]
            u_t = acc_u / p
        elif kind == 3:
            _roll_exact(z, tmp, x, Ad, Bd, mode_steps, u_all, s, n_hist, n_pre)
            g = mode_steps[s + n_hist]
            for r in range(q):
                u_t += K_list[g, r] * z[r]

        inputs[s] = u_t
        u_all[s + n_pre] = u_t

        if record_w:
            if kind == 3:
                ws[s] = 0.0
            else:
                _roll_exact(z, tmp, x, Ad, Bd, mode_steps, u_all, s, n_hist, n_pre)
                g = mode_steps[s + n_hist]
                w = u_t
                for r in range(q):
                    w -= K_list[g, r] * z[r]
                ws[s] = w

        if s == n_steps:
            break

        u_del = u_all[s - n_hist + n_pre]
        for r in range(q):
            acc = Bd[m, r] * u_del
            for c in range(q):
                acc += Ad[m, r, c] * x[c]
            tmp[r] = acc
        for r in range(q):
            x[r] = tmp[r]
            states[s + 1, r] = x[r]

    return states, inputs, ws
