"""Pure-numpy fallback for the closed-loop simulation kernel.

Same contract as the numba kernel, but each prediction is evaluated in one
shot instead of cell by cell: powers of the one-step transition matrices
are tabulated once, so a rollout of n cells reduces to a table lookup plus
a dot product with the reversed input window.
"""

import numpy as np

NAME = "numpy"


class _PowerTables:
    """T[m, k] = Ad[m]^k and G[m, k] = Ad[m]^k @ Bd[m] for k = 0..n."""

    def __init__(self, Ad, Bd, n):
        p, q = Bd.shape
        self.T = np.empty((p, n + 1, q, q))
        self.G = np.empty((p, n + 1, q))
        for m in range(p):
            self.T[m, 0] = np.eye(q)
            self.G[m, 0] = Bd[m]
            for k in range(n):
                self.T[m, k + 1] = Ad[m] @ self.T[m, k]
                self.G[m, k + 1] = Ad[m] @ self.G[m, k]

    def roll(self, m, z, u):
        """Rollout of len(u) ZOH cells in mode m starting from z."""
        n = u.shape[0]
        if n == 0:
            return z
        return self.T[m, n] @ z + u[::-1] @ self.G[m, :n]

    def roll_all(self, z, u):
        """Rollout in every mode at once; returns shape (p, q)."""
        n = u.shape[0]
        if n == 0:
            return np.broadcast_to(z, (self.T.shape[0], z.shape[0]))
        return self.T[:, n] @ z + np.einsum("k,mkq->mq", u[::-1], self.G[:, :n])


def _segments(mode_steps, lo, hi):
    """Constant-mode runs of mode_steps over [lo, hi)."""
    out = []
    a = lo
    while a < hi:
        m = mode_steps[a]
        b = a + 1
        while b < hi and mode_steps[b] == m:
            b += 1
        out.append((a, b, int(m)))
        a = b
    return out


def simulate_loop(n_steps, n_hist, n_ctrl, n_pre,
                  Ad, Bd, Ad_bar, Bd_bar, K_bar, K_list,
                  mode_steps, tau_steps, x0, u_pre, kind, record_w):
    q = x0.shape[0]
    p = Bd.shape[0]
    states = np.zeros((n_steps + 1, q))
    inputs = np.zeros(n_steps + 1)
    ws = np.zeros(n_steps + 1)
    u_all = np.zeros(n_pre + n_steps + 1)
    u_all[:n_pre] = u_pre

    n_table = max(n_ctrl, n_hist)
    plant_tab = _PowerTables(Ad, Bd, n_table)
    if kind == 1:
        bar_tab = _PowerTables(Ad_bar[None, :, :], Bd_bar[None, :], n_ctrl)

    need_exact = kind == 3 or record_w

    def exact_roll(s, x):
        z = x
        for a, b, m in _segments(mode_steps, s, s + n_hist):
            z = plant_tab.roll(m, z, u_all[a - n_hist + n_pre:b - n_hist + n_pre])
        return z

    x = x0.copy()
    states[0] = x
    for s in range(n_steps + 1):
        m = int(mode_steps[s])
        base = s - n_ctrl + n_pre
        window = u_all[base:base + n_ctrl]

        if kind == 1:
            ntau = int(tau_steps[s])
            z = plant_tab.roll(m, x, window[:ntau])
            z = bar_tab.roll(0, z, window[ntau:])
            u_t = float(K_bar @ z)
        elif kind == 2:
            ntau = int(tau_steps[s])
            z = plant_tab.roll(m, x, window[:ntau])
            zs = plant_tab.roll_all(z, window[ntau:])
            u_t = float(np.sum(K_list * zs)) / p
        elif kind == 3:
            z = exact_roll(s, x)
            u_t = float(K_list[int(mode_steps[s + n_hist])] @ z)
        else:
            u_t = 0.0

        inputs[s] = u_t
        u_all[s + n_pre] = u_t

        if record_w:
            if kind == 3:
                ws[s] = 0.0
            else:
                zp = exact_roll(s, x)
                ws[s] = u_t - float(K_list[int(mode_steps[s + n_hist])] @ zp)

        if s == n_steps:
            break

        u_del = u_all[s - n_hist + n_pre]
        x = Ad[m] @ x + Bd[m] * u_del
        states[s + 1] = x

    return states, inputs, ws
