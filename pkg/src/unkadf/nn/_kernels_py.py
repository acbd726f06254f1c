"""Pure-numpy LSTM recurrence kernels.

Same signatures and in-place contracts as the compiled ``_kernels`` module;
used when the extension is not built.

Gate blocks along the last axis of ``Z``/``G`` are ordered input, forget,
output, candidate.
"""
import numpy as np


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_forward(Z, U, H, C):
    """Run the recurrence from a zero state.

    ``Z`` (B, T, 4m) holds ``X W^T + b`` on entry and the activated gates on
    exit. ``H`` and ``C`` (B, T, m) receive hidden and cell states.
    """
    B, T, m4 = Z.shape
    m = m4 // 4
    h = np.zeros((B, m))
    c = np.zeros((B, m))
    for t in range(T):
        z = Z[:, t, :]
        if t > 0:
            z += h @ U.T
        z[:, :3 * m] = _sigmoid(z[:, :3 * m])
        z[:, 3 * m:] = np.tanh(z[:, 3 * m:])
        i = z[:, :m]
        f = z[:, m:2 * m]
        o = z[:, 2 * m:3 * m]
        g = z[:, 3 * m:]
        c = f * c + i * g
        h = o * np.tanh(c)
        C[:, t, :] = c
        H[:, t, :] = h


def lstm_backward(G, C, U, dH, dC, dZ):
    """Backpropagation through time.

    ``dH``/``dC`` (B, T, m) are the loss gradients arriving at each step's
    hidden and cell outputs from outside the recurrence. ``dZ`` (B, T, 4m)
    receives gradients w.r.t. the gate pre-activations.
    """
    B, T, m4 = G.shape
    m = m4 // 4
    dh_next = np.zeros((B, m))
    dc_next = np.zeros((B, m))
    for t in range(T - 1, -1, -1):
        g_t = G[:, t, :]
        i = g_t[:, :m]
        f = g_t[:, m:2 * m]
        o = g_t[:, 2 * m:3 * m]
        g = g_t[:, 3 * m:]
        tc = np.tanh(C[:, t, :])
        dh = dH[:, t, :] + dh_next
        dc = dc_next + dC[:, t, :] + dh * o * (1.0 - tc * tc)
        c_prev = C[:, t - 1, :] if t > 0 else 0.0
        dz = dZ[:, t, :]
        dz[:, :m] = dc * g * i * (1.0 - i)
        dz[:, m:2 * m] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * m:3 * m] = dh * tc * o * (1.0 - o)
        dz[:, 3 * m:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ U
