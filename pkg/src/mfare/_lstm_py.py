"""NumPy implementation of the LSTM recurrences (fallback for ``_lstm_kernel``)."""

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def lstm_forward(xw, w_rec, reverse):
    """Run the recurrence given input projections ``xw`` (n x 4h, bias included).

    Returns hidden states, cell states and activated gates (i, f, g, o), each
    indexed by sentence position rather than processing step.
    """
    n, h4 = xw.shape
    hd = h4 // 4
    h = np.zeros((n, hd))
    c = np.zeros((n, hd))
    gates = np.empty((n, h4))
    h_prev = np.zeros(hd)
    c_prev = np.zeros(hd)
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = xw[t] + h_prev @ w_rec
        i = sigmoid(z[:hd])
        f = sigmoid(z[hd:2 * hd])
        g = np.tanh(z[2 * hd:3 * hd])
        o = sigmoid(z[3 * hd:])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t, :hd] = i
        gates[t, hd:2 * hd] = f
        gates[t, 2 * hd:3 * hd] = g
        gates[t, 3 * hd:] = o
        c[t] = c_prev
        h[t] = h_prev
    return h, c, gates


def lstm_backward(dh_seq, gates, c, w_rec, reverse):
    """Back-propagate through time; returns d(loss)/d(pre-activation gates)."""
    n, h4 = gates.shape
    hd = h4 // 4
    dz = np.empty((n, h4))
    dh_next = np.zeros(hd)
    dc_next = np.zeros(hd)
    order = range(n) if reverse else range(n - 1, -1, -1)
    for t in order:
        i = gates[t, :hd]
        f = gates[t, hd:2 * hd]
        g = gates[t, 2 * hd:3 * hd]
        o = gates[t, 3 * hd:]
        prev = t + 1 if reverse else t - 1
        c_prev = c[prev] if 0 <= prev < n else np.zeros(hd)
        tc = np.tanh(c[t])
        dh = dh_seq[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[t, :hd] = dc * g * i * (1.0 - i)
        dz[t, hd:2 * hd] = dc * c_prev * f * (1.0 - f)
        dz[t, 2 * hd:3 * hd] = dc * i * (1.0 - g * g)
        dz[t, 3 * hd:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = w_rec @ dz[t]
    return dz
