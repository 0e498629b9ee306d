"""Single-layer LSTM over one sequence, forward and backward by hand.

Weights are laid out as ``W: (n_in + n_hidden, 4 * n_hidden)`` with gate
blocks ordered input, forget, output, candidate.
"""

import numpy as np


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(X, W, b):
    """Run the cell over rows of ``X`` (L x n_in); returns (H, cache)."""
    L = X.shape[0]
    h = W.shape[1] // 4
    dt = W.dtype
    Hin = np.zeros((L, X.shape[1] + h), dtype=dt)
    gates = np.zeros((L, 4 * h), dtype=dt)
    C = np.zeros((L, h), dtype=dt)
    Ct = np.zeros((L, h), dtype=dt)
    H = np.zeros((L, h), dtype=dt)
    hprev = np.zeros(h, dtype=dt)
    cprev = np.zeros(h, dtype=dt)
    for t in range(L):
        Hin[t, :X.shape[1]] = X[t]
        Hin[t, X.shape[1]:] = hprev
        a = Hin[t] @ W + b
        gates[t, :3 * h] = sigmoid(a[:3 * h])
        gates[t, 3 * h:] = np.tanh(a[3 * h:])
        i, f, o, g = gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:]
        C[t] = i * g + f * cprev
        Ct[t] = np.tanh(C[t])
        H[t] = o * Ct[t]
        hprev, cprev = H[t], C[t]
    return H, (Hin, gates, C, Ct, W)


def lstm_backward(dH, cache):
    """Gradients (dX, dW, db) given the loss gradient w.r.t. every output row."""
    Hin, gates, C, Ct, W = cache
    L = Hin.shape[0]
    h = W.shape[1] // 4
    n_in = Hin.shape[1] - h
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[1], dtype=W.dtype)
    dX = np.zeros((L, n_in), dtype=W.dtype)
    dh_next = np.zeros(h, dtype=W.dtype)
    dc_next = np.zeros(h, dtype=W.dtype)
    for t in reversed(range(L)):
        i, f, o, g = gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:]
        dh = dH[t] + dh_next
        do = dh * Ct[t]
        dc = dh * o * (1.0 - Ct[t] ** 2) + dc_next
        cprev = C[t - 1] if t > 0 else np.zeros(h, dtype=W.dtype)
        di = dc * g
        df = dc * cprev
        dg = dc * i
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g ** 2)])
        dW += np.outer(Hin[t], da)
        db += da
        dHin = W @ da
        dX[t] = dHin[:n_in]
        dh_next = dHin[n_in:]
        dc_next = dc * f
    return dX, dW, db
