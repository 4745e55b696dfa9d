"""Pure numpy implementations of the hot kernels.

Signatures and results match the compiled ``_ckernels`` module; the compiled
path is preferred when it imports.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_gates_forward(gx, gh, h_prev):
    """Gate nonlinearities of a GRU cell.

    ``gx`` and ``gh`` are the input and recurrent pre-activations laid out as
    ``[reset | update | candidate]`` along the last axis.
    Returns ``(h_new, r, z, n)``.
    """
    H = h_prev.shape[1]
    r = _sigmoid(gx[:, :H] + gh[:, :H])
    z = _sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h_prev
    return h_new, r, z, n


def gru_gates_backward(dh_new, r, z, n, gh, h_prev):
    """Returns ``(d_gx, d_gh, d_h_prev)`` for :func:`gru_gates_forward`."""
    H = h_prev.shape[1]
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h_prev - n)
    dh_prev = dh_new * z
    dn_pre = dn * (1.0 - n * n)
    dr = dn_pre * gh[:, 2 * H:]
    dr_pre = dr * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)
    d_gx = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    d_gh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
    return d_gx, d_gh, dh_prev


def render_portal(out, base, phase, agent, portals, context, context_cells,
                  room, room_pixel, colors):
    """Paint a batch of Portal Choice frames into ``out`` (B, R, C, 3).

    ``colors`` rows: agent, portal, green id, red id, context pixel.
    """
    B = out.shape[0]
    out[:] = base[phase]
    idx = np.arange(B)
    first = phase == 0
    if first.any():
        b1 = idx[first]
        for j in range(portals.shape[1]):
            out[b1, portals[b1, j, 0], portals[b1, j, 1]] = colors[1]
        bb, cc = np.nonzero(context[b1])
        out[b1[bb], context_cells[cc, 0], context_cells[cc, 1]] = colors[4]
    second = ~first
    if second.any():
        b2 = idx[second]
        out[b2, room_pixel[0], room_pixel[1]] = colors[2 + room[b2]]
    out[idx, agent[:, 0], agent[:, 1]] = colors[0]
    return out
