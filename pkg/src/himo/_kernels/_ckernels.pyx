# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contracts as ``himo._kernels._fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def gru_gates_forward(const double[:, ::1] gx, const double[:, ::1] gh,
                      const double[:, ::1] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0]
    cdef Py_ssize_t H = h_prev.shape[1]
    h_arr = np.empty((B, H), dtype=np.float64)
    r_arr = np.empty((B, H), dtype=np.float64)
    z_arr = np.empty((B, H), dtype=np.float64)
    n_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] h_new = h_arr
    cdef double[:, ::1] r = r_arr
    cdef double[:, ::1] z = z_arr
    cdef double[:, ::1] n = n_arr
    cdef Py_ssize_t b, j
    cdef double rv, zv, nv
    with nogil:
        for b in range(B):
            for j in range(H):
                rv = _sigmoid(gx[b, j] + gh[b, j])
                zv = _sigmoid(gx[b, H + j] + gh[b, H + j])
                nv = tanh(gx[b, 2 * H + j] + rv * gh[b, 2 * H + j])
                r[b, j] = rv
                z[b, j] = zv
                n[b, j] = nv
                h_new[b, j] = (1.0 - zv) * nv + zv * h_prev[b, j]
    return h_arr, r_arr, z_arr, n_arr


def gru_gates_backward(const double[:, ::1] dh_new, const double[:, ::1] r,
                       const double[:, ::1] z, const double[:, ::1] n,
                       const double[:, ::1] gh, const double[:, ::1] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0]
    cdef Py_ssize_t H = h_prev.shape[1]
    dgx_arr = np.empty((B, 3 * H), dtype=np.float64)
    dgh_arr = np.empty((B, 3 * H), dtype=np.float64)
    dhp_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] dgx = dgx_arr
    cdef double[:, ::1] dgh = dgh_arr
    cdef double[:, ::1] dhp = dhp_arr
    cdef Py_ssize_t b, j
    cdef double g, rv, zv, nv, dn_pre, dr_pre, dz_pre
    with nogil:
        for b in range(B):
            for j in range(H):
                g = dh_new[b, j]
                rv = r[b, j]
                zv = z[b, j]
                nv = n[b, j]
                dn_pre = g * (1.0 - zv) * (1.0 - nv * nv)
                dr_pre = dn_pre * gh[b, 2 * H + j] * rv * (1.0 - rv)
                dz_pre = g * (h_prev[b, j] - nv) * zv * (1.0 - zv)
                dhp[b, j] = g * zv
                dgx[b, j] = dr_pre
                dgx[b, H + j] = dz_pre
                dgx[b, 2 * H + j] = dn_pre
                dgh[b, j] = dr_pre
                dgh[b, H + j] = dz_pre
                dgh[b, 2 * H + j] = dn_pre * rv
    return dgx_arr, dgh_arr, dhp_arr


def render_portal(double[:, :, :, ::1] out, const double[:, :, :, ::1] base,
                  const cnp.int64_t[::1] phase, const cnp.int64_t[:, ::1] agent,
                  const cnp.int64_t[:, :, ::1] portals, const cnp.uint8_t[:, ::1] context,
                  const cnp.int64_t[:, ::1] context_cells, const cnp.int64_t[::1] room,
                  const cnp.int64_t[::1] room_pixel, const double[:, ::1] colors):
    cdef Py_ssize_t B = out.shape[0]
    cdef Py_ssize_t R = out.shape[1]
    cdef Py_ssize_t C = out.shape[2]
    cdef Py_ssize_t b, i, j, c, p
    cdef Py_ssize_t ph
    with nogil:
        for b in range(B):
            ph = phase[b]
            for i in range(R):
                for j in range(C):
                    for c in range(3):
                        out[b, i, j, c] = base[ph, i, j, c]
            if ph == 0:
                for p in range(portals.shape[1]):
                    for c in range(3):
                        out[b, portals[b, p, 0], portals[b, p, 1], c] = colors[1, c]
                for p in range(context.shape[1]):
                    if context[b, p]:
                        for c in range(3):
                            out[b, context_cells[p, 0], context_cells[p, 1], c] = colors[4, c]
            else:
                for c in range(3):
                    out[b, room_pixel[0], room_pixel[1], c] = colors[2 + room[b], c]
            for c in range(3):
                out[b, agent[b, 0], agent[b, 1], c] = colors[0, c]
    return out
