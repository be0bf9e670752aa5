# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrences; same contract as ``mfare._lstm_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def sigmoid(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(src.shape[0]):
            dst[i] = _sig(src[i])
    return out


def lstm_forward(xw_in, w_rec_in, bint reverse):
    cdef const double[:, ::1] xw = np.ascontiguousarray(xw_in, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef Py_ssize_t n = xw.shape[0], h4 = xw.shape[1], hd = h4 // 4
    h_arr = np.zeros((n, hd))
    c_arr = np.zeros((n, hd))
    g_arr = np.empty((n, h4))
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = g_arr
    cdef double[::1] z = np.empty(h4)
    cdef double[::1] h_prev = np.zeros(hd)
    cdef double[::1] c_prev = np.zeros(hd)
    cdef Py_ssize_t step, t, j, k
    cdef double hk, ig, fg, gg, og
    with nogil:
        for step in range(n):
            t = n - 1 - step if reverse else step
            for j in range(h4):
                z[j] = xw[t, j]
            for k in range(hd):
                hk = h_prev[k]
                for j in range(h4):
                    z[j] += hk * w[k, j]
            for j in range(hd):
                ig = _sig(z[j])
                fg = _sig(z[hd + j])
                gg = tanh(z[2 * hd + j])
                og = _sig(z[3 * hd + j])
                c_prev[j] = fg * c_prev[j] + ig * gg
                h_prev[j] = og * tanh(c_prev[j])
                gates[t, j] = ig
                gates[t, hd + j] = fg
                gates[t, 2 * hd + j] = gg
                gates[t, 3 * hd + j] = og
                c[t, j] = c_prev[j]
                h[t, j] = h_prev[j]
    return h_arr, c_arr, g_arr


def lstm_backward(dh_in, gates_in, c_in, w_rec_in, bint reverse):
    cdef const double[:, ::1] dh_seq = np.ascontiguousarray(dh_in, dtype=np.float64)
    cdef const double[:, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(w_rec_in, dtype=np.float64)
    cdef Py_ssize_t n = gates.shape[0], h4 = gates.shape[1], hd = h4 // 4
    dz_arr = np.empty((n, h4))
    cdef double[:, ::1] dz = dz_arr
    cdef double[::1] dh_next = np.zeros(hd)
    cdef double[::1] dc_next = np.zeros(hd)
    cdef Py_ssize_t step, t, prev, j, k
    cdef double ig, fg, gg, og, tc, dh, dc, cp, acc
    with nogil:
        for step in range(n):
            t = step if reverse else n - 1 - step
            prev = t + 1 if reverse else t - 1
            for j in range(hd):
                ig = gates[t, j]
                fg = gates[t, hd + j]
                gg = gates[t, 2 * hd + j]
                og = gates[t, 3 * hd + j]
                cp = c[prev, j] if 0 <= prev < n else 0.0
                tc = tanh(c[t, j])
                dh = dh_seq[t, j] + dh_next[j]
                dc = dc_next[j] + dh * og * (1.0 - tc * tc)
                dz[t, j] = dc * gg * ig * (1.0 - ig)
                dz[t, hd + j] = dc * cp * fg * (1.0 - fg)
                dz[t, 2 * hd + j] = dc * ig * (1.0 - gg * gg)
                dz[t, 3 * hd + j] = dh * tc * og * (1.0 - og)
                dc_next[j] = dc * fg
            for k in range(hd):
                acc = 0.0
                for j in range(h4):
                    acc = acc + w[k, j] * dz[t, j]
                dh_next[k] = acc
    return dz_arr
