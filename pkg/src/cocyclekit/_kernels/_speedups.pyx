# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled chain-product kernel.

Same contract as ``_pure.chain_scaled_partials``; see there for semantics.
"""

import numpy as np

cimport cython
from libc.math cimport log, sqrt


def chain_scaled_partials(double[:, :, ::1] mats, long[::1] want,
                          double[:, ::1] init, double init_log):
    cdef Py_ssize_t n = mats.shape[0]
    cdef Py_ssize_t d = mats.shape[1]
    cdef Py_ssize_t m = want.shape[0]

    partials_arr = np.empty((m, d, d), dtype=np.float64)
    logs_arr = np.empty(m, dtype=np.float64)
    cur_arr = np.array(init, dtype=np.float64, copy=True)
    tmp_arr = np.empty((d, d), dtype=np.float64)

    cdef double[:, :, ::1] partials = partials_arr
    cdef double[::1] logs = logs_arr
    cdef double[:, ::1] cur = cur_arr
    cdef double[:, ::1] tmp = tmp_arr

    cdef double logscale = init_log
    cdef double fro, acc
    cdef Py_ssize_t j, i, k, l, next_slot = 0

    with nogil:
        for j in range(n):
            # tmp = mats[j] @ cur
            for i in range(d):
                for k in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += mats[j, i, l] * cur[l, k]
                    tmp[i, k] = acc
            fro = 0.0
            for i in range(d):
                for k in range(d):
                    fro += tmp[i, k] * tmp[i, k]
            fro = sqrt(fro)
            logscale += log(fro)
            for i in range(d):
                for k in range(d):
                    cur[i, k] = tmp[i, k] / fro
            while next_slot < m and want[next_slot] == j + 1:
                for i in range(d):
                    for k in range(d):
                        partials[next_slot, i, k] = cur[i, k]
                logs[next_slot] = logscale
                next_slot += 1

    return partials_arr, logs_arr
