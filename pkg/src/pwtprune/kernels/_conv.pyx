# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels: im2col packing in C, products through BLAS gemm.

Every kernel receives the index arrays of active output filters (``out_idx``)
and active input channels (``in_idx``). Inactive rows and columns are never
packed, so the gemm dimensions, and therefore the executed MACs, shrink with
the pruned fraction.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()


cdef void _gemm_rm(char ta, char tb, int m, int n, int k,
                   floating *a, int lda, floating *b, int ldb,
                   floating *c) noexcept nogil:
    # Row-major C[m, n] = op(A) @ op(B) expressed as column-major C^T = op(B)^T op(A)^T.
    cdef floating alpha = 1.0
    cdef floating beta = 0.0
    cdef int ldc = n
    if floating is double:
        dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        sgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def conv_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                 floating[::1] bias, int stride,
                 Py_ssize_t[::1] out_idx, Py_ssize_t[::1] in_idx):
    cdef Py_ssize_t B = x.shape[0], N = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t M = (N - k) // stride + 1
    cdef Py_ssize_t Oa = out_idx.shape[0], Ia = in_idx.shape[0]
    cdef Py_ssize_t K = Ia * k * k, rows = B * M * M
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.zeros((B, O, M, M), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    if Oa == 0:
        return out_arr

    cdef floating[:, ::1] cols = np.empty((rows, max(K, 1)), dtype=dtype)
    cdef floating[:, ::1] wsel = np.empty((Oa, max(K, 1)), dtype=dtype)
    cdef floating[:, ::1] res = np.zeros((rows, Oa), dtype=dtype)
    cdef Py_ssize_t b, y, xx, ii, ci, ki, kj, oo, o, r, col
    with nogil:
        if K > 0:
            for b in range(B):
                for y in range(M):
                    for xx in range(M):
                        r = (b * M + y) * M + xx
                        col = 0
                        for ii in range(Ia):
                            ci = in_idx[ii]
                            for ki in range(k):
                                for kj in range(k):
                                    cols[r, col] = x[b, ci, y * stride + ki, xx * stride + kj]
                                    col = col + 1
            for oo in range(Oa):
                o = out_idx[oo]
                col = 0
                for ii in range(Ia):
                    ci = in_idx[ii]
                    for ki in range(k):
                        for kj in range(k):
                            wsel[oo, col] = w[o, ci, ki, kj]
                            col = col + 1
            _gemm_rm(c'N', c'T', <int>rows, <int>Oa, <int>K,
                     &cols[0, 0], <int>K, &wsel[0, 0], <int>K, &res[0, 0])
        for b in range(B):
            for oo in range(Oa):
                o = out_idx[oo]
                for y in range(M):
                    for xx in range(M):
                        out[b, o, y, xx] = res[(b * M + y) * M + xx, oo] + bias[o]
    return out_arr


def conv_backward_weight(floating[:, :, :, ::1] x, floating[:, :, :, ::1] grad_out,
                         int stride, int k,
                         Py_ssize_t[::1] out_idx, Py_ssize_t[::1] in_idx):
    cdef Py_ssize_t B = x.shape[0], I = x.shape[1]
    cdef Py_ssize_t O = grad_out.shape[1], M = grad_out.shape[2]
    cdef Py_ssize_t Oa = out_idx.shape[0], Ia = in_idx.shape[0]
    cdef Py_ssize_t K = Ia * k * k, rows = B * M * M
    dtype = np.float64 if floating is double else np.float32
    gw_arr = np.zeros((O, I, k, k), dtype=dtype)
    gb_arr = np.zeros(O, dtype=dtype)
    cdef floating[:, :, :, ::1] gw = gw_arr
    cdef floating[::1] gb = gb_arr
    if Oa == 0:
        return gw_arr, gb_arr

    cdef floating[:, ::1] g = np.empty((rows, Oa), dtype=dtype)
    cdef floating[:, ::1] cols = np.empty((rows, max(K, 1)), dtype=dtype)
    cdef floating[:, ::1] dw = np.zeros((Oa, max(K, 1)), dtype=dtype)
    cdef Py_ssize_t b, y, xx, ii, ci, ki, kj, oo, o, r, col
    cdef floating acc
    with nogil:
        for b in range(B):
            for y in range(M):
                for xx in range(M):
                    r = (b * M + y) * M + xx
                    for oo in range(Oa):
                        g[r, oo] = grad_out[b, out_idx[oo], y, xx]
        for oo in range(Oa):
            acc = 0
            for r in range(rows):
                acc = acc + g[r, oo]
            gb[out_idx[oo]] = acc
        if K > 0:
            for b in range(B):
                for y in range(M):
                    for xx in range(M):
                        r = (b * M + y) * M + xx
                        col = 0
                        for ii in range(Ia):
                            ci = in_idx[ii]
                            for ki in range(k):
                                for kj in range(k):
                                    cols[r, col] = x[b, ci, y * stride + ki, xx * stride + kj]
                                    col = col + 1
            _gemm_rm(c'T', c'N', <int>Oa, <int>K, <int>rows,
                     &g[0, 0], <int>Oa, &cols[0, 0], <int>K, &dw[0, 0])
            for oo in range(Oa):
                o = out_idx[oo]
                col = 0
                for ii in range(Ia):
                    ci = in_idx[ii]
                    for ki in range(k):
                        for kj in range(k):
                            gw[o, ci, ki, kj] = dw[oo, col]
                            col = col + 1
    return gw_arr, gb_arr


def conv_backward_input(floating[:, :, :, ::1] grad_out, floating[:, :, :, ::1] w,
                        int stride, int N,
                        Py_ssize_t[::1] out_idx, Py_ssize_t[::1] in_idx):
    # gemm of the output gradient with the active filters, then col2im
    # scatter-add of every k*k patch back onto the input grid.
    cdef Py_ssize_t B = grad_out.shape[0], M = grad_out.shape[2]
    cdef Py_ssize_t I = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t Oa = out_idx.shape[0], Ia = in_idx.shape[0]
    cdef Py_ssize_t K = Ia * k * k, rows = B * M * M
    dtype = np.float64 if floating is double else np.float32
    gi_arr = np.zeros((B, I, N, N), dtype=dtype)
    cdef floating[:, :, :, ::1] gi = gi_arr
    if Oa == 0 or Ia == 0:
        return gi_arr

    cdef floating[:, ::1] g = np.empty((rows, Oa), dtype=dtype)
    cdef floating[:, ::1] wsel = np.empty((Oa, K), dtype=dtype)
    cdef floating[:, ::1] cols = np.empty((rows, K), dtype=dtype)
    cdef Py_ssize_t b, y, xx, ii, ci, ki, kj, oo, o, r, col, y0, x0
    with nogil:
        for b in range(B):
            for oo in range(Oa):
                o = out_idx[oo]
                for y in range(M):
                    for xx in range(M):
                        g[(b * M + y) * M + xx, oo] = grad_out[b, o, y, xx]
        for oo in range(Oa):
            o = out_idx[oo]
            col = 0
            for ii in range(Ia):
                ci = in_idx[ii]
                for ki in range(k):
                    for kj in range(k):
                        wsel[oo, col] = w[o, ci, ki, kj]
                        col = col + 1
        _gemm_rm(c'N', c'N', <int>rows, <int>K, <int>Oa,
                 &g[0, 0], <int>Oa, &wsel[0, 0], <int>K, &cols[0, 0])
        for b in range(B):
            for y in range(M):
                y0 = y * stride
                for xx in range(M):
                    x0 = xx * stride
                    r = (b * M + y) * M + xx
                    col = 0
                    for ii in range(Ia):
                        ci = in_idx[ii]
                        for ki in range(k):
                            for kj in range(k):
                                gi[b, ci, y0 + ki, x0 + kj] += cols[r, col]
                                col = col + 1
    return gi_arr
