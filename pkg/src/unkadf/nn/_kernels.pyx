# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence kernels.

Mirrors ``_kernels_py``. The per-step ``h U^T`` and ``dz U`` products go
through BLAS dgemm directly on strided slices of the (B, T, .) buffers; all
gate arithmetic is plain C (``_gates.h``) so it can use vectorised tanh.
"""
from libc.stdlib cimport calloc, free
from scipy.linalg.cython_blas cimport dgemm


cdef extern from "_gates.h" nogil:
    void ukadf_cell_forward(double *z, const double *c_prev, double *c, double *h, int m)
    void ukadf_tanh(const double *x, double *out, int n)


def lstm_forward(double[:, :, ::1] Z, const double[:, ::1] U,
                 double[:, :, ::1] H, double[:, :, ::1] C):
    cdef int B = Z.shape[0], T = Z.shape[1], m4 = Z.shape[2]
    cdef int m = m4 // 4
    cdef int b, t
    cdef double one = 1.0
    cdef int ldz = T * m4, ldh = T * m
    cdef char transa = b'T', transb = b'N'
    if U.shape[0] != m4 or U.shape[1] != m:
        raise ValueError("U must have shape (4m, m)")
    if H.shape[0] != B or H.shape[1] != T or H.shape[2] != m:
        raise ValueError("H has the wrong shape")
    if C.shape[0] != B or C.shape[1] != T or C.shape[2] != m:
        raise ValueError("C has the wrong shape")
    if B == 0 or T == 0:
        return
    with nogil:
        for t in range(T):
            if t > 0:
                # Z[:, t, :] += H[:, t-1, :] @ U^T  (column-major view)
                dgemm(&transa, &transb, &m4, &B, &m, &one, <double *> &U[0, 0], &m,
                      &H[0, t - 1, 0], &ldh, &one, &Z[0, t, 0], &ldz)
            for b in range(B):
                ukadf_cell_forward(&Z[b, t, 0], &C[b, t - 1, 0] if t > 0 else NULL,
                                   &C[b, t, 0], &H[b, t, 0], m)


def lstm_backward(const double[:, :, ::1] G, const double[:, :, ::1] C,
                  const double[:, ::1] U,
                  const double[:, :, ::1] dH, const double[:, :, ::1] dC,
                  double[:, :, ::1] dZ):
    cdef int B = G.shape[0], T = G.shape[1], m4 = G.shape[2]
    cdef int m = m4 // 4
    cdef int b, t, j
    cdef double i_, f_, o_, g_, tc, dh, dc, c_prev
    cdef double one = 1.0, zero = 0.0
    cdef int ldz = T * m4
    cdef char transa = b'N', transb = b'N'
    cdef double *dh_next
    cdef double *dc_next
    cdef double *tcs
    if U.shape[0] != m4 or U.shape[1] != m:
        raise ValueError("U must have shape (4m, m)")
    if (C.shape[0] != B or C.shape[1] != T or C.shape[2] != m
            or dH.shape[0] != B or dH.shape[1] != T or dH.shape[2] != m
            or dC.shape[0] != B or dC.shape[1] != T or dC.shape[2] != m):
        raise ValueError("state gradient buffers have the wrong shape")
    if dZ.shape[0] != B or dZ.shape[1] != T or dZ.shape[2] != m4:
        raise ValueError("dZ has the wrong shape")
    if B == 0 or T == 0:
        return
    dh_next = <double *> calloc(B * m, sizeof(double))
    dc_next = <double *> calloc(B * m, sizeof(double))
    tcs = <double *> calloc(m, sizeof(double))
    if dh_next == NULL or dc_next == NULL or tcs == NULL:
        free(dh_next)
        free(dc_next)
        free(tcs)
        raise MemoryError()
    try:
        with nogil:
            for t in range(T - 1, -1, -1):
                for b in range(B):
                    ukadf_tanh(&C[b, t, 0], tcs, m)
                    for j in range(m):
                        i_ = G[b, t, j]
                        f_ = G[b, t, m + j]
                        o_ = G[b, t, 2 * m + j]
                        g_ = G[b, t, 3 * m + j]
                        tc = tcs[j]
                        dh = dH[b, t, j] + dh_next[b * m + j]
                        dc = dc_next[b * m + j] + dC[b, t, j] + dh * o_ * (1.0 - tc * tc)
                        c_prev = C[b, t - 1, j] if t > 0 else 0.0
                        dZ[b, t, j] = dc * g_ * i_ * (1.0 - i_)
                        dZ[b, t, m + j] = dc * c_prev * f_ * (1.0 - f_)
                        dZ[b, t, 2 * m + j] = dh * tc * o_ * (1.0 - o_)
                        dZ[b, t, 3 * m + j] = dc * i_ * (1.0 - g_ * g_)
                        dc_next[b * m + j] = dc * f_
                # dh_next = dZ[:, t, :] @ U  (column-major view)
                dgemm(&transa, &transb, &m, &B, &m4, &one, <double *> &U[0, 0], &m,
                      &dZ[0, t, 0], &ldz, &zero, dh_next, &m)
    finally:
        free(dh_next)
        free(dc_next)
        free(tcs)
