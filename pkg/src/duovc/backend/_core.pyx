# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels with a pinned accumulation order.

Every kernel computes each output frame with the same loop order
regardless of how many frames are in the call, so results are
bit-identical whether a sequence arrives whole, as a prefix, or in
chunks (BLAS-backed matmul does not give that guarantee).  float32 and
float64 variants are generated from one fused source; the float64 path
backs the finite-difference gradient checker.
"""

import numpy as np

cimport cython
from libc.math cimport exp, expf, tanh, tanhf

ctypedef fused real:
    float
    double


cdef inline real _sigmoid(real a) noexcept nogil:
    if real is float:
        return <float>1.0 / (<float>1.0 + expf(-a))
    else:
        return 1.0 / (1.0 + exp(-a))


cdef inline real _tanh(real a) noexcept nogil:
    if real is float:
        return tanhf(a)
    else:
        return tanh(a)


def gemm(const real[:, ::1] a, const real[:, ::1] b):
    """C[m, n] = sum_k a[m, k] * b[k, n], k ascending per element."""
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    out_np = np.zeros((m, n), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t i, k, j
    cdef real av
    with nogil:
        for i in range(m):
            for k in range(kk):
                av = a[i, k]
                for j in range(n):
                    out[i, j] += av * b[k, j]
    return out_np


def conv1d_fwd(const real[:, ::1] x, const real[:, :, ::1] w, const real[::1] b,
               Py_ssize_t left_pad, const real[:, ::1] lctx):
    """y[t, co] = b[co] + sum_tap sum_ci xin[t + tap - left_pad, ci] * w[tap, ci, co].

    xin reads x for indices in [0, T); negative indices read the tail of
    lctx (missing entries are zero); indices >= T are zero.
    """
    cdef Py_ssize_t T = x.shape[0], ci_n = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], co_n = w.shape[2]
    cdef Py_ssize_t L = lctx.shape[0]
    out_np = np.empty((T, co_n), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t t, tap, ci, co, idx
    cdef const real[:] src
    cdef real av
    with nogil:
        for t in range(T):
            for co in range(co_n):
                out[t, co] = b[co]
            for tap in range(k):
                idx = t + tap - left_pad
                if idx >= T:
                    continue
                if idx >= 0:
                    src = x[idx]
                elif L + idx >= 0:
                    src = lctx[L + idx]
                else:
                    continue
                for ci in range(ci_n):
                    av = src[ci]
                    for co in range(co_n):
                        out[t, co] += av * w[tap, ci, co]
    return out_np


def conv1d_bwd(const real[:, ::1] x, const real[:, :, ::1] w,
               Py_ssize_t left_pad, const real[:, ::1] dy):
    """Gradients of conv1d_fwd w.r.t. x, w, b (context taken as zero)."""
    cdef Py_ssize_t T = x.shape[0], ci_n = x.shape[1]
    cdef Py_ssize_t k = w.shape[0], co_n = w.shape[2]
    dtype = np.float32 if real is float else np.float64
    dx_np = np.zeros((T, ci_n), dtype=dtype)
    dw_np = np.zeros((k, ci_n, co_n), dtype=dtype)
    db_np = np.zeros(co_n, dtype=dtype)
    cdef real[:, ::1] dx = dx_np
    cdef real[:, :, ::1] dw = dw_np
    cdef real[::1] db = db_np
    cdef Py_ssize_t t, tap, ci, co, idx
    cdef real g, xv
    with nogil:
        for t in range(T):
            for co in range(co_n):
                db[co] += dy[t, co]
            for tap in range(k):
                idx = t + tap - left_pad
                if idx < 0 or idx >= T:
                    continue
                for ci in range(ci_n):
                    xv = x[idx, ci]
                    g = 0.0
                    for co in range(co_n):
                        g += w[tap, ci, co] * dy[t, co]
                        dw[tap, ci, co] += xv * dy[t, co]
                    dx[idx, ci] += g
    return dx_np, dw_np, db_np


def dwconv1d_fwd(const real[:, ::1] x, const real[:, ::1] w, const real[::1] b,
                 Py_ssize_t left_pad, const real[:, ::1] lctx):
    """Depthwise variant: y[t, c] = b[c] + sum_tap xin[t + tap - left_pad, c] * w[tap, c]."""
    cdef Py_ssize_t T = x.shape[0], c_n = x.shape[1]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t L = lctx.shape[0]
    out_np = np.empty((T, c_n), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_np
    cdef Py_ssize_t t, tap, c, idx
    cdef const real[:] src
    with nogil:
        for t in range(T):
            for c in range(c_n):
                out[t, c] = b[c]
            for tap in range(k):
                idx = t + tap - left_pad
                if idx >= T:
                    continue
                if idx >= 0:
                    src = x[idx]
                elif L + idx >= 0:
                    src = lctx[L + idx]
                else:
                    continue
                for c in range(c_n):
                    out[t, c] += src[c] * w[tap, c]
    return out_np


def dwconv1d_bwd(const real[:, ::1] x, const real[:, ::1] w,
                 Py_ssize_t left_pad, const real[:, ::1] dy):
    cdef Py_ssize_t T = x.shape[0], c_n = x.shape[1]
    cdef Py_ssize_t k = w.shape[0]
    dtype = np.float32 if real is float else np.float64
    dx_np = np.zeros((T, c_n), dtype=dtype)
    dw_np = np.zeros((k, c_n), dtype=dtype)
    db_np = np.zeros(c_n, dtype=dtype)
    cdef real[:, ::1] dx = dx_np
    cdef real[:, ::1] dw = dw_np
    cdef real[::1] db = db_np
    cdef Py_ssize_t t, tap, c, idx
    with nogil:
        for t in range(T):
            for c in range(c_n):
                db[c] += dy[t, c]
            for tap in range(k):
                idx = t + tap - left_pad
                if idx < 0 or idx >= T:
                    continue
                for c in range(c_n):
                    dx[idx, c] += w[tap, c] * dy[t, c]
                    dw[tap, c] += x[idx, c] * dy[t, c]
    return dx_np, dw_np, db_np


def gru_fwd(const real[:, ::1] x, const real[::1] h0,
            const real[:, ::1] wi, const real[:, ::1] wh,
            const real[::1] bi, const real[::1] bh):
    """Unidirectional GRU over a sequence.

    Packed gate order is (reset, update, candidate); the candidate uses
    n_t = tanh(gi_n + r_t * gh_n) and h_t = (1 - z_t) * n_t + z_t * h_{t-1}.
    Returns h plus the per-step activations the backward pass needs.
    """
    cdef Py_ssize_t T = x.shape[0], I = x.shape[1], H = h0.shape[0]
    dtype = np.float32 if real is float else np.float64
    h_np = np.empty((T, H), dtype=dtype)
    r_np = np.empty((T, H), dtype=dtype)
    z_np = np.empty((T, H), dtype=dtype)
    n_np = np.empty((T, H), dtype=dtype)
    ghn_np = np.empty((T, H), dtype=dtype)
    gi_np = np.empty(3 * H, dtype=dtype)
    gh_np = np.empty(3 * H, dtype=dtype)
    hp_np = np.empty(H, dtype=dtype)
    cdef real[:, ::1] h = h_np, r = r_np, z = z_np, n = n_np, ghn = ghn_np
    cdef real[::1] gi = gi_np, gh = gh_np, hp = hp_np
    cdef Py_ssize_t t, k, j, u
    cdef real av, rr, zz, nn
    with nogil:
        for u in range(H):
            hp[u] = h0[u]
        for t in range(T):
            for j in range(3 * H):
                gi[j] = bi[j]
                gh[j] = bh[j]
            for k in range(I):
                av = x[t, k]
                for j in range(3 * H):
                    gi[j] += av * wi[k, j]
            for k in range(H):
                av = hp[k]
                for j in range(3 * H):
                    gh[j] += av * wh[k, j]
            for u in range(H):
                rr = _sigmoid(gi[u] + gh[u])
                zz = _sigmoid(gi[H + u] + gh[H + u])
                nn = _tanh(gi[2 * H + u] + rr * gh[2 * H + u])
                r[t, u] = rr
                z[t, u] = zz
                n[t, u] = nn
                ghn[t, u] = gh[2 * H + u]
                h[t, u] = (<real>1.0 - zz) * nn + zz * hp[u]
            for u in range(H):
                hp[u] = h[t, u]
    return h_np, r_np, z_np, n_np, ghn_np


def gru_bwd(const real[:, ::1] x, const real[::1] h0,
            const real[:, ::1] wi, const real[:, ::1] wh,
            const real[:, ::1] h, const real[:, ::1] r, const real[:, ::1] z,
            const real[:, ::1] n, const real[:, ::1] ghn,
            const real[:, ::1] dh_out):
    """Backprop through gru_fwd; returns (dx, dwi, dwh, dbi, dbh)."""
    cdef Py_ssize_t T = x.shape[0], I = x.shape[1], H = h0.shape[0]
    dtype = np.float32 if real is float else np.float64
    dx_np = np.zeros((T, I), dtype=dtype)
    dwi_np = np.zeros((I, 3 * H), dtype=dtype)
    dwh_np = np.zeros((H, 3 * H), dtype=dtype)
    dbi_np = np.zeros(3 * H, dtype=dtype)
    dbh_np = np.zeros(3 * H, dtype=dtype)
    carry_np = np.zeros(H, dtype=dtype)
    dgi_np = np.empty(3 * H, dtype=dtype)
    dgh_np = np.empty(3 * H, dtype=dtype)
    cdef real[:, ::1] dx = dx_np, dwi = dwi_np, dwh = dwh_np
    cdef real[::1] dbi = dbi_np, dbh = dbh_np, carry = carry_np
    cdef real[::1] dgi = dgi_np, dgh = dgh_np
    cdef Py_ssize_t t, k, j, u
    cdef real g, dz, dn, dr, hp, acc, xv
    with nogil:
        for t in range(T - 1, -1, -1):
            for u in range(H):
                g = dh_out[t, u] + carry[u]
                hp = h0[u] if t == 0 else h[t - 1, u]
                dz = g * (hp - n[t, u]) * z[t, u] * (<real>1.0 - z[t, u])
                dn = g * (<real>1.0 - z[t, u]) * (<real>1.0 - n[t, u] * n[t, u])
                dr = dn * ghn[t, u] * r[t, u] * (<real>1.0 - r[t, u])
                dgi[u] = dr
                dgh[u] = dr
                dgi[H + u] = dz
                dgh[H + u] = dz
                dgi[2 * H + u] = dn
                dgh[2 * H + u] = dn * r[t, u]
                carry[u] = g * z[t, u]
            for j in range(3 * H):
                dbi[j] += dgi[j]
                dbh[j] += dgh[j]
            for k in range(I):
                xv = x[t, k]
                acc = 0.0
                for j in range(3 * H):
                    dwi[k, j] += xv * dgi[j]
                    acc += wi[k, j] * dgi[j]
                dx[t, k] = acc
            for k in range(H):
                hp = h0[k] if t == 0 else h[t - 1, k]
                acc = 0.0
                for j in range(3 * H):
                    dwh[k, j] += hp * dgh[j]
                    acc += wh[k, j] * dgh[j]
                carry[k] += acc
    return dx_np, dwi_np, dwh_np, dbi_np, dbh_np
