"""Pure-numpy fallback kernels.

Mirrors the loop order of the compiled kernels wherever the result must
be bit-stable across sequence lengths: matmul and convolutions
accumulate tap-by-tap / input-channel-by-input-channel with vectorized
elementwise ops (numpy elementwise arithmetic is position-stable, BLAS
matmul is not), and the GRU processes one frame at a time.  Slower than
the compiled core but drop-in equivalent.
"""

from __future__ import annotations

import numpy as np


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype)
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[k]
    return out


def _padded_input(x, left_pad, right_pad, lctx):
    T, C = x.shape
    pad_left = np.zeros((left_pad, C), dtype=x.dtype)
    if lctx.shape[0] and left_pad:
        take = min(left_pad, lctx.shape[0])
        pad_left[left_pad - take:] = lctx[lctx.shape[0] - take:]
    pad_right = np.zeros((right_pad, C), dtype=x.dtype)
    return np.concatenate([pad_left, x, pad_right], axis=0)


def conv1d_fwd(x, w, b, left_pad, lctx):
    T = x.shape[0]
    k, _, co_n = w.shape
    xin = _padded_input(x, left_pad, max(k - 1 - left_pad, 0), lctx)
    out = np.zeros((T, co_n), dtype=x.dtype) + b
    for tap in range(k):
        seg = xin[tap:tap + T]
        for ci in range(w.shape[1]):
            out += seg[:, ci, None] * w[tap, ci]
    return out


def conv1d_bwd(x, w, left_pad, dy):
    T, ci_n = x.shape
    k, _, co_n = w.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = dy.sum(axis=0)
    for tap in range(k):
        lo = max(0, left_pad - tap)
        hi = min(T, T + left_pad - tap)
        if lo >= hi:
            continue
        idx = slice(lo + tap - left_pad, hi + tap - left_pad)
        dw[tap] = x[idx].T @ dy[lo:hi]
        dx[idx] += dy[lo:hi] @ w[tap].T
    return dx, dw, db


def dwconv1d_fwd(x, w, b, left_pad, lctx):
    T = x.shape[0]
    k = w.shape[0]
    xin = _padded_input(x, left_pad, max(k - 1 - left_pad, 0), lctx)
    out = np.zeros_like(x) + b
    for tap in range(k):
        out += xin[tap:tap + T] * w[tap]
    return out


def dwconv1d_bwd(x, w, left_pad, dy):
    T = x.shape[0]
    k = w.shape[0]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = dy.sum(axis=0)
    for tap in range(k):
        lo = max(0, left_pad - tap)
        hi = min(T, T + left_pad - tap)
        if lo >= hi:
            continue
        idx = slice(lo + tap - left_pad, hi + tap - left_pad)
        dx[idx] += dy[lo:hi] * w[tap]
        dw[tap] = (x[idx] * dy[lo:hi]).sum(axis=0)
    return dx, dw, db


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def gru_fwd(x, h0, wi, wh, bi, bh):
    T = x.shape[0]
    H = h0.shape[0]
    h = np.empty((T, H), dtype=x.dtype)
    r = np.empty((T, H), dtype=x.dtype)
    z = np.empty((T, H), dtype=x.dtype)
    n = np.empty((T, H), dtype=x.dtype)
    ghn = np.empty((T, H), dtype=x.dtype)
    hp = h0
    for t in range(T):
        gi = bi + x[t] @ wi
        gh = bh + hp @ wh
        r[t] = _sigmoid(gi[:H] + gh[:H])
        z[t] = _sigmoid(gi[H:2 * H] + gh[H:2 * H])
        ghn[t] = gh[2 * H:]
        n[t] = np.tanh(gi[2 * H:] + r[t] * ghn[t])
        h[t] = (1.0 - z[t]) * n[t] + z[t] * hp
        hp = h[t]
    return h, r, z, n, ghn


def gru_bwd(x, h0, wi, wh, h, r, z, n, ghn, dh_out):
    T, I = x.shape
    H = h0.shape[0]
    dx = np.zeros((T, I), dtype=x.dtype)
    dwi = np.zeros_like(wi)
    dwh = np.zeros_like(wh)
    dbi = np.zeros(3 * H, dtype=x.dtype)
    dbh = np.zeros(3 * H, dtype=x.dtype)
    carry = np.zeros(H, dtype=x.dtype)
    dgi = np.empty(3 * H, dtype=x.dtype)
    dgh = np.empty(3 * H, dtype=x.dtype)
    for t in range(T - 1, -1, -1):
        g = dh_out[t] + carry
        hp = h0 if t == 0 else h[t - 1]
        dz = g * (hp - n[t]) * z[t] * (1.0 - z[t])
        dn = g * (1.0 - z[t]) * (1.0 - n[t] * n[t])
        dr = dn * ghn[t] * r[t] * (1.0 - r[t])
        dgi[:H] = dr
        dgh[:H] = dr
        dgi[H:2 * H] = dz
        dgh[H:2 * H] = dz
        dgi[2 * H:] = dn
        dgh[2 * H:] = dn * r[t]
        dbi += dgi
        dbh += dgh
        dwi += np.outer(x[t], dgi)
        dwh += np.outer(hp, dgh)
        dx[t] = wi @ dgi
        carry = g * z[t] + wh @ dgh
    return dx, dwi, dwh, dbi, dbh
