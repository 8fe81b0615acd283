"""Compiled inner loops for Hessenberg reduction and Francis double-shift QR.

Both routines work in place on ``H`` (the matrix being reduced) and ``Q``
(the accumulated orthogonal factor).  Scalar loops, compiled with numba.
"""
import math

import numpy as np
from numba import njit

_EPS = np.finfo(np.float64).eps


@njit(cache=True)
def hessenberg_inplace(H, Q):
    n = H.shape[0]
    v = np.empty(n)
    for k in range(n - 2):
        m = n - k - 1
        tail = 0.0
        for i in range(k + 2, n):
            tail += H[i, k] * H[i, k]
        if tail == 0.0:
            continue
        x0 = H[k + 1, k]
        alpha = math.sqrt(x0 * x0 + tail)
        v0 = x0 + math.copysign(alpha, x0)
        nv = math.sqrt(v0 * v0 + tail)
        v[0] = v0 / nv
        for i in range(1, m):
            v[i] = H[k + 1 + i, k] / nv
        for j in range(k, n):
            w = 0.0
            for i in range(m):
                w += v[i] * H[k + 1 + i, j]
            w *= 2.0
            for i in range(m):
                H[k + 1 + i, j] -= w * v[i]
        for r in range(n):
            w = 0.0
            for i in range(m):
                w += H[r, k + 1 + i] * v[i]
            w *= 2.0
            for i in range(m):
                H[r, k + 1 + i] -= w * v[i]
        for r in range(n):
            w = 0.0
            for i in range(m):
                w += Q[r, k + 1 + i] * v[i]
            w *= 2.0
            for i in range(m):
                Q[r, k + 1 + i] -= w * v[i]
        for i in range(k + 2, n):
            H[i, k] = 0.0


@njit(cache=True)
def _reflect(H, Q, v0, v1, v2, size, k, c0, top):
    n = H.shape[0]
    for j in range(c0, n):
        w = v0 * H[k, j] + v1 * H[k + 1, j]
        if size == 3:
            w += v2 * H[k + 2, j]
        w *= 2.0
        H[k, j] -= w * v0
        H[k + 1, j] -= w * v1
        if size == 3:
            H[k + 2, j] -= w * v2
    for i in range(top + 1):
        w = H[i, k] * v0 + H[i, k + 1] * v1
        if size == 3:
            w += H[i, k + 2] * v2
        w *= 2.0
        H[i, k] -= w * v0
        H[i, k + 1] -= w * v1
        if size == 3:
            H[i, k + 2] -= w * v2
    for i in range(n):
        w = Q[i, k] * v0 + Q[i, k + 1] * v1
        if size == 3:
            w += Q[i, k + 2] * v2
        w *= 2.0
        Q[i, k] -= w * v0
        Q[i, k + 1] -= w * v1
        if size == 3:
            Q[i, k + 2] -= w * v2


@njit(cache=True)
def _francis_step(H, Q, lo, hi, exceptional):
    if exceptional:
        w = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
        s = 1.5 * w
        t = w * w
    else:
        s = H[hi - 1, hi - 1] + H[hi, hi]
        t = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]
    h00 = H[lo, lo]
    h01 = H[lo, lo + 1]
    h10 = H[lo + 1, lo]
    h11 = H[lo + 1, lo + 1]
    h21 = H[lo + 2, lo + 1]
    x = h00 * h00 + h01 * h10 - s * h00 + t
    y = h10 * (h00 + h11 - s)
    z = h10 * h21
    for k in range(lo, hi - 1):
        alpha = math.sqrt(x * x + y * y + z * z)
        if alpha != 0.0:
            v0 = x + math.copysign(alpha, x)
            nv = math.sqrt(v0 * v0 + y * y + z * z)
            _reflect(H, Q, v0 / nv, y / nv, z / nv, 3, k, max(lo, k - 1), min(k + 3, hi))
            if k > lo:
                H[k + 1, k - 1] = 0.0
                H[k + 2, k - 1] = 0.0
        x = H[k + 1, k]
        y = H[k + 2, k]
        if k < hi - 2:
            z = H[k + 3, k]
    alpha = math.hypot(x, y)
    if alpha != 0.0:
        v0 = x + math.copysign(alpha, x)
        nv = math.hypot(v0, y)
        _reflect(H, Q, v0 / nv, y / nv, 0.0, 2, hi - 1, hi - 2, hi)
        H[hi, hi - 2] = 0.0


@njit(cache=True)
def _split_2x2(H, Q, i):
    # Rotate a 2x2 block with real eigenvalues into upper-triangular form.
    n = H.shape[0]
    a = H[i, i]
    b = H[i, i + 1]
    c = H[i + 1, i]
    d = H[i + 1, i + 1]
    if c == 0.0:
        return
    p = 0.5 * (a - d)
    disc = p * p + b * c
    if disc < 0.0:
        return
    r = p + math.copysign(math.sqrt(disc), p)
    nrm = math.hypot(r, c)
    cs = r / nrm
    sn = c / nrm
    for j in range(i, n):
        h0 = H[i, j]
        h1 = H[i + 1, j]
        H[i, j] = cs * h0 + sn * h1
        H[i + 1, j] = -sn * h0 + cs * h1
    for r_ in range(i + 2):
        h0 = H[r_, i]
        h1 = H[r_, i + 1]
        H[r_, i] = cs * h0 + sn * h1
        H[r_, i + 1] = -sn * h0 + cs * h1
    for r_ in range(n):
        q0 = Q[r_, i]
        q1 = Q[r_, i + 1]
        Q[r_, i] = cs * q0 + sn * q1
        Q[r_, i + 1] = -sn * q0 + cs * q1
    H[i + 1, i] = 0.0


@njit(cache=True)
def francis_inplace(H, Q, max_iter):
    """Reduce upper Hessenberg ``H`` to real Schur form.

    Returns ``-1`` on success, otherwise the upper row index of the active
    window when the iteration budget ran out.
    """
    n = H.shape[0]
    anorm = 0.0
    for i in range(n):
        for j in range(n):
            anorm += abs(H[i, j])
    if anorm == 0.0:
        anorm = 1.0
    hi = n - 1
    its = 0
    total = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            s = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if s == 0.0:
                s = anorm
            if abs(H[lo, lo - 1]) <= _EPS * s:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            its = 0
            continue
        if lo == hi - 1:
            _split_2x2(H, Q, hi - 1)
            hi -= 2
            its = 0
            continue
        if total >= max_iter:
            return hi
        total += 1
        its += 1
        _francis_step(H, Q, lo, hi, its % 10 == 0)
    return -1
