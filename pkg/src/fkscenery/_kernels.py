"""Compiled inner loops (numba).

Kept free of Python objects so every routine can be called from any field or
path helper. All torus routines use minimum-image differences.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


# ---------------------------------------------------------------- grid fields


@nb.njit(cache=True)
def multilinear_periodic(flat, n, d, h, pts):
    """Periodic multilinear interpolation of a C-ordered d-dim grid."""
    npts = pts.shape[0]
    out = np.empty(npts)
    base = np.empty(d, np.int64)
    frac = np.empty(d)
    strides = np.empty(d, np.int64)
    s = 1
    for j in range(d - 1, -1, -1):
        strides[j] = s
        s *= n
    ncorner = 1 << d
    for p in range(npts):
        for j in range(d):
            u = pts[p, j] / h
            f = math.floor(u)
            frac[j] = u - f
            base[j] = np.int64(f) % n
        acc = 0.0
        for c in range(ncorner):
            w = 1.0
            idx = 0
            for j in range(d):
                if (c >> j) & 1:
                    w *= frac[j]
                    idx += ((base[j] + 1) % n) * strides[j]
                else:
                    w *= 1.0 - frac[j]
                    idx += base[j] * strides[j]
            if w != 0.0:
                acc += w * flat[idx]
        out[p] = acc
    return out


# ---------------------------------------------------------------- blob fields


@nb.njit(cache=True)
def _cell_of(x, L, nc):
    u = x - L * math.floor(x / L)
    c = np.int64(u / L * nc)
    if c >= nc:
        c = nc - 1
    return c


@nb.njit(cache=True)
def blob_cells(pts, L, nc):
    """Sort points into nc^d cells. Returns (sorted points, cell start offsets)."""
    npt, d = pts.shape
    ncell = nc**d
    cid = np.empty(npt, np.int64)
    for i in range(npt):
        c = 0
        for j in range(d):
            c = c * nc + _cell_of(pts[i, j], L, nc)
        cid[i] = c
    order = np.argsort(cid, kind="mergesort")
    spts = np.empty_like(pts)
    for i in range(npt):
        spts[i] = pts[order[i]]
    start = np.zeros(ncell + 1, np.int64)
    for i in range(npt):
        start[cid[i] + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    return spts, start


@nb.njit(cache=True, inline="always")
def _ipow(b, n):
    v = 1.0
    for _ in range(n):
        v *= b
    return v


@nb.njit(cache=True)
def _blob_at_brute(x, pts, L, amp, a, power):
    d = x.shape[0]
    a2 = a * a
    acc = 0.0
    for i in range(pts.shape[0]):
        r2 = 0.0
        for j in range(d):
            dx = x[j] - pts[i, j]
            dx -= L * math.floor(dx / L + 0.5)
            r2 += dx * dx
        if r2 < a2:
            acc += amp * _ipow(1.0 - r2 / a2, power)
    return acc


@nb.njit(cache=True)
def _blob_eval3(q, spts, start, L, nc, amp, a, power, center, out):
    """d = 3 fast path: neighbour cells with explicit periodic shifts."""
    a2 = a * a
    inv = nc / L
    for p in range(q.shape[0]):
        x0 = q[p, 0] - L * math.floor(q[p, 0] / L)
        x1 = q[p, 1] - L * math.floor(q[p, 1] / L)
        x2 = q[p, 2] - L * math.floor(q[p, 2] / L)
        c0 = min(np.int64(x0 * inv), nc - 1)
        c1 = min(np.int64(x1 * inv), nc - 1)
        c2 = min(np.int64(x2 * inv), nc - 1)
        acc = 0.0
        for o0 in range(-1, 2):
            k0 = c0 + o0
            s0 = 0.0
            if k0 < 0:
                k0 += nc
                s0 = -L
            elif k0 >= nc:
                k0 -= nc
                s0 = L
            for o1 in range(-1, 2):
                k1 = c1 + o1
                s1 = 0.0
                if k1 < 0:
                    k1 += nc
                    s1 = -L
                elif k1 >= nc:
                    k1 -= nc
                    s1 = L
                for o2 in range(-1, 2):
                    k2 = c2 + o2
                    s2 = 0.0
                    if k2 < 0:
                        k2 += nc
                        s2 = -L
                    elif k2 >= nc:
                        k2 -= nc
                        s2 = L
                    c = (k0 * nc + k1) * nc + k2
                    for i in range(start[c], start[c + 1]):
                        dx = x0 - spts[i, 0] - s0
                        dy = x1 - spts[i, 1] - s1
                        dz = x2 - spts[i, 2] - s2
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 < a2:
                            acc += amp * _ipow(1.0 - r2 / a2, power)
        out[p] = acc - center


@nb.njit(cache=True)
def _blob_evald(q, spts, start, L, nc, offsets, amp, a, power, center, out):
    d = q.shape[1]
    a2 = a * a
    cell = np.empty(d, np.int64)
    shift = np.empty(d)
    x = np.empty(d)
    for p in range(q.shape[0]):
        for j in range(d):
            x[j] = q[p, j] - L * math.floor(q[p, j] / L)
            cell[j] = min(np.int64(x[j] / L * nc), nc - 1)
        acc = 0.0
        for o in range(offsets.shape[0]):
            c = 0
            for j in range(d):
                k = cell[j] + offsets[o, j]
                shift[j] = 0.0
                if k < 0:
                    k += nc
                    shift[j] = -L
                elif k >= nc:
                    k -= nc
                    shift[j] = L
                c = c * nc + k
            for i in range(start[c], start[c + 1]):
                r2 = 0.0
                for j in range(d):
                    dx = x[j] - spts[i, j] - shift[j]
                    r2 += dx * dx
                if r2 < a2:
                    acc += amp * _ipow(1.0 - r2 / a2, power)
        out[p] = acc - center


@nb.njit(cache=True)
def blob_eval(q, spts, start, L, nc, offsets, amp, a, power, center):
    out = np.empty(q.shape[0])
    if nc >= 3:
        if q.shape[1] == 3:
            _blob_eval3(q, spts, start, L, nc, amp, a, power, center, out)
        else:
            _blob_evald(q, spts, start, L, nc, offsets, amp, a, power, center, out)
    else:
        for p in range(q.shape[0]):
            out[p] = _blob_at_brute(q[p], spts, L, amp, a, power) - center
    return out


# ------------------------------------------------------ random Fourier fields


@nb.njit(cache=True)
def fourier_eval(q, omega, phase, scale):
    out = np.empty(q.shape[0])
    m, d = omega.shape
    for p in range(q.shape[0]):
        acc = 0.0
        for j in range(m):
            arg = phase[j]
            for i in range(d):
                arg += omega[j, i] * q[p, i]
            acc += math.cos(arg)
        out[p] = scale * acc
    return out


# ------------------------------------------------------------ pair integrals

# kernel codes for pair_sum
K_CONST = 0
K_POWER = 1  # prod |x_i|^{-a_i}
K_SMOOTH_POWER = 2  # prod (e^2 + x_i^2)^{-a_i/2}
K_INDICATOR = 3  # 1{|x| <= r}
K_MOLLIFIED = 4  # prod of 1-F-1 smoothed powers
K_POLY_SMOOTH = 5  # e^{-a} sum_n c_n R_g(x/e)^n


@nb.njit(cache=True)
def _hyp1f1_neg(a, z):
    """1F1(a; 1/2; -z) for z >= 0 via Kummer transform and series/asymptotics."""
    # 1F1(a;b;-z) = e^{-z} 1F1(b-a; b; z)
    b = 0.5
    if z < 30.0:
        term = 1.0
        acc = 1.0
        bb = b - a
        for k in range(400):
            term *= (bb + k) / (b + k) * z / (k + 1)
            acc += term
            if abs(term) < 1e-16 * abs(acc):
                break
        return math.exp(-z) * acc
    # large z: 1F1(a;b;-z) ~ Gamma(b)/Gamma(b-a) z^{-a} sum_k (a)_k (1+a-b)_k / k! z^{-k}
    pref = math.gamma(b) / math.gamma(b - a) * z ** (-a)
    term = 1.0
    acc = 1.0
    for k in range(30):
        term *= (a + k) * (1.0 + a - b + k) / ((k + 1) * z)
        acc += term
        if abs(term) < 1e-16:
            break
    return pref * acc


@nb.njit(cache=True)
def _kernel(code, dx, params, coefs, same_alpha):
    d = dx.shape[0]
    if code == K_CONST:
        return params[0]
    if code == K_POWER:
        if same_alpha:
            p = 1.0
            for i in range(d):
                p *= abs(dx[i])
            return p ** (-params[0])
        v = 1.0
        for i in range(d):
            v *= abs(dx[i]) ** (-params[i])
        return v
    if code == K_SMOOTH_POWER:
        e2 = params[d] * params[d]
        if same_alpha:
            p = 1.0
            for i in range(d):
                p *= e2 + dx[i] * dx[i]
            return p ** (-0.5 * params[0])
        v = 1.0
        for i in range(d):
            v *= (e2 + dx[i] * dx[i]) ** (-0.5 * params[i])
        return v
    if code == K_INDICATOR:
        r2 = 0.0
        for i in range(d):
            r2 += dx[i] * dx[i]
        return 1.0 if r2 <= params[0] * params[0] else 0.0
    if code == K_MOLLIFIED:
        # params: alphas[0:d], var (=2 eta), then pre-computed prefactors [d+1 : 2d+1]
        var = params[d]
        v = 1.0
        for i in range(d):
            a = params[i]
            v *= params[d + 1 + i] * _hyp1f1_neg(0.5 * a, dx[i] * dx[i] / (2.0 * var))
        return v
    if code == K_POLY_SMOOTH:
        # params: alphas[0:d], eps ; coefs: c_0..c_K applied to R_g(x/eps), times eps^{-alpha}
        eps = params[d]
        r = 1.0
        asum = 0.0
        for i in range(d):
            u = dx[i] / eps
            r *= (1.0 + u * u) ** (-0.5 * params[i])
            asum += params[i]
        acc = 0.0
        rn = 1.0
        for n in range(coefs.shape[0]):
            acc += coefs[n] * rn
            rn *= r
        return acc * eps ** (-asum)
    return 0.0


@nb.njit(cache=True)
def pair_sum(xa, wa, xb, wb, code, params, coefs, same_alpha):
    """sum_i sum_j wa_i wb_j k(xa_i - xb_j)."""
    na, d = xa.shape
    nb_ = xb.shape[0]
    dx = np.empty(d)
    total = 0.0
    for i in range(na):
        row = 0.0
        for j in range(nb_):
            for k in range(d):
                dx[k] = xa[i, k] - xb[j, k]
            row += wb[j] * _kernel(code, dx, params, coefs, same_alpha)
        total += wa[i] * row
    return total


@nb.njit(cache=True)
def pair_sum_power3(xa, wa, xb, wb, a):
    """Specialised |dx dy dz|^{-a} for d=3 with equal exponents (hot path)."""
    na = xa.shape[0]
    nb_ = xb.shape[0]
    total = 0.0
    for i in range(na):
        x0 = xa[i, 0]
        x1 = xa[i, 1]
        x2 = xa[i, 2]
        row = 0.0
        for j in range(nb_):
            p = abs((x0 - xb[j, 0]) * (x1 - xb[j, 1]) * (x2 - xb[j, 2]))
            row += wb[j] * p ** (-a)
        total += wa[i] * row
    return total


@nb.njit(cache=True)
def pair_sum_smooth3(xa, wa, xb, wb, a, e2):
    na = xa.shape[0]
    nb_ = xb.shape[0]
    total = 0.0
    for i in range(na):
        x0 = xa[i, 0]
        x1 = xa[i, 1]
        x2 = xa[i, 2]
        row = 0.0
        for j in range(nb_):
            u0 = x0 - xb[j, 0]
            u1 = x1 - xb[j, 1]
            u2 = x2 - xb[j, 2]
            p = (e2 + u0 * u0) * (e2 + u1 * u1) * (e2 + u2 * u2)
            row += wb[j] * p ** (-0.5 * a)
        total += wa[i] * row
    return total
