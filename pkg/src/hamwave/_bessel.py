"""Radial terms of the Matern family, g_mu(s) = s**mu * K_mu(s).

Only half-integer and integer orders occur (nu = m - d/2 with integer m and
d in {1, 2}), so the orders are passed as ``two_nu = 2 * nu``.

Half-integer orders use the terminating series

    K_{n+1/2}(s) = sqrt(pi / (2 s)) e^{-s} sum_k (n+k)! / (k! (n-k)! (2s)^k),

integer orders start from K_0 and K_1 (trapezoidal rule on the integral
representation int_0^inf exp(-s cosh t) cosh(nu t) dt, which converges
geometrically) and recur upward with K_{j+1} = K_{j-1} + (2j/s) K_j.

Every evaluator returns the triple

    (g_nu(s), g_{nu-1}(s), s**2 * g_{nu-2}(s))

which is what the value, gradient and Laplacian of the kernel need.
Entries whose order is not admissible are returned as NaN.
"""

import math

import numpy as np

from ._accel import njit

SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
# integer orders: below this the triplet equals its s = 0 limit to working
# precision (the recurrence would overflow); half-integer orders need no cutoff
SMALL = 1e-8

# trapezoid controls for the K0/K1 integral: truncate where the scaled
# integrand drops below exp(-_TRUNC); at least _MIN_NODES nodes per width
_TRUNC = 36.0
_MAX_STEP = 0.25
_MIN_NODES = 30


def limit_at_zero(two_nu):
    """g_mu(0) for mu = nu, nu - 1 and the limit of s**2 g_{nu-2}(s)."""
    nu = 0.5 * two_nu
    g0 = 2.0 ** (nu - 1.0) * math.gamma(nu) if nu > 0 else math.nan
    if nu > 1:
        g1 = 2.0 ** (nu - 2.0) * math.gamma(nu - 1.0)
    else:
        g1 = math.inf
    if nu >= 2:
        g2 = 0.0
    else:
        g2 = math.nan
    return g0, g1, g2


@njit(cache=True)
def _half_poly(n, s):
    # sum_k a_{n,k} s^{n-k}, a_{n,k} = (n+k)! / (k! (n-k)! 2^k)
    a = 1.0
    p = 1.0
    for k in range(n):
        a = a * (n + k + 1) * (n - k) / (2.0 * (k + 1))
        p = p * s + a
    return p


@njit(cache=True)
def _g_half(n, s):
    """s**(n+1/2) K_{n+1/2}(s) for n >= -1."""
    if n >= 0:
        return SQRT_HALF_PI * math.exp(-s) * _half_poly(n, s)
    if n == -1:
        return SQRT_HALF_PI * math.exp(-s) / s
    return math.nan


@njit(cache=True)
def scaled_k01(z):
    """Return (e^z K_0(z), e^z K_1(z)) for z > 0."""
    tmax = math.acosh(1.0 + _TRUNC / z)
    h = min(_MAX_STEP, tmax / _MIN_NODES)
    n = int(tmax / h) + 1
    s0 = 0.5
    s1 = 0.5
    for j in range(1, n + 1):
        ct = math.cosh(j * h)
        e = math.exp(-z * (ct - 1.0))
        s0 += e
        s1 += e * ct
    return h * s0, h * s1


@njit(cache=True)
def radial_triplet(s, two_nu):
    """(g_nu, g_{nu-1}, s^2 g_{nu-2}) at a single s > 0."""
    if two_nu % 2 == 1:
        n = (two_nu - 1) // 2
        g0 = _g_half(n, s)
        g1 = _g_half(n - 1, s)
        if n - 2 >= -1:
            g2 = s * s * _g_half(n - 2, s)
        else:
            g2 = math.nan
        return g0, g1, g2
    n = two_nu // 2
    top = max(n, abs(n - 2), 1)
    i0 = n
    i1 = abs(n - 1)
    i2 = abs(n - 2)
    ka, kb = scaled_k01(s)
    k_i0 = ka if i0 == 0 else kb
    k_i1 = ka if i1 == 0 else kb
    k_i2 = ka if i2 == 0 else kb
    for j in range(1, top):
        ka, kb = kb, ka + (2.0 * j / s) * kb
        if j + 1 == i0:
            k_i0 = kb
        if j + 1 == i1:
            k_i1 = kb
        if j + 1 == i2:
            k_i2 = kb
    damp = math.exp(-s)
    g0 = s**n * k_i0 * damp if n > 0 else math.nan
    g1 = s ** (n - 1) * k_i1 * damp
    g2 = s**n * k_i2 * damp
    return g0, g1, g2


@njit(cache=True)
def _triplets_nb(s, two_nu, z0, z1, z2):
    n = s.shape[0]
    g0 = np.empty(n)
    g1 = np.empty(n)
    g2 = np.empty(n)
    for i in range(n):
        if s[i] == 0.0 or (two_nu % 2 == 0 and s[i] < SMALL):
            g0[i] = z0
            g1[i] = z1
            g2[i] = z2
        else:
            a, b, c = radial_triplet(s[i], two_nu)
            g0[i] = a
            g1[i] = b
            g2[i] = c
    return g0, g1, g2


# --- pure numpy path -------------------------------------------------------


def _half_np(n, s):
    if n >= 0:
        a = 1.0
        p = np.ones_like(s)
        for k in range(n):
            a = a * (n + k + 1) * (n - k) / (2.0 * (k + 1))
            p = p * s + a
        return SQRT_HALF_PI * np.exp(-s) * p
    if n == -1:
        return SQRT_HALF_PI * np.exp(-s) / s
    return np.full_like(s, np.nan)


def scaled_k01_np(z, chunk=20000):
    z = np.asarray(z, dtype=float)
    out0 = np.empty_like(z)
    out1 = np.empty_like(z)
    flat0 = out0.reshape(-1)
    flat1 = out1.reshape(-1)
    zf = z.reshape(-1)
    for lo in range(0, zf.size, chunk):
        zc = zf[lo : lo + chunk]
        tmax = np.arccosh(1.0 + _TRUNC / zc)
        h = np.minimum(_MAX_STEP, tmax / _MIN_NODES)
        nn = (tmax / h).astype(np.int64) + 1
        j = np.arange(1, nn.max() + 1)
        t = h[:, None] * j[None, :]
        ct = np.cosh(t)
        e = np.exp(-zc[:, None] * (ct - 1.0))
        e[j[None, :] > nn[:, None]] = 0.0
        flat0[lo : lo + chunk] = h * (0.5 + e.sum(axis=1))
        flat1[lo : lo + chunk] = h * (0.5 + (e * ct).sum(axis=1))
    return out0, out1


def _triplets_np(s, two_nu, z0, z1, z2):
    s = np.asarray(s, dtype=float)
    g0 = np.empty_like(s)
    g1 = np.empty_like(s)
    g2 = np.empty_like(s)
    zero = (s < SMALL) if two_nu % 2 == 0 else (s == 0.0)
    g0[zero], g1[zero], g2[zero] = z0, z1, z2
    sp = s[~zero]
    if two_nu % 2 == 1:
        n = (two_nu - 1) // 2
        a = _half_np(n, sp)
        b = _half_np(n - 1, sp)
        c = sp * sp * _half_np(n - 2, sp) if n - 2 >= -1 else np.full_like(sp, np.nan)
    else:
        n = two_nu // 2
        top = max(n, abs(n - 2), 1)
        ek0, ek1 = scaled_k01_np(sp)
        kk = [ek0, ek1]
        for j in range(1, top):
            kk.append(kk[j - 1] + (2.0 * j / sp) * kk[j])
        damp = np.exp(-sp)
        a = sp**n * kk[n] * damp if n > 0 else np.full_like(sp, np.nan)
        b = sp ** (n - 1) * kk[abs(n - 1)] * damp
        c = sp**n * kk[abs(n - 2)] * damp
    g0[~zero], g1[~zero], g2[~zero] = a, b, c
    return g0, g1, g2


def triplets(s, two_nu, use_numba=True):
    """Vectorised radial triplet for an array of nonnegative arguments."""
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = np.ascontiguousarray(s.reshape(-1))
    z0, z1, z2 = limit_at_zero(two_nu)
    if use_numba:
        out = _triplets_nb(s.reshape(-1), two_nu, z0, z1, z2)
    else:
        out = _triplets_np(s.reshape(-1), two_nu, z0, z1, z2)
    return tuple(o.reshape(shape) for o in out)
