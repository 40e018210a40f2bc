"""Whittle-Matern-Sobolev kernel and its derivatives.

The kernel is Phi(x, z) = (eps r)**nu K_nu(eps r) with r = |x - z| and
nu = m - d/2. Writing g_mu(s) = s**mu K_mu(s) and s = eps r,

    grad_x Phi  = -eps**2 g_{nu-1}(s) (x - z)
    lap_x Phi   =  eps**2 (s**2 g_{nu-2}(s) - d g_{nu-1}(s))

which follows from d/ds g_mu(s) = -s g_{mu-1}(s).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial.distance import cdist

from . import _bessel
from ._accel import HAVE_NUMBA, njit
from .errors import InvalidArgument, Unsupported

OPERATORS = ("identity", "grad", "laplacian", "normal")


@dataclass(frozen=True)
class KernelSpec:
    m: int
    epsilon: float
    d: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidArgument(f"dimension must be 1 or 2, got {self.d}")
        if self.epsilon <= 0:
            raise InvalidArgument(f"shape parameter must be positive, got {self.epsilon}")
        if 2 * self.m <= self.d:
            raise InvalidArgument(f"smoothness order m={self.m} must exceed d/2")

    @property
    def nu(self):
        return self.m - 0.5 * self.d

    @property
    def two_nu(self):
        return 2 * self.m - self.d

    def require(self, order):
        """Check that derivatives up to ``order`` (1 or 2) exist."""
        if order == 1 and self.nu < 1:
            raise Unsupported(f"gradient needs nu >= 1, have nu={self.nu}")
        if order == 2 and self.nu < 2:
            raise Unsupported(f"Laplacian needs nu >= 2, have nu={self.nu}")


def _triplets(spec, s):
    return _bessel.triplets(s, spec.two_nu, use_numba=HAVE_NUMBA)


def phi(spec, r):
    """Kernel value as a function of distance; works on scalars and arrays."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidArgument("distance must be nonnegative")
    g0, _, _ = _triplets(spec, spec.epsilon * r)
    return g0 if g0.ndim else float(g0)


def phi_grad(spec, x, z):
    spec.require(1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    diff = x - z
    r = math.sqrt(float(diff @ diff))
    if r == 0.0:
        return np.zeros_like(diff)
    _, g1, _ = _triplets(spec, np.array([spec.epsilon * r]))
    return -spec.epsilon**2 * g1[0] * diff


def phi_laplacian(spec, x, z):
    spec.require(2)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    diff = x - z
    r = math.sqrt(float(diff @ diff))
    _, g1, g2 = _triplets(spec, np.array([spec.epsilon * r]))
    return float(spec.epsilon**2 * (g2[0] - spec.d * g1[0]))


def phi_normal(spec, x_boundary, z, normal):
    normal = np.atleast_1d(np.asarray(normal, dtype=float))
    if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
        raise InvalidArgument("normal must have unit length")
    return float(normal @ phi_grad(spec, x_boundary, z))


@njit(cache=True)
def _blocks_nb(left, right, eps, two_nu, z0, z1, z2, want_grad, want_lap):
    n, d = left.shape
    m = right.shape[0]
    val = np.empty((n, m))
    grad = np.empty((d, n if want_grad else 0, m if want_grad else 0))
    lap = np.empty((n if want_lap else 0, m if want_lap else 0))
    e2 = eps * eps
    for i in range(n):
        for j in range(m):
            r2 = 0.0
            for a in range(d):
                t = left[i, a] - right[j, a]
                r2 += t * t
            s = eps * math.sqrt(r2)
            if s == 0.0:
                g0, g1, g2 = z0, z1, z2
            else:
                g0, g1, g2 = _bessel.radial_triplet(s, two_nu)
            val[i, j] = g0
            if want_grad:
                for a in range(d):
                    if s == 0.0:
                        grad[a, i, j] = 0.0
                    else:
                        grad[a, i, j] = -e2 * g1 * (left[i, a] - right[j, a])
            if want_lap:
                lap[i, j] = e2 * (g2 - d * g1)
    return val, grad, lap


def _blocks_np(left, right, eps, two_nu, want_grad, want_lap, chunk=200_000):
    n, d = left.shape
    m = right.shape[0]
    val = np.empty((n, m))
    grad = np.empty((d, n, m)) if want_grad else None
    lap = np.empty((n, m)) if want_lap else None
    rows = max(1, chunk // max(m, 1))
    for lo in range(0, n, rows):
        hi = min(n, lo + rows)
        diff = left[lo:hi, None, :] - right[None, :, :]
        s = eps * np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        g0, g1, g2 = _bessel.triplets(s, two_nu, use_numba=False)
        val[lo:hi] = g0
        if want_grad:
            coef = np.where(s == 0.0, 0.0, -eps * eps * g1)
            for a in range(d):
                grad[a, lo:hi] = coef * diff[:, :, a]
        if want_lap:
            lap[lo:hi] = eps * eps * (g2 - d * g1)
    return val, grad, lap


_DEDUP_MIN_SIZE = 1_000_000
_DEDUP_PROBE = 50_000


def _blocks_dedup(left, right, eps, two_nu, want_grad, want_lap, use_numba):
    """Evaluate the radial triplet once per distinct distance.

    Grid-on-grid blocks have few distinct distances, so this is exact and
    much cheaper. Returns None when a sample shows little repetition.
    """
    s = eps * cdist(left, right)
    flat = s.reshape(-1)
    rng = np.random.default_rng(0)
    probe = flat[rng.integers(0, flat.size, min(flat.size, _DEDUP_PROBE))]
    if np.unique(probe).size > 0.5 * probe.size:
        return None
    u, inv = np.unique(flat, return_inverse=True)
    g0, g1, g2 = _bessel.triplets(u, two_nu, use_numba=use_numba)
    val = g0[inv].reshape(s.shape)
    grad = lap = None
    e2 = eps * eps
    if want_grad:
        coef = np.where(u == 0.0, 0.0, -e2 * g1)[inv].reshape(s.shape)
        grad = np.empty((left.shape[1],) + s.shape)
        for a in range(left.shape[1]):
            np.multiply(coef, left[:, a, None] - right[None, :, a], out=grad[a])
    if want_lap:
        lap = (e2 * (g2 - left.shape[1] * g1))[inv].reshape(s.shape)
    return val, grad, lap


def kernel_blocks(spec, left, right, grad=False, laplacian=False, use_numba=None):
    """Value, gradient (d x n x m) and Laplacian matrices in one sweep.

    Entry (i, j) is the operator applied to Phi(., right[j]) at left[i].
    Blocks that were not requested are returned as None.
    """
    left = np.ascontiguousarray(np.asarray(left, dtype=float).reshape(-1, spec.d))
    right = np.ascontiguousarray(np.asarray(right, dtype=float).reshape(-1, spec.d))
    if grad:
        spec.require(1)
    if laplacian:
        spec.require(2)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if left.shape[0] * right.shape[0] >= _DEDUP_MIN_SIZE:
        out = _blocks_dedup(
            left, right, float(spec.epsilon), spec.two_nu, grad, laplacian, use_numba
        )
        if out is not None:
            return out
    if use_numba:
        z0, z1, z2 = _bessel.limit_at_zero(spec.two_nu)
        val, g, lap = _blocks_nb(
            left, right, float(spec.epsilon), spec.two_nu, z0, z1, z2, grad, laplacian
        )
        return val, (g if grad else None), (lap if laplacian else None)
    return _blocks_np(left, right, float(spec.epsilon), spec.two_nu, grad, laplacian)


def kernel_matrix(spec, operator, left, right, axis=None, normals=None):
    """Dense evaluation matrix of one operator applied to the kernel.

    ``operator`` is one of ``identity``, ``grad`` (with ``axis``),
    ``laplacian`` or ``normal`` (with one unit ``normals`` row per left point).
    """
    if operator == "identity":
        return kernel_blocks(spec, left, right)[0]
    if operator == "laplacian":
        return kernel_blocks(spec, left, right, laplacian=True)[2]
    if operator == "grad":
        if axis is None or not 0 <= axis < spec.d:
            raise InvalidArgument("grad operator needs an axis in [0, d)")
        return kernel_blocks(spec, left, right, grad=True)[1][axis]
    if operator == "normal":
        if normals is None:
            raise InvalidArgument("normal operator needs normals")
        normals = np.asarray(normals, dtype=float).reshape(-1, spec.d)
        if np.any(np.abs(np.linalg.norm(normals, axis=1) - 1.0) > 1e-12):
            raise InvalidArgument("normals must have unit length")
        g = kernel_blocks(spec, left, right, grad=True)[1]
        return np.einsum("ia,aij->ij", normals, g)
    raise InvalidArgument(f"unknown operator {operator!r}; expected one of {OPERATORS}")
