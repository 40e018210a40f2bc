"""GSVD of the pair (A, B) and the multiplier-shifted diagonal solve.

The factorization follows the QR + CS-decomposition route: stack the two
triangular factors, take a thin QR of the stack and split its orthonormal
factor into a top part Q1 and a bottom part Q2 with Q1'Q1 + Q2'Q2 = I. An
SVD of Q1 gives U, C and the right rotation; the columns where C is small
get V by normalizing Q2 Z, the others get V from a second SVD so that both
U and V stay orthonormal to working precision.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FactorizationFailure, InvalidArgument, SingularShift

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class GsvdFactors:
    """A = U diag(c) H^T and B = V diag(s) H^T with c**2 + s**2 = 1."""

    U: np.ndarray
    V: np.ndarray
    c: np.ndarray
    s: np.ndarray
    H: np.ndarray
    H_inv_T: np.ndarray
    Zn: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.c.shape[0]

    def solve_Ht(self, zeta):
        """x with H^T x = zeta; a triangular solve when R and Zn are known."""
        if self.R is None:
            return self.H_inv_T @ zeta
        # H^T = Zn^T R, so R x = Zn zeta; backward stable unlike the inverse
        return solve_triangular(self.R, self.Zn @ zeta)


@dataclass
class DiagSolveCache:
    """Per-step projections of the right-hand sides.

    ``Utb`` = U^T b and ``Vtd`` = V^T d; ``d_outside`` = |d|^2 - |V^T d|^2 is
    the part of |B eta - d|^2 that no choice of eta can remove.
    """

    c2: np.ndarray
    s2: np.ndarray
    Utb: np.ndarray
    Vtd: np.ndarray
    d_outside: float = 0.0

    def set_b(self, factors, b):
        self.Utb = factors.U.T @ b

    def set_d(self, factors, d):
        self.Vtd = factors.V.T @ d
        self.d_outside = max(0.0, float(d @ d) - float(self.Vtd @ self.Vtd))


def make_cache(factors, b=None, d=None):
    n = factors.n
    cache = DiagSolveCache(factors.c**2, factors.s**2, np.zeros(n), np.zeros(n), 0.0)
    if b is not None:
        cache.set_b(factors, b)
    if d is not None:
        cache.set_d(factors, d)
    return cache


def qr_prefactor(A):
    """Thin QR with a rank check on the diagonal of R."""
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if m < n:
        raise InvalidArgument(f"thin QR needs at least as many rows as columns ({m} < {n})")
    Q, R = np.linalg.qr(A, mode="reduced")
    diag = np.abs(np.diag(R))
    scale = diag.max() if n else 0.0
    if n and (scale == 0.0 or diag.min() <= n * np.finfo(float).eps * scale):
        raise FactorizationFailure(
            "matrix is numerically rank deficient", rank=int(np.sum(diag > n * np.finfo(float).eps * scale))
        )
    return Q, R


def _reduce(M):
    # orthonormal Q (or None when the matrix is already short) and square-ish R
    m, n = M.shape
    if m <= n:
        return None, M
    return np.linalg.qr(M, mode="reduced")


def gsvd(A, B):
    """Generalized SVD of a tall A (m x n) and B (p x n), p >= n or B == 0."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m, n = A.shape
    if B.ndim != 2 or B.shape[1] != n:
        raise InvalidArgument("A and B must have the same number of columns")
    if m < n:
        raise InvalidArgument(f"A must have at least as many rows as columns ({m} < {n})")

    Qa, Ra = _reduce(A)
    Qb, Rb = _reduce(B)
    ka = Ra.shape[0]
    Q, R = np.linalg.qr(np.vstack([Ra, Rb]), mode="reduced")
    sv = np.linalg.svd(R, compute_uv=False)
    tol = max(Q.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    if rank < n:
        raise FactorizationFailure(
            f"stacked matrix [A; B] has numerical rank {rank} < {n}",
            rank=rank,
            cond=float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf,
        )
    Q1, Q2 = Q[:ka], Q[ka:]

    U1, c, Zt = np.linalg.svd(Q1, full_matrices=False)
    Z = Zt.T
    c = np.minimum(c, 1.0)
    k = int(np.sum(c > _INV_SQRT2))

    # columns with s >= 1/sqrt(2): V by normalization is accurate
    WL = Q2 @ Z[:, k:]
    sL = np.linalg.norm(WL, axis=0)
    VL = WL / sL
    UL = U1[:, k:]
    cL = c[k:]

    # columns with small s: SVD of the bottom block, U by normalization
    if k:
        WS = Q2 @ Z[:, :k]
        if WS.shape[0] < k:
            raise InvalidArgument("B needs at least as many rows as there are small generalized values")
        VS, sS, Yt = np.linalg.svd(WS, full_matrices=False)
        ZS = Z[:, :k] @ Yt.T
        if VL.shape[1]:
            # tiny s leave VS accurate only to eps/s against VL; the
            # correction moves B by s * (eps/s), which is harmless
            VS = VS - VL @ (VL.T @ VS)
            VS, Rs = np.linalg.qr(VS)
            VS = VS * np.where(np.diag(Rs) < 0, -1.0, 1.0)
        XS = Q1 @ ZS
        cS = np.linalg.norm(XS, axis=0)
        US = XS / cS
    else:
        VS = np.zeros((Q2.shape[0], 0))
        US = np.zeros((Q1.shape[0], 0))
        ZS = Z[:, :0]
        sS = cS = np.zeros(0)

    U = np.hstack([US, UL])
    V = np.hstack([VS, VL])
    c = np.concatenate([cS, cL])
    s = np.concatenate([sS, sL])
    Zn = np.hstack([ZS, Z[:, k:]])
    rho = np.hypot(c, s)
    c, s = c / rho, s / rho

    Ht = Zn.T @ R
    H = Ht.T
    H_inv_T = np.linalg.solve(Ht, np.eye(n))
    if Qa is not None:
        U = Qa @ U
    if Qb is not None:
        V = Qb @ V
    return GsvdFactors(U, V, c, s, H, H_inv_T, Zn, R)


def shifted_denominators(cache, lam):
    return cache.c2 + lam * cache.s2


def diag_solve(factors, cache, lam):
    """Solve (C'C + lam S'S) zeta = C'U'b + lam S'V'd; return (zeta, eta)."""
    den = shifted_denominators(cache, lam)
    small = np.abs(den) <= 1e-14 * (cache.c2 + abs(lam) * cache.s2)
    if np.any(small):
        i = int(np.flatnonzero(small)[0])
        raise SingularShift(f"c^2 + lam s^2 vanishes at index {i} (lam={lam:.6g})", index=i)
    zeta = (factors.c * cache.Utb + lam * factors.s * cache.Vtd) / den
    return zeta, factors.solve_Ht(zeta)


def constraint_residual(factors, cache, zeta, nf_value, d=None):
    """|S zeta - V'd|^2 + (|d|^2 - |V'd|^2) + N_F.

    Equal to |B eta - d|^2 + N_F for eta = H^{-T} zeta.
    """
    if d is not None:
        cache.set_d(factors, d)
    r = factors.s * zeta - cache.Vtd
    return float(r @ r) + cache.d_outside + float(nf_value)


def constraint_derivative(factors, cache, lam, zeta):
    """d/dlam of the constraint residual with N_F held fixed."""
    den = shifted_denominators(cache, lam)
    s = factors.s
    dzeta = (s * cache.Vtd - cache.s2 * zeta) / den
    return float(2.0 * np.sum((s * zeta - cache.Vtd) * s * dzeta))
