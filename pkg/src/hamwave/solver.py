"""Energy-constrained step solvers.

Each solver works on a step object exposing

* ``origin``: the previous coefficients alpha^{k-1};
* ``utb(eta)``: U^T (b(eta) - A origin);
* ``vtd``, ``d_outside``: V^T (d - B origin) and the part of |d - B origin|^2
  outside range(V);
* ``nf(eta)``: the nonlinear energy minus E0;
* ``eta_dependent`` and ``scale`` (|E0|, used for the relative tolerance).

:class:`hamwave.assembly.StepVectors` implements it for the PDE steps and
:class:`FixedStep` for plain matrices. Iterations are counted as linear
solves, so a step that is accepted right away costs one.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import InvalidArgument, SingularShift, StalledDerivative

DAMPING = ("none", "halving")
METHODS = ("newton", "secant", "ls")
_MAX_HALVINGS = 60
_SECANT_OFFSET = 1e-4
_STALL = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    j_max: int = 50
    lambda0: float = 0.0
    damping: str = "halving"
    method: str = "newton"
    relative: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if self.j_max < 1:
            raise InvalidArgument("j_max must be at least 1")
        if self.damping not in DAMPING:
            raise InvalidArgument(f"damping must be one of {DAMPING}")
        if self.method not in METHODS:
            raise InvalidArgument(f"method must be one of {METHODS}")

    def threshold(self, scale):
        return self.tol * (scale if self.relative and scale > 0 else 1.0)


@dataclass
class StepResult:
    alpha: np.ndarray
    lam: float
    iterations: int
    constraint_value: float
    converged: bool


class FixedStep:
    """Step with explicit b and d vectors; ``nf`` maps eta to N_F(eta)."""

    def __init__(self, factors, b, d, nf: Callable, origin=None, scale=1.0, b_of_eta=None):
        n = factors.n
        self.origin = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
        self.factors = factors
        self._b = np.asarray(b, dtype=float)
        self._b_of_eta = b_of_eta
        self.eta_dependent = b_of_eta is not None
        d = np.asarray(d, dtype=float)
        # shift by B origin through the factors: B = V S H^T
        zeta0 = factors.H.T @ self.origin
        self._Ut_A0 = factors.c * zeta0
        self.vtd = factors.V.T @ d - factors.s * zeta0
        self.d_outside = max(0.0, float(d @ d) - float((factors.V.T @ d) @ (factors.V.T @ d)))
        self._nf = nf
        self.scale = scale

    def utb(self, eta=None):
        b = self._b if self._b_of_eta is None else self._b_of_eta(eta)
        return self.factors.U.T @ b - self._Ut_A0

    def nf(self, eta):
        return float(self._nf(eta))


class _Linearization:
    """Diagonal solves for one frozen U^T b and N_F."""

    def __init__(self, factors, step):
        self.F = factors
        self.step = step
        self.cache = linalg.DiagSolveCache(
            factors.c**2, factors.s**2, None, step.vtd, step.d_outside
        )
        # direct residual minus the zeta-space one at the latest iterate
        self.offset = 0.0

    def refresh(self, eta, nf=None):
        self.cache.Utb = self.step.utb(eta)
        self.nf = self.step.nf(eta) if nf is None else nf

    def zeta(self, lam):
        den = self.cache.c2 + lam * self.cache.s2
        return (self.F.c * self.cache.Utb + lam * self.F.s * self.cache.Vtd) / den

    def quadratic(self, zeta):
        r = self.F.s * zeta - self.cache.Vtd
        return float(r @ r) + self.cache.d_outside

    def value(self, lam):
        z = self.zeta(lam)
        return self.quadratic(z) + self.nf + self.offset, z

    def derivative(self, lam, zeta):
        return linalg.constraint_derivative(self.F, self.cache, lam, zeta)

    def admissible(self, lam):
        den = self.cache.c2 + lam * self.cache.s2
        return bool(np.all(den > 1e-14 * (self.cache.c2 + abs(lam) * self.cache.s2)))

    def eta(self, zeta):
        return self.step.origin + self.F.solve_Ht(zeta)

    def residual(self, eta, nf):
        """Constraint value at eta; sets the offset that aligns the model with it."""
        model = self.quadratic(self.F.H.T @ (eta - self.step.origin)) + nf
        direct = getattr(self.step, "constraint", None)
        if direct is None:
            self.offset = 0.0
            return model
        value = direct(eta, nf)
        self.offset = value - model
        return value


def _factors(system):
    return system.gsvd if hasattr(system, "gsvd") else system


def _damp(lin, lam_new, lam_old, policy):
    if lin.admissible(lam_new):
        return lam_new
    if policy == "none":
        den = lin.cache.c2 + lam_new * lin.cache.s2
        i = int(np.argmin(den))
        raise SingularShift(f"c^2 + lam s^2 is not positive at index {i} (lam={lam_new:.6g})", index=i)
    for _ in range(_MAX_HALVINGS):
        lam_new = 0.5 * (lam_new + lam_old)
        if lin.admissible(lam_new):
            return lam_new
    raise SingularShift(f"damping could not restore positive denominators near lam={lam_old:.6g}", index=-1)


def _ec_step(system, step, config, warm, update):
    F = _factors(system)
    lin = _Linearization(F, step)
    eta = step.origin if warm is None or warm[0] is None else np.asarray(warm[0], dtype=float)
    lam = config.lambda0 if warm is None else float(warm[1])
    thr = config.threshold(step.scale)

    lin.refresh(eta)
    if not lin.admissible(lam):
        raise SingularShift(f"initial multiplier {lam} gives a nonpositive denominator", index=-1)
    zeta = lin.zeta(lam)
    eta = lin.eta(zeta)
    nf = step.nf(eta)
    res = lin.residual(eta, nf)
    solves = 1
    state = {}
    j = 0
    while j < config.j_max and abs(res) > thr:
        j += 1
        # relinearize at the newest iterate, then move the multiplier
        if step.eta_dependent:
            lin.refresh(eta, nf)
        else:
            lin.nf = nf
        try:
            lam_new = update(lin, lam, state)
        except StalledDerivative:
            # a flat constraint after progress means rounding noise: keep the iterate
            if j == 1:
                raise
            break
        lam_new = _damp(lin, lam_new, lam, config.damping)
        lam = lam_new
        zeta = lin.zeta(lam)
        eta = lin.eta(zeta)
        nf = step.nf(eta)
        res = lin.residual(eta, nf)
        solves += 1
    return StepResult(eta, float(lam), solves, float(res), bool(abs(res) <= thr))


def _newton_update(lin, lam, state):
    C, z = lin.value(lam)
    dC = lin.derivative(lam, z)
    if abs(dC) < _STALL:
        raise StalledDerivative(f"constraint derivative {dC:.3g} at lam={lam:.6g}")
    return lam - C / dC


def _secant_update(lin, lam, state):
    C, _ = lin.value(lam)
    if "prev" not in state:
        lam_prev = lam + _SECANT_OFFSET
        C_prev, _ = lin.value(lam_prev)
    else:
        lam_prev, C_prev = state["prev"]
    denom = C - C_prev
    if denom == 0.0 or abs(denom) < _STALL * abs(lam - lam_prev):
        raise StalledDerivative(f"secant slope vanished at lam={lam:.6g}")
    state["prev"] = (lam, C)
    return lam - C * (lam - lam_prev) / denom


def ec_newton_step(system, step, config, warm=None):
    """Newton iteration on the multiplier with successive linearization."""
    return _ec_step(system, step, config, warm, _newton_update)


def ec_secant_step(system, step, config, warm=None):
    """Same loop as :func:`ec_newton_step` with a secant multiplier update."""
    return _ec_step(system, step, config, warm, _secant_update)


def ls_step(system, step, config, warm=None):
    """Unconstrained least squares, relinearized until the iterate settles."""
    F = _factors(system)
    lin = _Linearization(F, step)
    eta = step.origin if warm is None else np.asarray(warm, dtype=float)
    lin.refresh(eta, nf=0.0)
    eta = lin.eta(lin.zeta(0.0))
    solves = 1
    converged = not step.eta_dependent
    while not converged and solves <= config.j_max:
        lin.refresh(eta, nf=0.0)
        new = lin.eta(lin.zeta(0.0))
        solves += 1
        converged = np.linalg.norm(new - eta) <= config.tol * max(1.0, np.linalg.norm(new))
        eta = new
    res = lin.quadratic(F.H.T @ (eta - step.origin)) + step.nf(eta)
    return StepResult(eta, 0.0, solves, float(res), bool(converged))


def solve_step(system, step, config, warm=None):
    if config.method == "newton":
        return ec_newton_step(system, step, config, warm)
    if config.method == "secant":
        return ec_secant_step(system, step, config, warm)
    return ls_step(system, step, config, None if warm is None else warm[0])


def lagrange_residual(factors, step, alpha, lam):
    """|C'(C H'x - U'b~(alpha)) + lam S'(S H'x - V'd~)| with x = alpha - origin."""
    zeta = factors.H.T @ (np.asarray(alpha) - step.origin)
    utb = step.utb(alpha)
    r = factors.c * (factors.c * zeta - utb) + lam * factors.s * (factors.s * zeta - step.vtd)
    return float(np.linalg.norm(r))
