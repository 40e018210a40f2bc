"""The four benchmark wave equations u_tt - lap u + F'(u) = 0."""

from dataclasses import dataclass
import math
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument, Unsupported
from .geometry import Domain

PROBLEM_IDS = ("pde1", "pde2", "pde3", "pde4")
ZETA = 0.9


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    description: str
    domain: Domain
    bc: str  # "dirichlet" or "neumann"
    g: Callable  # g(points, t) -> boundary data
    fprime: Callable
    f: Callable
    psi0: Callable
    psi1: Callable
    exact: Optional[Callable] = None
    exact_E0: Optional[float] = None
    default_T: float = 1.0
    linear: bool = False

    @property
    def dimension(self):
        return self.domain.dimension


def _x(points, d):
    return np.asarray(points, dtype=float).reshape(-1, d)


# PDE 1: linear wave on the unit square, u = 1 on the boundary
def _pde1():
    c = math.sqrt(2.0) * math.pi

    def exact(p, t):
        p = _x(p, 2)
        return math.sin(c * t) * np.sin(math.pi * p[:, 0]) * np.sin(math.pi * p[:, 1]) + 1.0

    def psi1(p):
        p = _x(p, 2)
        return c * np.sin(math.pi * p[:, 0]) * np.sin(math.pi * p[:, 1])

    return ProblemSpec(
        id="pde1",
        description="2D linear wave equation on (0,1)^2, Dirichlet u = 1",
        domain=Domain.rectangle((0, 1), (0, 1)),
        bc="dirichlet",
        g=lambda p, t: np.ones(len(_x(p, 2))),
        fprime=_zero,
        f=_zero,
        psi0=lambda p: np.ones(len(_x(p, 2))),
        psi1=psi1,
        exact=exact,
        exact_E0=math.pi**2 / 4.0,
        default_T=100.0,
        linear=True,
    )


# PDE 2: sine-Gordon kink-antikink pair on (-20, 20), homogeneous Neumann
def sine_gordon_exact(x, t, zeta=ZETA):
    a = math.sqrt(1.0 - zeta**2)
    x = np.asarray(x, dtype=float)
    return 4.0 * np.arctan(np.sinh(zeta * t / a) / (zeta * np.cosh(x / a)))


def sine_gordon_velocity(x, t, zeta=ZETA):
    """Closed-form time derivative of :func:`sine_gordon_exact`."""
    a = math.sqrt(1.0 - zeta**2)
    x = np.asarray(x, dtype=float)
    q = np.sinh(zeta * t / a) / (zeta * np.cosh(x / a))
    dq = np.cosh(zeta * t / a) / (a * np.cosh(x / a))
    return 4.0 * dq / (1.0 + q * q)


def _pde2():
    return ProblemSpec(
        id="pde2",
        description="1D sine-Gordon equation on (-20,20), Neumann u_x = 0",
        domain=Domain.interval(-20, 20),
        bc="neumann",
        g=lambda p, t: np.zeros(len(_x(p, 1))),
        fprime=np.sin,
        f=lambda u: 1.0 - np.cos(u),
        psi0=lambda p: sine_gordon_exact(_x(p, 1)[:, 0], 0.0),
        psi1=lambda p: sine_gordon_velocity(_x(p, 1)[:, 0], 0.0),
        exact=lambda p, t: sine_gordon_exact(_x(p, 1)[:, 0], t),
        exact_E0=16.0 / math.sqrt(1.0 - ZETA**2),
        default_T=15.0,
    )


def _sech(x):
    return 1.0 / np.cosh(x)


def _pde3():
    def psi0(p):
        p = _x(p, 2)
        with np.errstate(over="ignore"):
            return 2.0 * _sech(np.cosh(p[:, 0] ** 2 + p[:, 1] ** 2))

    return ProblemSpec(
        id="pde3",
        description="2D cubic Klein-Gordon equation on the disk r < 10, Dirichlet u = 0",
        domain=Domain.disk((0.0, 0.0), 10.0),
        bc="dirichlet",
        g=lambda p, t: np.zeros(len(_x(p, 2))),
        fprime=lambda u: np.asarray(u) ** 3,
        f=lambda u: np.asarray(u) ** 4 / 4.0,
        psi0=psi0,
        psi1=lambda p: np.zeros(len(_x(p, 2))),
        default_T=7.0,
    )


def _pde4():
    def psi0(p):
        p = _x(p, 2)
        with np.errstate(over="ignore"):
            return 0.5 * _sech(np.cosh(p[:, 0])) + 0.5 * _sech(np.cosh(p[:, 1]))

    return ProblemSpec(
        id="pde4",
        description="2D quintic Klein-Gordon equation on (-10,10)^2, Neumann du/dn = 0",
        domain=Domain.rectangle((-10, 10), (-10, 10)),
        bc="neumann",
        g=lambda p, t: np.zeros(len(_x(p, 2))),
        fprime=lambda u: np.asarray(u) ** 5,
        f=lambda u: np.asarray(u) ** 6 / 6.0,
        psi0=psi0,
        psi1=lambda p: np.zeros(len(_x(p, 2))),
        default_T=20.0,
    )


_BUILDERS = {"pde1": _pde1, "pde2": _pde2, "pde3": _pde3, "pde4": _pde4}


def builtin(problem_id):
    try:
        return _BUILDERS[problem_id]()
    except KeyError:
        raise InvalidArgument(
            f"unknown problem id {problem_id!r}; choose from {', '.join(PROBLEM_IDS)}"
        ) from None


def eval_exact(spec, x, t):
    if spec.exact is None:
        raise Unsupported(f"{spec.id} has no closed-form solution")
    return spec.exact(x, t)


def eval_ic(spec, x):
    return spec.psi0(x), spec.psi1(x)


def eval_bc(spec, y, t):
    return spec.g(y, t)
