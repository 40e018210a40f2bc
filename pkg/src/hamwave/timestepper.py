"""Run a full simulation: setup, the per-step solve loop and the metrics."""

from dataclasses import asdict, dataclass, field, replace
import math
import time
from typing import Optional

import numpy as np

from . import assembly
from .assembly import History, StepVectors, effective_scheme
from .errors import HamwaveError, InvalidArgument, StateError, Unsupported
from .geometry import (
    PointSet,
    disk_collocation,
    fill_distance,
    halton_points,
    outward_normals,
    quadrature_grid,
    split_boundary,
    uniform_grid,
)
from .kernel import KernelSpec
from .problems import builtin
from .solver import SolverConfig, solve_step

DISTRIBUTIONS = ("uniform", "halton")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "pde1"
    scheme: str = "CN"
    tau: float = 0.01
    T: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    m: int = 4
    epsilon: float = 2.0
    theta: float = 1.5
    n_Z: int = 121
    gamma: float = 4.0
    n_P: int = 10201
    distribution: str = "uniform"
    record_every: int = 1
    dual_energy: bool = False

    def __post_init__(self):
        if self.tau <= 0 or self.T <= 0:
            raise InvalidArgument("tau and T must be positive")
        K = self.T / self.tau
        if abs(K - round(K)) > 1e-9 * max(1.0, K) or round(K) < 1:
            raise InvalidArgument(f"T/tau = {K:.12g} is not a positive integer")
        if self.gamma < 1:
            raise InvalidArgument("oversampling ratio must be at least 1")
        if self.theta < 0:
            raise InvalidArgument("theta must be nonnegative")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidArgument(f"distribution must be one of {DISTRIBUTIONS}")
        if self.record_every < 1:
            raise InvalidArgument("record_every must be at least 1")
        if self.scheme not in assembly.SCHEMES:
            raise InvalidArgument(f"scheme must be one of {assembly.SCHEMES}")
        if self.n_Z < 2 or self.n_P < 2:
            raise InvalidArgument("n_Z and n_P must be at least 2")

    @property
    def steps(self):
        return int(round(self.T / self.tau))

    def kernel(self, d):
        return KernelSpec(self.m, self.epsilon, d)


@dataclass
class PointSets:
    Z: PointSet
    X: PointSet
    Y: PointSet
    P: PointSet
    normals: Optional[np.ndarray]


def _per_dim(n, d):
    k = int(round(n ** (1.0 / d)))
    return max(k, 2)


def _disk_set(domain, target):
    """Grid points well inside the disk plus an equiangular ring, about ``target`` in all."""
    best = None
    for n in range(4, 400):
        spacing = 2.0 * domain.radius / (n - 1)
        ring = max(8, int(round(2.0 * math.pi * domain.radius / spacing)))
        inner, circle = disk_collocation(domain, n, ring)
        total = len(inner) + len(circle)
        if best is None or abs(total - target) < abs(best[0] - target):
            best = (total, inner, circle)
        if total > 2 * target:
            break
    return best[1], best[2]


def build_points(problem, config):
    dom = problem.domain
    d = dom.dimension
    n_xy = int(round(config.gamma * config.n_Z))
    if dom.kind == "disk":
        if config.distribution != "uniform":
            raise Unsupported("only uniform points are available on the disk")
        zi, zb = _disk_set(dom, config.n_Z)
        Z = PointSet(np.vstack([zi.points, zb.points]), "interior")
        X, Y = _disk_set(dom, n_xy)
        P = quadrature_grid(dom, _per_dim(config.n_P, d))
    else:
        P = quadrature_grid(dom, _per_dim(config.n_P, d))
        if config.distribution == "uniform":
            Z = uniform_grid(dom, _per_dim(config.n_Z, d))
            X, Y = split_boundary(uniform_grid(dom, _per_dim(n_xy, d)), dom)
        else:
            # boundary rows stay on the uniform grid; the rest is quasi-random
            _, Y = split_boundary(uniform_grid(dom, _per_dim(n_xy, d)), dom)
            Z = halton_points(dom, config.n_Z)
            X = halton_points(dom, n_xy - len(Y), skip=config.n_Z)
    normals = outward_normals(Y, dom) if problem.bc == "neumann" else None
    return PointSets(Z, X, Y, P, normals)


@dataclass
class StepRecord:
    step: int
    time: float
    l2_error: Optional[float]
    energy_error: float
    energy_error_uv: Optional[float]
    iterations: int
    lam: float
    converged: bool


@dataclass
class SimState:
    k: int
    history: History
    lam: float
    E0: float
    total_iterations: int = 0
    records: list = field(default_factory=list)
    max_energy_error: float = 0.0
    max_dual_gap: float = 0.0
    nonconverged: int = 0
    failures: list = field(default_factory=list)

    @property
    def alpha(self):
        return self.history.back(1).alpha

    def to_arrays(self):
        """Plain arrays and scalars; coefficient snapshots are rebuilt on load."""
        snaps = self.history.snapshots
        alphas = np.array([s.alpha for s in snaps])
        # accumulated gradient values carry their own rounding; keep them
        acc = [s.rg if s.rg is not None else s.bg for s in snaps]
        meta = {
            "k": self.k,
            "lam": self.lam,
            "E0": self.E0,
            "total_iterations": self.total_iterations,
            "max_energy_error": self.max_energy_error,
            "max_dual_gap": self.max_dual_gap,
            "nonconverged": self.nonconverged,
        }
        return {"alphas": alphas, "grads": np.array(acc), "v0_alpha": self.history.v0_alpha, "meta": meta}

    def save(self, path):
        arr = self.to_arrays()
        meta = arr["meta"]
        np.savez(
            path,
            alphas=arr["alphas"],
            grads=arr["grads"],
            v0_alpha=arr["v0_alpha"],
            meta_keys=np.array(list(meta)),
            meta_vals=np.array([float(v) for v in meta.values()]),
        )

    @classmethod
    def load(cls, path, system):
        with np.load(path) as f:
            meta = dict(zip(f["meta_keys"].tolist(), f["meta_vals"].tolist()))
            alphas = f["alphas"]
            grads = f["grads"]
            v0_alpha = f["v0_alpha"]
        hist = _history_from(system, list(alphas), v0_alpha, list(grads))
        return cls(
            k=int(meta["k"]),
            history=hist,
            lam=meta["lam"],
            E0=meta["E0"],
            total_iterations=int(meta["total_iterations"]),
            max_energy_error=meta["max_energy_error"],
            max_dual_gap=meta["max_dual_gap"],
            nonconverged=int(meta["nonconverged"]),
        )


def _history_from(system, alphas, v0_alpha, grads=None):
    hist = History([], v0_alpha, system.phi_X @ v0_alpha, system.phi_P @ v0_alpha)
    prev = None
    for i, a in enumerate(alphas):
        prev = system.snapshot(a, prev)
        if grads is not None:
            if prev.rg is not None:
                prev.rg = np.array(grads[i])
            else:
                prev.bg = np.array(grads[i])
        hist.push(prev)
    return hist


@dataclass
class Simulation:
    """Everything a run needs besides the mutable state."""

    problem: object
    config: RunConfig
    points: PointSets
    system: assembly.CollocationSystem
    setup_seconds: float


@dataclass
class RunReport:
    records: list
    total_iterations: int
    cpu_seconds: float
    setup_seconds: float
    final_l2: Optional[float]
    final_energy_error: float
    final_energy_error_uv: Optional[float]
    max_energy_error: float
    max_dual_gap: float
    nonconverged_steps: int
    steps: int
    E0: float
    alpha: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def converged(self):
        return self.nonconverged_steps == 0

    def summary(self):
        out = {k: v for k, v in asdict(self).items() if k not in ("records", "alpha")}
        out["converged"] = self.converged
        return out


def initialize(problem, config, keep_A=False, compact=True):
    """Build points, factor the system and interpolate the initial data."""
    if isinstance(problem, str):
        problem = builtin(problem)
    t0 = time.perf_counter()
    pts = build_points(problem, config)
    spec = config.kernel(problem.dimension)
    system = assembly.build_system(
        spec,
        pts.Z,
        pts.X,
        pts.Y,
        pts.P,
        problem.bc,
        config.tau,
        config.theta,
        normals=pts.normals,
        keep_A=keep_A,
    )
    if compact and problem.linear:
        system.enable_compact()
    alpha0 = assembly.interpolate(problem.psi0, pts.Z, spec)
    v0_alpha = assembly.interpolate(problem.psi1, pts.Z, spec)
    if problem.exact_E0 is not None:
        E0 = assembly.initial_energy(problem, mode="analytic")
    else:
        E0 = assembly.initial_energy(problem, system, "interpolant", alpha0, v0_alpha)
    state = SimState(k=0, history=_history_from(system, [alpha0], v0_alpha), lam=0.0, E0=E0)
    sim = Simulation(problem, config, pts, system, time.perf_counter() - t0)
    return state, sim


def l2_error(alpha, problem, t, system, P):
    """Relative trapezoid-weighted L2 error against the exact solution."""
    if problem.exact is None:
        raise Unsupported(f"{problem.id} has no exact solution")
    exact = problem.exact(P.points, t)
    u = system.phi_P @ alpha
    w = system.W
    den = float(w @ (exact * exact))
    if den == 0.0:
        raise InvalidArgument("exact solution vanishes on the evaluation set")
    return math.sqrt(float(w @ ((exact - u) ** 2)) / den)


def energy_error(E, E0):
    if E0 == 0:
        raise InvalidArgument("relative energy error needs a nonzero E0")
    return abs(E - E0) / abs(E0)


def dual_energy(sim, step, alpha, snap=None):
    """Energy from pointwise u, v and grad u at P (independent of the solver path)."""
    system = sim.system
    uP = snap.uP if snap is not None and snap.uP is not None else system.phi_P @ alpha
    bg = snap.bg if snap is not None and snap.bg is not None else system.B[system.n_P :] @ alpha
    v = step.velocity(alpha, snap)
    return assembly.semi_energy(uP, v, system.unscale_grad(bg), system.W, sim.problem)


def make_step(state, sim):
    k = state.k + 1
    t = k * sim.config.tau
    return StepVectors(sim.system, sim.problem, sim.config.scheme, k, state.history, t, state.E0)


def advance(state, sim):
    """Take one step and record its metrics. The state is updated in place."""
    cfg = sim.config
    step = make_step(state, sim)
    k = step.k
    t = k * cfg.tau
    try:
        res = solve_step(sim.system, step, cfg.solver, (step.origin, cfg.solver.lambda0))
    except HamwaveError as exc:
        # keep going from the last iterate; the step is flagged
        state.failures.append(f"step {k}: {exc}")
        res = None
    if res is None:
        alpha, lam, its, conv = step.origin.copy(), state.lam, 1, False
    else:
        alpha, lam, its, conv = res.alpha, res.lam, res.iterations, res.converged

    linear = sim.problem.linear
    snap = sim.system.snapshot(
        alpha, state.history.back(1), uP=step.cached_u(alpha), with_uP=not linear
    )
    E = step.energy(alpha, snap)
    e_err = energy_error(E, state.E0)
    recorded = k % cfg.record_every == 0 or k == cfg.steps
    e_uv = None
    if cfg.dual_energy and recorded:
        e_uv = energy_error(dual_energy(sim, step, alpha, snap), state.E0)
        state.max_dual_gap = max(state.max_dual_gap, abs(e_err - e_uv))

    state.history.push(snap)
    state.k = k
    state.lam = lam
    state.total_iterations += its
    state.max_energy_error = max(state.max_energy_error, e_err)
    if not conv:
        state.nonconverged += 1
    if recorded:
        l2 = l2_error(alpha, sim.problem, t, sim.system, sim.points.P) if sim.problem.exact else None
        state.records.append(StepRecord(k, t, l2, e_err, e_uv, its, lam, conv))
    return state


def run(problem, config, state=None, sim=None, stop_at=None):
    """Full run from t = 0 (or from ``state``) to T; returns a RunReport."""
    if sim is None:
        state, sim = initialize(problem, config)
    elif state is None:
        raise StateError("resuming needs a state together with the simulation")
    last = sim.config.steps if stop_at is None else min(stop_at, sim.config.steps)
    t0 = time.perf_counter()
    while state.k < last:
        advance(state, sim)
    cpu = time.perf_counter() - t0
    return report(state, sim, cpu)


def report(state, sim, cpu):
    final = state.records[-1] if state.records else None
    return RunReport(
        records=state.records,
        total_iterations=state.total_iterations,
        cpu_seconds=cpu,
        setup_seconds=sim.setup_seconds,
        final_l2=None if final is None else final.l2_error,
        final_energy_error=float("nan") if final is None else final.energy_error,
        final_energy_error_uv=None if final is None else final.energy_error_uv,
        max_energy_error=state.max_energy_error,
        max_dual_gap=state.max_dual_gap,
        nonconverged_steps=state.nonconverged,
        steps=state.k,
        E0=state.E0,
        alpha=state.alpha.copy(),
        failures=list(state.failures),
    )


def with_solver(config, **kw):
    return replace(config, solver=replace(config.solver, **kw))
