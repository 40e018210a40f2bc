"""INI experiment files.

A config names a problem and optionally overrides its default settings::

    [problem]
    id = pde2

    [scheme]
    name = CN

    [discretization]
    n_Z = 100
    gamma = 4
    n_P = 1601
    m = 5
    epsilon = 2
    theta = 1.5
    distribution = uniform

    [time]
    tau = 0.01
    T = 15

    [solver]
    tol = 1e-12
    j_max = 50
    method = newton

    [output]
    directory = out/pde2
    record_every = 100
    dual_energy = false

Every key is checked before anything is computed; unknown sections or keys
are errors.
"""

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .errors import InvalidArgument
from .problems import PROBLEM_IDS
from .solver import SolverConfig
from .timestepper import RunConfig

# default settings per problem (T, tau, n_Z, n_X + n_Y, n_P, m, epsilon, scheme)
PRESETS = {
    "pde1": dict(T=100.0, tau=0.01, n_Z=121, n_XY=900, n_P=10201, m=4, epsilon=2.0, scheme="CN"),
    "pde2": dict(T=15.0, tau=0.01, n_Z=100, n_XY=400, n_P=1601, m=5, epsilon=2.0, scheme="CN"),
    "pde3": dict(T=7.0, tau=0.01, n_Z=2267, n_XY=5809, n_P=10201, m=4, epsilon=2.0, scheme="CNAB"),
    "pde4": dict(T=20.0, tau=0.05, n_Z=2601, n_XY=10201, n_P=10201, m=4, epsilon=1.0, scheme="CNAB"),
}

_INT, _FLOAT, _STR, _BOOL = int, float, str, bool
SCHEMA = {
    "problem": {"id": _STR},
    "scheme": {"name": _STR},
    "discretization": {
        "n_z": _INT,
        "gamma": _FLOAT,
        "n_p": _INT,
        "m": _INT,
        "epsilon": _FLOAT,
        "theta": _FLOAT,
        "distribution": _STR,
    },
    "time": {"tau": _FLOAT, "t": _FLOAT},
    "solver": {
        "tol": _FLOAT,
        "j_max": _INT,
        "method": _STR,
        "lambda0": _FLOAT,
        "damping": _STR,
    },
    "output": {"directory": _STR, "record_every": _INT, "dual_energy": _BOOL},
}


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    directory: Optional[str] = None

    def with_run(self, **kw):
        return replace(self, run=replace(self.run, **kw))

    def with_solver(self, **kw):
        return replace(self, run=replace(self.run, solver=replace(self.run.solver, **kw)))


def _convert(section, key, raw, kind, parser):
    try:
        if kind is _BOOL:
            return parser.getboolean(section, key)
        return kind(raw)
    except ValueError:
        raise InvalidArgument(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def parse(text):
    """Parse INI text into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidArgument(f"malformed config: {exc}") from None
    values = {}
    for section in parser.sections():
        name = section.lower()
        if name not in SCHEMA:
            raise InvalidArgument(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            kind = SCHEMA[name].get(key)
            if kind is None:
                raise InvalidArgument(f"unknown key {key!r} in [{section}]")
            values[(name, key)] = _convert(section, key, raw, kind, parser)

    pid = values.get(("problem", "id"))
    if pid is None:
        raise InvalidArgument("[problem] id is required")
    if pid not in PROBLEM_IDS:
        raise InvalidArgument(f"unknown problem id {pid!r}; choose from {', '.join(PROBLEM_IDS)}")
    preset = PRESETS[pid]

    def get(section, key, default):
        return values.get((section, key), default)

    n_Z = get("discretization", "n_z", preset["n_Z"])
    solver = SolverConfig(
        tol=get("solver", "tol", 1e-10),
        j_max=get("solver", "j_max", 50),
        method=get("solver", "method", "newton"),
        lambda0=get("solver", "lambda0", 0.0),
        damping=get("solver", "damping", "halving"),
    )
    run = RunConfig(
        problem=pid,
        scheme=get("scheme", "name", preset["scheme"]),
        tau=get("time", "tau", preset["tau"]),
        T=get("time", "t", preset["T"]),
        solver=solver,
        m=get("discretization", "m", preset["m"]),
        epsilon=get("discretization", "epsilon", preset["epsilon"]),
        theta=get("discretization", "theta", 1.5),
        n_Z=n_Z,
        gamma=get("discretization", "gamma", preset["n_XY"] / preset["n_Z"]),
        n_P=get("discretization", "n_p", preset["n_P"]),
        distribution=get("discretization", "distribution", "uniform"),
        record_every=get("output", "record_every", 1),
        dual_energy=get("output", "dual_energy", False),
    )
    return ExperimentConfig(run, get("output", "directory", None))


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text)


def default(problem_id, **overrides):
    """Config with the problem's default settings and RunConfig overrides."""
    cfg = parse(f"[problem]\nid = {problem_id}\n")
    return cfg.with_run(**overrides) if overrides else cfg
