"""Domains, point sets, fill distance and trapezoidal quadrature."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgument, Unsupported

BOUNDARY_TOL = 1e-12
TAGS = ("interior", "boundary", "quadrature", "evaluation")


@dataclass(frozen=True)
class Domain:
    kind: str
    lower: tuple = ()
    upper: tuple = ()
    center: tuple = ()
    radius: float = 0.0

    @classmethod
    def interval(cls, a, b):
        return cls("interval", lower=(float(a),), upper=(float(b),))

    @classmethod
    def rectangle(cls, xlim, ylim):
        return cls(
            "rectangle",
            lower=(float(xlim[0]), float(ylim[0])),
            upper=(float(xlim[1]), float(ylim[1])),
        )

    @classmethod
    def disk(cls, center, radius):
        return cls("disk", center=tuple(float(c) for c in center), radius=float(radius))

    def __post_init__(self):
        if self.kind in ("interval", "rectangle"):
            want = 1 if self.kind == "interval" else 2
            if len(self.lower) != want or len(self.upper) != want:
                raise InvalidArgument(f"{self.kind} needs {want} bound pair(s)")
            if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
                raise InvalidArgument("lower bound must be below upper bound on every axis")
        elif self.kind == "disk":
            if len(self.center) != 2:
                raise InvalidArgument("disk center must be 2-dimensional")
            if self.radius <= 0:
                raise InvalidArgument("disk radius must be positive")
        else:
            raise InvalidArgument(f"unknown domain kind {self.kind!r}")

    @property
    def dimension(self):
        return 1 if self.kind == "interval" else 2

    @property
    def box(self):
        """(lower, upper) of the axis-aligned bounding box."""
        if self.kind == "disk":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        return np.array(self.lower), np.array(self.upper)

    @property
    def measure(self):
        if self.kind == "disk":
            return math.pi * self.radius**2
        lo, hi = self.box
        return float(np.prod(hi - lo))

    @property
    def scale(self):
        lo, hi = self.box
        return max(1.0, float(np.max(np.abs(np.concatenate([lo, hi])))))

    def contains(self, pts, tol=BOUNDARY_TOL):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dimension)
        eps = tol * self.scale
        if self.kind == "disk":
            r = np.linalg.norm(pts - np.array(self.center), axis=1)
            return r <= self.radius + eps
        lo, hi = self.box
        return np.all((pts >= lo - eps) & (pts <= hi + eps), axis=1)

    def on_boundary(self, pts, tol=BOUNDARY_TOL):
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dimension)
        eps = tol * self.scale
        if self.kind == "disk":
            r = np.linalg.norm(pts - np.array(self.center), axis=1)
            return np.abs(r - self.radius) <= eps
        lo, hi = self.box
        return np.any((np.abs(pts - lo) <= eps) | (np.abs(pts - hi) <= eps), axis=1)


@dataclass
class PointSet:
    """Points (n x d) with a role tag and optional nonnegative weights.

    ``axes`` and ``grid_index`` are set for tensor grids (possibly filtered to
    a disk) so that trapezoidal weights can be formed later.
    """

    points: np.ndarray
    tag: str = "interior"
    weights: np.ndarray = None
    axes: tuple = None
    grid_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.tag not in TAGS:
            raise InvalidArgument(f"unknown tag {self.tag!r}")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.points),):
                raise InvalidArgument("weights must match the number of points")
            if np.any(self.weights < 0):
                raise InvalidArgument("weights must be nonnegative")

    def __len__(self):
        return len(self.points)

    @property
    def dimension(self):
        return self.points.shape[1]

    def subset(self, mask, tag=None):
        return PointSet(
            self.points[mask],
            tag or self.tag,
            None if self.weights is None else self.weights[mask],
            self.axes,
            None if self.grid_index is None else self.grid_index[mask],
        )


def _axes(domain, n_per_dim):
    lo, hi = domain.box
    return tuple(np.linspace(lo[a], hi[a], n_per_dim) for a in range(domain.dimension))


def uniform_grid(domain, n_per_dim):
    """Tensor grid with endpoints; for a disk, the bounding-box grid clipped to it."""
    if n_per_dim < 2:
        raise InvalidArgument("n_per_dim must be at least 2")
    axes = _axes(domain, n_per_dim)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    idx = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.arange(n_per_dim)] * domain.dimension, indexing="ij")],
        axis=1,
    )
    keep = domain.contains(pts)
    return PointSet(pts[keep], "interior", axes=axes, grid_index=idx[keep])


def _radical_inverse(i, base):
    out, f = 0.0, 1.0 / base
    while i > 0:
        i, digit = divmod(i, base)
        out += digit * f
        f /= base
    return out


def halton_points(domain, n, skip=0):
    """Points 1+skip .. n+skip of the Halton sequence mapped into the box."""
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    if domain.kind == "disk":
        raise Unsupported("Halton points are only generated on intervals and rectangles")
    bases = (2, 3)[: domain.dimension]
    unit = np.array(
        [[_radical_inverse(i, b) for b in bases] for i in range(skip + 1, skip + n + 1)]
    )
    lo, hi = domain.box
    return PointSet(lo + unit * (hi - lo), "interior")


def split_boundary(points, domain):
    """Partition into (interior, boundary) by distance to the boundary."""
    on = domain.on_boundary(points.points)
    return points.subset(~on, "interior"), points.subset(on, "boundary")


def disk_collocation(domain, n_per_dim, n_boundary):
    """Interior grid points at least one spacing inside the circle, plus
    ``n_boundary`` equiangular points exactly on it."""
    if domain.kind != "disk":
        raise InvalidArgument("disk_collocation needs a disk domain")
    grid = uniform_grid(domain, n_per_dim)
    spacing = 2.0 * domain.radius / (n_per_dim - 1)
    c = np.array(domain.center)
    r = np.linalg.norm(grid.points - c, axis=1)
    interior = grid.subset(r <= domain.radius - spacing + BOUNDARY_TOL * domain.scale)
    theta = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
    ring = c + domain.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return interior, PointSet(ring, "boundary")


def fill_distance(centers, probe):
    """max over probe points of the distance to the nearest center."""
    if len(centers) == 0 or len(probe) == 0:
        raise InvalidArgument("fill distance needs nonempty point sets")
    dist, _ = cKDTree(centers.points).query(probe.points)
    return float(np.max(dist))


def _trap_1d(x):
    h = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def trapezoid_weights(grid, domain, tag="quadrature"):
    """Attach tensor trapezoid weights to a grid built by :func:`uniform_grid`.

    On a disk the bounding-box weights of the surviving points are kept as is.
    """
    if grid.axes is None or grid.grid_index is None:
        raise Unsupported("trapezoid weights need a tensor grid")
    w1 = [_trap_1d(ax) for ax in grid.axes]
    w = np.ones(len(grid))
    for a, wa in enumerate(w1):
        w = w * wa[grid.grid_index[:, a]]
    return PointSet(grid.points, tag, w, grid.axes, grid.grid_index)


def quadrature_grid(domain, n_per_dim, tag="quadrature"):
    return trapezoid_weights(uniform_grid(domain, n_per_dim), domain, tag)


def outward_normal(point, domain):
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if not domain.on_boundary(p)[0]:
        raise InvalidArgument(f"point {p} is not on the boundary")
    if domain.kind == "disk":
        v = p - np.array(domain.center)
        return v / np.linalg.norm(v)
    lo, hi = domain.box
    eps = BOUNDARY_TOL * domain.scale
    n = np.zeros_like(p)
    for a in range(len(p)):
        if abs(p[a] - lo[a]) <= eps:
            n[a] = -1.0
            return n
        if abs(p[a] - hi[a]) <= eps:
            n[a] = 1.0
            return n
    raise AssertionError("unreachable")  # pragma: no cover


def outward_normals(points, domain):
    return np.array([outward_normal(p, domain) for p in points.points]).reshape(-1, domain.dimension)
