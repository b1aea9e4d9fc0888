"""Signed distance maps, boundary projections and the anisotropic arrival time.

Distances follow the convention d < 0 inside the domain, d = 0 on the
boundary, d > 0 outside, so that the outward normal is grad d.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable

import numba
import numpy as np


class BoundaryClass(IntEnum):
    ABSORBING = 0
    REFLECTING = 1


# Classifier: projection points (n, D) -> bool array, True where absorbing.
Classifier = Callable[[np.ndarray], np.ndarray]


def all_absorbing(points: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[0], dtype=bool)


def all_reflecting(points: np.ndarray) -> np.ndarray:
    return np.zeros(points.shape[0], dtype=bool)


@dataclass(frozen=True)
class HalfSpaceSplit:
    """Absorbing where ``x[axis] < level``, reflecting elsewhere."""

    axis: int
    level: float = 0.0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return points[:, self.axis] < self.level


@dataclass
class BoundaryQuery:
    """Boundary data for a batch of points (leading axis n)."""

    distance: np.ndarray
    normal: np.ndarray
    projection: np.ndarray
    absorbing: np.ndarray

    @property
    def boundary_class(self) -> np.ndarray:
        return np.where(self.absorbing, BoundaryClass.ABSORBING, BoundaryClass.REFLECTING)

    def take(self, mask: np.ndarray) -> "BoundaryQuery":
        return BoundaryQuery(self.distance[mask], self.normal[mask], self.projection[mask], self.absorbing[mask])

    def put(self, mask: np.ndarray, other: "BoundaryQuery") -> None:
        self.distance[mask] = other.distance
        self.normal[mask] = other.normal
        self.projection[mask] = other.projection
        self.absorbing[mask] = other.absorbing


class BoundaryOracle:
    """Base class: ``query`` answers distance, normal, projection and class."""

    dim: int
    classifier: Classifier

    def _raw(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def query(self, x: np.ndarray) -> BoundaryQuery:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise ValueError(f"points have dimension {x.shape[-1]}, oracle has {self.dim}")
        d, n, proj = self._raw(x)
        return BoundaryQuery(d, n, proj, np.asarray(self.classifier(proj), dtype=bool))

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self._raw(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def shape_operator(self, points: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Derivative of the outward normal field at boundary points, shape (n, D, D).

        Central differences of the normal map, projected onto the tangent
        plane so that W N = 0.  Subclasses with closed forms override this.
        """
        y = np.atleast_2d(np.asarray(points, dtype=float))
        n, dim = y.shape
        nrm = self._raw(y)[1]
        jac = np.empty((n, dim, dim))
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = step
            jac[:, :, j] = (self._raw(y + e)[1] - self._raw(y - e)[1]) / (2 * step)
        tangent = np.eye(dim) - nrm[:, :, None] * nrm[:, None, :]
        w = tangent @ jac @ tangent
        return 0.5 * (w + np.swapaxes(w, 1, 2))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass
class BallOracle(BoundaryOracle):
    center: np.ndarray
    radius: float
    classifier: Classifier = all_absorbing

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.dim = self.center.shape[0]
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def _raw(self, x):
        rel = x - self.center
        rho = np.linalg.norm(rel, axis=1)
        # the centre has no nearest point; pick +e1
        at_center = rho == 0.0
        normal = np.where(at_center[:, None], np.eye(self.dim)[0], rel / np.where(at_center, 1.0, rho)[:, None])
        return rho - self.radius, normal, self.center + self.radius * normal

    def shape_operator(self, points, step=None):
        nrm = self._raw(np.atleast_2d(np.asarray(points, dtype=float)))[1]
        return (np.eye(self.dim) - nrm[:, :, None] * nrm[:, None, :]) / self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


@dataclass
class BoxOracle(BoundaryOracle):
    """Axis-aligned box.  Ties between faces go to the lowest axis, upper face first."""

    lo: np.ndarray
    hi: np.ndarray
    classifier: Classifier = all_absorbing

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.dim = self.lo.shape[0]
        if np.any(self.hi <= self.lo):
            raise ValueError("box needs hi > lo on every axis")

    def _raw(self, x):
        n, dim = x.shape
        # gaps ordered (axis0 hi, axis0 lo, axis1 hi, ...) so argmin breaks ties as documented
        gaps = np.empty((n, 2 * dim))
        gaps[:, 0::2] = self.hi - x
        gaps[:, 1::2] = x - self.lo
        face = np.argmin(gaps, axis=1)
        inner = gaps[np.arange(n), face]
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        normal = np.zeros((n, dim))
        normal[np.arange(n), axis] = sign
        proj = x.copy()
        proj[np.arange(n), axis] = np.where(sign > 0, self.hi[axis], self.lo[axis])
        dist = -inner

        outside = np.any((x > self.hi) | (x < self.lo), axis=1)
        if np.any(outside):
            xo = x[outside]
            clipped = np.clip(xo, self.lo, self.hi)
            delta = xo - clipped
            dout = np.linalg.norm(delta, axis=1)
            dist[outside] = dout
            normal[outside] = delta / dout[:, None]
            proj[outside] = clipped
        return dist, normal, proj

    def normal_at(self, points: np.ndarray) -> np.ndarray:
        return self._raw(np.atleast_2d(points))[1]

    def shape_operator(self, points, step=None):
        # flat faces; edges and corners have no curvature to speak of
        n = np.atleast_2d(points).shape[0]
        return np.zeros((n, self.dim, self.dim))

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()


def boundary_classes_present(oracle: BoundaryOracle, probes: int = 4096) -> tuple[bool, bool]:
    """(any absorbing, any reflecting) among the projections of probe points.

    Probes are uniform in the bounding box, so a boundary part too small to
    be the nearest boundary of any probe may be missed.
    """
    lo, hi = oracle.bounding_box()
    pts = np.random.default_rng(0).uniform(lo, hi, size=(probes, lo.shape[0]))
    absorbing = oracle.query(pts).absorbing
    return bool(absorbing.any()), bool((~absorbing).any())


# ---------------------------------------------------------------------------
# Rectilinear grids


@dataclass
class GridField:
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray  # shape == node counts per axis, C order

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.spacing <= 0):
            raise ValueError("grid spacing must be positive")
        if self.values.ndim != self.origin.shape[0] or self.spacing.shape != self.origin.shape:
            raise ValueError("origin, spacing and values disagree on the dimension")
        if any(s < 2 for s in self.values.shape):
            raise ValueError("need at least two nodes per axis")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.array(self.shape) - 1)

    def nodes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.spacing[i] * np.arange(self.shape[i]) for i in range(self.dim)]

    def node_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.nodes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, x: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(x)
        tol = slack * self.spacing
        return np.all((x >= self.origin - tol) & (x <= self.upper + tol), axis=1)


def interpolate(grid: GridField, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at points ``x`` of shape (n, D) or (D,)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.ndim(x) == 1
    if pts.shape[1] != grid.dim:
        raise ValueError("point dimension does not match the grid")
    if not np.all(grid.contains(pts)):
        raise ValueError("point outside the grid")
    shape = np.array(grid.shape)
    s = (pts - grid.origin) / grid.spacing
    base = np.clip(np.floor(s).astype(np.int64), 0, shape - 2)
    frac = np.clip(s - base, 0.0, 1.0)
    out = np.zeros(pts.shape[0])
    flat = grid.values.ravel()
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(grid.dim)], dtype=np.int64)
    for corner in range(1 << grid.dim):
        bits = np.array([(corner >> i) & 1 for i in range(grid.dim)])
        weight = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
        idx = (base + bits) @ strides
        out += weight * flat[idx]
    return out[0] if single else out


@dataclass
class GridOracle(BoundaryOracle):
    """Boundary data from a gridded signed distance map.

    The normal is the normalized central difference of the interpolated map
    (one-sided where a probe would leave the grid).
    """

    field: GridField
    classifier: Classifier = all_absorbing

    def __post_init__(self):
        self.dim = self.field.dim

    def _raw(self, x):
        if not np.all(self.field.contains(x)):
            raise ValueError("point outside the gridded oracle's bounding region")
        d = interpolate(self.field, x)
        grad = np.empty_like(x)
        for i in range(self.dim):
            h = self.field.spacing[i]
            up = x.copy()
            dn = x.copy()
            up[:, i] = np.minimum(x[:, i] + h, self.field.upper[i])
            dn[:, i] = np.maximum(x[:, i] - h, self.field.origin[i])
            grad[:, i] = (interpolate(self.field, up) - interpolate(self.field, dn)) / (up[:, i] - dn[:, i])
        norm = np.linalg.norm(grad, axis=1)
        normal = grad / np.where(norm == 0.0, 1.0, norm)[:, None]
        normal[norm == 0.0] = np.eye(self.dim)[0]
        return d, normal, x - d[:, None] * normal

    def shape_operator(self, points, step=None):
        # differences finer than the grid only see interpolation kinks
        return super().shape_operator(points, float(self.field.spacing.max()) if step is None else step)

    def bounding_box(self):
        return self.field.origin.copy(), self.field.upper.copy()


# ---------------------------------------------------------------------------
# Fast Marching


def _neighbours(flat: int, shape: tuple[int, ...], strides: tuple[int, ...]):
    rem = flat
    for axis, (n, st) in enumerate(zip(shape, strides)):
        i = rem // st
        rem -= i * st
        if i > 0:
            yield axis, flat - st
        if i < n - 1:
            yield axis, flat + st


def _godunov(values: list[float], steps: list[float]) -> float:
    """Solve sum(((u - v_i)/h_i)^2) = 1 using as many axes as stay consistent."""
    pairs = sorted(zip(values, steps))
    best = math.inf
    for m in range(1, len(pairs) + 1):
        vs = [p[0] for p in pairs[:m]]
        ws = [1.0 / (p[1] * p[1]) for p in pairs[:m]]
        a = sum(ws)
        b = sum(w * v for w, v in zip(ws, vs))
        c = sum(w * v * v for w, v in zip(ws, vs)) - 1.0
        disc = b * b - a * c
        if disc < 0:
            break
        u = (b + math.sqrt(disc)) / a
        if m < len(pairs) and u > pairs[m][0]:
            best = u
            continue
        best = u
        break
    return best


def fmm_distance(mask: np.ndarray, spacing, origin) -> GridField:
    """Signed distance from a boolean interior mask by first-order Fast Marching.

    The interface sits halfway between neighbouring interior/exterior nodes;
    the marched distance is negated on interior nodes.
    """
    mask = np.asarray(mask, dtype=bool)
    dim = mask.ndim
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (dim,)).copy()
    origin = np.broadcast_to(np.asarray(origin, dtype=float), (dim,)).copy()
    if mask.all() or not mask.any():
        raise ValueError("mask needs at least one interior and one exterior node")
    shape = mask.shape
    strides = tuple(int(np.prod(shape[i + 1:])) for i in range(dim))
    flat_mask = mask.ravel()
    size = flat_mask.size
    dist = np.full(size, math.inf)
    known = np.zeros(size, dtype=bool)

    # seed: nodes with an opposite-type axis neighbour, interface at the midpoint
    seeds = np.zeros(size, dtype=bool)
    for axis in range(dim):
        a = np.moveaxis(mask, axis, 0)
        cross = a[1:] != a[:-1]
        s = np.zeros(a.shape, dtype=bool)
        s[1:] |= cross
        s[:-1] |= cross
        seeds |= np.moveaxis(s, 0, axis).ravel()
    for flat in np.flatnonzero(seeds):
        inv = 0.0
        inside = flat_mask[flat]
        crossed = set()
        for axis, nb in _neighbours(flat, shape, strides):
            if flat_mask[nb] != inside and axis not in crossed:
                crossed.add(axis)
                inv += (2.0 / spacing[axis]) ** 2
        dist[flat] = 1.0 / math.sqrt(inv)
        known[flat] = True

    heap: list[tuple[float, int]] = []

    def update(flat: int) -> None:
        best: dict[int, float] = {}
        for axis, nb in _neighbours(flat, shape, strides):
            if known[nb] and dist[nb] < best.get(axis, math.inf):
                best[axis] = dist[nb]
        axes = list(best)
        u = _godunov([best[a] for a in axes], [spacing[a] for a in axes])
        if u < dist[flat]:
            dist[flat] = u
            heapq.heappush(heap, (u, flat))

    for flat in np.flatnonzero(known):
        for _, nb in _neighbours(flat, shape, strides):
            if not known[nb]:
                update(nb)
    while heap:
        u, flat = heapq.heappop(heap)
        if known[flat] or u > dist[flat]:
            continue
        known[flat] = True
        for _, nb in _neighbours(flat, shape, strides):
            if not known[nb]:
                update(nb)

    signed = np.where(flat_mask, -dist, dist).reshape(shape)
    return GridField(origin, spacing, signed)


# ---------------------------------------------------------------------------
# Anisotropic arrival time by fast sweeping

# neighbour offsets in counter-clockwise order; consecutive pairs span the
# eight triangles around a node
_RING = np.array([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)], dtype=np.int64)


@numba.njit(cache=True)
def _edge_min(u1, u2, ax, ay, ex, ey, m11, m12, m22):
    """min over lam in [0,1] of lam*u1 + (1-lam)*u2 + |a - lam*e|_M."""
    a0 = m11 * ax * ax + 2.0 * m12 * ax * ay + m22 * ay * ay
    b = m11 * ex * ax + m12 * (ex * ay + ey * ax) + m22 * ey * ay
    c = m11 * ex * ex + 2.0 * m12 * ex * ey + m22 * ey * ey
    du = u1 - u2
    best = min(u2 + math.sqrt(max(a0, 0.0)), u1 + math.sqrt(max(a0 - 2.0 * b + c, 0.0)))
    # stationary points solve (b - lam c)^2 = du^2 q(lam)
    qa = c * (c - du * du)
    if qa > 0.0:
        disc = (c - du * du) * du * du * (c * a0 - b * b)
        if disc >= 0.0:
            root = math.sqrt(disc)
            for lam in ((b * (c - du * du) + root) / qa, (b * (c - du * du) - root) / qa):
                if 0.0 < lam < 1.0:
                    q = a0 - 2.0 * lam * b + lam * lam * c
                    val = u2 + lam * du + math.sqrt(max(q, 0.0))
                    if val < best:
                        best = val
    return best


@numba.njit(cache=True)
def _sl_sweeps(psi, fixed, m11, m12, m22, hx, hy, ring, tol, max_sweeps):
    nx, ny = psi.shape
    change = np.inf
    for it in range(max_sweeps):
        change = 0.0
        for order in range(4):
            for ii in range(1, nx - 1):
                i = ii if order == 0 or order == 2 else nx - 1 - ii
                for jj in range(1, ny - 1):
                    j = jj if order == 0 or order == 1 else ny - 1 - jj
                    if fixed[i, j]:
                        continue
                    old = psi[i, j]
                    best = old
                    for k in range(8):
                        o1 = ring[k]
                        o2 = ring[(k + 1) % 8]
                        u1 = psi[i + o1[0], j + o1[1]]
                        u2 = psi[i + o2[0], j + o2[1]]
                        if not (u1 < np.inf or u2 < np.inf):
                            continue
                        if not u1 < np.inf:
                            u1 = 1e300
                        if not u2 < np.inf:
                            u2 = 1e300
                        # a: from neighbour 2 to the node; e: from neighbour 2 to neighbour 1
                        ax = -o2[0] * hx
                        ay = -o2[1] * hy
                        ex = (o1[0] - o2[0]) * hx
                        ey = (o1[1] - o2[1]) * hy
                        val = _edge_min(u1, u2, ax, ay, ex, ey, m11, m12, m22)
                        if val < best:
                            best = val
                    if best < old:
                        psi[i, j] = best
                        diff = old - best if old < np.inf else np.inf
                        if diff > change:
                            change = diff
        if change < tol:
            return it + 1, change
    return -1, change


def fast_sweep_anisotropic(
    a: np.ndarray,
    mask: np.ndarray,
    spacing,
    origin,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> GridField:
    """Arrival time Psi of sqrt(grad Psi^T A grad Psi) = 1, Psi = 0 on the boundary.

    Two-dimensional, constant SPD ``a``.  Psi(x) is the smallest t such that
    the ellipse {y : (y-x)^T A^-1 (y-x) = t^2} touches the boundary.  Each
    node takes the minimum, over the eight triangles of its neighbour ring,
    of the neighbour value interpolated along the far edge plus the
    A^-1-length of the connecting segment; Gauss-Seidel sweeps in the four
    axis orderings repeat until no value drops by more than ``tol``.

    Boundary nodes are mask nodes on the grid edge (value 0) and exterior
    nodes next to the mask, which receive the negative planar arrival time
    of an interface halfway between the nodes.
    """
    a = np.asarray(a, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != (2, 2) or mask.ndim != 2:
        raise ValueError("anisotropic sweeping is implemented for D = 2")
    if not np.allclose(a, a.T) or np.any(np.linalg.eigvalsh(a) <= 0):
        raise ValueError("A must be symmetric positive definite")
    if not mask.any():
        raise ValueError("mask has no interior node")
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (2,)).copy()
    origin = np.broadcast_to(np.asarray(origin, dtype=float), (2,)).copy()
    nx, ny = mask.shape

    # pad by one exterior ring so every updated node has a full neighbour ring
    pm = np.zeros((nx + 2, ny + 2), dtype=bool)
    pm[1:-1, 1:-1] = mask
    psi = np.full(pm.shape, np.inf)
    edge = np.zeros_like(pm)
    edge[1, 1:-1] = edge[-2, 1:-1] = edge[1:-1, 1] = edge[1:-1, -2] = True
    edge &= pm
    psi[edge] = 0.0

    inv = np.zeros(pm.shape)
    for axis, h in enumerate(spacing):
        for shift in (1, -1):
            crossing = (~pm) & np.roll(pm, shift, axis=axis)
            if axis == 0:
                crossing[0 if shift == 1 else -1, :] = False
            else:
                crossing[:, 0 if shift == 1 else -1] = False
            inv = np.where(crossing, np.maximum(inv, a[axis, axis] * (2.0 / h) ** 2), inv)
    ghost = inv > 0
    psi[ghost] = -1.0 / np.sqrt(inv[ghost])
    fixed = ~pm | edge

    m = np.linalg.inv(a)
    sweeps, change = _sl_sweeps(psi, fixed, m[0, 0], m[0, 1], m[1, 1], spacing[0], spacing[1], _RING, tol, max_sweeps)
    if sweeps < 0:
        raise RuntimeError(f"fast sweeping did not converge in {max_sweeps} sweeps (last update {change:.3e})")
    return GridField(origin, spacing, psi[1:-1, 1:-1].copy())


# ---------------------------------------------------------------------------
# EIKO v1 text format


def _fmt_list(values) -> str:
    return ",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in values)


def write_grid(grid: GridField, path) -> None:
    header = (
        f"EIKO v1 D={grid.dim} shape={','.join(str(s) for s in grid.shape)} "
        f"origin={_fmt_list(grid.origin)} spacing={_fmt_list(grid.spacing)}"
    )
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in grid.values.reshape(-1, grid.shape[-1]))
    Path(path).write_text(header + "\n" + body + "\n")


def read_grid(path) -> GridField:
    text = Path(path).read_text()
    header, _, body = text.partition("\n")
    parts = header.split()
    if parts[:2] != ["EIKO", "v1"]:
        raise ValueError(f"{path}: not an EIKO v1 file")
    meta = dict(p.split("=", 1) for p in parts[2:])
    dim = int(meta["D"])
    shape = tuple(int(s) for s in meta["shape"].split(","))
    origin = np.array([float(s) for s in meta["origin"].split(",")])
    spacing = np.array([float(s) for s in meta["spacing"].split(",")])
    values = np.array([float(s) for s in body.split()])
    if len(shape) != dim or values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: header and value count disagree")
    return GridField(origin, spacing, values.reshape(shape))
