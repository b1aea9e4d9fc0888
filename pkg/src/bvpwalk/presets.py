"""Built-in test problems with known exact solutions.

Each preset bundles a problem, its domain, a starting point and the exact
value there, so relative errors can be reported.  Sources f and Robin data
psi are obtained by substituting the exact solution u into the equation
(elliptic: f = -L u) and into the boundary condition (psi = N.grad u - phi u).
Gradients of phi and psi are the gradients of their natural extensions off
the boundary (the normal field x/|x| on a ball, the face normal on a box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import (
    BallOracle,
    BoundaryOracle,
    BoxOracle,
    GridField,
    HalfSpaceSplit,
    all_absorbing,
    all_reflecting,
    fast_sweep_anisotropic,
)
from .linalg import cholesky_lower
from .problem import BvpProblem, constant

BCS = ("absorbing", "reflecting", "mixed")


@dataclass
class Preset:
    name: str
    problem: BvpProblem
    oracle: BoundaryOracle
    x0: np.ndarray
    u_exact: float
    solution: Callable[[np.ndarray], np.ndarray]
    # constant-diffusion planar presets build the arrival-time field for mmplus from a grid spacing
    psi_builder: Optional[Callable[[float], GridField]] = None


def _classifier(bcs: str, split_axis: int):
    if bcs == "absorbing":
        return all_absorbing
    if bcs == "reflecting":
        return all_reflecting
    if bcs == "mixed":
        return HalfSpaceSplit(split_axis, 0.0)
    raise ValueError(f"bcs must be one of {BCS}, got {bcs!r}")


def _horizon(bcs: str, T):
    if T is None:
        if bcs == "reflecting":
            raise ValueError("purely reflecting boundaries need a finite horizon T")
        return math.inf
    return T


class _NormalField:
    """Outward unit normal field of the domain, extended off the boundary, and its Jacobian."""

    def __init__(self, kind: str, box: Optional[BoxOracle] = None):
        self.kind = kind
        self.box = box

    def __call__(self, x):
        if self.kind == "ball":
            return x / np.linalg.norm(x, axis=1, keepdims=True)
        return self.box.normal_at(x)

    def jacobian(self, x):
        n, dim = x.shape
        if self.kind == "ball":
            rho = np.linalg.norm(x, axis=1)
            nn = x / rho[:, None]
            return (np.eye(dim) - nn[:, :, None] * nn[:, None, :]) / rho[:, None, None]
        return np.zeros((n, dim, dim))


def _robin_data(normal_field, u, grad_u, hess_u, phi, grad_phi):
    """psi = N.grad u - phi u and its gradient."""

    def psi(x, t):
        return np.einsum("ni,ni->n", normal_field(x), grad_u(x)) - phi(x, t) * u(x)

    def grad_psi(x, t):
        nrm = normal_field(x)
        gu = grad_u(x)
        jn = normal_field.jacobian(x)
        return (
            np.einsum("nji,nj->ni", jn, gu)
            + np.einsum("nij,nj->ni", hess_u(x), nrm)
            - phi(x, t)[:, None] * gu
            - u(x)[:, None] * grad_phi(x, t)
        )

    return psi, grad_psi


# three-dimensional problem: u = xyz, state-dependent diffusion


def _ex1_sigma(x, t=None):
    ax, ay, az = (np.sqrt(1.0 + np.abs(x[:, i])) for i in range(3))
    s = np.zeros((x.shape[0], 3, 3))
    s[:, 0, 0] = az
    s[:, 1, 0] = 0.5 * ax
    s[:, 1, 1] = math.sqrt(0.75) * ax
    s[:, 2, 1] = 0.5 * ay
    s[:, 2, 2] = math.sqrt(0.75) * ay
    return s


def _ex1_u(x):
    return x[:, 0] * x[:, 1] * x[:, 2]


def _ex1_grad_u(x):
    xx, yy, zz = x.T
    return np.stack([yy * zz, xx * zz, xx * yy], axis=1)


def _ex1_hess_u(x):
    xx, yy, zz = x.T
    h = np.zeros((x.shape[0], 3, 3))
    h[:, 0, 1] = h[:, 1, 0] = zz
    h[:, 0, 2] = h[:, 2, 0] = yy
    h[:, 1, 2] = h[:, 2, 1] = xx
    return h


def _ex1_drift(x, t=None):
    return x[:, [1, 2, 0]].copy()


def _ex1_source(x, t=None):
    # -(b.grad u + a12 u_xy + a23 u_yz); a13 = 0
    xx, yy, zz = x.T
    ax, ay, az = (np.sqrt(1.0 + np.abs(c)) for c in (xx, yy, zz))
    return -(
        yy * yy * zz + zz * zz * xx + xx * xx * yy
        + 0.5 * zz * az * ax
        + math.sqrt(3.0) / 4.0 * xx * ax * ay
    )


def _ex1_phi(x, t=None):
    return -np.einsum("ni,ni->n", x, x)


def _ex1_grad_phi(x, t=None):
    return -2.0 * x


def example1(domain: str = "ball", bcs: str = "absorbing", T=None) -> Preset:
    """Three-dimensional problem with u = xyz in the unit ball or the box [-sqrt2/2, sqrt2/2]^3.

    Mixed boundaries absorb where z < 0.  Purely reflecting needs a finite T
    (T = 1 by default); then p = u.
    """
    if bcs == "reflecting" and T is None:
        T = 1.0
    horizon = _horizon(bcs, T)
    cls = _classifier(bcs, 2)
    if domain == "ball":
        oracle = BallOracle(np.zeros(3), 1.0, cls)
        nf = _NormalField("ball")
    elif domain == "box":
        half = math.sqrt(2.0) / 2.0
        oracle = BoxOracle(np.full(3, -half), np.full(3, half), cls)
        nf = _NormalField("box", oracle)
    else:
        raise ValueError(f"domain must be 'ball' or 'box', got {domain!r}")
    psi, grad_psi = _robin_data(nf, _ex1_u, _ex1_grad_u, _ex1_hess_u, _ex1_phi, _ex1_grad_phi)
    problem = BvpProblem(
        dim=3,
        sigma=_ex1_sigma,
        drift_b=_ex1_drift,
        source_f=_ex1_source,
        initial_p=_ex1_u,
        dirichlet_g=lambda x, t: _ex1_u(x),
        robin_phi=_ex1_phi,
        robin_psi=psi,
        grad_phi=_ex1_grad_phi,
        grad_psi=grad_psi,
        horizon_T=horizon,
    )
    x0 = np.array([0.56, 0.52, 0.30])
    return Preset(f"example1-{domain}-{bcs}", problem, oracle, x0, float(_ex1_u(x0[None])[0]), _ex1_u)


# high-dimensional problem: u = cos(sum x), sigma = ones on and below the diagonal


def example2(dim: int = 5, bcs: str = "mixed", T=None) -> Preset:
    """u = cos(x_1 + ... + x_D) in the unit ball of R^D, A_ij = min(i, j).

    Mixed boundaries absorb where x_3 < 0 (the third coordinate, as in the
    three-dimensional problem), so D >= 3 is needed for them.
    """
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    if bcs == "mixed" and dim < 3:
        raise ValueError("mixed boundaries split on x_3 and need D >= 3")
    horizon = _horizon(bcs, T)
    sigma = np.tril(np.ones((dim, dim)))
    sum_a = dim * (dim + 1) * (2 * dim + 1) / 6.0

    def u(x):
        return np.cos(x.sum(axis=1))

    def grad_u(x):
        return np.repeat(-np.sin(x.sum(axis=1))[:, None], dim, axis=1)

    def hess_u(x):
        return -np.cos(x.sum(axis=1))[:, None, None] * np.ones((1, dim, dim))

    def drift(x, t=None):
        return np.sin(np.pi * x)

    # with s = sum x the Hessian is -cos(s) * ones, so 0.5 tr(A H) = -0.5 cos(s) sum(A)
    # and b.grad u = -sin(s) sum sin(pi x_i); f = -(0.5 tr(A H) + b.grad u).
    # On the sphere N = x, so psi = N.grad u - phi u = cos(s) - sin(s) sum x_i, built by _robin_data.
    def source(x, t=None):
        s = x.sum(axis=1)
        return 0.5 * np.cos(s) * sum_a + np.sin(s) * np.sin(np.pi * x).sum(axis=1)

    phi = constant(-1.0)
    grad_phi = constant(np.zeros(dim))
    psi, grad_psi = _robin_data(_NormalField("ball"), u, grad_u, hess_u, phi, grad_phi)
    problem = BvpProblem(
        dim=dim,
        sigma=constant(sigma),
        drift_b=drift,
        source_f=source,
        initial_p=u,
        dirichlet_g=lambda x, t: u(x),
        robin_phi=phi,
        robin_psi=psi,
        grad_phi=grad_phi,
        grad_psi=grad_psi,
        horizon_T=horizon,
        constant_sigma=sigma,
    )
    oracle = BallOracle(np.zeros(dim), 1.0, _classifier(bcs, 2))
    x0 = np.zeros(dim)
    x0[0] = -math.pi / 4.0
    return Preset(f"example2-D{dim}-{bcs}", problem, oracle, x0, float(u(x0[None])[0]), u)


# planar problem: strongly anisotropic constant A, solution blowing up near the corners

EX3_A = np.array([[8.0, -2.71], [-2.71, 1.0]])


def example3(R: float = 2.1) -> Preset:
    """u = 1/(x^2 + y^2 - R) in [-1, 1]^2, absorbing, elliptic; needs R > 2."""
    if not R > 2.0:
        raise ValueError("R must exceed 2 so the solution is bounded on the square")
    a = EX3_A
    sigma = cholesky_lower(a)

    def u(x):
        return 1.0 / (np.einsum("ni,ni->n", x, x) - R)

    def drift(x, t=None):
        return np.sin(np.pi * x)

    def source(x, t=None):
        xx, yy = x.T
        q = xx * xx + yy * yy - R
        ux, uy = -2.0 * xx / q**2, -2.0 * yy / q**2
        uxx = -2.0 / q**2 + 8.0 * xx * xx / q**3
        uyy = -2.0 / q**2 + 8.0 * yy * yy / q**3
        uxy = 8.0 * xx * yy / q**3
        lu = 0.5 * (a[0, 0] * uxx + 2.0 * a[0, 1] * uxy + a[1, 1] * uyy)
        return -(lu + np.sin(np.pi * xx) * ux + np.sin(np.pi * yy) * uy)

    problem = BvpProblem(
        dim=2,
        sigma=constant(sigma),
        drift_b=drift,
        source_f=source,
        dirichlet_g=lambda x, t: u(x),
        horizon_T=math.inf,
        constant_sigma=sigma,
    )
    oracle = BoxOracle(np.full(2, -1.0), np.full(2, 1.0))
    x0 = np.array([0.823, -0.875])
    return Preset(f"example3-R{R:g}", problem, oracle, x0, float(u(x0[None])[0]), u,
                  psi_builder=lambda spacing: arrival_field(oracle, a, spacing))


def arrival_field(oracle: BoundaryOracle, a: np.ndarray, spacing: float) -> GridField:
    """Arrival-time field of the ellipse family for constant ``a`` over the oracle's bounding box (D = 2)."""
    lo, hi = oracle.bounding_box()
    counts = np.maximum(np.round((hi - lo) / spacing).astype(int), 1) + 1
    steps = (hi - lo) / (counts - 1)
    grid = GridField(lo, steps, np.zeros(tuple(counts)))
    mask = (oracle.distance(grid.node_points()) <= 0.0).reshape(grid.shape)
    return fast_sweep_anisotropic(a, mask, steps, lo)


PRESET_IDS = ("1", "1ball", "1box", "example1", "2", "example2", "3", "example3")


def load_preset(name: str, bcs: str = "absorbing", dim: int = 5, R: float = 2.1, T=None) -> Preset:
    """Preset by id: 1/1ball/example1 (ball), 1box, 2/example2 (dimension ``dim``), 3/example3."""
    if name in ("1", "1ball", "example1"):
        return example1("ball", bcs, T)
    if name == "1box":
        return example1("box", bcs, T)
    if name in ("2", "example2"):
        return example2(dim, bcs, T)
    if name in ("3", "example3"):
        if bcs != "absorbing":
            raise ValueError("example 3 has absorbing boundaries only")
        if T is not None:
            raise ValueError("example 3 is elliptic")
        return example3(R)
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_IDS)}")
