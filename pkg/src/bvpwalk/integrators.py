"""Walk-on-ellipsoids trajectories with reflection, and a half-order reference scheme.

A trajectory carries (X, Y, Z, xi, t) and ends with the payoff
``q(X_end) Y_end + Z_end``, where q is the Dirichlet datum at an absorbing
exit and the initial datum when the horizon is reached.  The functions here
advance a whole batch of independent walkers at once; a batch of one is a
single trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional

import numpy as np

from .geometry import BoundaryOracle, BoundaryQuery, GridField, boundary_classes_present, interpolate
from .linalg import (
    N1_TOL,
    a_hat_first_column,
    apply_q,
    apply_qt,
    forward_substitute,
    gershgorin_lambda1,
    givens_init,
    lambda_star_apply,
)
from .problem import BvpProblem
from .sampling import CounterStreams


class Method(str, Enum):
    MM = "mm"
    MMPLUS = "mmplus"
    REF = "ref"


class TrajectoryError(RuntimeError):
    """A trajectory produced non-finite values."""


class NonTerminatingError(RuntimeError):
    """A trajectory exceeded the step cap."""


@dataclass(frozen=True)
class StepParams:
    h: float
    dim: int
    method: Method = Method.MM
    psi: Optional[GridField] = None
    n1_tol: float = N1_TOL
    exact_lambda: bool = False
    step_cap: Optional[int] = None
    # tangential drift that cancels the O(r^2) error a curved reflecting wall
    # causes when A couples normal and tangential directions
    curvature: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.h > 0:
            raise ValueError("timestep must be positive")
        if self.method is Method.MMPLUS and self.psi is None:
            raise ValueError("mmplus needs the anisotropic arrival-time field psi")
        if self.step_cap is None:
            object.__setattr__(self, "step_cap", int(1e9 / self.dim))

    @property
    def r(self) -> float:
        return math.sqrt(self.dim * self.h)


@dataclass
class WalkerState:
    """A batch of chains; row i is one trajectory."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    t: np.ndarray
    index: np.ndarray
    steps: np.ndarray
    reflections: np.ndarray
    query: BoundaryQuery

    @classmethod
    def start(cls, oracle: BoundaryOracle, x0, indices) -> "WalkerState":
        indices = np.asarray(indices, dtype=np.int64)
        n = indices.shape[0]
        x = np.tile(np.asarray(x0, dtype=float), (n, 1))
        q = oracle.query(x)
        if np.any(q.distance >= 0.0):
            raise ValueError("starting point must lie strictly inside the domain")
        zeros = np.zeros(n)
        return cls(x, np.ones(n), zeros.copy(), zeros.copy(), zeros.copy(), indices,
                   np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), q)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def take(self, mask) -> "WalkerState":
        kw = {f.name: getattr(self, f.name)[mask] for f in fields(self) if f.name != "query"}
        return WalkerState(query=self.query.take(mask), **kw)

    def put(self, mask, other: "WalkerState") -> None:
        for f in fields(self):
            if f.name == "query":
                self.query.put(mask, other.query)
            else:
                getattr(self, f.name)[mask] = getattr(other, f.name)


def _backward_time(problem: BvpProblem, t: np.ndarray) -> np.ndarray:
    return np.full_like(t, math.inf) if problem.elliptic else problem.horizon_T - t


def _check_finite(state: WalkerState) -> None:
    if not (np.all(np.isfinite(state.y)) and np.all(np.isfinite(state.z)) and np.all(np.isfinite(state.x))):
        raise TrajectoryError("non-finite value along a trajectory (check the coefficients)")


def _refresh(state: WalkerState, oracle: BoundaryOracle) -> None:
    """Recompute boundary data; pull overshoots back onto their projection."""
    q = oracle.query(state.x)
    over = q.distance > 0.0
    if np.any(over):
        state.x[over] = q.projection[over]
        q.distance[over] = 0.0
    state.query = q


def lambda1_bound(problem: BvpProblem, x, tb, sigma, exact: bool = False) -> np.ndarray:
    a = problem.eval_a(x, tb, sigma)
    if exact:
        return np.linalg.eigvalsh(a)[..., -1]
    return gershgorin_lambda1(a)


def hop_radius(state: WalkerState, problem: BvpProblem, params: StepParams, sigma, tb) -> np.ndarray:
    """Scaled radius of the next interior hop.

    Far from the boundary the regular ellipsoid (radius r).  Once |d| is within
    r*sqrt(lambda_1) the ellipsoid tangent to the boundary's tangent plane,
    or for MM+ the exact tangent ellipsoid from the arrival-time field,
    capped at r.
    """
    r = params.r
    ad = np.abs(state.query.distance)
    out = np.full(state.n, r)
    if problem.constant_sigma is not None and not params.exact_lambda:
        lam = np.full(state.n, float(gershgorin_lambda1(problem.constant_sigma @ problem.constant_sigma.T)))
    else:
        lam = lambda1_bound(problem, state.x, tb, sigma, params.exact_lambda)
    near = ad <= r * np.sqrt(lam)
    if np.any(near):
        if params.method is Method.MMPLUS:
            rho = interpolate(params.psi, state.x[near])
        else:
            st_n = np.einsum("nji,nj->ni", sigma[near], state.query.normal[near])
            rho = ad[near] / np.linalg.norm(st_n, axis=1)
        out[near] = np.minimum(rho, r)
    return out


def step_interior(state: WalkerState, problem: BvpProblem, oracle: BoundaryOracle,
                  params: StepParams, streams: CounterStreams) -> WalkerState:
    """One hop on an ellipsoid surface with the drift moved into the weight Y."""
    dim = problem.dim
    tb = _backward_time(problem, state.t)
    sigma = problem.eval_sigma(state.x, tb)
    rk = hop_radius(state, problem, params, sigma, tb)
    omega = streams.sphere(state.index, state.steps, dim)
    mu = forward_substitute(sigma, problem.drift_b(state.x, tb))
    c = problem.coeff_c(state.x, tb)
    f = problem.source_f(state.x, tb)
    dt = rk * rk / dim

    y = state.y
    state.x = state.x + rk[:, None] * np.einsum("nij,nj->ni", sigma, omega)
    state.z = state.z + y * f * dt
    state.y = y + y * c * dt + y * np.einsum("ni,ni->n", mu, omega) * rk
    state.t = state.t + dt
    state.steps = state.steps + 1
    _refresh(state, oracle)
    return state


def step_reflect(state: WalkerState, problem: BvpProblem, oracle: BoundaryOracle,
                 params: StepParams, streams: CounterStreams) -> WalkerState:
    """One-step normal reflection in the frame whose first axis points inwards."""
    dim = problem.dim
    r2 = params.r ** 2
    r = params.r
    tb = _backward_time(problem, state.t)
    x = state.x
    proj = state.query.projection
    normal = state.query.normal
    ad = np.abs(state.query.distance)

    sigma = problem.eval_sigma(x, tb)
    b = problem.drift_b(x, tb)
    c = problem.coeff_c(x, tb)
    f = problem.source_f(x, tb)
    phi = problem.robin_phi(proj, tb)
    psi = problem.robin_psi(proj, tb)

    frame, _ = givens_init(normal)
    b_hat = apply_q(frame, b)
    dphi = apply_q(frame, problem.grad_phi(proj, tb))
    dpsi = apply_q(frame, problem.grad_psi(proj, tb))
    nu = streams.signs(state.index, state.steps, dim - 1)
    lam_nu = lambda_star_apply(sigma, frame, normal, nu, params.n1_tol)
    a_col = a_hat_first_column(sigma, normal, frame)

    chi = np.empty_like(x)
    chi1 = np.sqrt(a_col[:, 0] * r2 + ad * ad) - ad - b_hat[:, 0] * r2
    chi[:, 0] = chi1
    chi[:, 1:] = -phi[:, None] * a_col[:, 1:] * r2 + lam_nu * r

    robin = 1.0 + phi * ad
    tang_phi = np.einsum("ni,ni->n", a_col[:, 1:], dphi[:, 1:]) * r2
    tang_psi = np.einsum("ni,ni->n", a_col[:, 1:], dpsi[:, 1:]) * r2
    y = state.y
    state.x = x + apply_qt(frame, chi + b_hat * r2)
    if params.curvature:
        w = oracle.shape_operator(proj)
        a_n = np.einsum("nij,nkj,nk->ni", sigma, sigma, normal)
        state.x -= r2 * np.einsum("nij,nj->ni", w, a_n)
    state.y = y + (c * r2 + phi * robin * chi1 - tang_phi + phi * phi * chi1 * chi1) * y
    state.z = state.z + (f * r2 + psi * robin * chi1 - tang_psi + phi * psi * chi1 * chi1) * y
    state.xi = state.xi + r2
    state.t = state.t + r2
    state.steps = state.steps + 1
    state.reflections = state.reflections + 1
    _refresh(state, oracle)
    return state


def step_ref(state: WalkerState, problem: BvpProblem, oracle: BoundaryOracle,
             params: StepParams, streams: CounterStreams) -> WalkerState:
    """Euler step with two-point increments; exits are mirrored or stopped afterwards.

    Rows that crossed an absorbing boundary are left outside with their
    query pointing at the exit; the caller stops them.
    """
    dim = problem.dim
    h = params.h
    tb = _backward_time(problem, state.t)
    sigma = problem.eval_sigma(state.x, tb)
    b = problem.drift_b(state.x, tb)
    c = problem.coeff_c(state.x, tb)
    f = problem.source_f(state.x, tb)
    zeta = streams.signs(state.index, state.steps, dim)

    y = state.y
    state.x = state.x + b * h + math.sqrt(h) * np.einsum("nij,nj->ni", sigma, zeta)
    state.z = state.z + f * y * h
    state.y = y + c * y * h
    state.t = state.t + h
    state.steps = state.steps + 1

    q = oracle.query(state.x)
    state.query = q
    bounce = (q.distance > 0.0) & ~q.absorbing
    if np.any(bounce):
        depth = q.distance[bounce]
        proj = q.projection[bounce]
        tbn = _backward_time(problem, state.t[bounce])
        yb = state.y[bounce]
        # the mirror pushes the walker 2*depth along the inward normal
        push = 2.0 * depth
        state.z[bounce] += problem.robin_psi(proj, tbn) * yb * push
        state.y[bounce] = yb + problem.robin_phi(proj, tbn) * yb * push
        state.xi[bounce] += push
        state.x[bounce] = proj - depth[:, None] * q.normal[bounce]
        state.reflections[bounce] += 1
        sub = oracle.query(state.x[bounce])
        over = sub.distance > 0.0
        if np.any(over):
            # mirrored point still outside (corner or deep overshoot)
            moved = state.x[bounce]
            moved[over] = sub.projection[over]
            state.x[bounce] = moved
            sub.distance[over] = 0.0
        q.put(bounce, sub)
    return state


@dataclass
class BatchResult:
    """Per-trajectory outcomes, ordered like the requested indices."""

    values: np.ndarray
    absorbed: np.ndarray
    exit_points: np.ndarray
    exit_times: np.ndarray
    steps: np.ndarray
    reflections: np.ndarray


@dataclass
class PayoffSample:
    value: float
    absorbed: bool
    exit_point: np.ndarray
    exit_time: float
    steps: int
    reflections: int

    @property
    def outcome(self) -> str:
        return "absorbed" if self.absorbed else "horizon"


def run_batch(problem: BvpProblem, oracle: BoundaryOracle, params: StepParams, x0,
              streams: CounterStreams, indices) -> BatchResult:
    """Simulate the trajectories with the given stream indices until each stops."""
    if params.dim != problem.dim:
        raise ValueError("StepParams.dim does not match the problem")
    if problem.elliptic and not boundary_classes_present(oracle)[0]:
        raise ValueError("an elliptic problem needs a nonempty absorbing boundary")
    state = WalkerState.start(oracle, x0, indices)
    n = state.n
    slot = np.arange(n)
    res = BatchResult(np.empty(n), np.zeros(n, dtype=bool), np.empty((n, problem.dim)),
                      np.empty(n), np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))
    r2 = params.r ** 2
    ref = params.method is Method.REF

    def finish(mask, values, absorbed, points):
        nonlocal state, slot
        where = slot[mask]
        res.values[where] = values
        res.absorbed[where] = absorbed
        res.exit_points[where] = points
        res.exit_times[where] = state.t[mask]
        res.steps[where] = state.steps[mask]
        res.reflections[where] = state.reflections[mask]
        keep = ~mask
        state = state.take(keep)
        slot = slot[keep]

    while state.n:
        if not problem.elliptic:
            hit = state.t >= problem.horizon_T
            if np.any(hit):
                xs = state.x[hit]
                finish(hit, problem.initial_p(xs) * state.y[hit] + state.z[hit], False, xs)
                if not state.n:
                    break
        q = state.query
        if ref:
            stop = (q.distance > 0.0) & q.absorbing
        else:
            stop = (np.abs(q.distance) <= r2) & q.absorbing
        if np.any(stop):
            pts = q.projection[stop]
            g = problem.dirichlet_g(pts, _backward_time(problem, state.t[stop]))
            finish(stop, g * state.y[stop] + state.z[stop], True, pts)
            if not state.n:
                break
        if np.any(state.steps >= params.step_cap):
            raise NonTerminatingError(f"trajectory exceeded {params.step_cap} steps")

        if ref:
            state = step_ref(state, problem, oracle, params, streams)
        else:
            refl = (np.abs(state.query.distance) <= params.r) & ~state.query.absorbing
            if np.all(refl):
                state = step_reflect(state, problem, oracle, params, streams)
            elif not np.any(refl):
                state = step_interior(state, problem, oracle, params, streams)
            else:
                state.put(refl, step_reflect(state.take(refl), problem, oracle, params, streams))
                inner = ~refl
                state.put(inner, step_interior(state.take(inner), problem, oracle, params, streams))
        _check_finite(state)
    return res


def run_trajectory(problem: BvpProblem, oracle: BoundaryOracle, params: StepParams, x0,
                   streams: CounterStreams, index: int = 0) -> PayoffSample:
    res = run_batch(problem, oracle, params, x0, streams, [index])
    return PayoffSample(float(res.values[0]), bool(res.absorbed[0]), res.exit_points[0],
                        float(res.exit_times[0]), int(res.steps[0]), int(res.reflections[0]))


def run_trajectory_ref(problem: BvpProblem, oracle: BoundaryOracle, h: float, x0,
                       streams: CounterStreams, index: int = 0) -> PayoffSample:
    return run_trajectory(problem, oracle, StepParams(h, problem.dim, Method.REF), x0, streams, index)
