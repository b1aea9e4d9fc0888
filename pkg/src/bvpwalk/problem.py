"""Linear second-order BVP with mixed Dirichlet/Robin boundary data.

    du/dt = 1/2 sum a_ij d_ij u + b . grad u + c u + f    in the domain,
    u = p at t = 0,   u = g on the absorbing part,
    du/dN = phi u + psi on the reflecting part,

with ``A = sigma sigma^T``.  All coefficient callables are vectorized: they
receive points of shape (n, D) and backward times of shape (n,) and return
per-point values (scalars -> (n,), vectors -> (n, D), sigma -> (n, D, D)).
For elliptic problems the time argument is ``inf`` and must be ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import BoundaryOracle

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero_scalar(x, t):
    return np.zeros(x.shape[0])


def _zero_vector(x, t):
    return np.zeros(x.shape)


def _zero_initial(x):
    return np.zeros(x.shape[0])


@dataclass(frozen=True)
class BvpProblem:
    dim: int
    sigma: Coefficient
    drift_b: Coefficient = _zero_vector
    coeff_c: Coefficient = _zero_scalar
    source_f: Coefficient = _zero_scalar
    initial_p: Callable[[np.ndarray], np.ndarray] = _zero_initial
    dirichlet_g: Coefficient = _zero_scalar
    robin_phi: Coefficient = _zero_scalar
    robin_psi: Coefficient = _zero_scalar
    grad_phi: Coefficient = _zero_vector
    grad_psi: Coefficient = _zero_vector
    horizon_T: float = math.inf
    # optional A(x, t); defaults to sigma sigma^T
    matrix_a: Optional[Coefficient] = None
    # set when sigma does not depend on (x, t); lets the walker skip evaluations
    constant_sigma: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")
        if self.horizon_T == "elliptic":
            object.__setattr__(self, "horizon_T", math.inf)
        if not self.horizon_T > 0:
            raise ValueError("horizon must be positive")
        if self.constant_sigma is not None:
            object.__setattr__(self, "constant_sigma", np.asarray(self.constant_sigma, dtype=float))

    @property
    def elliptic(self) -> bool:
        return math.isinf(self.horizon_T)

    def eval_sigma(self, x: np.ndarray, tb: np.ndarray) -> np.ndarray:
        if self.constant_sigma is not None:
            return np.broadcast_to(self.constant_sigma, (x.shape[0], self.dim, self.dim))
        return self.sigma(x, tb)

    def eval_a(self, x: np.ndarray, tb: np.ndarray, sigma: Optional[np.ndarray] = None) -> np.ndarray:
        if self.matrix_a is not None:
            return self.matrix_a(x, tb)
        if sigma is None:
            sigma = self.eval_sigma(x, tb)
        return sigma @ np.swapaxes(sigma, -1, -2)


def constant(value) -> Coefficient:
    """Coefficient returning the same scalar/vector/matrix everywhere."""
    value = np.asarray(value, dtype=float)

    def coeff(x, t=None):
        return np.broadcast_to(value, (x.shape[0],) + value.shape).copy()

    return coeff


@dataclass(frozen=True)
class Violation:
    requirement: str
    point: np.ndarray
    time: float
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation]
    samples: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.passed:
            return f"passed ({self.samples} samples)"
        lines = [f"{len(self.violations)} violation(s):"]
        for v in self.violations:
            lines.append(f"  {v.requirement} at x={np.array2string(v.point, precision=4)} t={v.time:g} {v.detail}")
        return "\n".join(lines)


def validate_problem(
    problem: BvpProblem,
    domain: BoundaryOracle,
    sample_count: int = 1000,
    rng_seed: int = 0,
) -> ValidationReport:
    """Check the structural hypotheses at random interior and boundary points.

    Reports the first witness of each violated requirement: sigma not lower
    triangular or with a non-positive diagonal, phi > 0 at sampled
    boundary points, c > 0 for an elliptic problem, and an elliptic problem with no
    absorbing boundary sample.  Violations are returned, not raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lo, hi = domain.bounding_box()
    pts = []
    need = sample_count
    while need > 0:
        cand = rng.uniform(lo, hi, size=(max(4 * need, 64), problem.dim))
        cand = cand[domain.distance(cand) <= 0.0]
        pts.append(cand[:need])
        need -= len(pts[-1])
    x = np.concatenate(pts)
    if problem.elliptic:
        tb = np.full(sample_count, math.inf)
    else:
        tb = rng.uniform(0.0, problem.horizon_T, size=sample_count)

    found: dict[str, Violation] = {}

    def note(name, bad, where, times, detail=""):
        if name not in found and np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            found[name] = Violation(name, where[i].copy(), float(times[i]), detail)

    sig = np.asarray(problem.eval_sigma(x, tb))
    upper = np.triu(sig, k=1)
    note("sigma not lower triangular", np.any(upper != 0.0, axis=(1, 2)), x, tb)
    note("sigma diagonal not positive", np.any(np.diagonal(sig, axis1=1, axis2=2) <= 0.0, axis=1), x, tb)

    q = domain.query(x)
    bpts = q.projection
    phi = problem.robin_phi(bpts, tb)
    note("robin_phi positive", phi > 0.0, bpts, tb)

    if problem.elliptic:
        c = problem.coeff_c(x, tb)
        note("elliptic with c > 0", c > 0.0, x, tb)
        if not np.any(q.absorbing):
            found.setdefault(
                "elliptic without absorbing boundary",
                Violation("elliptic without absorbing boundary", bpts[0].copy(), math.inf, "mean exit time is infinite"),
            )
    return ValidationReport(list(found.values()), sample_count)
