"""Adaptive-N Monte Carlo estimation and timestep convergence studies.

Trajectory ``i`` always consumes the random words addressed by index ``i``,
and the stopping rule is checked on 100-trajectory blocks taken in index
order.  The estimate is therefore a function of the seed alone: chunk
sizes and worker count only change how fast it is computed.
"""

from __future__ import annotations

import math
import multiprocessing
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import BoundaryOracle
from .integrators import Method, StepParams, run_batch
from .problem import BvpProblem
from .sampling import CounterStreams

PILOT = 100
BLOCK = 100
MAX_CHUNK = 100_000


@dataclass
class EstimatorState:
    """Running count, mean and sum of squared deviations; mergeable."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def add_many(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.size:
            mean = float(values.mean())
            self.merge(EstimatorState(int(values.size), mean, float(((values - mean) ** 2).sum())))

    def merge(self, other: "EstimatorState") -> "EstimatorState":
        n = self.count + other.count
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.variance, 0.0) / self.count) if self.count > 1 else math.inf

    def satisfied(self, eps: float) -> bool:
        """The stopping rule sqrt(V_j / j) <= eps / 10."""
        return self.count >= PILOT and self.stderr <= eps / 10.0


@dataclass
class AdaptiveResult:
    estimate: float
    stderr: float
    n_used: int
    converged: bool
    mean_steps: float
    wall_time: float
    simulated: int


# Job shared with forked workers: the coefficient callables need not be picklable.
_JOB: dict = {}


def _simulate_range(bounds):
    lo, hi = bounds
    job = _JOB
    res = run_batch(job["problem"], job["oracle"], job["params"], job["x0"], job["streams"], np.arange(lo, hi))
    return res.values, res.steps


def _chunk_bounds(lo: int, hi: int, parts: int):
    edges = np.linspace(lo, hi, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def estimate_adaptive(
    problem: BvpProblem,
    oracle: BoundaryOracle,
    params: StepParams,
    x0,
    eps: float,
    seed: int = 0,
    max_n: int = 10_000_000,
    workers: int = 1,
    min_n: int = PILOT,
) -> AdaptiveResult:
    """Mean payoff with absolute accuracy goal ``eps``.

    Runs a pilot of 100 trajectories, then keeps adding 100-trajectory blocks
    until sqrt(V_j / j) <= eps / 10 or ``max_n`` is reached (``converged`` is
    then False).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if max_n < min_n:
        raise ValueError("max_n must be at least the pilot size")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    start = time.perf_counter()
    _JOB.update(problem=problem, oracle=oracle, params=params, x0=np.asarray(x0, dtype=float),
                streams=CounterStreams(seed))
    pool = multiprocessing.get_context("fork").Pool(workers) if workers > 1 else None
    state = EstimatorState()
    steps_total = 0
    simulated = 0
    try:
        stop = False
        while not stop and state.count < max_n:
            if state.count < min_n:
                want = min_n - state.count
            else:
                need = state.variance / (eps / 10.0) ** 2 - state.count
                want = int(min(max(1.1 * need, BLOCK), MAX_CHUNK, max_n - state.count))
                want = min(-(-want // BLOCK) * BLOCK, max_n - state.count)
            lo, hi = state.count, state.count + want
            bounds = _chunk_bounds(lo, hi, workers)
            parts = pool.map(_simulate_range, bounds) if pool else [_simulate_range(b) for b in bounds]
            values = np.concatenate([p[0] for p in parts])
            steps = np.concatenate([p[1] for p in parts])
            simulated += values.size
            used = 0
            for b0 in range(0, values.size, BLOCK):
                block = values[b0:b0 + BLOCK]
                state.add_many(block)
                used = b0 + block.size
                if state.count >= min_n and state.satisfied(eps):
                    stop = True
                    break
            steps_total += int(steps[:used].sum())
    finally:
        if pool:
            pool.close()
            pool.join()
        _JOB.clear()
    return AdaptiveResult(
        estimate=state.mean,
        stderr=state.stderr,
        n_used=state.count,
        converged=state.satisfied(eps),
        mean_steps=steps_total / max(state.count, 1),
        wall_time=time.perf_counter() - start,
        simulated=simulated,
    )


@dataclass
class ConvergenceRow:
    h: float
    estimate: float
    rel_error: float
    n_used: int
    stderr: float
    wall_time: float
    converged: bool = True


@dataclass
class StudyResult:
    rows: list[ConvergenceRow]
    delta: float
    # indices of rows left out of the regression (zero error)
    flagged: list[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.rows)


def regression_slope(h: Sequence[float], err: Sequence[float]) -> tuple[float, list[int]]:
    """Least-squares slope of log(err) against log(h); zero errors are skipped and flagged."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    flagged = [int(i) for i in np.flatnonzero(err == 0.0)]
    keep = err != 0.0
    if keep.sum() < 2:
        return math.nan, flagged
    slope = np.polyfit(np.log(h[keep]), np.log(err[keep]), 1)[0]
    return float(slope), flagged


def convergence_study(
    problem: BvpProblem,
    oracle: BoundaryOracle,
    x0,
    h_list: Sequence[float],
    eps_list: Sequence[float],
    u_exact: float,
    method: Method | str = Method.MM,
    seed: int = 0,
    workers: int = 1,
    psi=None,
    max_n: int = 10_000_000,
) -> StudyResult:
    """One adaptive estimate per timestep and the fitted rate.

    ``eps_list`` holds relative accuracy goals; each is scaled by |u_exact|.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("a study needs at least three timesteps")
    if len(set(h_list)) != len(h_list) or min(h_list) <= 0:
        raise ValueError("timesteps must be distinct and positive")
    if len(eps_list) != len(h_list):
        raise ValueError("eps_list and h_list must have the same length")
    if u_exact == 0:
        raise ValueError("relative errors need a nonzero exact value")
    rows = []
    for h, eps in zip(h_list, eps_list):
        params = StepParams(h, problem.dim, Method(method), psi=psi)
        res = estimate_adaptive(problem, oracle, params, x0, eps * abs(u_exact), seed, max_n, workers)
        rows.append(ConvergenceRow(h, res.estimate, abs(1.0 - res.estimate / u_exact), res.n_used,
                                   res.stderr, res.wall_time, res.converged))
    delta, flagged = regression_slope([r.h for r in rows], [r.rel_error for r in rows])
    return StudyResult(rows, delta, flagged)
