"""Cone-preserving weak second-order scheme for the multifactor square-root model.

The time step is a Strang composition: half an exact linear-drift step, a
moment-matched three-point jump of the aggregate, and another half drift
step.  Both pieces map the state-space cone into itself, so the composition
does as well, which keeps every square-root argument non-negative along the
whole simulation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import expm

from .admissible import AdmissibleMatrix
from .model import ModelParams

Array = NDArray[np.float64]

logger = logging.getLogger(__name__)

#: spread constant of the three-point law
SPREAD = (3.0 + math.sqrt(3.0)) / 4.0
#: below this, the three-point law collapses to a point mass
DEGENERATE_EPS = 1e-14
#: probabilities are audited against [0, 1] at this slack and logged if outside
PROB_SLACK = 1e-12
#: aggregates below -AGGREGATE_TOL abort the simulation as a cone violation
AGGREGATE_TOL = 1e-9


@dataclass(eq=False)
class DriftSystem:
    """Linear drift d/dt v = A v + b with cached exact propagators.

    A couples the factors through the aggregate, b collects the mean levels.
    The propagator pair (exp(A h), integral of exp(A s) ds @ b) is computed
    from the exponential of the augmented (N+1) block matrix [[A, b], [0, 0]],
    which avoids inverting A and stays valid when A is singular.
    """

    A: Array
    b: Array
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_params(cls, params: ModelParams) -> "DriftSystem":
        n = params.n_factors
        a = -params.lam * np.outer(np.ones(n), params.w) - np.diag(params.x)
        b = params.theta * np.ones(n) + params.x * params.v0
        return cls(A=a, b=b)

    def propagators(self, h: float) -> tuple[Array, Array]:
        """Pair (exp(A h), c(h)) with c(h) the accumulated constant forcing."""
        h = float(h)
        if h < 0.0:
            raise ValueError(f"step size must be >= 0, got {h}")
        hit = self._cache.get(h)
        if hit is not None:
            return hit
        n = self.A.shape[0]
        if h == 0.0:
            pair = (np.eye(n), np.zeros(n))
        else:
            aug = np.zeros((n + 1, n + 1))
            aug[:n, :n] = self.A
            aug[:n, n] = self.b
            full = expm(aug * h)
            pair = (full[:n, :n].copy(), full[:n, n].copy())
        self._cache[h] = pair
        return pair


def ode_step(system: DriftSystem, z, h: float) -> Array:
    """Exact solution of the linear drift ODE after time h from state z."""
    z_arr = np.asarray(z, dtype=float)
    prop, shift = system.propagators(h)
    return prop @ z_arr + shift


@dataclass(frozen=True)
class ThreePointLaw:
    """Discrete law on three support points matching the first three moments.

    For aggregate x and variance budget z the target moments are
    m1 = x, m2 = x^2 + x z, m3 = x^3 + 3 x^2 z + 1.5 x z^2.
    """

    x1: float
    x2: float
    x3: float
    p1: float
    p2: float
    p3: float
    x: float
    z: float

    @property
    def support(self) -> tuple[float, float, float]:
        return (self.x1, self.x2, self.x3)

    @property
    def probabilities(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.p3)

    def moments(self) -> tuple[float, float, float]:
        pts = np.array(self.support)
        pr = np.array(self.probabilities)
        return (float(pr @ pts), float(pr @ pts**2), float(pr @ pts**3))

    def sample(self, u: float) -> float:
        """Inverse-CDF draw in index order on [0, p1), [p1, p1+p2), [p1+p2, 1)."""
        if u < self.p1:
            return self.x1
        if u < self.p1 + self.p2:
            return self.x2
        return self.x3


def _law_arrays(x: Array, z: float) -> tuple[Array, Array, Array, Array, Array, Array]:
    """Vectorized support points and probabilities of the three-point law.

    Degenerate inputs (x or z below DEGENERATE_EPS) collapse to a point mass
    at x, which is the limit law as the support gaps close.  The lower
    support point is evaluated in rationalized form so it is non-negative in
    floating point, not only algebraically.
    """
    x = np.asarray(x, dtype=float)
    top = x + (SPREAD + 0.75) * z
    s = np.sqrt((3.0 * x + (SPREAD + 0.75) ** 2 * z) * z)
    degenerate = (x <= DEGENERATE_EPS) | (z <= DEGENERATE_EPS)
    denom = np.where(degenerate, 1.0, top + s)
    x1 = (x * x + (2.0 * SPREAD - 1.5) * x * z) / denom
    x2 = x + SPREAD * z
    x3 = top + s

    m1 = x
    m2 = x * (x + z)
    m3 = x * (x * x + 3.0 * x * z + 1.5 * z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = (m1 * x2 * x3 - m2 * (x2 + x3) + m3) / (x1 * (x3 - x1) * (x2 - x1))
        p2 = (m1 * x1 * x3 - m2 * (x1 + x3) + m3) / (x2 * (x3 - x2) * (x1 - x2))
        p3 = (m1 * x1 * x2 - m2 * (x1 + x2) + m3) / (x3 * (x1 - x3) * (x2 - x3))

    x1 = np.where(degenerate, x, x1)
    x2 = np.where(degenerate, x, x2)
    x3 = np.where(degenerate, x, x3)
    p1 = np.where(degenerate, 1.0, p1)
    p2 = np.where(degenerate, 0.0, p2)
    p3 = np.where(degenerate, 0.0, p3)
    return x1, x2, x3, p1, p2, p3


def _audit_probabilities(p1: Array, p2: Array, p3: Array) -> int:
    bad = 0
    for p in (p1, p2, p3):
        bad += int(np.sum((p < -PROB_SLACK) | (p > 1.0 + PROB_SLACK)))
    if bad:
        logger.warning("three-point law produced %d probabilities outside [0, 1]", bad)
    return bad


def three_point_law(x: float, z: float) -> ThreePointLaw:
    """Three-point law for a single aggregate x >= 0 and variance budget z >= 0."""
    x = float(x)
    z = float(z)
    if x < 0.0:
        raise ValueError(f"aggregate must be >= 0, got {x}")
    if z < 0.0:
        raise ValueError(f"variance budget must be >= 0, got {z}")
    x1, x2, x3, p1, p2, p3 = (float(v[0]) for v in _law_arrays(np.array([x]), z))
    _audit_probabilities(np.array([p1]), np.array([p2]), np.array([p3]))
    return ThreePointLaw(x1=x1, x2=x2, x3=x3, p1=p1, p2=p2, p3=p3, x=x, z=z)


def stochastic_step(params: ModelParams, y, h: float, u: float) -> Array:
    """One jump of the noise part: shift all factors by the aggregate increment.

    The aggregate is redrawn from the three-point law and the common shift
    (draw - aggregate) / wbar is added to every component, so the new
    aggregate equals the draw and stays non-negative.
    """
    y_arr = np.asarray(y, dtype=float)
    agg = float(params.w @ y_arr)
    if agg < -AGGREGATE_TOL:
        raise ValueError(f"aggregate {agg} is negative beyond tolerance, state left the cone")
    agg = max(agg, 0.0)
    z = params.nu**2 * params.wbar**2 * float(h)
    law = three_point_law(agg, z)
    draw = law.sample(float(u))
    return y_arr + (draw - agg) / params.wbar


def strang_step(params: ModelParams, system: DriftSystem, v, h: float, u: float) -> Array:
    """Half drift step, aggregate jump over the full step, half drift step."""
    half = ode_step(system, v, 0.5 * h)
    jumped = stochastic_step(params, half, h, u)
    return ode_step(system, jumped, 0.5 * h)


@dataclass(frozen=True)
class PathConfig:
    """Grid and sampling configuration of a simulation run."""

    T: float
    M: int
    n_paths: int
    seed: int
    record_full: bool = False

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError(f"horizon must be > 0, got {self.T}")
        if self.M < 1:
            raise ValueError(f"number of steps must be >= 1, got {self.M}")
        if self.n_paths < 1:
            raise ValueError(f"number of paths must be >= 1, got {self.n_paths}")


@dataclass(eq=False)
class SampleCloud:
    """Recorded states of a simulation together with its cone audit.

    ``states`` has shape (n_paths, n_recorded, N); the per-path minima are
    taken over every grid state of the run, not only the recorded ones.
    """

    times: Array
    steps: NDArray[np.int64]
    states: Array
    transformed: Array
    aggregates: Array
    min_transformed_per_path: Array
    min_aggregate_per_path: Array
    n_violations: int
    sqrt_clamp_count: int
    prob_violations: int
    config: PathConfig
    tol: float

    @property
    def min_transformed(self) -> float:
        return float(np.min(self.min_transformed_per_path))

    @property
    def min_aggregate(self) -> float:
        return float(np.min(self.min_aggregate_per_path))

    def audit(self) -> dict:
        return {
            "min_transformed": self.min_transformed,
            "min_aggregate": self.min_aggregate,
            "n_violations": int(self.n_violations),
        }


def _path_uniforms(seed: int, first: int, count: int, n_steps: int) -> Array:
    """One uniform per step for paths first..first+count-1.

    Path k always draws from the substream seeded by (seed, k), so results
    do not depend on how paths are split across workers.
    """
    out = np.empty((count, n_steps))
    for i in range(count):
        out[i] = np.random.default_rng([seed, first + i]).random(n_steps)
    return out


def _simulate_block(
    initial: Array,
    q_mat: Array,
    w: Array,
    wbar: float,
    prop: Array,
    shift: Array,
    z_budget: float,
    uniforms: Array,
    record_full: bool,
    tol: float,
    skip_final_half_step: bool,
) -> dict:
    n_paths, n_steps = uniforms.shape
    state = np.tile(initial, (n_paths, 1))
    prop_t = prop.T
    q_t = q_mat.T

    min_trans = (state @ q_t).min(axis=1)
    min_agg = state @ w
    n_violations = int(np.sum(min_trans < -tol))
    sqrt_clamps = 0
    prob_violations = 0
    if record_full:
        recorded = np.empty((n_paths, n_steps + 1, state.shape[1]))
        recorded[:, 0] = state

    for j in range(n_steps):
        state = state @ prop_t + shift
        agg = state @ w
        low = float(agg.min())
        if low < -AGGREGATE_TOL:
            raise RuntimeError(
                f"aggregate {low} fell below -{AGGREGATE_TOL} at step {j}, state left the cone"
            )
        if low < 0.0:
            sqrt_clamps += int(np.sum(agg < 0.0))
            agg = np.maximum(agg, 0.0)
        x1, x2, x3, p1, p2, p3 = _law_arrays(agg, z_budget)
        prob_violations += _audit_probabilities(p1, p2, p3)
        u = uniforms[:, j]
        draw = np.where(u < p1, x1, np.where(u < p1 + p2, x2, x3))
        state = state + ((draw - agg) / wbar)[:, None]
        if not (skip_final_half_step and j == n_steps - 1):
            state = state @ prop_t + shift
        low_now = (state @ q_t).min(axis=1)
        np.minimum(min_trans, low_now, out=min_trans)
        np.minimum(min_agg, state @ w, out=min_agg)
        n_violations += int(np.sum(low_now < -tol))
        if record_full:
            recorded[:, j + 1] = state

    if not record_full:
        recorded = state[:, None, :]
    return {
        "states": recorded,
        "min_trans": min_trans,
        "min_agg": min_agg,
        "n_violations": n_violations,
        "sqrt_clamps": sqrt_clamps,
        "prob_violations": prob_violations,
    }


def simulate(
    params: ModelParams,
    matrix: AdmissibleMatrix,
    config: PathConfig,
    initial_state=None,
    threads: int = 1,
    require_initial_in_cone: bool = True,
    tol: float = AGGREGATE_TOL,
    _skip_final_half_step: bool = False,
) -> SampleCloud:
    """Simulate independent paths on a uniform grid and audit cone membership.

    Path k draws one uniform per step from the substream seeded by
    (config.seed, k), so the sample cloud is reproducible bit for bit and
    independent of the number of worker threads.  ``_skip_final_half_step``
    is a test hook that deliberately corrupts the composition.
    """
    initial = np.asarray(params.v0 if initial_state is None else initial_state, dtype=float)
    if initial.shape != (params.n_factors,):
        raise ValueError(f"initial state must have shape ({params.n_factors},)")
    lowest = float(np.min(matrix.Q @ initial))
    if require_initial_in_cone and lowest < -tol:
        raise ValueError(f"initial state is outside the cone, min transformed component {lowest}")

    system = DriftSystem.from_params(params)
    h = config.T / config.M
    prop, shift = system.propagators(0.5 * h)
    z_budget = params.nu**2 * params.wbar**2 * h

    n_workers = max(1, int(threads))
    bounds = np.linspace(0, config.n_paths, min(n_workers, config.n_paths) + 1).astype(int)
    blocks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def run(lo: int, hi: int) -> dict:
        uniforms = _path_uniforms(config.seed, lo, hi - lo, config.M)
        return _simulate_block(
            initial,
            matrix.Q,
            params.w,
            params.wbar,
            prop,
            shift,
            z_budget,
            uniforms,
            config.record_full,
            tol,
            _skip_final_half_step,
        )

    if len(blocks) == 1:
        results = [run(*blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            results = list(pool.map(lambda pair: run(*pair), blocks))

    states = np.concatenate([r["states"] for r in results], axis=0)
    min_trans = np.concatenate([r["min_trans"] for r in results])
    min_agg = np.concatenate([r["min_agg"] for r in results])
    if config.record_full:
        steps = np.arange(config.M + 1, dtype=np.int64)
    else:
        steps = np.array([config.M], dtype=np.int64)
    times = steps * h
    return SampleCloud(
        times=times,
        steps=steps,
        states=states,
        transformed=states @ matrix.Q.T,
        aggregates=states @ params.w,
        min_transformed_per_path=min_trans,
        min_aggregate_per_path=min_agg,
        n_violations=int(sum(r["n_violations"] for r in results)),
        sqrt_clamp_count=int(sum(r["sqrt_clamps"] for r in results)),
        prob_violations=int(sum(r["prob_violations"] for r in results)),
        config=config,
        tol=tol,
    )


def mean_oracle(params: ModelParams, t: float, initial_state=None) -> Array:
    """Exact expectation of the state at time t.

    The mean solves the same linear drift ODE that the splitting integrates
    exactly, so it provides an independent check of the Monte Carlo average.
    """
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    initial = np.asarray(params.v0 if initial_state is None else initial_state, dtype=float)
    system = DriftSystem.from_params(params)
    return ode_step(system, initial, float(t))
