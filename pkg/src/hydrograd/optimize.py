"""The three optimizer branches and their shared trace record.

- global_uniform_search: deterministic derivative-free coordinate descent
  over normalized parameter space (step halving, fixed restarts), used for
  the spatially uniform baseline.
- quasi_newton_bounded: bound-constrained limited-memory quasi-Newton via
  scipy, with the termination triplet: iteration cap, relative cost
  decrease <= eps*1e6, projected-gradient norm <= 1e-12.
- adam_train: full-batch Adam with the update
      rho <- rho - eta * m / ((1-beta1) * (sqrt(v/(1-beta2)) + eps))
  and per-layer moment states persisting across epochs.
"""

import hashlib
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import LineSearchFailureWarning, NonFiniteGradientError

EPS_MACHINE = np.finfo(np.float64).eps
DEFAULT_FTOL = EPS_MACHINE * 1e6
DEFAULT_PGTOL = 1e-12

TERM_MAX_ITERATIONS = "max_iterations"
TERM_COST_DECREASE = "cost_decrease"
TERM_GRADIENT_NORM = "gradient_norm"
TERM_LINE_SEARCH = "line_search_failure"
TERM_EPOCHS = "epochs"
TERM_STEP_FLOOR = "step_floor"


@dataclass
class TraceRecord:
    iteration: int
    cost: float
    pg_norm: float
    control_hash: str
    wall_time: float


@dataclass
class OptimTrace:
    records: list = field(default_factory=list)
    termination: str = ""
    initial_cost: float = float("nan")

    def append(self, iteration, cost, pg_norm, vector):
        self.records.append(TraceRecord(
            iteration=iteration,
            cost=float(cost),
            pg_norm=float(pg_norm),
            control_hash=hashlib.sha256(
                np.ascontiguousarray(vector, dtype=np.float64).tobytes()
            ).hexdigest()[:16],
            wall_time=time.perf_counter(),
        ))

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    def best_so_far(self) -> np.ndarray:
        """Non-increasing envelope of the cost curve."""
        costs = self.costs
        if self.records and np.isfinite(self.initial_cost):
            costs = np.minimum(costs, self.initial_cost)
        return np.minimum.accumulate(costs) if costs.size else costs

    def __len__(self) -> int:
        return len(self.records)


# --------------------------------------------------------------------------
# derivative-free uniform search
# --------------------------------------------------------------------------

def global_uniform_search(evaluate, bounds, maxiter: int = 200,
                          restarts: int = 3, init_step: float = 0.25,
                          min_step: float = 1e-4):
    """Minimize J(theta) over the uniform parameter box.

    evaluate: callable on a (4,) parameter vector.  Deterministic cyclic
    coordinate descent in normalized coordinates: from each restart point,
    probe +-step on every coordinate, keep improvements, halve the step on
    stagnant cycles.  Returns (theta, OptimTrace); theta stays strictly
    inside the box (margin 1e-6 of the span).
    """
    lower = np.asarray(bounds.lower, dtype=np.float64)
    span = np.asarray(bounds.upper, dtype=np.float64) - lower
    margin = 1e-6
    n = lower.size

    def theta_of(zeta):
        return lower + zeta * span

    starts = [0.5, 0.25, 0.75]
    trace = OptimTrace()
    best_zeta = None
    best_cost = np.inf
    iteration = 0
    for s in starts[:max(1, restarts)]:
        zeta = np.full(n, s)
        cost = float(evaluate(theta_of(zeta)))
        if iteration == 0:
            trace.initial_cost = cost
        if cost < best_cost:
            best_cost, best_zeta = cost, zeta.copy()
        step = init_step
        while step >= min_step and iteration < maxiter:
            improved = False
            for k in range(n):
                cand_best = None
                for sign in (1.0, -1.0):
                    z = float(np.clip(zeta[k] + sign * step, margin, 1.0 - margin))
                    if z == zeta[k]:
                        continue
                    cand = zeta.copy()
                    cand[k] = z
                    c = float(evaluate(theta_of(cand)))
                    if cand_best is None or c < cand_best[0]:
                        cand_best = (c, z)
                if cand_best is not None and cand_best[0] < cost:
                    cost = cand_best[0]
                    zeta[k] = cand_best[1]
                    improved = True
            iteration += 1
            trace.append(iteration, cost, float("nan"), theta_of(zeta))
            if cost < best_cost:
                best_cost, best_zeta = cost, zeta.copy()
            if not improved:
                step *= 0.5
    trace.termination = (
        TERM_MAX_ITERATIONS if iteration >= maxiter else TERM_STEP_FLOOR
    )
    return theta_of(best_zeta), trace


# --------------------------------------------------------------------------
# bounded quasi-Newton
# --------------------------------------------------------------------------

def _projected_gradient_norm(x, g, var_bounds):
    pg = np.array(g, dtype=np.float64)
    for i, (lo, hi) in enumerate(var_bounds):
        if lo is not None and x[i] <= lo and g[i] > 0:
            pg[i] = 0.0
        if hi is not None and x[i] >= hi and g[i] < 0:
            pg[i] = 0.0
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def _classify_lbfgsb(status: int, message: str) -> str:
    msg = str(message).upper()
    if "PGTOL" in msg or "PROJECTED GRADIENT" in msg:
        return TERM_GRADIENT_NORM
    if "FACTR" in msg or ("REL" in msg and "REDUCTION" in msg):
        return TERM_COST_DECREASE
    if status == 1 or "ITERATIONS" in msg or "EVALUATIONS" in msg:
        return TERM_MAX_ITERATIONS
    return TERM_LINE_SEARCH


def quasi_newton_bounded(fun_grad, x0, var_bounds=None, maxiter: int = 250,
                         memory: int = 10, ftol: float = DEFAULT_FTOL,
                         pgtol: float = DEFAULT_PGTOL, iterate_callback=None):
    """Bound-constrained limited-memory quasi-Newton minimization.

    fun_grad(x) -> (J, gradient).  var_bounds: per-entry (low, high) pairs,
    None entries unbounded.  Returns (x, trace); on an abnormal line-search
    stop a LineSearchFailureWarning is issued and the best iterate found is
    returned.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if var_bounds is None:
        var_bounds = [(None, None)] * x0.size
    cache = {}

    def wrapped(x):
        key = x.tobytes()
        if key not in cache:
            cost, grad = fun_grad(np.asarray(x, dtype=np.float64))
            grad = np.asarray(grad, dtype=np.float64)
            if not np.isfinite(cost) or not np.isfinite(grad).all():
                raise NonFiniteGradientError(
                    "non-finite cost or gradient in quasi-Newton step"
                )
            cache[key] = (float(cost), grad)
        return cache[key]

    trace = OptimTrace()
    c0, g0 = wrapped(x0)
    trace.initial_cost = c0

    def callback(xk):
        xk = np.asarray(xk, dtype=np.float64)
        cost, grad = wrapped(xk)
        pg = _projected_gradient_norm(xk, grad, var_bounds)
        trace.append(len(trace) + 1, cost, pg, xk)
        if iterate_callback is not None:
            iterate_callback(xk, cost, grad)

    result = minimize(
        wrapped, x0, jac=True, method="L-BFGS-B", bounds=var_bounds,
        callback=callback,
        options=dict(maxiter=maxiter, maxcor=memory, ftol=ftol, gtol=pgtol),
    )
    trace.termination = _classify_lbfgsb(result.status, result.message)
    if trace.termination == TERM_LINE_SEARCH:
        warnings.warn(
            f"line search failed: {result.message}; returning best iterate",
            LineSearchFailureWarning,
        )
    return np.asarray(result.x, dtype=np.float64), trace


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

def adam_step(params, grads, m, v, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One in-place update per array; m and v are the persistent moments."""
    for j in range(len(params)):
        m[j] = beta1 * m[j] + (1.0 - beta1) * grads[j]
        v[j] = beta2 * v[j] + (1.0 - beta2) * grads[j] ** 2
        params[j] = params[j] - learning_rate * m[j] / (
            (1.0 - beta1) * (np.sqrt(v[j] / (1.0 - beta2)) + eps)
        )
    return params, m, v


def adam_train(params, fun_grad, epochs: int, learning_rate: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               epoch_callback=None):
    """Full-batch Adam over a list of parameter arrays.

    fun_grad(params) -> (J, grads) with grads shaped like params.  The cost
    recorded at each epoch is the value at the epoch's evaluation point
    (before the update).  Returns (params, trace).
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    trace = OptimTrace()
    for epoch in range(1, epochs + 1):
        cost, grads = fun_grad(params)
        grads = [np.asarray(g, dtype=np.float64) for g in grads]
        if not np.isfinite(cost) or any(
            not np.isfinite(g).all() for g in grads
        ):
            raise NonFiniteGradientError(
                f"non-finite cost or gradient at epoch {epoch}"
            )
        if epoch == 1:
            trace.initial_cost = float(cost)
        params, m, v = adam_step(
            params, grads, m, v, learning_rate, beta1, beta2, eps
        )
        ginf = max(float(np.max(np.abs(g))) if g.size else 0.0 for g in grads)
        trace.append(
            epoch, cost, ginf, np.concatenate([p.ravel() for p in params])
        )
        if epoch_callback is not None:
            epoch_callback(epoch, cost, params)
    trace.termination = TERM_EPOCHS
    return params, trace
