"""Scaled gradient projection with adaptive Barzilai-Borwein steplengths.

Used both as the inner solver for the per-iteration quadratic models and
as a standalone baseline on the smoothed objective.  The steplength
state (a short ring buffer of recent BB2-type steps plus the adaptive
switching threshold) survives across solver invocations so consecutive
calls do not restart from scratch.
"""

from collections import deque
from dataclasses import dataclass, field
import time

import numpy as np

from .constraints import DiagonalMetric


def _dot(a, b):
    return float(np.vdot(a, b))


@dataclass
class SgpConfig:
    max_iters: int = 10
    beta_ls: float = 1e-4          # sufficient-decrease fraction
    backtrack: float = 0.5
    max_backtracks: int = 50
    nu_min: float = 1e-10
    nu_max: float = 1e10
    scale_min: float = 1e-4        # diagonal scaling clamp bounds
    scale_max: float = 1e4
    identity_scaling: bool = False  # swap in C = I to probe sensitivity


@dataclass
class SteplengthState:
    """Cross-call memory for the adaptive BB steplength rule."""

    nu_min: float = 1e-10
    nu_max: float = 1e10
    q: int = 3
    tau_abb: float = 0.5
    buffer: deque = field(default_factory=lambda: deque(maxlen=3))
    prev_z: np.ndarray | None = None
    prev_g: np.ndarray | None = None

    def __post_init__(self):
        if self.buffer.maxlen != self.q:
            self.buffer = deque(self.buffer, maxlen=self.q)

    def begin_call(self):
        # A new invocation works on a new objective: the iterate/gradient
        # pair is stale, but the steplength buffer carries over.
        self.prev_z = None
        self.prev_g = None

    def record(self, z, g):
        self.prev_z = z
        self.prev_g = g


def scaling_matrix(z, lo=1e-4, hi=1e4):
    """Diagonal scaling: the iterate clamped into [lo, hi]."""
    return DiagonalMetric(np.clip(z, lo, hi), lo, hi)


def abbmin_steplength(state, metric, z=None, g=None):
    """Adaptive BB steplength in the metric induced by C = diag(metric).

    Falls back to the minimum buffered steplength when no iterate pair
    is available yet in this call, and to 1 on a completely cold start.
    """
    clamp = lambda nu: min(max(nu, state.nu_min), state.nu_max)
    if z is None or state.prev_z is None:
        if state.buffer:
            return clamp(min(state.buffer))
        return 1.0
    d = metric.d
    s = z - state.prev_z
    w = g - state.prev_g
    s_cinv_w = _dot(s / d, w)
    w_cc_w = _dot(w * d, w * d)
    if s_cinv_w <= 0 or w_cc_w <= 0:
        return state.nu_max
    nu_bb1 = _dot(s / d, s / d) / s_cinv_w
    nu_bb2 = _dot(s * d, w) / w_cc_w
    state.buffer.append(clamp(nu_bb2))
    if nu_bb2 / nu_bb1 < state.tau_abb:
        state.tau_abb *= 0.9
        return clamp(min(state.buffer))
    state.tau_abb *= 1.1
    return clamp(nu_bb1)


@dataclass
class SgpTrace:
    iterations: int = 0
    values: list = field(default_factory=list)
    pg_norms: list = field(default_factory=list)
    steplengths: list = field(default_factory=list)
    final_pg_norm: float = float("nan")
    line_search_failed: bool = False


def sgp_solve(model, feasible_set, z0, state, config,
              stop_norm_target=None, rel_change_tol=None,
              rel_change_patience=1, max_iters=None, max_time=None,
              monitor=None):
    """Run scaled gradient projection on a convex model over a feasible set.

    Stops when the projected-gradient norm reaches `stop_norm_target`,
    when the relative iterate change stays below `rel_change_tol` for
    `rel_change_patience` consecutive iterations, or on the iteration /
    wall-time caps.  The adaptive steplength rule alternates short and
    long Barzilai-Borwein steps, so a single small step is not evidence
    of convergence; a patience spanning one steplength cycle filters
    those transients out.  Every iterate is feasible and the objective
    sequence is monotone (Armijo sufficient decrease on each accepted
    step).
    """
    state.begin_call()
    z = np.asarray(z0, dtype=np.float64)
    limit = config.max_iters if max_iters is None else max_iters
    # Quadratic models expose their Hessian action; then line-search
    # trial values follow exactly from the one-dimensional restriction.
    hessian_vec = getattr(model, "hessian_vec", None)
    trace = SgpTrace()
    start = time.perf_counter()
    f_z = model.value(z)
    stopped_at_z = False
    calm = 0                    # consecutive small relative changes
    for _ in range(limit):
        g = model.gradient(z)
        pg_norm = float(np.linalg.norm(feasible_set.projected_gradient(z, g)))
        trace.pg_norms.append(pg_norm)
        if stop_norm_target is not None and pg_norm <= stop_norm_target:
            stopped_at_z = True
            break
        if config.identity_scaling:
            metric = DiagonalMetric(np.ones_like(z), 1.0, 1.0)
        else:
            metric = scaling_matrix(z, config.scale_min, config.scale_max)
        nu = abbmin_steplength(state, metric, z, g)
        p = feasible_set.project_weighted(metric, z - nu * metric.d * g)
        direction = p - z
        slope = _dot(g, direction)
        if slope >= 0:
            # Projection returned the current point (stationary for the
            # scaled step); nothing more to gain.
            stopped_at_z = True
            break
        rho = 1.0
        backtracks = 0
        if hessian_vec is not None:
            curv = _dot(direction, hessian_vec(direction))
            trial = lambda rho: f_z + rho * slope + 0.5 * rho * rho * curv
        else:
            trial = lambda rho: model.value(z + rho * direction)
        f_new = trial(rho)
        stalled = False
        while f_new > f_z + config.beta_ls * rho * slope:
            backtracks += 1
            if backtracks > config.max_backtracks:
                if abs(rho * slope) <= 1e-12 * max(abs(f_z), 1e-30):
                    # The last trial step's predicted decrease is below
                    # the round-off resolution of the objective value:
                    # no resolvable progress remains along this
                    # direction, so treat the iterate as stationary to
                    # working precision.
                    stalled = True
                    break
                trace.line_search_failed = True
                raise RuntimeError(
                    "SGP line search exhausted: model value and gradient "
                    "are inconsistent")
            rho *= config.backtrack
            f_new = trial(rho)
        if stalled:
            stopped_at_z = True
            break
        state.record(z, g)
        z_new = z + rho * direction
        rel_change = float(np.linalg.norm(z_new - z)) / max(
            float(np.linalg.norm(z)), np.finfo(float).tiny)
        z = z_new
        f_z = f_new
        trace.iterations += 1
        trace.values.append(f_z)
        trace.steplengths.append(nu)
        if monitor is not None:
            monitor(z, f_z, pg_norm)
        if rel_change_tol is not None:
            calm = calm + 1 if rel_change <= rel_change_tol else 0
            if calm >= rel_change_patience:
                break
        if max_time is not None and time.perf_counter() - start >= max_time:
            break
    if stopped_at_z:
        trace.final_pg_norm = trace.pg_norms[-1]
    else:
        trace.final_pg_norm = float(np.linalg.norm(
            feasible_set.projected_gradient(z, model.gradient(z))))
    return z, trace
