"""
Log-barrier interior-point method for small dense convex programs

    minimize    c^T z
    subject to  g_i(z) <= 0,  i = 1..m

with analytic constraint gradients and Hessians. Damped Newton centering,
barrier parameter multiplied by a fixed factor per outer step.
"""

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from data_model import BarrierOptions
from sim.errors import SolverFailureError

logger = logging.getLogger(__name__)

_ARMIJO = 0.25
_BACKTRACK = 0.5
_MIN_STEP = 1e-16


class ConvexProgram(Protocol):
    """Constraint oracle; the objective is linear."""

    cost: np.ndarray

    def constraints(self, z: np.ndarray) -> np.ndarray: ...

    def jacobian(self, z: np.ndarray) -> np.ndarray: ...

    def weighted_hessian(self, z: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """sum_i weights_i * Hessian(g_i)(z)."""
        ...


@dataclass
class BarrierResult:
    z: np.ndarray
    value: float
    outer_steps: int
    newton_steps: int
    duality_gap: float


def _barrier_value(program: ConvexProgram, z: np.ndarray, t: float) -> float:
    g = program.constraints(z)
    if not np.all(np.isfinite(g)) or np.any(g >= 0):
        return np.inf
    return float(t * program.cost @ z - np.sum(np.log(-g)))


def _center(program: ConvexProgram, z: np.ndarray, t: float, options: BarrierOptions):
    """Damped Newton on t c^T z - sum log(-g(z)). Returns (z, steps)."""
    for step in range(1, options.max_newton_steps + 1):
        g = program.constraints(z)
        jac = program.jacobian(z)
        inv = 1.0 / (-g)
        grad = t * program.cost + jac.T @ inv
        hess = (jac.T * inv ** 2) @ jac + program.weighted_hessian(z, inv)
        try:
            direction = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            direction = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        decrement = float(-grad @ direction)
        if decrement / 2.0 <= options.newton_tolerance:
            return z, step
        current = _barrier_value(program, z, t)
        # near the center any feasible step is accepted
        trust = decrement < 0.25
        s = 1.0
        while s > _MIN_STEP:
            candidate = z + s * direction
            value = _barrier_value(program, candidate, t)
            if np.isfinite(value) and (trust or value <= current - _ARMIJO * s * decrement):
                break
            s *= _BACKTRACK
        else:
            if decrement / 2.0 <= 1e3 * options.newton_tolerance:
                return z, step
            raise SolverFailureError("barrier line search stalled", t=t, newton_step=step,
                                     decrement=decrement, residual=float(np.linalg.norm(grad)))
        z = candidate
    raise SolverFailureError("Newton centering did not converge", t=t,
                             max_newton_steps=options.max_newton_steps)


def minimize_barrier(program: ConvexProgram, z0: np.ndarray, options: BarrierOptions) -> BarrierResult:
    """Solve from a strictly feasible z0 until m/t falls below the gap tolerance."""
    g0 = program.constraints(z0)
    if np.any(g0 >= 0) or not np.all(np.isfinite(g0)):
        raise SolverFailureError("barrier start point is not strictly feasible",
                                 worst_constraint=float(np.max(g0)))
    z = np.asarray(z0, dtype=float).copy()
    m = g0.size
    t = options.initial_t
    total_newton = 0
    for outer in range(1, options.max_outer_steps + 1):
        z, steps = _center(program, z, t, options)
        total_newton += steps
        if m / t < options.gap_tolerance:
            logger.debug("barrier converged: outer=%d newton=%d gap=%.2e", outer, total_newton, m / t)
            return BarrierResult(z, float(program.cost @ z), outer, total_newton, m / t)
        t *= options.barrier_factor
    raise SolverFailureError("barrier did not reach the gap tolerance", outer_steps=options.max_outer_steps,
                             duality_gap=m / t)
