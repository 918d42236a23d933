"""
Uplink training-time minimization over transmit powers.

Successive convex approximation: at an expansion point u^(n) every rate
log2(1 + Y_k^2 / P_k) is replaced by its concave minorant

    log2(1+a) - a + 2 Y0 Y / P0 - a (Y^2 + P) / (Y0^2 + P0),   a = Y0^2 / P0,

which is tight at u^(n). The convex subproblem

    min x1 + x2
    s.t. S T / R_k <= x1          for all k
         K S T / sum_k R_k <= x2
         R_k <= minorant_k(u)
         0 <= u_k^2 <= p_max

is handed to the log-barrier solver. The solver works in normalized units
(v = u / sqrt(p_max), rates in bits/s/Hz, time in units of S T / prelog);
everything reported is in watts, bits/s and seconds.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from data_model import SolverOptions, SystemConfig
from sim.barrier import minimize_barrier
from sim.errors import (
    InternalError,
    InvalidArgumentError,
    InvalidExpansionPointError,
    UnservedUeError,
)
from sim.link_rate import (
    PowerAllocation,
    RateVector,
    SinrModel,
    TimingModel,
    TimingReport,
    uplink_time_async,
    uplink_time_sync,
)
from sim.scheduler import active_set

logger = logging.getLogger(__name__)

_LN2 = np.log(2.0)
_INTERIOR = 1e-6


@dataclass(frozen=True)
class PowerScenario:
    """One synchronous power-control instance."""
    model: SinrModel
    timing: TimingModel
    max_power: float

    @property
    def num_ues(self) -> int:
        return self.model.num_ues

    @classmethod
    def adc(cls, beta: np.ndarray, alpha: float, cfg: SystemConfig) -> "PowerScenario":
        return cls(SinrModel.from_adc(beta, alpha, cfg.noise_power_w, cfg.grad_dim),
                   TimingModel.from_config(cfg), cfg.max_power_w)

    @classmethod
    def dac(cls, beta: np.ndarray, zeta: Union[float, np.ndarray], mask: np.ndarray,
            cfg: SystemConfig) -> "PowerScenario":
        return cls(SinrModel.from_dac(beta, zeta, mask, cfg.noise_power_w, cfg.grad_dim),
                   TimingModel.from_config(cfg), cfg.max_power_w)

    def rates(self, p: np.ndarray) -> np.ndarray:
        return self.model.rates(p, self.timing.prelog)

    def evaluate(self, p: np.ndarray) -> TimingReport:
        """True uplink time at powers p."""
        return uplink_time_sync(self.rates(p), self.timing.update_bits, self.timing.rounds, self.num_ues)

    @property
    def time_unit(self) -> float:
        """Seconds per normalized time unit."""
        return self.timing.update_bits * self.timing.rounds / self.timing.prelog


@dataclass(frozen=True)
class DacScenario:
    """Masked DAC instance: one serving mask per round."""
    beta: np.ndarray
    zeta: Union[float, np.ndarray]
    masks: Sequence[np.ndarray]
    noise_power: float
    grad_dim: int
    timing: TimingModel
    max_power: float

    @classmethod
    def from_config(cls, beta: np.ndarray, zeta: Union[float, np.ndarray], masks: Sequence[np.ndarray],
                    cfg: SystemConfig) -> "DacScenario":
        return cls(beta, zeta, list(masks), cfg.noise_power_w, cfg.grad_dim,
                   TimingModel.from_config(cfg), cfg.max_power_w)

    def round_scenario(self, mask: np.ndarray) -> PowerScenario:
        """Per-round instance restricted to the UEs the mask serves."""
        served = active_set(mask)
        model = SinrModel.from_dac(self.beta, self.zeta, mask, self.noise_power, self.grad_dim).restrict(served)
        return PowerScenario(model, self.timing.per_round(), self.max_power)


@dataclass(frozen=True)
class ScaState:
    """Iterate of the outer loop; u in sqrt(watts), R in bits/s, times in seconds."""
    u: np.ndarray
    R: np.ndarray
    x: float
    x1: float
    x2: float
    iteration: int = 0

    @property
    def powers(self) -> np.ndarray:
        return self.u ** 2


@dataclass
class PowerSolution:
    allocation: PowerAllocation
    rates: RateVector
    report: TimingReport
    trace: List[float] = field(default_factory=list)
    iterations: int = 0
    restarted: bool = False

    @property
    def total_time(self) -> float:
        return self.report.total


@dataclass
class DacPowerSolution:
    """Per-round powers and rates (rounds x K, zero for silent UEs)."""
    powers: np.ndarray
    rates: np.ndarray
    report: TimingReport
    round_solutions: List[PowerSolution]
    distinct_masks: int

    @property
    def total_time(self) -> float:
        return self.report.total


def _minorant_terms(u0: np.ndarray, signal: np.ndarray, coupling: np.ndarray, floor: np.ndarray):
    """
    Coefficients of minorant_k(u) = const_k + q_k u_k - w_k (a_k u_k^2 + sum_i M_ki u_i^2 + c_k),
    in bits per channel use.
    """
    upsilon0 = u0 * np.sqrt(signal)
    pi0 = coupling @ u0 ** 2 + floor
    if np.any(pi0 <= 0):
        raise InvalidExpansionPointError("interference-plus-noise term must be positive at the expansion point",
                                         ues=np.flatnonzero(pi0 <= 0))
    a0 = upsilon0 ** 2 / pi0
    const = (np.log1p(a0) - a0) / _LN2
    q = 2.0 * upsilon0 * np.sqrt(signal) / pi0 / _LN2
    w = a0 / (upsilon0 ** 2 + pi0) / _LN2
    return const, q, w


def _minorant(u: np.ndarray, terms, signal: np.ndarray, coupling: np.ndarray, floor: np.ndarray) -> np.ndarray:
    const, q, w = terms
    return const + q * u - w * (signal * u ** 2 + coupling @ u ** 2 + floor)


def rate_lower_bound(u: np.ndarray, expansion: np.ndarray, model: SinrModel, prelog: float) -> np.ndarray:
    """Concave lower bound on every rate (bits/s) around the expansion point."""
    u = np.asarray(u, dtype=float)
    terms = _minorant_terms(np.asarray(expansion, dtype=float), model.signal, model.coupling, model.floor)
    return prelog * _minorant(u, terms, model.signal, model.coupling, model.floor)


class SurrogateProgram:
    """
    Convex subproblem around one expansion point, variables z = [v, r, x1, x2].

    Constraint blocks, in order: 1/r_k - x1, K/sum(r) - x2, r_k - minorant_k(v),
    v_k^2 - 1, -v_k, -r_k.
    """

    def __init__(self, scenario: PowerScenario, expansion: np.ndarray):
        model = scenario.model
        self.k = model.num_ues
        self.signal = model.signal * scenario.max_power
        self.coupling = model.coupling * scenario.max_power
        self.floor = model.floor
        self.terms = _minorant_terms(expansion, self.signal, self.coupling, self.floor)
        self.cost = np.zeros(2 * self.k + 2)
        self.cost[-2:] = 1.0

    def split(self, z: np.ndarray):
        k = self.k
        return z[:k], z[k:2 * k], z[2 * k], z[2 * k + 1]

    def minorant(self, v: np.ndarray) -> np.ndarray:
        return _minorant(v, self.terms, self.signal, self.coupling, self.floor)

    def _minorant_grad(self, v: np.ndarray) -> np.ndarray:
        _, q, w = self.terms
        grad = -2.0 * w[:, None] * self.coupling * v[None, :]
        grad[np.diag_indices(self.k)] += q - 2.0 * w * self.signal * v
        return grad

    def constraints(self, z: np.ndarray) -> np.ndarray:
        v, r, x1, x2 = self.split(z)
        with np.errstate(divide="ignore"):
            per_ue = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0) - x1, np.inf)
            total = r.sum()
            fronthaul = self.k / total - x2 if total > 0 else np.inf
        return np.concatenate([per_ue, [fronthaul], r - self.minorant(v), v ** 2 - 1.0, -v, -r])

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        v, r, _, _ = self.split(z)
        k = self.k
        jac = np.zeros((5 * k + 1, 2 * k + 2))
        rows = np.arange(k)
        jac[rows, k + rows] = -1.0 / r ** 2
        jac[rows, 2 * k] = -1.0
        jac[k, k:2 * k] = -k / r.sum() ** 2
        jac[k, 2 * k + 1] = -1.0
        base = k + 1
        jac[base + rows, :k] = -self._minorant_grad(v)
        jac[base + rows, k + rows] = 1.0
        base += k
        jac[base + rows, rows] = 2.0 * v
        base += k
        jac[base + rows, rows] = -1.0
        base += k
        jac[base + rows, k + rows] = -1.0
        return jac

    def weighted_hessian(self, z: np.ndarray, weights: np.ndarray) -> np.ndarray:
        v, r, _, _ = self.split(z)
        k = self.k
        _, _, w = self.terms
        hess = np.zeros((2 * k + 2, 2 * k + 2))
        r_block = np.arange(k, 2 * k)
        hess[r_block, r_block] += weights[:k] * 2.0 / r ** 3
        hess[k:2 * k, k:2 * k] += weights[k] * 2.0 * k / r.sum() ** 3
        rate_weights = weights[k + 1:2 * k + 1] * w
        # Hessian of -minorant_k is 2 w_k (diag(M_k) + a_k e_k e_k^T)
        v_diag = 2.0 * (rate_weights @ self.coupling) + 2.0 * rate_weights * self.signal
        v_diag += 2.0 * weights[2 * k + 1:3 * k + 1]
        hess[np.arange(k), np.arange(k)] += v_diag
        return hess


def _start_point(program: SurrogateProgram, v_prev: np.ndarray) -> np.ndarray:
    v = np.clip(v_prev, _INTERIOR, 1.0 - _INTERIOR)
    bound = program.minorant(v)
    if np.any(bound <= 0):
        raise InvalidExpansionPointError("rate bound is not positive at the expansion point",
                                         ues=np.flatnonzero(bound <= 0))
    r = 0.9 * bound
    x1 = 1.1 * np.max(1.0 / r)
    x2 = 1.1 * program.k / r.sum()
    return np.concatenate([v, r, [x1, x2]])


def _state_at(u: np.ndarray, scenario: PowerScenario, iteration: int) -> ScaState:
    report = scenario.evaluate(u ** 2)
    return ScaState(u=u, R=scenario.rates(u ** 2), x=report.total,
                    x1=float(report.per_ue_time.max()), x2=report.fronthaul_time, iteration=iteration)


def solve_subproblem(state: ScaState, scenario: PowerScenario, options: SolverOptions) -> ScaState:
    """
    One convex step around state.u. The returned state carries the true rates
    and time at the new powers, which are never worse than the surrogate's.
    """
    v_prev = state.u / np.sqrt(scenario.max_power)
    program = SurrogateProgram(scenario, v_prev)
    result = minimize_barrier(program, _start_point(program, v_prev), options.barrier)
    v, _, _, _ = program.split(result.z)
    u = np.sqrt(scenario.max_power) * np.clip(v, 0.0, 1.0)
    logger.debug("subproblem %d: surrogate %.6e s after %d Newton steps", state.iteration + 1,
                 result.value * scenario.time_unit, result.newton_steps)
    return _state_at(u, scenario, state.iteration + 1)


def initial_powers(scenario: PowerScenario, point: str) -> np.ndarray:
    if point == "full":
        return np.full(scenario.num_ues, scenario.max_power)
    if point == "half":
        return np.full(scenario.num_ues, scenario.max_power / 2.0)
    raise InvalidArgumentError(f"unknown initial point {point!r}")


def _check_served(scenario: PowerScenario) -> None:
    silent = np.flatnonzero(scenario.model.signal <= 0)
    if silent.size:
        ues = [scenario.model.ues[i] for i in silent] if scenario.model.ues else silent
        raise UnservedUeError("UE has no useful signal at any AP", ues=ues)


def _run_sca(scenario: PowerScenario, options: SolverOptions, p0: np.ndarray) -> Tuple[ScaState, List[float]]:
    state = _state_at(np.sqrt(p0), scenario, 0)
    trace = [state.x]
    for _ in range(options.max_outer_iters):
        candidate = solve_subproblem(state, scenario, options)
        slack = options.monotone_slack * max(1.0, state.x)
        if candidate.x > state.x + slack:
            raise InternalError("SCA objective increased", iteration=candidate.iteration,
                                previous=state.x, current=candidate.x)
        if candidate.x > state.x:
            logger.debug("SCA stalled within numerical slack at iteration %d", candidate.iteration)
            break
        trace.append(candidate.x)
        converged = abs(state.x - candidate.x) <= options.tolerance_s
        state = candidate
        if converged:
            break
    return state, trace


def _solution(scenario: PowerScenario, state: ScaState, trace: List[float], restarted: bool) -> PowerSolution:
    powers = state.powers
    return PowerSolution(
        allocation=PowerAllocation(powers).validate(scenario.max_power),
        rates=RateVector(scenario.rates(powers)),
        report=scenario.evaluate(powers),
        trace=trace,
        iterations=state.iteration,
        restarted=restarted,
    )


def full_power_baseline(scenario: PowerScenario) -> PowerSolution:
    """Every UE at p_max."""
    _check_served(scenario)
    powers = initial_powers(scenario, "full")
    report = scenario.evaluate(powers)
    return PowerSolution(PowerAllocation(powers), RateVector(scenario.rates(powers)), report, [report.total])


def sca_solve(scenario: PowerScenario, options: Optional[SolverOptions] = None) -> PowerSolution:
    """
    Outer SCA loop from the configured initial point. If the result is slower
    than full power, the loop is rerun from full power and the faster of the
    two is returned.
    """
    options = options or SolverOptions()
    _check_served(scenario)
    state, trace = _run_sca(scenario, options, initial_powers(scenario, options.initial_point))
    baseline = full_power_baseline(scenario)
    if options.initial_point != "full" and state.x > baseline.total_time:
        logger.info("SCA from %s power ended above full power (%.6e s > %.6e s); restarting from full power",
                    options.initial_point, state.x, baseline.total_time)
        retry, retry_trace = _run_sca(scenario, options, initial_powers(scenario, "full"))
        if retry.x < state.x:
            return _solution(scenario, retry, retry_trace, restarted=True)
    return _solution(scenario, state, trace, restarted=False)


def sca_solve_dac(scenario: DacScenario, options: Optional[SolverOptions] = None,
                  baseline: bool = False) -> DacPowerSolution:
    """
    Round-by-round solve: rounds share no variables once masks are fixed.
    Identical masks are solved once. baseline=True uses full power instead.
    """
    options = options or SolverOptions()
    if not scenario.masks:
        raise InvalidArgumentError("need at least one round")
    num_ues = scenario.beta.shape[1]
    rounds = len(scenario.masks)
    powers = np.zeros((rounds, num_ues))
    rates = np.zeros((rounds, num_ues))
    cache: Dict[bytes, PowerSolution] = {}
    solutions = []
    for t, mask in enumerate(scenario.masks):
        mask = np.asarray(mask, dtype=np.int8)
        key = mask.tobytes() + bytes(str(mask.shape), "ascii")
        if key not in cache:
            sub = scenario.round_scenario(mask)
            cache[key] = full_power_baseline(sub) if baseline else sca_solve(sub, options)
        solution = cache[key]
        served = list(active_set(mask))
        powers[t, served] = solution.allocation.p
        rates[t, served] = solution.rates.r
        solutions.append(solution)
    report = uplink_time_async(rates, scenario.masks, scenario.timing.update_bits)
    logger.debug("DAC power control: %d rounds, %d distinct masks, %.6e s", rounds, len(cache), report.total)
    return DacPowerSolution(powers, rates, report, solutions, len(cache))
