"""
Differential-privacy accounting for noise that the uplink adds for free.

The per-round ratio of sensitivity to effective noise accumulates into
Lambda = sum_t (Delta_t / m_t)^2. For epsilon > Lambda the probability that the
privacy loss exceeds epsilon is bounded in closed form by

    sqrt(2 Lambda) / (sqrt(pi) (epsilon - Lambda)) * exp(-(epsilon - Lambda)^2 / (2 Lambda)).

Noise is treated as real Gaussian per coordinate; complex samples are stacked
as real and imaginary parts.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erfc

from sim.channel import Stream
from sim.errors import InvalidArgumentError, MarginViolationError, ZeroNoiseError
from sim.quantization import aqnm_gain

logger = logging.getLogger(__name__)

MIN_MONTE_CARLO_SAMPLES = 10_000
MONTE_CARLO_SHARDS = 16


@dataclass(frozen=True)
class DpBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidArgumentError("epsilon must be positive", epsilon=self.epsilon)
        if not 0 <= self.delta < 1:
            raise InvalidArgumentError("delta must be in [0, 1)", delta=self.delta)


@dataclass(frozen=True)
class DpLedger:
    """Running privacy statistic; updated functionally."""
    sensitivities: Tuple[float, ...] = ()
    noise_stds: Tuple[float, ...] = ()
    lam: float = 0.0

    @property
    def rounds(self) -> int:
        return len(self.sensitivities)


@dataclass(frozen=True)
class DpVerdict:
    passed: bool
    lam: float
    epsilon: float
    delta: float
    bound: float
    tail: float
    reason: str = ""


def accumulate_lambda(ledger: DpLedger, sensitivity: float, noise_std: float) -> DpLedger:
    """Lambda' = Lambda + (Delta / m)^2."""
    if sensitivity < 0 or noise_std < 0:
        raise InvalidArgumentError("sensitivity and noise std must be nonnegative")
    if sensitivity == 0:
        ratio = 0.0
    elif noise_std == 0:
        raise ZeroNoiseError("round has sensitivity but no noise, so no privacy",
                             sensitivity=sensitivity, round=ledger.rounds)
    else:
        ratio = (sensitivity / noise_std) ** 2
    return replace(
        ledger,
        sensitivities=ledger.sensitivities + (float(sensitivity),),
        noise_stds=ledger.noise_stds + (float(noise_std),),
        lam=ledger.lam + ratio,
    )


def ledger_from_rounds(sensitivities: Iterable[float], noise_stds: Iterable[float]) -> DpLedger:
    ledger = DpLedger()
    for delta_t, m_t in zip(sensitivities, noise_stds):
        ledger = accumulate_lambda(ledger, delta_t, m_t)
    return ledger


def _coupling(channel: np.ndarray, k: int, statistics: bool) -> np.ndarray:
    """Per-AP coupling magnitude |h_lk* h_li| (L x K), or sqrt(beta_lk beta_li) from statistics."""
    if statistics:
        beta = np.asarray(channel, dtype=float)
        return np.sqrt(beta[:, [k]] * beta)
    h = np.asarray(channel)
    return np.abs(np.conj(h[:, [k]]) * h)


def sensitivity_adc(p: np.ndarray, alpha: float, channel: np.ndarray, k: int,
                    aggregation: str = "sum", ap: Optional[int] = None, statistics: bool = False) -> float:
    """
    max_i 2 alpha sqrt(p_i) |h_kl* h_il|.

    aggregation "sum" adds the coupling over APs; "per-ap" uses a single AP,
    the given one or the worst one. With statistics=True the channel argument is
    beta and the coupling is sqrt(beta_lk beta_li).
    """
    coupling = _coupling(channel, k, statistics)
    if aggregation == "sum":
        per_ue = coupling.sum(axis=0)
    elif aggregation == "per-ap":
        per_ue = coupling[ap] if ap is not None else coupling.max(axis=0)
    else:
        raise InvalidArgumentError(f"unknown aggregation {aggregation!r}", aggregation=aggregation)
    return float(np.max(2.0 * alpha * np.sqrt(np.asarray(p, dtype=float)) * per_ue))


def effective_noise_var_adc(p: np.ndarray, alpha: float, beta: np.ndarray, noise_power: float) -> np.ndarray:
    """m_k^2 for every UE: thermal term plus ADC distortion term."""
    beta = np.asarray(beta, dtype=float)
    total = beta.sum(axis=0)
    received = beta @ np.asarray(p, dtype=float) + noise_power  # per AP
    return alpha ** 2 * total * noise_power + alpha * (1.0 - alpha) * (beta.T @ received)


def effective_noise_std_adc(p: np.ndarray, alpha: float, beta: np.ndarray, noise_power: float, k: int) -> float:
    return float(np.sqrt(effective_noise_var_adc(p, alpha, beta, noise_power)[k]))


def sensitivity_dac(p: np.ndarray, channel: np.ndarray, mask: np.ndarray, l: int, statistics: bool = False) -> float:
    """2 max_{i served by AP l} sqrt(p_i) |h_il|."""
    served = np.flatnonzero(np.asarray(mask)[l])
    if served.size == 0:
        return 0.0
    magnitude = np.sqrt(np.asarray(channel, dtype=float)[l]) if statistics else np.abs(np.asarray(channel)[l])
    return float(2.0 * np.max(np.sqrt(np.asarray(p, dtype=float)[served]) * magnitude[served]))


def effective_noise_std_dac(p: np.ndarray, beta: np.ndarray, zeta: Union[float, np.ndarray],
                            mask: np.ndarray, noise_power: float, l: int) -> float:
    """sqrt(sum_i d_li beta_li zeta_i (1 - zeta_i) p_i + sigma^2) at AP l."""
    num_ues = beta.shape[1]
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), (num_ues,))
    distortion = np.asarray(mask, dtype=float)[l] * beta[l] * zeta * (1.0 - zeta) * np.asarray(p, dtype=float)
    return float(np.sqrt(distortion.sum() + noise_power))


def dp_violation_bound(lam: float, epsilon: float) -> float:
    """Closed-form bound on P(|privacy loss| > epsilon)."""
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative", lam=lam)
    if lam == 0:
        return 0.0
    margin = epsilon - lam
    if margin <= 0:
        raise MarginViolationError("bound needs epsilon > lambda", lam=lam, epsilon=epsilon)
    return math.sqrt(2.0 * lam) / (math.sqrt(math.pi) * margin) * math.exp(-margin ** 2 / (2.0 * lam))


def dp_violation_tail(lam: float, epsilon: float) -> float:
    """Exact Gaussian tail P(|N(0, lambda)| > epsilon - lambda) that the closed form relaxes."""
    if lam == 0:
        return 0.0
    margin = epsilon - lam
    if margin <= 0:
        raise MarginViolationError("tail needs epsilon > lambda", lam=lam, epsilon=epsilon)
    return float(erfc(margin / math.sqrt(2.0 * lam)))


def check_dp(lam: float, budget: DpBudget) -> DpVerdict:
    """Pass iff the bound is below delta; a missing margin fails instead of raising."""
    try:
        bound = dp_violation_bound(lam, budget.epsilon)
        tail = dp_violation_tail(lam, budget.epsilon)
    except MarginViolationError:
        return DpVerdict(False, lam, budget.epsilon, budget.delta, math.inf, math.inf, "margin-violation")
    passed = bound < budget.delta
    return DpVerdict(passed, lam, budget.epsilon, budget.delta, bound, tail, "" if passed else "bound-exceeds-delta")


def dp_condition_dac(sensitivities: Sequence[float], noise_stds: Sequence[float], epsilon: float) -> float:
    """Same tail bound driven by nu = sum_t (Delta_l^t / sigma_eff^t)^2 at one AP."""
    nu = ledger_from_rounds(sensitivities, noise_stds).lam
    return dp_violation_bound(nu, epsilon)


def _violation_shard(sensitivities: np.ndarray, noise_stds: np.ndarray, epsilon: float,
                     samples: int, seed_seq: np.random.SeedSequence) -> int:
    rng = np.random.default_rng(seed_seq)
    loss = np.zeros(samples)
    for delta_t, m_t in zip(sensitivities, noise_stds):
        if delta_t == 0:
            continue
        # projection of omega_t on the worst-case displacement v_t, |v_t| = Delta_t
        projection = m_t * delta_t * rng.standard_normal(samples)
        loss += (2.0 * projection + delta_t ** 2) / (2.0 * m_t ** 2)
    return int(np.count_nonzero(np.abs(loss) > epsilon))


def monte_carlo_violation(sensitivities: Sequence[float], noise_stds: Sequence[float], epsilon: float,
                          n_samples: int, seed: int, workers: int = 1) -> float:
    """
    Empirical P(|privacy loss| > epsilon) under worst-case displacement.

    Samples are split into a fixed number of shards with their own seeds, so the
    estimate does not depend on the worker count.
    """
    if n_samples < MIN_MONTE_CARLO_SAMPLES:
        raise InvalidArgumentError(f"need at least {MIN_MONTE_CARLO_SAMPLES} samples", n_samples=n_samples)
    deltas = np.asarray(sensitivities, dtype=float)
    stds = np.asarray(noise_stds, dtype=float)
    if np.any((stds == 0) & (deltas > 0)):
        raise ZeroNoiseError("round has sensitivity but no noise")
    root = np.random.SeedSequence(int(seed), spawn_key=(int(Stream.PRIVACY),))
    shard_seeds = root.spawn(MONTE_CARLO_SHARDS)
    sizes = [n_samples // MONTE_CARLO_SHARDS + (1 if i < n_samples % MONTE_CARLO_SHARDS else 0)
             for i in range(MONTE_CARLO_SHARDS)]
    args = [(deltas, stds, epsilon, size, s) for size, s in zip(sizes, shard_seeds)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda a: _violation_shard(*a), args))
    else:
        counts = [_violation_shard(*a) for a in args]
    frequency = sum(counts) / n_samples
    logger.debug("Monte Carlo: %d of %d samples above epsilon %.3g", sum(counts), n_samples, epsilon)
    return frequency


@dataclass
class PrivacyScenario:
    """
    Inputs that turn a bit depth into Lambda for one UE of the ADC chain.

    channels holds one small-scale-inclusive channel per round; when empty the
    statistics surrogate built from beta is used for every round.
    """
    powers: np.ndarray
    beta: np.ndarray
    noise_power: float
    rounds: int
    ue_index: int = 0
    channels: List[np.ndarray] = field(default_factory=list)
    aggregation: str = "sum"
    tabulated: bool = False
    convention: str = "one-minus"

    def ledger(self, alpha: float) -> DpLedger:
        m = effective_noise_std_adc(self.powers, alpha, self.beta, self.noise_power, self.ue_index)
        ledger = DpLedger()
        for t in range(self.rounds):
            if self.channels:
                delta_t = sensitivity_adc(self.powers, alpha, self.channels[t], self.ue_index, self.aggregation)
            else:
                delta_t = sensitivity_adc(self.powers, alpha, self.beta, self.ue_index, self.aggregation,
                                          statistics=True)
            ledger = accumulate_lambda(ledger, delta_t, m)
        return ledger

    def lambda_for_bits(self, bits: int) -> float:
        return self.ledger(aqnm_gain(bits, self.tabulated, self.convention)).lam


def _satisfies(scenario: PrivacyScenario, budget: DpBudget, bits: int) -> bool:
    return check_dp(scenario.lambda_for_bits(bits), budget).passed


def min_bits_for_budget(budget: DpBudget, scenario: PrivacyScenario,
                        bits_range: Sequence[int]) -> Optional[int]:
    """Smallest bit depth in range whose bound is below delta; None when infeasible."""
    candidates = list(bits_range)
    if not candidates:
        raise InvalidArgumentError("bit range must be nonempty")
    for bits in sorted(candidates):
        if _satisfies(scenario, budget, bits):
            return bits
    return None


def max_bits_for_budget(budget: DpBudget, scenario: PrivacyScenario,
                        bits_range: Sequence[int]) -> Optional[int]:
    """Largest (most accurate) bit depth in range that still certifies the budget."""
    candidates = list(bits_range)
    if not candidates:
        raise InvalidArgumentError("bit range must be nonempty")
    for bits in sorted(candidates, reverse=True):
        if _satisfies(scenario, budget, bits):
            return bits
    return None


@dataclass(frozen=True)
class PrivacyReport:
    """Worst entity (UE for the ADC chain, AP for the DAC chain) of one drop."""
    chain: str
    lambdas: Tuple[float, ...]
    worst_index: int
    verdict: DpVerdict

    @property
    def worst_lambda(self) -> float:
        return self.lambdas[self.worst_index]


def privacy_report_adc(powers: np.ndarray, alpha: float, beta: np.ndarray, noise_power: float,
                       rounds: int, budget: DpBudget, aggregation: str = "sum",
                       channels: Optional[Callable[[int], np.ndarray]] = None) -> PrivacyReport:
    """Lambda of every UE after the given rounds; channels(t) supplies h per round if given."""
    m = np.sqrt(effective_noise_var_adc(powers, alpha, beta, noise_power))
    lambdas = []
    for k in range(beta.shape[1]):
        ledger = DpLedger()
        for t in range(rounds):
            if channels is None:
                delta_t = sensitivity_adc(powers, alpha, beta, k, aggregation, statistics=True)
            else:
                delta_t = sensitivity_adc(powers, alpha, channels(t), k, aggregation)
            ledger = accumulate_lambda(ledger, delta_t, float(m[k]))
        lambdas.append(ledger.lam)
    worst = int(np.argmax(lambdas))
    logger.debug("ADC ledger over %d rounds: worst UE %d, lambda %.3e", rounds, worst, lambdas[worst])
    return PrivacyReport("adc", tuple(lambdas), worst, check_dp(lambdas[worst], budget))


def privacy_report_dac(powers_per_round: np.ndarray, beta: np.ndarray, zeta: Union[float, np.ndarray],
                       masks: Sequence[np.ndarray], noise_power: float, budget: DpBudget) -> PrivacyReport:
    """nu of every AP over the rounds, statistics surrogate for |h_il|."""
    nus = []
    for l in range(beta.shape[0]):
        ledger = DpLedger()
        for t, mask in enumerate(masks):
            p = powers_per_round[t]
            ledger = accumulate_lambda(
                ledger,
                sensitivity_dac(p, beta, mask, l, statistics=True),
                effective_noise_std_dac(p, beta, zeta, mask, noise_power, l),
            )
        nus.append(ledger.lam)
    worst = int(np.argmax(nus))
    logger.debug("DAC ledger over %d rounds: worst AP %d, nu %.3e", len(masks), worst, nus[worst])
    return PrivacyReport("dac", tuple(nus), worst, check_dp(nus[worst], budget))
