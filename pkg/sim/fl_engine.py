"""
Federated learning over the simulated uplink.

Each round: the CPU broadcasts the model (ideal downlink), every scheduled UE
computes its scaled local gradient s_k = B_k * grad F_k, the UEs transmit
sqrt(p_k) s_k / |s_k| simultaneously, the APs combine with MRC and the CPU
descales each combined stream back to an estimate of s_k before the step
w <- w - eta * g_hat.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from data_model import DESCALERS, ExperimentConfig, TraceRow
from sim.channel import ChannelRealization, Stream, draw_small_scale, drop_channel, rng_stream
from sim.convergence import ConvergenceParams, bound_trace, step_inputs
from sim.errors import CannotDescaleError, InvalidArgumentError
from sim.link_rate import SinrModel, transmit_energy
from sim.privacy import (
    DpLedger,
    accumulate_lambda,
    effective_noise_std_adc,
    effective_noise_std_dac,
    sensitivity_adc,
    sensitivity_dac,
)
from sim.quantization import aqnm_gain, complex_gaussian, dac_gains

logger = logging.getLogger(__name__)


class LossFunction:
    """Sample-wise loss averaged over a dataset."""

    name = "loss"

    def value(self, w: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, w: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticLoss(LossFunction):
    """f(w; x, y) = 1/2 (w^T x - y)^2."""

    name = "quadratic"

    def value(self, w, features, labels):
        residual = features @ w - labels
        return float(0.5 * np.mean(residual ** 2))

    def gradient(self, w, features, labels):
        residual = features @ w - labels
        return features.T @ residual / features.shape[0]


class LogisticLoss(LossFunction):
    """f(w; x, y) = log(1 + exp(-y w^T x)) with labels in {-1, +1}."""

    name = "logistic"

    def value(self, w, features, labels):
        return float(np.mean(np.logaddexp(0.0, -labels * (features @ w))))

    def gradient(self, w, features, labels):
        weights = -labels * expit(-labels * (features @ w))
        return features.T @ weights / features.shape[0]


@dataclass(frozen=True)
class LocalDataset:
    features: np.ndarray  # B_k x d
    labels: np.ndarray    # B_k

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class SyntheticProblem:
    datasets: List[LocalDataset]
    w_star: np.ndarray
    eigenvalues: np.ndarray


def make_synthetic_quadratic(num_ues: int, dim: int, samples_per_ue: int, min_eigenvalue: float,
                             max_eigenvalue: float, rng: np.random.Generator) -> SyntheticProblem:
    """
    Noiseless linear-regression data whose global Gram matrix X^T X / B_tot has
    its spectrum pinned to [min_eigenvalue, max_eigenvalue]. Every local loss
    is minimized by w_star as well.
    """
    total = num_ues * samples_per_ue
    if total < dim:
        raise InvalidArgumentError("need at least as many samples as dimensions", samples=total, dim=dim)
    if not 0 < min_eigenvalue <= max_eigenvalue:
        raise InvalidArgumentError("need 0 < min_eigenvalue <= max_eigenvalue")
    eigenvalues = np.sort(rng.uniform(min_eigenvalue, max_eigenvalue, size=dim))
    eigenvalues[0] = min_eigenvalue
    eigenvalues[-1] = max_eigenvalue
    left, _ = np.linalg.qr(rng.standard_normal((total, dim)))
    right, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    features = np.sqrt(total) * (left * np.sqrt(eigenvalues)) @ right.T
    w_star = rng.standard_normal(dim)
    labels = features @ w_star
    order = rng.permutation(total)
    features, labels = features[order], labels[order]
    datasets = [
        LocalDataset(features[k * samples_per_ue:(k + 1) * samples_per_ue],
                     labels[k * samples_per_ue:(k + 1) * samples_per_ue])
        for k in range(num_ues)
    ]
    return SyntheticProblem(datasets, w_star, eigenvalues)


def _stack(datasets: Sequence[LocalDataset]) -> Tuple[np.ndarray, np.ndarray]:
    if not datasets or sum(ds.size for ds in datasets) == 0:
        raise InvalidArgumentError("need at least one sample")
    return (np.vstack([ds.features for ds in datasets]),
            np.concatenate([ds.labels for ds in datasets]))


def global_gram(datasets: Sequence[LocalDataset]) -> Tuple[np.ndarray, int]:
    features, _ = _stack(datasets)
    return features.T @ features / features.shape[0], features.shape[0]


def global_loss(w: np.ndarray, datasets: Sequence[LocalDataset], loss: Optional[LossFunction] = None) -> float:
    """F(w) = sum_k B_k F_k(w) / B_tot."""
    features, labels = _stack(datasets)
    return (loss or QuadraticLoss()).value(w, features, labels)


def analytic_minimizer(datasets: Sequence[LocalDataset]) -> np.ndarray:
    """Least-squares minimizer of the quadratic global loss."""
    features, labels = _stack(datasets)
    return np.linalg.lstsq(features, labels, rcond=None)[0]


def local_gradient(w: np.ndarray, dataset: LocalDataset, loss: Optional[LossFunction] = None) -> np.ndarray:
    """(1/B_k) sum_n grad f(w; x_kn, y_kn)."""
    if dataset.size == 0:
        raise InvalidArgumentError("local dataset is empty")
    return (loss or QuadraticLoss()).gradient(np.asarray(w, dtype=float), dataset.features, dataset.labels)


def global_update(w: np.ndarray, gradient: np.ndarray, learning_rate: float) -> np.ndarray:
    if learning_rate <= 0:
        raise InvalidArgumentError("learning rate must be positive", learning_rate=learning_rate)
    return np.asarray(w, dtype=float) - learning_rate * np.asarray(gradient, dtype=float)


@dataclass(frozen=True)
class AggregationOptions:
    noise: bool = True
    interference: bool = True
    descaler: str = "csi"

    def __post_init__(self):
        if self.descaler not in DESCALERS:
            raise InvalidArgumentError(f"descaler must be one of {DESCALERS}", descaler=self.descaler)


@dataclass(frozen=True)
class ChainModel:
    """
    Converter placement and its AQNM gain.

    adc: one gain alpha at every AP receiver.
    dac: one gain zeta_k per UE transmitter, ideal AP receivers.
    """
    kind: str
    gains: np.ndarray  # K
    beta: np.ndarray
    noise_power: float

    @classmethod
    def adc(cls, alpha: float, beta: np.ndarray, noise_power: float) -> "ChainModel":
        return cls("adc", np.full(beta.shape[1], float(alpha)), beta, noise_power)

    @classmethod
    def dac(cls, zeta: Union[float, np.ndarray], beta: np.ndarray, noise_power: float) -> "ChainModel":
        return cls("dac", np.broadcast_to(np.asarray(zeta, dtype=float), (beta.shape[1],)).copy(), beta, noise_power)

    @property
    def reference_gain(self) -> float:
        """Gain used by the convergence bound (the smallest per-UE gain)."""
        return float(self.gains.min())


@dataclass
class AggregateResult:
    gradient: np.ndarray         # g_hat, d
    received: np.ndarray         # r_k, K x d complex
    estimates: np.ndarray        # descaled s_k, K x d
    aggregated: np.ndarray       # K bool
    noiseless_gradient: np.ndarray  # g_hat with the noise removed, d
    interference_norm: float     # norm of the cross-stream part of g_hat
    noise_powers: np.ndarray     # descaled m_k^2, K
    data_mass: float


def ota_aggregate(updates: np.ndarray, h: np.ndarray, powers: np.ndarray, chain: ChainModel,
                  data_mass: float, rng: Union[np.random.Generator, int],
                  options: AggregationOptions = AggregationOptions(),
                  mask: Optional[np.ndarray] = None,
                  transmitting: Optional[np.ndarray] = None) -> AggregateResult:
    """
    One over-the-air upload and its descaled global estimate.

    updates are the K x d scaled local gradients, h the L x K channel of the
    round. AP l combines for UE k only where mask[l, k] = 1; UEs outside
    `transmitting` (default: any UE the mask serves) stay silent.
    """
    rng = np.random.default_rng(rng)
    updates = np.asarray(updates, dtype=float)
    powers = np.asarray(powers, dtype=float)
    num_aps, num_ues = h.shape
    mask = np.ones((num_aps, num_ues), dtype=np.int8) if mask is None else np.asarray(mask)
    tx = mask.any(axis=0)
    if transmitting is not None:
        tx = tx & np.asarray(transmitting, dtype=bool)
    if data_mass <= 0:
        raise InvalidArgumentError("data mass must be positive", data_mass=data_mass)

    norms = np.linalg.norm(updates, axis=1)
    blocked = np.flatnonzero(tx & (norms > 0) & (powers <= 0))
    if blocked.size:
        raise CannotDescaleError("UE has a nonzero update but zero transmit power", ues=blocked)
    active = tx & (norms > 0)
    amplitude = np.zeros(num_ues)
    np.divide(np.sqrt(np.clip(powers, 0.0, None)), norms, out=amplitude, where=active)
    x = amplitude[:, None] * updates  # silent and zero updates send nothing

    combining = mask * h
    coupling = combining.conj().T @ h  # [k, i] = sum_l d_lk h_lk* h_li
    effective = coupling if options.interference else np.diag(np.diag(coupling))
    gains = chain.gains
    tx_power = np.where(tx, powers, 0.0)
    # own-stream gain per UE, sum_l d_lk |h_lk|^2 (or its statistical surrogate)
    if options.descaler == "csi":
        own = np.sum(np.abs(combining) ** 2, axis=0)
    else:
        own = np.sum(mask * chain.beta, axis=0)
    scale = gains * own * amplitude

    if chain.kind == "adc":
        signal = effective @ (gains[:, None] * x)
        distortion = gains[0] * (1.0 - gains[0]) * (chain.beta @ tx_power + chain.noise_power)  # per AP
        ap_noise = gains[0] ** 2 * chain.noise_power + distortion
        raw_var = np.abs(combining.T) ** 2 @ ap_noise
        if options.noise:
            thermal = complex_gaussian(rng, (num_aps, updates.shape[1]), chain.noise_power)
            quantizer = complex_gaussian(rng, (num_aps, updates.shape[1]), distortion[:, None])
            noise = combining.conj().T @ (gains[0] * thermal + quantizer)
        else:
            noise = np.zeros_like(signal)
    else:
        signal = effective @ (gains[:, None] * x)
        dac_var = gains * (1.0 - gains) * tx_power
        raw_var = (np.sum(np.abs(combining) ** 2, axis=0) * chain.noise_power
                   + np.abs(effective) ** 2 @ dac_var)
        if options.noise:
            distortion = complex_gaussian(rng, updates.shape, dac_var[:, None])
            thermal = complex_gaussian(rng, (num_aps, updates.shape[1]), chain.noise_power)
            noise = effective @ distortion + combining.conj().T @ thermal
        else:
            noise = np.zeros_like(signal)

    received = signal + noise
    estimates = np.zeros_like(updates)
    np.divide(received.real, scale[:, None], out=estimates, where=active[:, None])
    own_part = np.diag(effective)[:, None] * gains[:, None] * x
    cross = np.zeros_like(updates)
    np.divide((signal - own_part).real, scale[:, None], out=cross, where=active[:, None])
    noise_powers = np.zeros(num_ues)
    if options.noise:
        np.divide(raw_var, scale ** 2, out=noise_powers, where=active)

    gradient = estimates[active].sum(axis=0) / data_mass
    clean = np.zeros_like(updates)
    np.divide(signal.real, scale[:, None], out=clean, where=active[:, None])
    return AggregateResult(
        gradient=gradient,
        received=received,
        estimates=estimates,
        aggregated=active,
        noiseless_gradient=clean[active].sum(axis=0) / data_mass,
        interference_norm=float(np.linalg.norm(cross.sum(axis=0)) / data_mass),
        noise_powers=noise_powers,
        data_mass=float(data_mass),
    )


@dataclass
class TrainingScenario:
    """Everything one training run needs besides the round count and the seed."""
    config: ExperimentConfig
    channel: ChannelRealization
    datasets: List[LocalDataset]
    powers: np.ndarray                    # K, or rounds x K
    masks: Optional[List[np.ndarray]] = None
    loss: LossFunction = field(default_factory=QuadraticLoss)
    drop: int = 0

    @property
    def num_ues(self) -> int:
        return len(self.datasets)

    def chain(self) -> ChainModel:
        q = self.config.quantization
        sys_cfg = self.config.system
        if self.config.training.chain == "adc":
            return ChainModel.adc(aqnm_gain(q.adc_bits, q.tabulated, q.convention),
                                  self.channel.beta, sys_cfg.noise_power_w)
        bits = q.dac_bits_per_ue if q.dac_bits_per_ue is not None else q.dac_bits
        return ChainModel.dac(dac_gains(bits, self.num_ues, q.tabulated, q.convention),
                              self.channel.beta, sys_cfg.noise_power_w)

    def powers_at(self, t: int) -> np.ndarray:
        powers = np.asarray(self.powers, dtype=float)
        return powers[t] if powers.ndim == 2 else powers

    def mask_at(self, t: int) -> np.ndarray:
        if self.masks is None:
            return np.ones(self.channel.beta.shape, dtype=np.int8)
        return np.asarray(self.masks[t])


@dataclass
class TrainingTrace:
    rows: List[TraceRow]
    final_model: np.ndarray
    ledger: DpLedger
    params: Optional[ConvergenceParams] = None
    learning_rate: float = 0.0


def _round_rates(scenario: TrainingScenario, chain: ChainModel, mask: np.ndarray,
                 powers: np.ndarray, tx: np.ndarray) -> np.ndarray:
    sys_cfg = scenario.config.system
    if chain.kind == "adc":
        model = SinrModel.from_adc(chain.beta, chain.gains[0], sys_cfg.noise_power_w, sys_cfg.grad_dim)
    else:
        model = SinrModel.from_dac(chain.beta, chain.gains, mask, sys_cfg.noise_power_w, sys_cfg.grad_dim)
    rates = np.zeros(scenario.num_ues)
    served = np.flatnonzero(tx)
    if served.size:
        rates[served] = model.restrict(served).rates(powers[served], sys_cfg.prelog)
    return rates


def _dp_round(scenario: TrainingScenario, chain: ChainModel, h: np.ndarray, mask: np.ndarray,
              powers: np.ndarray) -> Tuple[float, float]:
    privacy = scenario.config.privacy
    sys_cfg = scenario.config.system
    if chain.kind == "adc":
        ap = privacy.ap_index if privacy.aggregation == "per-ap" else None
        k = privacy.ue_index
        sensitivity = sensitivity_adc(powers, chain.gains[0], h, k, privacy.aggregation, ap=ap)
        if powers[k] == 0:
            sensitivity = 0.0
        return sensitivity, effective_noise_std_adc(powers, chain.gains[0], chain.beta, sys_cfg.noise_power_w, k)
    l = privacy.ap_index
    return (sensitivity_dac(powers, h, mask, l),
            effective_noise_std_dac(powers, chain.beta, chain.gains, mask, sys_cfg.noise_power_w, l))


def run_training(scenario: TrainingScenario, rounds: int, seed: int,
                 options: Optional[AggregationOptions] = None) -> TrainingTrace:
    """
    Run `rounds` rounds from w = 0 and log loss, gap to the analytic optimum,
    the running privacy statistic, served UEs and transmit energy per round.

    A UE that is not served keeps the model it last received; when it is next
    served it uploads the gradient of that stale model, unless drop_stale is
    set, in which case it only resynchronizes.
    """
    if rounds < 0:
        raise InvalidArgumentError("rounds must be >= 0", rounds=rounds)
    cfg = scenario.config
    training = cfg.training
    options = options or AggregationOptions(training.noise, training.interference, training.descaler)
    loss = scenario.loss
    datasets = scenario.datasets
    chain = scenario.chain()
    sizes = np.array([ds.size for ds in datasets], dtype=float)
    dim = datasets[0].features.shape[1]

    gram, total = global_gram(datasets)
    eigenvalues = np.linalg.eigvalsh(gram)
    learning_rate = cfg.system.learning_rate or 1.0 / float(eigenvalues[-1])
    optimum = global_loss(analytic_minimizer(datasets), datasets, loss) if isinstance(loss, QuadraticLoss) else 0.0

    w = np.zeros(dim)
    held = np.zeros((len(datasets), dim))
    version = np.zeros(len(datasets), dtype=int)
    initial_loss = global_loss(w, datasets, loss)
    rows = [TraceRow(0, initial_loss, initial_loss - optimum, float("nan"), 0.0, 0, 0.0)]
    ledger = DpLedger()
    errors: List[float] = []
    noise: List[float] = []

    for t in range(1, rounds + 1):
        mask = scenario.mask_at(t - 1)
        served = mask.any(axis=0)
        tx = served.copy()
        if cfg.schedule.drop_stale:
            tx &= version == t - 1
        h = np.sqrt(chain.beta) * draw_small_scale(cfg.system, seed, block=t, drop=scenario.drop)
        powers = np.where(tx, scenario.powers_at(t - 1), 0.0)

        updates = np.zeros((len(datasets), dim))
        for k in np.flatnonzero(tx):
            updates[k] = sizes[k] * local_gradient(held[k], datasets[k], loss)
        data_mass = float(sizes[tx].sum())
        gradient = sum(sizes[k] * local_gradient(w, datasets[k], loss) for k in range(len(datasets))) / total
        if data_mass > 0:
            result = ota_aggregate(updates, h, powers, chain, data_mass,
                                   rng_stream(seed, Stream.TRAINING, scenario.drop, t), options,
                                   mask=mask, transmitting=tx)
            w = global_update(w, result.gradient, learning_rate)
            errors.append(float(np.linalg.norm(result.noiseless_gradient - gradient)))
            noise.append(float(np.linalg.norm(result.gradient - result.noiseless_gradient)))
        else:
            # nobody uploads: the step is zero, an error of -grad F(w)
            errors.append(float(np.linalg.norm(gradient)))
            noise.append(0.0)
        held[served] = w
        version[served] = t

        ledger = accumulate_lambda(ledger, *_dp_round(scenario, chain, h, mask, powers))
        rates = _round_rates(scenario, chain, mask, powers, tx)
        energy = float(transmit_energy(powers, rates, cfg.system.update_size_bits).sum())
        current = global_loss(w, datasets, loss)
        rows.append(TraceRow(t, current, current - optimum, float("nan"), ledger.lam, int(tx.sum()), energy))

    params = None
    if isinstance(loss, QuadraticLoss):
        params = ConvergenceParams(
            smoothness=float(eigenvalues[-1]),
            strong_convexity=float(eigenvalues[0]),
            initial_gap=initial_loss - optimum,
            alpha=chain.reference_gain,
            total_samples=int(total),
            dim=dim,
        )
        if math.isclose(learning_rate, 1.0 / params.smoothness, rel_tol=1e-12):
            inputs = [step_inputs(params, e, n) for e, n in zip(errors, noise)]
            bounds = bound_trace(params, [i for i, _ in inputs], [m for _, m in inputs])
            for row, value in zip(rows, bounds):
                row.bound = float(value)
        else:
            logger.info("learning rate %.3e is not 1/M, bound not reported", learning_rate)
    logger.info("training finished: %d rounds, final gap %.3e, lambda %.3e",
                rounds, rows[-1].gap, ledger.lam)
    return TrainingTrace(rows, w, ledger, params, learning_rate)


def prepare_training(config: ExperimentConfig, seed: int, drop: int = 0,
                     masks: Optional[List[np.ndarray]] = None,
                     powers: Optional[np.ndarray] = None) -> TrainingScenario:
    """Channel drop, synthetic data and full-power transmission unless powers are given."""
    sys_cfg = config.system
    channel = drop_channel(sys_cfg, config.channel, seed, drop)
    problem = make_synthetic_quadratic(sys_cfg.num_ues, sys_cfg.grad_dim, config.training.samples_per_ue,
                                       config.training.min_eigenvalue, config.training.max_eigenvalue,
                                       rng_stream(seed, Stream.DATASET, drop))
    if powers is None:
        powers = np.full(sys_cfg.num_ues, sys_cfg.max_power_w)
    return TrainingScenario(config, channel, problem.datasets, powers, masks, QuadraticLoss(), drop)
