"""
SINR, achievable rate and uplink training time for both signal chains.

Both chains share one SINR shape,

    SINR_k = p_k a_k / (sum_i p_i M_ki + c_k),

held by SinrModel. Coefficients are built from beta / sigma^2 (noise set to 1),
which leaves every SINR unchanged and keeps the numbers well scaled.

ADC chain (synchronous): a = A, M = B (zero diagonal) + E, c = C + D.
DAC chain (masked): a = A^t, M = C^t + E^t, c = F^t.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from data_model import SystemConfig
from sim.errors import InvalidArgumentError, UnservedUeError
from sim.scheduler import active_set


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray

    def validate(self, max_power: float) -> "PowerAllocation":
        if np.any(self.p < 0) or np.any(self.p > max_power * (1 + 1e-12)):
            raise InvalidArgumentError("powers must lie in [0, p_max]", p_max=max_power)
        return self


@dataclass(frozen=True)
class RateVector:
    r: np.ndarray  # bits/s


@dataclass(frozen=True)
class TimingReport:
    """
    Uplink training time.

    Synchronous: per_ue_time holds S*T/R_k and total = max + fronthaul.
    Asynchronous: per_ue_time holds the slowest served UE of every round and
    total sums the round terms.
    """
    per_ue_time: np.ndarray
    fronthaul_time: float
    total: float


@dataclass(frozen=True)
class TimingModel:
    """What the time objective needs: update size, rounds and pre-log factor."""
    update_bits: float
    rounds: int
    prelog: float

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "TimingModel":
        return cls(update_bits=cfg.update_size_bits, rounds=cfg.rounds, prelog=cfg.prelog)

    def per_round(self) -> "TimingModel":
        return TimingModel(self.update_bits, 1, self.prelog)


@dataclass(frozen=True)
class SinrModel:
    """SINR_k = p_k a_k / (sum_i p_i M_ki + c_k)."""
    signal: np.ndarray      # a, K
    coupling: np.ndarray    # M, K x K
    floor: np.ndarray       # c, K
    ues: tuple = ()         # original UE indices when restricted

    @property
    def num_ues(self) -> int:
        return self.signal.shape[0]

    def sinr(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        num = p * self.signal
        den = self.coupling @ p + self.floor
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=num > 0)
        return out

    def rates(self, p: np.ndarray, prelog: float) -> np.ndarray:
        return prelog * np.log2(1.0 + self.sinr(p))

    def restrict(self, ues: Sequence[int]) -> "SinrModel":
        """Sub-model over a subset of UEs (the rest are silent)."""
        idx = np.asarray(list(ues), dtype=int)
        original = np.asarray(self.ues, dtype=int) if self.ues else np.arange(self.num_ues)
        return SinrModel(
            signal=self.signal[idx],
            coupling=self.coupling[np.ix_(idx, idx)],
            floor=self.floor[idx],
            ues=tuple(int(i) for i in original[idx]),
        )

    @classmethod
    def from_adc(cls, beta: np.ndarray, alpha: float, noise_power: float, grad_dim: int) -> "SinrModel":
        coeffs = AdcCoefficients.build(beta, alpha, noise_power, grad_dim)
        coupling = coeffs.B.copy()
        np.fill_diagonal(coupling, 0.0)
        return cls(signal=coeffs.A, coupling=coupling + coeffs.E, floor=coeffs.C + coeffs.D)

    @classmethod
    def from_dac(cls, beta: np.ndarray, zeta: Union[float, np.ndarray], mask: np.ndarray,
                 noise_power: float, grad_dim: int) -> "SinrModel":
        coeffs = DacCoefficients.build(beta, zeta, mask, noise_power, grad_dim)
        return cls(signal=coeffs.A, coupling=coeffs.C + coeffs.E, floor=coeffs.F)


@dataclass(frozen=True)
class AdcCoefficients:
    """A_k, B_ki, C_k, D_k, E_ki of the ADC chain in noise-normalized units."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray

    @classmethod
    def build(cls, beta: np.ndarray, alpha: float, noise_power: float, grad_dim: int) -> "AdcCoefficients":
        gamma = np.asarray(beta, dtype=float) / noise_power
        total = gamma.sum(axis=0)
        gram = gamma.T @ gamma
        distortion = grad_dim * alpha * (1.0 - alpha)
        return cls(
            A=alpha ** 2 * total ** 2,
            B=alpha ** 2 * gram,
            C=alpha ** 2 * total,
            D=distortion * total,
            E=distortion * gram,
        )


@dataclass(frozen=True)
class DacCoefficients:
    """A_k, C_ki, E_ki, F_k of the masked DAC chain in noise-normalized units."""
    A: np.ndarray
    C: np.ndarray
    E: np.ndarray
    F: np.ndarray

    @classmethod
    def build(cls, beta: np.ndarray, zeta: Union[float, np.ndarray], mask: np.ndarray,
              noise_power: float, grad_dim: int) -> "DacCoefficients":
        gamma = np.asarray(beta, dtype=float) / noise_power
        num_ues = gamma.shape[1]
        zeta = np.broadcast_to(np.asarray(zeta, dtype=float), (num_ues,))
        served = np.asarray(mask, dtype=float) * gamma  # d_lk * gamma_lk
        # C_ki = zeta_i^2 sum_l d_lk g_lk g_li
        cross = served.T @ gamma
        # E_ki = d zeta_i (1 - zeta_i) sum_l d_li g_lk g_li
        masked_cross = gamma.T @ served
        return cls(
            A=zeta ** 2 * served.sum(axis=0) ** 2,
            C=cross * zeta[None, :] ** 2,
            E=grad_dim * masked_cross * (zeta * (1.0 - zeta))[None, :],
            F=grad_dim * served.sum(axis=0),
        )


def sinr_adc(k: int, p: np.ndarray, beta: np.ndarray, alpha: float, noise_power: float, grad_dim: int) -> float:
    """SINR of UE k over the ADC chain."""
    return float(SinrModel.from_adc(beta, alpha, noise_power, grad_dim).sinr(p)[k])


def sinr_dac(k: int, p: np.ndarray, beta: np.ndarray, zeta: Union[float, np.ndarray], mask: np.ndarray,
             noise_power: float, grad_dim: int) -> float:
    """SINR of UE k in one round of the DAC chain; zero when no AP serves k."""
    if not np.any(np.asarray(mask)[:, k]):
        return 0.0
    return float(SinrModel.from_dac(beta, zeta, mask, noise_power, grad_dim).sinr(p)[k])


def rate(sinr: Union[float, np.ndarray], cfg: Union[SystemConfig, float]):
    """(1 - tau_p/tau_c) B log2(1 + sinr). cfg may be a config or a pre-log factor."""
    prelog = cfg.prelog if isinstance(cfg, SystemConfig) else float(cfg)
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise InvalidArgumentError("sinr must be nonnegative")
    out = prelog * np.log2(1.0 + sinr)
    return float(out) if out.ndim == 0 else out


def uplink_time_sync(rates: np.ndarray, update_bits: float, rounds: int, num_ues: Optional[int] = None) -> TimingReport:
    """max_k S*T/R_k + K*S*T/sum_k R_k."""
    rates = np.asarray(rates, dtype=float)
    num_ues = rates.shape[0] if num_ues is None else num_ues
    unserved = np.flatnonzero(rates <= 0)
    if unserved.size:
        raise UnservedUeError("UE has zero rate, upload time undefined", ues=unserved.tolist())
    per_ue = update_bits * rounds / rates
    fronthaul = num_ues * update_bits * rounds / rates.sum()
    return TimingReport(per_ue_time=per_ue, fronthaul_time=float(fronthaul),
                        total=float(per_ue.max() + fronthaul))


def uplink_time_async(rates_per_round: np.ndarray, masks: Sequence[np.ndarray], update_bits: float) -> TimingReport:
    """
    Sum over rounds of max_{k in K^t} S/R_k^t + |K^t| S / sum_{k in K^t} R_k^t,
    with K^t the union of the per-AP serving sets.
    """
    rates_per_round = np.atleast_2d(np.asarray(rates_per_round, dtype=float))
    if len(masks) != rates_per_round.shape[0]:
        raise InvalidArgumentError("need one mask per round", rounds=rates_per_round.shape[0], masks=len(masks))
    straggler = np.zeros(len(masks))
    fronthaul = 0.0
    for t, mask in enumerate(masks):
        served = list(active_set(mask))
        r = rates_per_round[t, served]
        if np.any(r <= 0):
            raise UnservedUeError("served UE has zero rate", round=t,
                                  ues=[served[i] for i in np.flatnonzero(r <= 0)])
        straggler[t] = np.max(update_bits / r)
        fronthaul += len(served) * update_bits / r.sum()
    return TimingReport(per_ue_time=straggler, fronthaul_time=float(fronthaul),
                        total=float(straggler.sum() + fronthaul))


def transmit_energy(powers: np.ndarray, rates: np.ndarray, update_bits: float) -> np.ndarray:
    """Per-UE energy p_k S / R_k for one round (zero for silent UEs)."""
    powers = np.asarray(powers, dtype=float)
    rates = np.asarray(rates, dtype=float)
    energy = np.zeros_like(powers)
    np.divide(powers * update_bits, rates, out=energy, where=rates > 0)
    return energy
