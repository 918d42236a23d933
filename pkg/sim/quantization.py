"""
Additive quantization noise model for low-resolution ADCs (APs) and DACs (UEs).

A b-bit quantizer is linearized as Q(y) = gain * y + n with n uncorrelated
Gaussian distortion. The default gain is 1 - rho with rho = (pi*sqrt(3)/2) 2^(-2b),
which tends to 1 as b grows.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from sim.errors import InvalidArgumentError

DISTORTION_CONSTANT = math.pi * math.sqrt(3.0) / 2.0

# Lloyd-Max distortion factors for Gaussian inputs
LLOYD_MAX_DISTORTION = {1: 0.3634, 2: 0.1175, 3: 0.03454, 4: 0.009497, 5: 0.002499}


def distortion_factor(bits: int, tabulated: bool = False) -> float:
    """rho for a b-bit quantizer."""
    if bits <= 0:
        raise InvalidArgumentError(f"bit depth must be positive, got {bits}", bits=bits)
    if tabulated and bits in LLOYD_MAX_DISTORTION:
        return LLOYD_MAX_DISTORTION[bits]
    return DISTORTION_CONSTANT * 2.0 ** (-2 * bits)


def aqnm_gain(bits: int, tabulated: bool = False, convention: str = "one-minus") -> float:
    """
    Linear gain (alpha for ADCs, zeta for DACs).

    convention "one-minus" gives 1 - min(1, rho); "literal" reads the gain as
    min(1, rho) itself.
    """
    rho = distortion_factor(bits, tabulated)
    if convention == "literal":
        return min(1.0, rho)
    if convention != "one-minus":
        raise InvalidArgumentError(f"unknown gain convention {convention!r}", convention=convention)
    return 1.0 - min(1.0, rho)


@dataclass(frozen=True)
class QuantizerModel:
    bits: int
    gain: float
    distortion_factor: float

    @classmethod
    def from_bits(cls, bits: int, tabulated: bool = False, convention: str = "one-minus") -> "QuantizerModel":
        gain = aqnm_gain(bits, tabulated, convention)
        return cls(bits=bits, gain=gain, distortion_factor=1.0 - gain)

    @classmethod
    def ideal(cls) -> "QuantizerModel":
        return cls(bits=0, gain=1.0, distortion_factor=0.0)


def dac_gains(bits: Union[int, Sequence[int]], num_ues: int, tabulated: bool = False,
              convention: str = "one-minus") -> np.ndarray:
    """zeta per UE from a shared or per-UE bit depth."""
    if isinstance(bits, (int, np.integer)):
        return np.full(num_ues, aqnm_gain(int(bits), tabulated, convention))
    if len(bits) != num_ues:
        raise InvalidArgumentError("per-UE bit depths must list one entry per UE",
                                   expected=num_ues, got=len(bits))
    return np.array([aqnm_gain(int(b), tabulated, convention) for b in bits])


def adc_distortion_cov(alpha: float, powers: np.ndarray, beta_col: np.ndarray, noise_power: float) -> float:
    """Per-coordinate variance of the ADC distortion at one AP."""
    received = float(np.dot(np.asarray(powers, dtype=float), np.asarray(beta_col, dtype=float)))
    return alpha * (1.0 - alpha) * (received + noise_power)


def dac_distortion_var(zeta: Union[float, np.ndarray], power: Union[float, np.ndarray]):
    """Per-coordinate variance of the DAC distortion of one UE."""
    return zeta * (1.0 - zeta) * power


def complex_gaussian(rng: np.random.Generator, shape, variance: Union[float, np.ndarray]) -> np.ndarray:
    """Circularly-symmetric noise with the given per-coordinate variance (broadcast)."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_quantizer(signal: np.ndarray, q: QuantizerModel, distortion_var: Union[float, np.ndarray],
                    rng: Union[np.random.Generator, int]) -> np.ndarray:
    """gain * signal + n, with n ~ CN(0, distortion_var) per coordinate. rng may be a seed."""
    rng = np.random.default_rng(rng)
    if np.any(np.asarray(distortion_var) < 0):
        raise InvalidArgumentError("distortion variance must be nonnegative")
    signal = np.asarray(signal, dtype=complex)
    if np.all(np.asarray(distortion_var) == 0):
        return q.gain * signal
    return q.gain * signal + complex_gaussian(rng, signal.shape, distortion_var)


def fronthaul_load_bits(bits: int, num_aps: int, grad_dim: int) -> float:
    """AP-to-CPU payload per round: real and imaginary parts of d samples at b bits, per AP."""
    return float(2 * bits * grad_dim * num_aps)
