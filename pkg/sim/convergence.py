"""
Closed-form optimality-gap bound of the noisy FL iteration with step 1/M.

    gap_T <= (1-kappa)^T G1
             + alpha^2/(2 M B^2) sum_t (1-kappa)^(T-t) |(alpha/B) I^t|^2
             + d/(2 M B^2)       sum_t (1-kappa)^(T-t) sum_k (m_k^t)^2

with kappa = alpha (2 - alpha) mu / M.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from sim.errors import InvalidArgumentError, UnsupportedLossError


@dataclass(frozen=True)
class ConvergenceParams:
    smoothness: float        # M
    strong_convexity: float  # mu
    initial_gap: float       # G1
    alpha: float
    total_samples: int       # B_tot
    dim: int

    @property
    def contraction(self) -> float:
        return self.alpha * (2.0 - self.alpha) * self.strong_convexity / self.smoothness

    def validate(self) -> "ConvergenceParams":
        if not 0 < self.strong_convexity <= self.smoothness:
            raise InvalidArgumentError("need 0 < mu <= M", mu=self.strong_convexity, M=self.smoothness)
        if not 0 < self.alpha <= 1:
            raise InvalidArgumentError("alpha must be in (0, 1]", alpha=self.alpha)
        if not 0 < self.contraction <= 1:
            raise InvalidArgumentError("contraction must be in (0, 1]", kappa=self.contraction)
        if self.initial_gap < 0 or self.total_samples <= 0 or self.dim < 1:
            raise InvalidArgumentError("invalid gap, sample count or dimension")
        return self


def optimality_gap_bound(params: ConvergenceParams, interference_norms: Sequence[float],
                         noise_powers: Sequence[float], rounds: int) -> float:
    """Bound on F(w^T) - F* after `rounds` rounds; per-round inputs indexed t = 1..T."""
    params.validate()
    if rounds < 1:
        raise InvalidArgumentError("rounds must be >= 1", rounds=rounds)
    norms = np.asarray(interference_norms, dtype=float)[:rounds]
    noise = np.asarray(noise_powers, dtype=float)[:rounds]
    if norms.size != rounds or noise.size != rounds:
        raise InvalidArgumentError("need one interference norm and noise power per round", rounds=rounds)
    m, b, a = params.smoothness, params.total_samples, params.alpha
    weights = (1.0 - params.contraction) ** (rounds - np.arange(1, rounds + 1))
    interference = a ** 2 / (2.0 * m * b ** 2) * np.sum(weights * (a / b) ** 2 * norms ** 2)
    distortion = params.dim / (2.0 * m * b ** 2) * np.sum(weights * noise)
    return float((1.0 - params.contraction) ** rounds * params.initial_gap + interference + distortion)


def bound_trace(params: ConvergenceParams, interference_norms: Sequence[float],
                noise_powers: Sequence[float]) -> np.ndarray:
    """Bound after every round 0..T (round 0 is the initial gap)."""
    rounds = len(interference_norms)
    out = [params.initial_gap]
    for t in range(1, rounds + 1):
        out.append(optimality_gap_bound(params, interference_norms[:t], noise_powers[:t], t))
    return np.asarray(out)


def step_inputs(params: ConvergenceParams, error_norm: float, noise_norm: float) -> Tuple[float, float]:
    """
    Per-round (|I^t|, sum_k (m_k^t)^2) for one step with g_hat = grad F(w) + e + n.

    At step 1/M the gap grows by at most |e + n|^2 / (2M) beyond the contraction.
    The pair splits (|e| + |n|)^2 >= |e + n|^2 between the interference and the
    noise term, so the bound covers every realization of the step.
    """
    if error_norm < 0 or noise_norm < 0:
        raise InvalidArgumentError("norms must be nonnegative", error_norm=error_norm, noise_norm=noise_norm)
    b, a = params.total_samples, params.alpha
    total = error_norm + noise_norm
    interference = b ** 2 * math.sqrt(error_norm * total) / a ** 2
    noise = b ** 2 * noise_norm * total / params.dim
    return float(interference), float(noise)


def constants_from_gram(gram: np.ndarray, total_samples: int, alpha: float = 1.0,
                        initial_gap: float = 0.0) -> ConvergenceParams:
    """mu and M as the extreme eigenvalues of the (scaled) data Gram matrix."""
    eigenvalues = np.linalg.eigvalsh(np.asarray(gram, dtype=float))
    return ConvergenceParams(
        smoothness=float(eigenvalues[-1]),
        strong_convexity=float(eigenvalues[0]),
        initial_gap=float(initial_gap),
        alpha=float(alpha),
        total_samples=int(total_samples),
        dim=int(gram.shape[0]),
    )


def estimate_constants(loss, datasets, alpha: float = 1.0, w0: Optional[np.ndarray] = None) -> ConvergenceParams:
    """
    Exact constants for the quadratic loss: the Hessian of the global loss is
    X^T X / B_tot. The initial gap is measured at w0 when given.
    """
    from sim.fl_engine import QuadraticLoss, global_gram, global_loss, analytic_minimizer

    if not isinstance(loss, QuadraticLoss):
        raise UnsupportedLossError(f"constants are only exact for the quadratic loss, got {type(loss).__name__}")
    gram, total = global_gram(datasets)
    gap = 0.0
    if w0 is not None:
        w_star = analytic_minimizer(datasets)
        gap = global_loss(w0, datasets, loss) - global_loss(w_star, datasets, loss)
    return constants_from_gram(gram, total, alpha, gap)
