"""
Topology and fading for the cell-free deployment.

Placements are uniform on a D x D square without wrap-around. Large-scale
fading follows the three-slope path-loss model with log-normal shadowing
beyond the far breakpoint; small-scale fading is i.i.d. CN(0, 1) per block.
All randomness comes from streams split off one root seed.
"""

import csv
import logging
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data_model import ChannelParams, Position, SystemConfig
from sim.errors import ResultsIOError

logger = logging.getLogger(__name__)

BOLTZMANN = 1.380649e-23


class Stream(IntEnum):
    """Top-level keys of the seed hierarchy."""
    TOPOLOGY = 1
    SHADOWING = 2
    SMALL_SCALE = 3
    QUANTIZER = 4
    THERMAL = 5
    DATASET = 6
    TRAINING = 7
    PRIVACY = 8


def rng_stream(seed: int, stream: int, *keys: int) -> np.random.Generator:
    """Independent generator for (stream, drop, round, entity, ...) under one root seed."""
    spawn_key = (int(stream),) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


@dataclass
class ChannelRealization:
    """Large-scale gains and one small-scale block, both L x K (row = AP, column = UE)."""
    beta: np.ndarray
    g: np.ndarray
    ap_positions: Optional[List[Position]] = None
    ue_positions: Optional[List[Position]] = None

    @property
    def h(self) -> np.ndarray:
        return np.sqrt(self.beta) * self.g

    @property
    def num_aps(self) -> int:
        return self.beta.shape[0]

    @property
    def num_ues(self) -> int:
        return self.beta.shape[1]


def place_nodes(cfg: SystemConfig, seed: int, drop: int = 0) -> Tuple[List[Position], List[Position]]:
    """Uniform i.i.d. AP and UE positions on the square."""
    rng = rng_stream(seed, Stream.TOPOLOGY, drop)
    coords = rng.uniform(0.0, cfg.area_side_km, size=(cfg.num_aps + cfg.num_ues, 2))
    points = [Position(float(x), float(y)) for x, y in coords]
    return points[:cfg.num_aps], points[cfg.num_aps:]


def positions_array(positions: Sequence[Position]) -> np.ndarray:
    return np.array([[p.x, p.y] for p in positions], dtype=float).reshape(-1, 2)


def hata_constant_db(params: ChannelParams) -> float:
    """Hata-COST231 constant term in dB."""
    log_f = np.log10(params.carrier_mhz)
    return float(
        46.3 + 33.9 * log_f - 13.82 * np.log10(params.ap_height_m)
        - (1.1 * log_f - 0.7) * params.ue_height_m + (1.56 * log_f - 0.8)
    )


def path_loss_db(distance_km: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Three-slope path loss as a (negative) gain in dB."""
    const = hata_constant_db(params)
    d = np.maximum(np.asarray(distance_km, dtype=float), 1e-9)
    far = -const - 35.0 * np.log10(d)
    middle = -const - 15.0 * np.log10(params.far_km) - 20.0 * np.log10(d)
    near = -const - 15.0 * np.log10(params.far_km) - 20.0 * np.log10(params.near_km)
    return np.where(d > params.far_km, far, np.where(d > params.near_km, middle, near))


def distances_km(ap_positions: Sequence[Position], ue_positions: Sequence[Position]) -> np.ndarray:
    aps = positions_array(ap_positions)
    ues = positions_array(ue_positions)
    return np.linalg.norm(aps[:, None, :] - ues[None, :, :], axis=-1)


def large_scale_fading(
    ap_positions: Sequence[Position],
    ue_positions: Sequence[Position],
    params: ChannelParams,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Linear large-scale gains beta (L x K).

    Shadowing is applied only when params.shadowing is set and a generator is
    given, and only on links beyond the far breakpoint.
    """
    dist = distances_km(ap_positions, ue_positions)
    gain_db = path_loss_db(dist, params)
    if params.shadowing and rng is not None and params.shadowing_std_db > 0:
        z = rng.standard_normal(dist.shape)
        gain_db = gain_db + np.where(dist > params.far_km, params.shadowing_std_db * z, 0.0)
    return 10.0 ** (gain_db / 10.0)


def draw_small_scale(cfg: SystemConfig, seed: int, block: int = 0, drop: int = 0) -> np.ndarray:
    """i.i.d. CN(0, 1) coefficients for one fading block."""
    rng = rng_stream(seed, Stream.SMALL_SCALE, drop, block)
    shape = (cfg.num_aps, cfg.num_ues)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def drop_channel(cfg: SystemConfig, params: ChannelParams, seed: int, drop: int = 0) -> ChannelRealization:
    """Placement, large-scale fading and the block-0 small-scale draw of one drop."""
    aps, ues = place_nodes(cfg, seed, drop)
    beta = large_scale_fading(aps, ues, params, rng_stream(seed, Stream.SHADOWING, drop))
    g = draw_small_scale(cfg, seed, block=0, drop=drop)
    logger.debug("drop %d: beta range %.3e..%.3e", drop, beta.min(), beta.max())
    return ChannelRealization(beta=beta, g=g, ap_positions=aps, ue_positions=ues)


def noise_power_w(bandwidth_hz: float, noise_figure_db: float, temperature_k: float = 290.0) -> float:
    """Thermal noise power k_B * T0 * B * NF."""
    return BOLTZMANN * temperature_k * bandwidth_hz * 10.0 ** (noise_figure_db / 10.0)


def export_beta_csv(beta: np.ndarray, path: Path) -> Path:
    """Write beta with one row per AP and one column per UE (linear scale)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["ap"] + [f"ue_{k}" for k in range(beta.shape[1])])
            for l, row in enumerate(beta):
                writer.writerow([l] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path
