"""Link budgets and achievable rates between adjacent layers.

Ground-to-air links use free-space loss plus a line-of-sight-weighted excess
loss; air-to-air and air-to-space links are pure free space.  Rates are
Shannon capacities of the deterministic (fading-free) SNR.
"""

from __future__ import annotations

import csv
import functools
import math
import os
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelParams, Node, Scenario

__all__ = [
    "G2A",
    "A2A",
    "A2S",
    "RateMatrix",
    "build_rate_matrix",
    "fspl",
    "link_class",
    "link_rate",
    "los_probability",
    "path_loss_fs",
    "path_loss_g2a",
    "rate_matrices",
    "shannon_rate",
]

SPEED_OF_LIGHT = 299_792_458.0
FSPL_CONST_DB = 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)

G2A, A2A, A2S = "G2A", "A2A", "A2S"
LINK_CLASSES = (G2A, A2A, A2S)


def los_probability(elevation_deg, a: float, b: float):
    """Logistic LoS probability ``1 / (1 + a exp(-b (theta - a)))`` for elevation in degrees."""
    theta = np.asarray(elevation_deg, dtype=float)
    if np.any(theta < 0) or np.any(theta > 90) or np.any(np.isnan(theta)):
        raise ValueError(f"elevation must lie in [0, 90] degrees, got {elevation_deg!r}")
    p = 1.0 / (1.0 + a * np.exp(-b * (theta - a)))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def fspl(distance, freq):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"distance must be positive, got {distance!r}")
    out = 20.0 * np.log10(d) + 20.0 * np.log10(freq) + FSPL_CONST_DB
    return float(out) if out.ndim == 0 else out


def path_loss_fs(distance, freq):
    """Free-space path loss in dB (air-to-air and air-to-space links)."""
    return fspl(distance, freq)


def path_loss_g2a(distance, elevation_deg, freq, params: ChannelParams):
    """Mean ground-to-air loss in dB: FSPL plus the LoS/NLoS excess-loss blend."""
    p = los_probability(elevation_deg, params.los_a, params.los_b)
    return fspl(distance, freq) + p * params.eta_los + (1.0 - p) * params.eta_nlos


def shannon_rate(snr_db, bandwidth):
    snr = np.power(10.0, np.asarray(snr_db, dtype=float) / 10.0)
    out = bandwidth * np.log2(1.0 + snr)
    return float(out) if out.ndim == 0 else out


def link_class(scenario: Scenario, k: int) -> str:
    """Channel model for the pair (k, k+1)."""
    if k == 0:
        return G2A
    if k == scenario.n_pairs - 1:
        return A2S
    return A2A


def _geometry(tx_pos: np.ndarray, rx_pos: np.ndarray):
    delta = rx_pos[None, :, :] - tx_pos[:, None, :]
    dist = np.linalg.norm(delta, axis=2)
    horiz = np.linalg.norm(delta[:, :, :2], axis=2)
    elev = np.degrees(np.arctan2(delta[:, :, 2], horiz))
    return dist, np.clip(elev, 0.0, 90.0)


def link_rate(
    tx: Node,
    rx: Node,
    freq: float,
    bandwidth: float,
    noise_density: float,
    model: str,
    params: ChannelParams | None = None,
) -> float:
    """Achievable uplink rate (bits/s) from ``tx`` to ``rx``."""
    if model not in LINK_CLASSES:
        raise ValueError(f"unknown link class {model!r}")
    if tx.layer >= rx.layer:
        raise ValueError("transmitter must sit below the receiver in layer order")
    if tx.tx_power <= 0:
        return 0.0
    params = params or ChannelParams()
    dist, elev = _geometry(np.array([tx.position]), np.array([rx.position]))
    d, theta = float(dist[0, 0]), float(elev[0, 0])
    if model == G2A:
        pl = path_loss_g2a(d, theta, freq, params)
    else:
        pl = path_loss_fs(d, freq)
    noise_dbm = noise_density + 10.0 * math.log10(bandwidth)
    snr_db = tx.tx_power_dbm + tx.antenna_gain + rx.antenna_gain - pl - noise_dbm
    return shannon_rate(snr_db, bandwidth)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Rates (bits/s) from every downstream node (rows) to every upstream node (columns)."""

    downstream_ids: tuple[int, ...]
    upstream_ids: tuple[int, ...]
    rates: np.ndarray
    layer_pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float).reshape(len(self.downstream_ids), len(self.upstream_ids))
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("rates must be finite and non-negative")
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "downstream_ids", tuple(int(i) for i in self.downstream_ids))
        object.__setattr__(self, "upstream_ids", tuple(int(j) for j in self.upstream_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rates.shape

    def row(self, i_id: int) -> int:
        return self.downstream_ids.index(i_id)

    def col(self, j_id: int) -> int:
        return self.upstream_ids.index(j_id)

    def __call__(self, i_id: int, j_id: int) -> float:
        return float(self.rates[self.row(i_id), self.col(j_id)])

    def with_rates(self, rates) -> "RateMatrix":
        return RateMatrix(self.downstream_ids, self.upstream_ids, rates, self.layer_pair)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["downstream\\upstream", *self.upstream_ids])
            for i_id, row in zip(self.downstream_ids, self.rates):
                w.writerow([i_id, *(repr(float(x)) for x in row)])

    @classmethod
    def from_csv(cls, path: str | os.PathLike, layer_pair=(0, 1)) -> "RateMatrix":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        up = [int(x) for x in rows[0][1:]]
        down = [int(r[0]) for r in rows[1:]]
        rates = [[float(x) for x in r[1:]] for r in rows[1:]]
        return cls(tuple(down), tuple(up), np.array(rates, dtype=float).reshape(len(down), len(up)), layer_pair)


def build_rate_matrix(scenario: Scenario, k: int) -> RateMatrix:
    """Rate matrix for the adjacent pair (k, k+1); cached per scenario and pair."""
    if not 0 <= k < scenario.n_pairs:
        raise ValueError(f"layer pair ({k}, {k + 1}) does not exist in a {scenario.n_layers}-layer scenario")
    return _cached_rate_matrix(scenario, k)


@functools.lru_cache(maxsize=256)
def _cached_rate_matrix(scenario: Scenario, k: int) -> RateMatrix:
    down, up = scenario.layers[k], scenario.layers[k + 1]
    freq, bw = scenario.carrier_freq[k], scenario.bandwidth[k]
    dist, elev = _geometry(scenario.positions(k), scenario.positions(k + 1))
    if link_class(scenario, k) == G2A:
        pl = path_loss_g2a(dist, elev, freq, scenario.channel)
    else:
        pl = path_loss_fs(dist, freq)
    ptx = np.array([n.tx_power_dbm for n in down])
    gtx = np.array([n.antenna_gain for n in down])
    grx = np.array([n.antenna_gain for n in up])
    noise_dbm = scenario.noise_density + 10.0 * math.log10(bw)
    # silent transmitters carry -inf dBm, which maps to a zero rate
    snr_db = ptx[:, None] + gtx[:, None] + grx[None, :] - pl - noise_dbm
    rates = shannon_rate(snr_db, bw)
    return RateMatrix(scenario.ids(k), scenario.ids(k + 1), rates, (k, k + 1))


def rate_matrices(scenario: Scenario) -> list[RateMatrix]:
    return [build_rate_matrix(scenario, k) for k in range(scenario.n_pairs)]
