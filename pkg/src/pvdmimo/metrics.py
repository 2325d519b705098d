"""Recovery scoring and transmission-efficiency bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .channel import MimoDims, BlockFadingChannel

#: Column schema of the per-trial results CSV. nmse_db uses '-inf' as the
#: documented sentinel for exact recovery; wall_ms is empty unless timing
#: capture was requested (timings are inherently non-reproducible).
CSV_COLUMNS = [
    "trial", "seed", "snr_db", "cbr", "nmse_db",
    "source_mse", "residual", "method", "wall_ms", "error",
]


@dataclass(frozen=True)
class MetricsRecord:
    """One scored trial for one method."""

    trial: int
    seed: int
    snr_db: float
    cbr: float
    nmse_db: float
    source_mse: float
    residual: float
    method: str = ""
    wall_ms: float | None = None
    error: str = ""


def _blocks(ch) -> np.ndarray:
    return ch.blocks if isinstance(ch, BlockFadingChannel) else np.asarray(ch)


def nmse_db(H_true: Sequence, H_est: Sequence) -> float:
    """Channel NMSE in dB, summed per-user and averaged by user count:

        10 log10( sum_i ||H_i - Hhat_i||_F^2 / (N_u ||H_i||_F^2) ),

    computed over the free block entries (the structural zeros of the
    compound matrix cancel identically). Exact recovery returns -inf.
    """
    if len(H_true) != len(H_est):
        raise ValueError("user counts of true and estimated channels differ")
    n_u = len(H_true)
    total = 0.0
    for t, e in zip(H_true, H_est):
        tb, eb = _blocks(t), _blocks(e)
        if tb.shape != eb.shape:
            raise ValueError(f"shape mismatch: {tb.shape} vs {eb.shape}")
        denom = float(np.sum(np.abs(tb) ** 2))
        if denom == 0:
            raise ValueError("true channel has zero norm")
        total += float(np.sum(np.abs(tb - eb) ** 2)) / (n_u * denom)
    if total == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(total))


def snr_db(signal_part: np.ndarray, noise_part: np.ndarray) -> float:
    """Channel SNR: 10 log10(||sum_i H_i X_i||_F^2 / ||N||_F^2)."""
    p_noise = float(np.sum(np.abs(np.asarray(noise_part)) ** 2))
    if p_noise == 0:
        raise ValueError("noise part has zero norm")
    p_sig = float(np.sum(np.abs(np.asarray(signal_part)) ** 2))
    return float(10.0 * np.log10(p_sig / p_noise))


def cbr(dims: MimoDims, data_slots: int) -> float:
    """Channel bandwidth ratio: transmitted matrix elements per source scalar.

    Blind schemes use all T slots for data (data_slots = T) and the ratio
    is N_t K T / n. Pilot schemes carry the same data payload in
    data_slots = T - N_p slots per block, so the block count is re-derived
    as K' = K T / data_slots and the ratio becomes N_t K' T / n. Computed
    in exact rational arithmetic before conversion to float.
    """
    if data_slots < 1:
        raise ValueError("data_slots must be >= 1")
    return float(Fraction(dims.N_t * dims.K * dims.T * dims.T, data_slots * dims.n))


def source_mse(D_true: np.ndarray, D_est: np.ndarray) -> float:
    """Mean squared error per source entry."""
    t = np.asarray(D_true, dtype=np.float64).ravel()
    e = np.asarray(D_est, dtype=np.float64).ravel()
    if t.size != e.size:
        raise ValueError(f"length mismatch: {t.size} vs {e.size}")
    return float(np.mean((t - e) ** 2))
