"""Error-rate sweep utilities shared by the experiments."""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

from .equalize import snr_at_rate  # re-exported convenience
from .signal import ErrorRateCurve

__all__ = ["q_function", "theoretical_pam_ser", "snr_at_rate", "monte_carlo_curve"]


def q_function(x) -> np.ndarray:
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def theoretical_pam_ser(snr_db, order: int = 4) -> np.ndarray:
    """Symbol error rate of M-PAM on AWGN at unit average symbol power,
    SNR = symbol power / noise variance."""
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    m = order
    return 2.0 * (m - 1) / m * q_function(np.sqrt(3.0 * snr / (m * m - 1)))


def monte_carlo_curve(
    run_shard,
    snr_db_grid,
    seed: int,
    min_errors: int = 100,
    max_shards: int = 64,
) -> ErrorRateCurve:
    """Accumulate ``run_shard(rng, snr_db) -> (errors, total)`` shards per
    SNR point until enough errors or the shard budget is spent."""
    curve = ErrorRateCurve()
    ss = np.random.SeedSequence(seed)
    for snr_db in snr_db_grid:
        errors = 0
        total = 0
        for shard_seed in ss.spawn(max_shards):
            err, tot = run_shard(np.random.default_rng(shard_seed), float(snr_db))
            errors += int(err)
            total += int(tot)
            if errors >= min_errors:
                break
        curve.add_point(float(snr_db), errors, total)
    return curve
