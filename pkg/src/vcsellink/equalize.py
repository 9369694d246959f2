"""Receiver-side equalization on sampled link records.

A link record holds one noiseless pass of a random symbol stream through
the channel (detected waveform plus the true symbols); training and BER
evaluation then inject fresh AWGN per batch or shard, so one expensive
physics run serves a whole SNR sweep.

Equalizers are classifiers over a window of received samples centered on
the decision instant: a small ReLU network with softmax output, and a
single softmax layer as the linear (FFE-style) baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nn
from .signal import (
    ErrorRateCurve,
    PamConfig,
    Waveform,
    count_errors,
    decision_instants,
    decide_nearest_level,
    gray_code,
)

__all__ = [
    "EqualizerConfig",
    "LinkRecord",
    "make_awgn_symbol_record",
    "train_equalizer",
    "linear_ffe_baseline",
    "prune_equalizer",
    "PruneReport",
    "net_decider",
    "threshold_decider",
    "ber_sweep",
    "snr_at_rate",
]


@dataclass(frozen=True)
class EqualizerConfig:
    """Classifier geometry: window of received samples to symbol class."""

    window_symbols: int = 2
    sps: int = 10
    hidden: int = 4
    pam_order: int = 4

    def __post_init__(self):
        if self.window_symbols < 1 or self.sps < 1 or self.hidden < 0:
            raise ValueError("equalizer dimensions must be positive")

    @property
    def input_width(self) -> int:
        return self.window_symbols * self.sps


class LinkRecord:
    """Noiseless received waveform for a known symbol stream.

    ``received`` is the detector output before noise; noise of a target
    SNR (mean-square signal power over noise variance, measured on this
    record) is injected on demand.
    """

    def __init__(self, received: Waveform, symbols: np.ndarray, sps: int,
                 offset: int = 0, bit_map=None):
        self.received = received.samples
        self.symbols = np.asarray(symbols, dtype=np.int64)
        self.sps = sps
        self.offset = offset
        order = int(self.symbols.max()) + 1 if self.symbols.size else 2
        self.bit_map = bit_map if bit_map is not None else tuple(
            gray_code(max(int(np.ceil(np.log2(max(order, 2)))), 1)))
        self.signal_power = float(np.mean(self.received**2))
        centers = decision_instants(self.symbols.size, sps, offset)
        self.centers = centers

    def noise_std(self, snr_db: float) -> float:
        return float(np.sqrt(self.signal_power / 10.0 ** (snr_db / 10.0)))

    def usable_symbols(self, window: int) -> np.ndarray:
        half = window // 2
        lo = self.centers - half
        hi = lo + window
        ok = (lo >= 0) & (hi <= self.received.size)
        return np.flatnonzero(ok)

    def windows(self, window: int, noise: np.ndarray | None = None):
        """(windows, labels) for every symbol whose window fits."""
        idx = self.usable_symbols(window)
        data = self.received if noise is None else self.received + noise
        view = sliding_window_view(data, window)
        starts = self.centers[idx] - window // 2
        return view[starts], self.symbols[idx]

    def sample_batch(self, rng: np.random.Generator, batch: int,
                     window: int, snr_db: float):
        idx = self.usable_symbols(window)
        pick = idx[rng.integers(0, idx.size, batch)]
        starts = self.centers[pick] - window // 2
        base = sliding_window_view(self.received, window)[starts]
        noisy = base + self.noise_std(snr_db) * rng.standard_normal(base.shape)
        return noisy, self.symbols[pick]

    def rail_means(self) -> np.ndarray:
        """Noiseless mean received value per symbol at the decision instant."""
        center_vals = self.received[self.centers]
        order = int(self.symbols.max()) + 1
        return np.array([center_vals[self.symbols == k].mean() for k in range(order)])


def make_awgn_symbol_record(n_symbols: int, seed: int, order: int = 4) -> LinkRecord:
    """ISI-free symbol-rate PAM record with unit average power: the
    closed-form SER channel."""
    rng = np.random.default_rng(seed)
    symbols = rng.integers(0, order, n_symbols)
    levels = np.arange(-(order - 1), order, 2, dtype=float)
    levels /= np.sqrt(np.mean(levels**2))
    return LinkRecord(Waveform(1.0, levels[symbols]), symbols, sps=1)


def net_decider(net: nn.Network):
    def decide(windows: np.ndarray) -> np.ndarray:
        return np.argmax(net.forward(windows), axis=1)
    return decide


def threshold_decider(rails: np.ndarray, sps: int):
    """No-equalization baseline: nearest calibrated rail at the center sample."""
    def decide(windows: np.ndarray) -> np.ndarray:
        center = windows[:, windows.shape[1] // 2]
        return decide_nearest_level(center, rails)
    return decide


def train_equalizer(
    record: LinkRecord,
    cfg: EqualizerConfig,
    train_cfg: nn.TrainConfig,
    train_snr_db: float = 12.0,
) -> tuple[nn.Network, nn.TrainResult]:
    """Train the nonlinear classifier at a fixed training SNR."""
    dims = [cfg.input_width, cfg.hidden, cfg.pam_order]
    acts = ["relu", "softmax"]
    net = nn.Network.create(dims, acts, seed=train_cfg.seed)
    sampler = lambda rng, b: record.sample_batch(rng, b, cfg.input_width, train_snr_db)
    trace = nn.train(net, sampler, train_cfg)
    return net, trace


def linear_ffe_baseline(
    record: LinkRecord,
    taps: int,
    train_cfg: nn.TrainConfig,
    pam_order: int = 4,
    train_snr_db: float = 12.0,
) -> tuple[nn.Network, nn.TrainResult]:
    """Single linear layer (softmax decision head), same pipeline."""
    net = nn.Network.create([taps, pam_order], ["softmax"], seed=train_cfg.seed)
    sampler = lambda rng, b: record.sample_batch(rng, b, taps, train_snr_db)
    trace = nn.train(net, sampler, train_cfg)
    return net, trace


@dataclass
class PruneReport:
    sparsity: float
    multiplies_before: int
    multiplies_after: int
    loss_trace: list[float] = field(default_factory=list)

    @property
    def multiply_reduction(self) -> float:
        return self.multiplies_before / max(self.multiplies_after, 1)


def prune_equalizer(
    net: nn.Network,
    sched: nn.PruneSchedule,
    record: LinkRecord,
    train_cfg: nn.TrainConfig,
    train_snr_db: float = 12.0,
) -> tuple[nn.Network, PruneReport]:
    """Continue training a copy of a trained equalizer while masking the
    smallest weights after every step, following the sparsity schedule."""
    pruned = net.copy()
    before = nn.multiply_count(pruned, structural=False)
    rng = np.random.default_rng(train_cfg.seed)
    opt = nn.make_optimizer(train_cfg.optimizer, train_cfg.lr)
    params = pruned.param_arrays()
    trace = []
    for step in range(sched.begin_step, sched.end_step + 1):
        x, y = record.sample_batch(rng, train_cfg.batch_size,
                                   pruned.d_in, train_snr_db)
        value, grads = nn.gradients(pruned, x, y, train_cfg.loss)
        if not np.isfinite(value):
            raise nn.DivergenceError(step)
        flat = []
        for dw, db in grads:
            flat.extend((dw, db))
        opt.step(params, flat)
        nn.prune_step(pruned, sched, step)
        trace.append(value)
    report = PruneReport(
        sparsity=nn.sparsity(pruned),
        multiplies_before=before,
        multiplies_after=nn.multiply_count(pruned, structural=True),
        loss_trace=trace,
    )
    return pruned, report


def ber_sweep(
    record: LinkRecord,
    decide,
    window: int,
    snr_db_grid,
    seed: int,
    min_errors: int = 100,
    max_shards: int = 64,
    bit_errors: bool = True,
) -> ErrorRateCurve:
    """Monte-Carlo error rate over fresh noise shards of the record.

    Each shard re-noises the full record; shards accumulate until
    ``min_errors`` errors or the shard budget is reached.
    """
    curve = ErrorRateCurve()
    base, labels = record.windows(window)
    ss = np.random.SeedSequence(seed)
    for snr_db in snr_db_grid:
        std = record.noise_std(snr_db)
        errors = 0
        total = 0
        for shard_seed in ss.spawn(max_shards):
            rng = np.random.default_rng(shard_seed)
            noisy = base + std * rng.standard_normal(base.shape)
            decided = decide(noisy)
            if bit_errors:
                _, err = count_errors(decided, labels, record.bit_map)
                n = labels.size * len(record.bit_map[0])
            else:
                err = int(np.count_nonzero(decided != labels))
                n = labels.size
            errors += err
            total += n
            if errors >= min_errors:
                break
        curve.add_point(snr_db, errors, total)
    return curve


def snr_at_rate(curve: ErrorRateCurve, target: float) -> float | None:
    """SNR (dB) where the curve crosses the target rate, interpolating
    linearly in log10(rate); None if the curve never crosses it."""
    snr = np.asarray(curve.snr_db, dtype=float)
    rate = np.asarray(curve.rate, dtype=float)
    order = np.argsort(snr)
    snr, rate = snr[order], rate[order]
    for i in range(rate.size - 1):
        r0, r1 = rate[i], rate[i + 1]
        if r0 <= 0 or r1 <= 0:
            continue
        lo, hi = min(r0, r1), max(r0, r1)
        if lo <= target <= hi and r0 != r1:
            t = (np.log10(target) - np.log10(r0)) / (np.log10(r1) - np.log10(r0))
            return float(snr[i] + t * (snr[i + 1] - snr[i]))
    return None
