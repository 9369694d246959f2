"""Gradient-free receiver training with differential evolution.

The trainable receiver is an FIR front end, a downsampler and a small
softmax demapper; expressed as one dense network (the FIR is its first
linear layer) it can be trained either by backpropagation or, treating
the whole parameter vector as a DE population member, by rand/1/bin
differential evolution against a fixed evaluation batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .equalize import LinkRecord

__all__ = [
    "DeConfig",
    "DeResult",
    "differential_evolution",
    "TrainableReceiver",
    "receiver_network",
    "de_train",
    "backprop_train_receiver",
]


@dataclass(frozen=True)
class DeConfig:
    population: int | None = None  # default 10*dim, capped at 200
    f_weight: float = 0.6
    crossover: float = 0.9
    generations: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.population is not None and self.population < 4:
            raise ValueError("population must be >= 4")
        if not (0.0 < self.f_weight <= 2.0):
            raise ValueError("differential weight must be in (0, 2]")
        if not (0.0 <= self.crossover <= 1.0):
            raise ValueError("crossover rate must be in [0, 1]")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")

    def resolve_population(self, dim: int) -> int:
        if self.population is not None:
            return self.population
        return int(min(max(10 * dim, 4), 200))


@dataclass
class DeResult:
    best: np.ndarray
    best_fitness: float
    best_trace: list[float] = field(default_factory=list)
    evaluations: int = 0


def differential_evolution(fitness, init_pop: np.ndarray, cfg: DeConfig) -> DeResult:
    """DE/rand/1/bin with greedy selection over a given initial population.

    ``fitness`` maps a parameter vector to a scalar to minimize; the loop
    is deterministic given ``cfg.seed`` and the initial population.
    """
    pop = np.array(init_pop, dtype=np.float64, copy=True)
    if pop.ndim != 2 or pop.shape[0] < 4:
        raise ValueError("initial population must be (NP >= 4, dim)")
    np_size, dim = pop.shape
    rng = np.random.default_rng(cfg.seed)
    fits = np.array([fitness(v) for v in pop], dtype=float)
    evals = np_size
    trace = [float(np.min(fits))]
    for _ in range(cfg.generations):
        for i in range(np_size):
            choices = rng.permutation(np_size - 1)[:3]
            choices = choices + (choices >= i)  # distinct from i
            a, b, c = pop[choices[0]], pop[choices[1]], pop[choices[2]]
            mutant = a + cfg.f_weight * (b - c)
            cross = rng.random(dim) < cfg.crossover
            cross[rng.integers(0, dim)] = True
            trial = np.where(cross, mutant, pop[i])
            f_trial = fitness(trial)
            evals += 1
            if f_trial <= fits[i]:
                pop[i] = trial
                fits[i] = f_trial
        trace.append(float(np.min(fits)))
    best_idx = int(np.argmin(fits))
    return DeResult(pop[best_idx].copy(), float(fits[best_idx]), trace, evals)


@dataclass(frozen=True)
class TrainableReceiver:
    """FIR filter + downsampler + demapper geometry."""

    fir_taps: int = 21
    demapper_hidden: int = 8
    n_messages: int = 4
    sps: int = 1
    phase: int = 0  # downsampler phase relative to the symbol center

    def __post_init__(self):
        if self.fir_taps % 2 == 0:
            raise ValueError("FIR length must be odd")
        if self.sps < 1 or self.demapper_hidden < 1:
            raise ValueError("invalid receiver geometry")

    @property
    def window(self) -> int:
        return self.fir_taps


def receiver_network(rx: TrainableReceiver, seed: int) -> nn.Network:
    """The receiver as one trainable network: its first linear layer is
    the FIR (window in, one filtered-and-downsampled sample out)."""
    return nn.Network.create(
        [rx.fir_taps, 1, rx.demapper_hidden, rx.n_messages],
        ["linear", "tanh", "softmax"],
        seed=seed,
    )


def receiver_windows(rx: TrainableReceiver, record: LinkRecord,
                     noise: np.ndarray | None = None):
    """Windows aligned so the FIR center tap sits on the (phased) symbol
    decision instant."""
    windows, labels = record.windows(rx.fir_taps, noise)
    if rx.phase:
        raise NotImplementedError("non-zero downsampler phase is unused here")
    return windows, labels


def de_train(
    rx: TrainableReceiver,
    eval_windows: np.ndarray,
    eval_labels: np.ndarray,
    cfg: DeConfig,
    init_scale: float = 0.4,
) -> tuple[nn.Network, DeResult]:
    """Fit the receiver with DE against a fixed evaluation batch (the
    channel may be a black box: only its sampled outputs are needed).

    The population starts from independently seeded network draws shrunk
    by ``init_scale``; a compact initial cloud converges much faster in
    this parameter count than full-scale random networks.
    """
    template = receiver_network(rx, seed=cfg.seed)
    dim = template.flat_params().size
    np_size = cfg.resolve_population(dim)
    init = np.stack([
        receiver_network(rx, seed=cfg.seed + 1 + i).flat_params() * init_scale
        for i in range(np_size)
    ])
    onehot = np.zeros((eval_labels.size, rx.n_messages))
    onehot[np.arange(eval_labels.size), eval_labels] = 1.0
    net = receiver_network(rx, seed=cfg.seed)

    def fitness(vec: np.ndarray) -> float:
        net.set_flat_params(vec)
        probs = net.forward(eval_windows)
        loss, _ = nn.cross_entropy_loss(probs, onehot)
        return loss

    result = differential_evolution(fitness, init, cfg)
    net.set_flat_params(result.best)
    return net, result


def backprop_train_receiver(
    rx: TrainableReceiver,
    record: LinkRecord,
    train_cfg: nn.TrainConfig,
    train_snr_db: float,
) -> tuple[nn.Network, nn.TrainResult]:
    """The gradient-trained twin of the DE receiver."""
    net = receiver_network(rx, seed=train_cfg.seed)
    sampler = lambda rng, b: record.sample_batch(rng, b, rx.fir_taps, train_snr_db)
    trace = nn.train(net, sampler, train_cfg)
    return net, trace
