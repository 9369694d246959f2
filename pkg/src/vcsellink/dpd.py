"""Transmitter predistortion: indirect learning (fit the inverse on
recorded output, copy it in front) and direct learning (backpropagate the
output error through a frozen differentiable surrogate).

A distorter is a sliding-window network over 2L+1 samples with explicit
input/output standardization, so the same trained map serves as
post-distorter (output units in) and pre-distorter (drive units in).
Cascade quality is evaluated as the residual fraction of signal variance
left after the best delay and affine alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nn
from .signal import Waveform

__all__ = [
    "DpdConfig",
    "Distorter",
    "train_dpd_ila",
    "train_dpd_dla",
    "apply_dpd",
    "best_delay",
    "cascade_residual",
]


@dataclass(frozen=True)
class DpdConfig:
    context: int = 8  # window half-width L; the distorter sees 2L+1 samples
    hidden: int = 16
    n_train: int = 60_000  # samples in the empirical MSE

    def __post_init__(self):
        if self.context < 0 or self.hidden < 1 or self.n_train < 1:
            raise ValueError("invalid DPD configuration")

    @property
    def window(self) -> int:
        return 2 * self.context + 1


@dataclass(frozen=True)
class _Scale:
    mean: float
    std: float

    def fwd(self, x):
        return (x - self.mean) / self.std

    def inv(self, x):
        return x * self.std + self.mean


class Distorter:
    """Sliding-window sample mapper with bias-value edge padding."""

    def __init__(self, net: nn.Network, context: int, in_scale: _Scale,
                 out_scale: _Scale):
        if net.d_in != 2 * context + 1 or net.d_out != 1:
            raise ValueError("distorter network width mismatch")
        self.net = net
        self.context = context
        self.in_scale = in_scale
        self.out_scale = out_scale

    def window_rows(self, samples: np.ndarray, pad_value: float | None = None):
        pad = self.in_scale.mean if pad_value is None else pad_value
        xn = self.in_scale.fwd(np.asarray(samples, dtype=float))
        pn = self.in_scale.fwd(pad)
        padded = np.concatenate(
            [np.full(self.context, pn), xn, np.full(self.context, pn)]
        )
        return sliding_window_view(padded, 2 * self.context + 1)

    def apply(self, w: Waveform, pad_value: float | None = None) -> Waveform:
        rows = self.window_rows(w.samples, pad_value)
        out = self.net.forward(rows)[:, 0]
        return Waveform(w.sample_rate, self.out_scale.inv(out))

    def as_predistorter(self) -> "Distorter":
        """The same learned map re-anchored to drive-signal units (the
        indirect-learning copy step)."""
        return Distorter(self.net, self.context, self.out_scale, self.out_scale)


def apply_dpd(predistorter: Distorter, x: Waveform,
              pad_value: float | None = None) -> Waveform:
    return predistorter.apply(x, pad_value)


def best_delay(y: np.ndarray, x: np.ndarray, max_delay: int = 64) -> int:
    """Transmitter latency by peak cross-correlation, non-negative lags."""
    yc = y - np.mean(y)
    xc = x - np.mean(x)
    lags = np.arange(0, max_delay + 1)
    scores = [float(np.dot(yc[d:], xc[: xc.size - d])) for d in lags]
    return int(lags[int(np.argmax(np.abs(scores)))])


def _affine_fit(y: np.ndarray, target: np.ndarray):
    a = np.vstack([y, np.ones_like(y)]).T
    coef, *_ = np.linalg.lstsq(a, target, rcond=None)
    return float(coef[0]), float(coef[1])


def cascade_residual(
    transmitter,
    x: Waveform,
    predistorter: Distorter | None = None,
    max_delay: int = 64,
    skip: int = 128,
) -> float:
    """Fraction of reference variance unexplained by the (pre-distorted)
    cascade after optimal delay and affine alignment: 0 is a pure delay."""
    u = predistorter.apply(x) if predistorter is not None else x
    y = transmitter(u)
    d = best_delay(y.samples, x.samples, max_delay)
    ys = y.samples[skip + d :]
    xs = x.samples[skip : skip + ys.size]
    g, c = _affine_fit(ys, xs)
    resid = np.mean((g * ys + c - xs) ** 2)
    return float(resid / np.var(xs))


def train_dpd_ila(
    transmitter,
    train_signal: Waveform,
    cfg: DpdConfig = DpdConfig(),
    train_cfg: nn.TrainConfig | None = None,
) -> tuple[Distorter, nn.TrainResult]:
    """Indirect learning: fit the post-distorter (output window to input
    sample, latency-compensated), then copy it as the pre-distorter."""
    if train_cfg is None:
        train_cfg = nn.TrainConfig(optimizer="adam", lr=1e-3, batch_size=128,
                                   max_steps=8000, seed=11, loss="mse")
    if train_cfg.loss != "mse":
        raise ValueError("ILA trains with the mse loss")
    x = train_signal
    if len(x) > cfg.n_train:
        x = Waveform(x.sample_rate, x.samples[: cfg.n_train])
    y = transmitter(x)
    d = best_delay(y.samples, x.samples)
    sx = _Scale(float(np.mean(x.samples)), float(np.std(x.samples)))
    sy = _Scale(float(np.mean(y.samples)), float(np.std(y.samples)))
    if sx.std == 0 or sy.std == 0:
        raise ValueError("degenerate training signal")
    post = Distorter(
        nn.Network.create([cfg.window, cfg.hidden, 1], ["tanh", "linear"],
                          seed=train_cfg.seed),
        cfg.context, sy, sx,
    )
    rows = post.window_rows(y.samples)
    targets = sx.fwd(x.samples)
    # estimate x(n - d) from the y window centered at n
    valid = np.arange(d + cfg.context, len(x) - cfg.context)

    def sampler(rng, batch):
        n = valid[rng.integers(0, valid.size, batch)]
        return rows[n], targets[n - d][:, None]

    trace = nn.train(post.net, sampler, train_cfg)
    return post.as_predistorter(), trace


def train_dpd_dla(
    surrogate_model,
    train_signal: Waveform,
    cfg: DpdConfig = DpdConfig(),
    train_cfg: nn.TrainConfig | None = None,
    identity_pretrain_steps: int = 400,
) -> tuple[Distorter, nn.TrainResult]:
    """Direct learning: train the pre-distorter by backpropagating the
    cascade error through the frozen surrogate.

    The target is the drive signal delayed by the surrogate latency and
    affine-calibrated to output units from the uncompensated cascade.
    """
    if train_cfg is None:
        # full-signal steps; batch_size only feeds the identity warm start
        train_cfg = nn.TrainConfig(optimizer="adam", lr=5e-4, batch_size=128,
                                   max_steps=1200, seed=13, loss="mse")
    x = train_signal
    if len(x) > cfg.n_train:
        x = Waveform(x.sample_rate, x.samples[: cfg.n_train])
    sx = _Scale(float(np.mean(x.samples)), float(np.std(x.samples)))
    if sx.std == 0:
        raise ValueError("degenerate training signal")
    dist = Distorter(
        nn.Network.create([cfg.window, cfg.hidden, 1], ["tanh", "linear"],
                          seed=train_cfg.seed),
        cfg.context, sx, sx,
    )
    rows = dist.window_rows(x.samples)

    # warm start: the distorter as an identity map
    if identity_pretrain_steps > 0:
        targets = sx.fwd(x.samples)

        def id_sampler(rng, batch):
            n = rng.integers(0, len(x), batch)
            return rows[n], targets[n][:, None]

        nn.train(dist.net, id_sampler,
                 replace(train_cfg, lr=1e-3, batch_size=128,
                         max_steps=identity_pretrain_steps))

    # fixed affine calibration of the target from the raw cascade
    y_raw = surrogate_model(x)
    d = best_delay(y_raw.samples, x.samples)
    warm = int(getattr(surrogate_model, "warmup", 0)) + cfg.window + d
    g, c = _affine_fit(x.samples[warm - d : len(x) - d], y_raw.samples[warm:])
    target = np.empty(len(x))
    target[d:] = g * x.samples[: len(x) - d] + c
    target[:d] = target[d]
    weight = np.zeros(len(x))
    weight[warm:] = 1.0
    n_valid = weight.sum()

    opt = nn.make_optimizer(train_cfg.optimizer, train_cfg.lr)
    params = dist.net.param_arrays()
    result = nn.TrainResult()
    for step in range(train_cfg.max_steps):
        out, caches = dist.net.forward_cached(rows)
        u = sx.inv(out[:, 0])
        y = surrogate_model(Waveform(x.sample_rate, u))
        r = (y.samples - target) * weight
        loss = float(np.sum(r * r) / n_valid)
        if not np.isfinite(loss):
            raise nn.DivergenceError(step)
        result.loss_trace.append(loss)
        q = 2.0 * r / n_valid
        du = surrogate_model.sequence_gradient(u, q)
        grads, _ = dist.net.backward(du[:, None] * sx.std, caches)
        flat = []
        for dw, db in grads:
            flat.extend((dw, db))
        opt.step(params, flat)
    return dist, result
