"""Differentiable stand-ins for the rate-equation VCSEL.

Two surrogate families fitted against a black-box waveform map (usually
the rate-equation integrator driven by white Gaussian current noise):

* a second-order Volterra model identified by cross-correlation against
  the white stimulus (first-order kernel from input/output correlation,
  second-order kernel from the two-lag product correlation with the
  diagonal variance correction),
* a tapped-delay feed-forward network trained on the same records by
  minibatch gradient descent on the MSE.

Both carry their input/output standardization so they can be evaluated
and differentiated in raw units (mA in, mW out).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nn
from .signal import Waveform, eye_diagram, nrmse, r_squared, white_gaussian_stimulus

__all__ = [
    "StimulusConfig",
    "Scaling",
    "VolterraModel",
    "TdnnModel",
    "FitReport",
    "ValidationResult",
    "volterra_eval",
    "fit_volterra",
    "fit_tdnn",
    "validate",
    "surrogate_gradient",
]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class StimulusConfig:
    """White Gaussian identification stimulus."""

    std_ma: float = 6.0
    bias_ma: float = 8.0
    n_samples: int = 1_000_000
    seed: int = 2024
    sample_rate: float = 280e9


@dataclass(frozen=True)
class Scaling:
    """Standardization applied inside a surrogate (exact inversion data)."""

    mean_in: float
    std_in: float
    mean_out: float
    std_out: float


@dataclass
class FitReport:
    nrmse: float
    r_squared: float
    stimulus: str
    test: str


@dataclass
class ValidationResult:
    report: FitReport
    eye_model: object
    eye_reference: object


def _lagged_view(x_norm: np.ndarray, m: int) -> np.ndarray:
    """Rows are ascending-time windows: row n = x[n-m+1 .. n], zero padded
    at the start so row n aligns with output sample n."""
    padded = np.concatenate([np.zeros(m - 1), x_norm])
    return sliding_window_view(padded, m)


class VolterraModel:
    """Second-order Volterra series with lags a..b (kernels in lag order)."""

    def __init__(self, h0: float, h1: np.ndarray, h2: np.ndarray,
                 lag_start: int, lag_end: int, scaling: Scaling):
        h1 = np.asarray(h1, dtype=np.float64)
        h2 = np.asarray(h2, dtype=np.float64)
        m = lag_end - lag_start + 1
        if lag_start != 0:
            raise ValueError("only causal windows with lag_start=0 are supported")
        if h1.shape != (m,) or h2.shape != (m, m):
            raise ValueError("kernel shapes inconsistent with lag window")
        if not np.allclose(h2, h2.T, atol=1e-12):
            raise ValueError("h2 must be symmetric")
        self.h0 = float(h0)
        self.h1 = h1
        self.h2 = h2
        self.lag_start = lag_start
        self.lag_end = lag_end
        self.scaling = scaling

    @property
    def memory(self) -> int:
        return self.lag_end - self.lag_start + 1

    @property
    def warmup(self) -> int:
        """Outputs before this index used zero-padded (incomplete) windows."""
        return self.memory - 1

    def __call__(self, x: Waveform) -> Waveform:
        return volterra_eval(self, x)

    def window_output(self, window: np.ndarray) -> float:
        """Raw-units output for one ascending-time window of length M."""
        xn = (np.asarray(window, dtype=float) - self.scaling.mean_in) / self.scaling.std_in
        v = xn[::-1]  # lag order
        y = self.h0 + self.h1 @ v + v @ self.h2 @ v
        return float(y * self.scaling.std_out + self.scaling.mean_out)

    def window_gradient(self, window: np.ndarray) -> np.ndarray:
        """d(output)/d(window) in raw units, window ascending in time."""
        xn = (np.asarray(window, dtype=float) - self.scaling.mean_in) / self.scaling.std_in
        v = xn[::-1]
        gv = self.h1 + 2.0 * (self.h2 @ v)
        return gv[::-1] * (self.scaling.std_out / self.scaling.std_in)

    def sequence_gradient(self, u_raw: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Accumulate d(sum_n cotangent[n] * y[n]) / d u over a sequence.

        Mirrors :func:`volterra_eval` including its zero-padded warm-up
        windows; all quantities in raw units.
        """
        s = self.scaling
        xn = (np.asarray(u_raw, dtype=float) - s.mean_in) / s.std_in
        n = xn.size
        m = self.memory
        q = np.asarray(cotangent, dtype=float) * s.std_out
        rows = _lagged_view(xn, m)
        # C[t, tau] = h1[tau] + 2 * sum_j h2[tau, j] * x(t - j)
        h2_flip_t = self.h2[:, ::-1].T
        dxp = np.zeros(n + m - 1)
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            w = rows[lo:hi]
            c = self.h1[None, :] + 2.0 * (w @ h2_flip_t)
            qc = c * q[lo:hi, None]
            for tau in range(m):
                # output t contributes to input t - tau; padded index t - tau + m - 1
                dxp[lo - tau + m - 1 : hi - tau + m - 1] += qc[:, tau]
        return dxp[m - 1 :] / s.std_in

    def raw_kernels(self):
        """Kernels of the equivalent series acting on raw (unstandardized)
        input/output; h2_raw is unchanged in shape, lag order."""
        s = self.scaling
        h2_raw = self.h2 * (s.std_out / s.std_in**2)
        h1_raw = self.h1 * (s.std_out / s.std_in) - 2.0 * (
            self.h2 @ np.full(self.memory, s.mean_in)
        ) * (s.std_out / s.std_in**2)
        h0_raw = s.mean_out + s.std_out * (
            self.h0
            - self.h1 @ np.full(self.memory, s.mean_in / s.std_in)
            + (s.mean_in / s.std_in) ** 2 * np.sum(self.h2)
        )
        return float(h0_raw), h1_raw, h2_raw


def volterra_eval(m: VolterraModel, x: Waveform) -> Waveform:
    """Vectorized series evaluation; first ``m.warmup`` outputs are
    computed on zero-padded windows."""
    s = m.scaling
    xn = (x.samples - s.mean_in) / s.std_in
    rows = _lagged_view(xn, m.memory)
    n = xn.size
    out = np.empty(n)
    # kernels flipped into window (ascending-time) order
    k1 = m.h1[::-1]
    k2 = m.h2[::-1, ::-1]
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        w = rows[lo:hi]
        out[lo:hi] = m.h0 + w @ k1 + np.einsum("ni,ni->n", w @ k2, w)
    return Waveform(x.sample_rate, out * s.std_out + s.mean_out)


def _stimulus_records(reference, stim: StimulusConfig):
    x = white_gaussian_stimulus(
        stim.std_ma, stim.bias_ma, stim.n_samples, stim.seed, stim.sample_rate
    )
    y = reference(x)
    if len(y) != len(x):
        raise ValueError("reference must preserve waveform length")
    mean_in = float(np.mean(x.samples))
    std_in = float(np.std(x.samples))
    mean_out = float(np.mean(y.samples))
    std_out = float(np.std(y.samples))
    if std_in == 0 or std_out == 0:
        raise ValueError("degenerate stimulus or response (zero variance)")
    scaling = Scaling(mean_in, std_in, mean_out, std_out)
    xn = (x.samples - mean_in) / std_in
    yn = (y.samples - mean_out) / std_out
    return xn, yn, scaling


def fit_volterra(
    reference,
    stim: StimulusConfig = StimulusConfig(),
    window: tuple[int, int] = (0, 31),
) -> VolterraModel:
    """Kernel identification by cross-correlation against the generated
    white Gaussian stimulus.

    ``reference`` is a callable mapping a drive :class:`Waveform` to a
    response :class:`Waveform` of the same length.
    """
    a, b = window
    if a != 0 or b < a:
        raise ValueError("window must be (0, b) with b >= 0")
    m = b - a + 1
    if stim.n_samples < 10 * m:
        raise ValueError(
            f"{stim.n_samples} samples insufficient for a {m}-lag window"
        )
    xn, yn, scaling = _stimulus_records(reference, stim)

    h0 = float(np.mean(yn))
    yc = yn - h0
    rows = _lagged_view(xn, m)
    # drop warm-up rows containing the zero padding
    n_valid = xn.size - b
    corr1 = np.zeros(m)
    corr2 = np.zeros((m, m))
    sq_mean = 0.0
    for lo in range(b, xn.size, _CHUNK):
        hi = min(lo + _CHUNK, xn.size)
        w = rows[lo:hi]
        yw = yc[lo:hi]
        corr1 += yw @ w
        corr2 += (w * yw[:, None]).T @ w
        sq_mean += np.sum(yw)
    corr1 /= n_valid
    corr2 /= n_valid
    sq_mean /= n_valid
    sigma2 = 1.0  # stimulus standardized before correlation
    h1 = corr1 / sigma2
    h2 = corr2 / (2.0 * sigma2**2)
    # diagonal variance correction: E[yc*(x^2 - sigma^2)] / (2 sigma^4)
    diag = (np.diag(corr2) - sigma2 * sq_mean) / (2.0 * sigma2**2)
    np.fill_diagonal(h2, diag)
    h2 = 0.5 * (h2 + h2.T)
    # flip from window order (ascending time) to lag order
    return VolterraModel(h0, h1[::-1], h2[::-1, ::-1], a, b, scaling)


class TdnnModel:
    """Tapped-delay network: window of ``delays + 1`` input samples in, one
    output sample out, trained in standardized coordinates."""

    def __init__(self, net: nn.Network, delays: int, scaling: Scaling):
        if net.d_in != delays + 1 or net.d_out != 1:
            raise ValueError("network width inconsistent with delay count")
        self.net = net
        self.delays = delays
        self.scaling = scaling

    @property
    def warmup(self) -> int:
        return self.delays

    def __call__(self, x: Waveform) -> Waveform:
        s = self.scaling
        xn = (x.samples - s.mean_in) / s.std_in
        rows = _lagged_view(xn, self.delays + 1)
        out = np.empty(xn.size)
        for lo in range(0, xn.size, _CHUNK):
            hi = min(lo + _CHUNK, xn.size)
            out[lo:hi] = self.net.forward(rows[lo:hi])[:, 0]
        return Waveform(x.sample_rate, out * s.std_out + s.mean_out)

    def window_output(self, window: np.ndarray) -> float:
        s = self.scaling
        xn = (np.asarray(window, dtype=float) - s.mean_in) / s.std_in
        return float(self.net.forward(xn) * s.std_out + s.mean_out)

    def window_gradient(self, window: np.ndarray) -> np.ndarray:
        s = self.scaling
        xn = (np.asarray(window, dtype=float) - s.mean_in) / s.std_in
        dx = self.net.input_gradient(xn, np.ones((1, 1)))[0]
        return dx * (s.std_out / s.std_in)

    def sequence_gradient(self, u_raw: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Same contract as :meth:`VolterraModel.sequence_gradient`."""
        s = self.scaling
        xn = (np.asarray(u_raw, dtype=float) - s.mean_in) / s.std_in
        n = xn.size
        m = self.delays + 1
        q = np.asarray(cotangent, dtype=float) * s.std_out
        rows = _lagged_view(xn, m)
        dxp = np.zeros(n + m - 1)
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            # input gradients pre-weighted by the cotangent
            gw = self.net.input_gradient(rows[lo:hi], q[lo:hi, None])
            for i in range(m):
                # window column i of output t touches input t - (m - 1) + i
                dxp[lo + i : hi + i] += gw[:, i]
        return dxp[m - 1 :] / s.std_in


def fit_tdnn(
    reference,
    stim: StimulusConfig = StimulusConfig(),
    train_cfg: nn.TrainConfig | None = None,
    delays: int = 22,
    hidden: int = 22,
    fine_tune: bool = True,
) -> tuple[TdnnModel, nn.TrainResult]:
    """Train the tapped-delay network on white-noise records of the
    reference.  The output layer starts at zero so the untrained model
    predicts the record mean.  ``fine_tune`` appends a reduced-rate pass
    with a larger batch to settle the fit."""
    if train_cfg is None:
        train_cfg = nn.TrainConfig(optimizer="adam", lr=1e-3, batch_size=256,
                                   max_steps=30_000, seed=7, loss="mse")
    if train_cfg.loss != "mse":
        raise ValueError("tapped-delay surrogate trains with the mse loss")
    xn, yn, scaling = _stimulus_records(reference, stim)
    rows = _lagged_view(xn, delays + 1)
    valid = np.arange(delays, xn.size)

    def sampler(rng, batch):
        idx = valid[rng.integers(0, valid.size, batch)]
        return rows[idx], yn[idx][:, None]

    net = nn.Network.create([delays + 1, hidden, 1], ["tanh", "linear"],
                            seed=train_cfg.seed, zero_output_layer=True)
    trace = nn.train(net, sampler, train_cfg)
    if fine_tune and train_cfg.max_steps > 0:
        from dataclasses import replace as _replace

        cfg2 = _replace(train_cfg, lr=train_cfg.lr / 5.0,
                        batch_size=train_cfg.batch_size * 2,
                        max_steps=max(train_cfg.max_steps // 2, 1),
                        seed=train_cfg.seed + 1)
        trace.loss_trace.extend(nn.train(net, sampler, cfg2).loss_trace)
    return TdnnModel(net, delays, scaling), trace


def validate(model, reference, test_drive: Waveform,
             sps: int | None = None) -> ValidationResult:
    """NRMSE and R^2 of the model against the reference on a test drive,
    warm-up samples excluded; eye diagrams included when sps is given."""
    y_ref = reference(test_drive)
    y_mod = model(test_drive)
    skip = int(getattr(model, "warmup", 0))
    report = FitReport(
        nrmse=nrmse(y_mod.samples[skip:], y_ref.samples[skip:]),
        r_squared=r_squared(y_mod.samples[skip:], y_ref.samples[skip:]),
        stimulus="white gaussian identification record",
        test=f"{len(test_drive)}-sample drive at {test_drive.sample_rate:.3g} Hz",
    )
    eye_m = eye_r = None
    if sps is not None:
        eye_m = eye_diagram(y_mod.with_samples(y_mod.samples[skip:]), sps)
        eye_r = eye_diagram(y_ref.with_samples(y_ref.samples[skip:]), sps)
    return ValidationResult(report, eye_m, eye_r)


def surrogate_gradient(model, window: np.ndarray) -> np.ndarray:
    """d(output sample)/d(input window), raw units, window ascending in
    time with the current sample last."""
    return model.window_gradient(window)
