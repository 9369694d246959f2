"""End-to-end transceiver learning over a differentiable link.

The transmitter maps a one-hot message to one drive amplitude per symbol
(symbol-level operation); a batch of messages becomes a contiguous pulse
train so inter-symbol interference is part of training.  The chain

    encoder -> power normalization -> pulse train -> surrogate VCSEL
    -> fiber -> detector -> AWGN -> window extraction -> decoder

is differentiated by hand: the network segments use the nn engine's
reverse mode, the surrogate contributes its sequence gradient, and the
fiber/detector are linear maps.  An equidistant-level transmitter with a
trained decoder provides the reference system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .channel import FiberParams, PdParams, fiber_taps
from .equalize import LinkRecord, ber_sweep
from .signal import ErrorRateCurve, Waveform, gray_code

__all__ = [
    "AeConfig",
    "DifferentiableLink",
    "AeSystem",
    "ae_train",
    "equidistant_baseline",
    "decide",
    "condition_on_temperature",
    "temperature_feature",
    "equidistant_levels",
    "bit_map_by_amplitude",
    "ae_link_record",
    "ae_error_curve",
]


@dataclass(frozen=True)
class AeConfig:
    """Symbol-level autoencoder geometry and budgets."""

    n_messages: int = 4  # S
    sps: int = 10
    power_budget_ma2: float = 20.0  # mean squared drive deviation from bias
    normalization: str = "average_power"  # or "peak_amplitude"
    encoder_hidden: int = 16
    decoder_hidden: int = 0  # 0: single softmax layer on the window
    window_symbols: int = 2
    batch_size: int = 64  # messages per training iteration
    stratified_batches: bool = False  # equal message counts per batch
    conditioned: bool = False
    t_set_c: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_messages < 2:
            raise ValueError("need at least two messages")
        if self.normalization not in ("average_power", "peak_amplitude"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.power_budget_ma2 <= 0 or self.sps < 1 or self.batch_size < 1:
            raise ValueError("invalid autoencoder configuration")
        if self.conditioned and not self.t_set_c:
            raise ValueError("conditioned config needs a temperature set")

    @property
    def window(self) -> int:
        return self.window_symbols * self.sps


def condition_on_temperature(cfg: AeConfig, t_set_c) -> AeConfig:
    """Extend encoder and decoder inputs with a normalized temperature
    feature; training samples temperatures uniformly from the set."""
    t_set = tuple(float(t) for t in t_set_c)
    if not t_set:
        raise ValueError("temperature set must not be empty")
    return replace(cfg, conditioned=True, t_set_c=t_set)


def temperature_feature(cfg: AeConfig, t_c: float) -> float:
    lo, hi = min(cfg.t_set_c), max(cfg.t_set_c)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return (t_c - mid) / half if half > 0 else 0.0


def equidistant_levels(n: int, power_budget: float) -> np.ndarray:
    """Uniformly spaced zero-mean levels at the given mean-square budget."""
    base = np.arange(-(n - 1), n, 2, dtype=float)
    return base * np.sqrt(power_budget / np.mean(base**2))


def bit_map_by_amplitude(levels: np.ndarray) -> tuple[tuple[int, ...], ...]:
    """Gray labels assigned by amplitude rank, so bit error counting is
    fair for arbitrarily placed constellations."""
    n_bits = max(int(np.ceil(np.log2(len(levels)))), 1)
    codes = gray_code(n_bits)
    ranks = np.argsort(np.argsort(levels))
    return tuple(codes[r] for r in ranks)


class DifferentiableLink:
    """Drive-amplitude stream to received electrical stream, with exact
    adjoint.  ``surrogate=None`` is the identity (AWGN-only) link."""

    def __init__(
        self,
        surrogate=None,
        fiber: FiberParams | None = None,
        pd: PdParams = PdParams(),
        bias_ma: float = 8.0,
        sps: int = 10,
        sample_rate: float = 280e9,
    ):
        self.surrogate = surrogate
        self.pd = pd
        self.bias_ma = bias_ma
        self.sps = sps
        self.sample_rate = sample_rate
        self.taps = None
        self.atten = 1.0
        if fiber is not None:
            self.taps = fiber_taps(fiber, sample_rate)
            self.atten = fiber.attenuation_factor
        warm = int(getattr(surrogate, "warmup", 0))
        if self.taps is not None:
            warm += self.taps.size // 2
        self.pad_symbols = int(np.ceil(warm / sps)) + 1

    @property
    def gain(self) -> float:
        return self.pd.responsivity_a_per_w * self.atten

    def drive_stream(self, amps: np.ndarray) -> np.ndarray:
        padded = np.concatenate(
            [np.zeros(self.pad_symbols), amps, np.zeros(1)]
        )
        return self.bias_ma + np.repeat(padded, self.sps)

    def forward(self, amps: np.ndarray):
        """Noiseless electrical stream plus the cache for the adjoint."""
        drive = self.drive_stream(amps)
        if self.surrogate is None:
            optical = drive - self.bias_ma
        else:
            optical = self.surrogate(Waveform(self.sample_rate, drive)).samples
        if self.taps is not None:
            optical = np.convolve(optical, self.taps, mode="same")
        elec = self.gain * optical
        return elec, drive

    def backward(self, delec: np.ndarray, drive: np.ndarray) -> np.ndarray:
        """d loss/d amps from d loss/d electrical stream."""
        dopt = self.gain * delec
        if self.taps is not None:
            dopt = np.convolve(dopt, self.taps[::-1], mode="same")
        if self.surrogate is None:
            ddrive = dopt
        else:
            ddrive = self.surrogate.sequence_gradient(drive, dopt)
        per_symbol = ddrive.reshape(-1, self.sps).sum(axis=1)
        return per_symbol[self.pad_symbols : -1]

    def offset(self) -> int:
        return self.pad_symbols * self.sps

    def symbol_region(self, n_symbols: int) -> slice:
        start = self.offset()
        return slice(start, start + n_symbols * self.sps)

    def windows_for(self, elec: np.ndarray, n_symbols: int, window: int):
        centers = self.offset() + np.arange(n_symbols) * self.sps + self.sps // 2
        starts = centers - window // 2
        idx = starts[:, None] + np.arange(window)[None, :]
        return idx

    def noise_std(self, elec: np.ndarray, n_symbols: int, snr_db: float) -> float:
        region = elec[self.symbol_region(n_symbols)]
        p_sig = float(np.mean(region**2))
        return float(np.sqrt(p_sig / 10.0 ** (snr_db / 10.0)))


def _normalize_amps(amps_raw: np.ndarray, cfg: AeConfig):
    if cfg.normalization == "average_power":
        msq = float(np.mean(amps_raw**2))
        if msq == 0.0:
            return amps_raw.copy(), 0.0
        c = np.sqrt(cfg.power_budget_ma2 / msq)
        return c * amps_raw, c
    peak = float(np.max(np.abs(amps_raw)))
    if peak == 0.0:
        return amps_raw.copy(), 0.0
    c = np.sqrt(cfg.power_budget_ma2) / peak
    return c * amps_raw, c


def _normalize_backward(amps_raw: np.ndarray, c: float, grad_norm: np.ndarray,
                        cfg: AeConfig) -> np.ndarray:
    if c == 0.0:
        return np.zeros_like(amps_raw)
    if cfg.normalization == "average_power":
        b = amps_raw.size
        msq = float(np.mean(amps_raw**2))
        dot = float(np.dot(amps_raw, grad_norm))
        return c * grad_norm - (c * amps_raw / (b * msq)) * dot
    j = int(np.argmax(np.abs(amps_raw)))
    out = c * grad_norm
    dot = float(np.dot(amps_raw, grad_norm))
    out[j] -= (c / abs(amps_raw[j])) * np.sign(amps_raw[j]) * dot
    return out


@dataclass
class AeSystem:
    """Trained transceiver: encoder (or fixed levels) plus decoder."""

    cfg: AeConfig
    decoder: nn.Network
    encoder: nn.Network | None = None
    fixed_levels: np.ndarray | None = None
    averaged_levels: np.ndarray | None = None  # Polyak average, if recorded

    def levels(self, t_c: float | None = None) -> np.ndarray:
        """Drive amplitudes per message under uniform message statistics."""
        if self.averaged_levels is not None and not self.cfg.conditioned:
            return np.asarray(self.averaged_levels)
        if self.encoder is None:
            return np.asarray(self.fixed_levels)
        s = self.cfg.n_messages
        eye = np.eye(s)
        if self.cfg.conditioned:
            feat = temperature_feature(self.cfg, 25.0 if t_c is None else t_c)
            eye = np.hstack([eye, np.full((s, 1), feat)])
        raw = self.encoder.forward(eye)[:, 0]
        amps, _ = _normalize_amps(raw, self.cfg)
        return amps

    def decode(self, windows: np.ndarray, t_c: float | None = None) -> np.ndarray:
        if self.cfg.conditioned:
            feat = temperature_feature(self.cfg, 25.0 if t_c is None else t_c)
            windows = np.hstack([windows, np.full((windows.shape[0], 1), feat)])
        return np.argmax(self.decoder.forward(windows), axis=1)


def decide(posterior: np.ndarray) -> int | np.ndarray:
    """Argmax message estimate; ties resolve to the lowest index."""
    p = np.asarray(posterior)
    return int(np.argmax(p)) if p.ndim == 1 else np.argmax(p, axis=1)


def _make_nets(cfg: AeConfig, seed: int):
    extra = 1 if cfg.conditioned else 0
    enc = nn.Network.create(
        [cfg.n_messages + extra, cfg.encoder_hidden, 1], ["relu", "linear"], seed
    )
    if cfg.decoder_hidden > 0:
        dec = nn.Network.create(
            [cfg.window + extra, cfg.decoder_hidden, cfg.n_messages],
            ["relu", "softmax"], seed + 1,
        )
    else:
        dec = nn.Network.create([cfg.window + extra, cfg.n_messages], ["softmax"], seed + 1)
    return enc, dec


def _resolve_link(links, cfg: AeConfig, rng: np.random.Generator):
    """Pick (link, temperature feature) for one training iteration."""
    if isinstance(links, dict):
        if not cfg.conditioned and len(links) > 1:
            raise ValueError("multiple links require a conditioned config")
        t_choices = sorted(links)
        t_c = t_choices[rng.integers(0, len(t_choices))]
        return links[t_c], t_c
    return links, None


def _uniform_levels(encoder: nn.Network, cfg: AeConfig, feat: float | None):
    s = cfg.n_messages
    eye = np.eye(s)
    if feat is not None:
        eye = np.hstack([eye, np.full((s, 1), feat)])
    raw = encoder.forward(eye)[:, 0]
    amps, _ = _normalize_amps(raw, cfg)
    return amps


def _train_loop(links, cfg: AeConfig, train_cfg: nn.TrainConfig,
                encoder: nn.Network | None, decoder: nn.Network,
                fixed_levels: np.ndarray | None, snr_db: float,
                polyak_level_steps: int = 0):
    rng = np.random.default_rng(train_cfg.seed)
    noise_rng = np.random.default_rng(train_cfg.seed + 1)
    opt = nn.make_optimizer(train_cfg.optimizer, train_cfg.lr)
    params = decoder.param_arrays() + (encoder.param_arrays() if encoder else [])
    result = nn.TrainResult()
    level_sum = None
    level_count = 0
    b = cfg.batch_size
    for step in range(train_cfg.max_steps):
        link, t_c = _resolve_link(links, cfg, rng)
        feat = temperature_feature(cfg, t_c) if cfg.conditioned else None
        if cfg.stratified_batches:
            # equal message counts keep the batch power normalizer exact
            msgs = rng.permutation(np.tile(np.arange(cfg.n_messages),
                                           max(b // cfg.n_messages, 1)))
            b = msgs.size
        else:
            msgs = rng.integers(0, cfg.n_messages, b)
        onehot = np.zeros((b, cfg.n_messages))
        onehot[np.arange(b), msgs] = 1.0

        if encoder is not None:
            enc_in = onehot if feat is None else np.hstack(
                [onehot, np.full((b, 1), feat)])
            enc_out, enc_caches = encoder.forward_cached(enc_in)
            amps_raw = enc_out[:, 0]
            amps, c_norm = _normalize_amps(amps_raw, cfg)
        else:
            amps = fixed_levels[msgs]

        elec, drive = link.forward(amps)
        std = link.noise_std(elec, b, snr_db)
        noisy = elec + std * noise_rng.standard_normal(elec.size)
        idx = link.windows_for(noisy, b, cfg.window)
        windows = noisy[idx]
        dec_in = windows if feat is None else np.hstack(
            [windows, np.full((b, 1), feat)])
        probs, dec_caches = decoder.forward_cached(dec_in)
        loss, dlogits = nn.cross_entropy_loss(probs, onehot)
        if not np.isfinite(loss):
            raise nn.DivergenceError(step)
        result.loss_trace.append(loss)

        dec_grads, dwin_aug = decoder.backward(dlogits, dec_caches,
                                               delta_is_preact=True)
        grads = list(dec_grads)
        if encoder is not None:
            dwin = dwin_aug[:, : cfg.window]
            delec = np.zeros_like(elec)
            np.add.at(delec, idx, dwin)
            damps = link.backward(delec, drive)
            damps_raw = _normalize_backward(amps_raw, c_norm, damps, cfg)
            enc_grads, _ = encoder.backward(damps_raw[:, None], enc_caches)
            grads = list(dec_grads) + list(enc_grads)

        flat = []
        for dw, db in grads:
            flat.extend((dw, db))
        opt.step(params, flat)

        if (encoder is not None and polyak_level_steps > 0
                and step >= train_cfg.max_steps - polyak_level_steps):
            lv = _uniform_levels(encoder, cfg, feat)
            level_sum = lv if level_sum is None else level_sum + lv
            level_count += 1
    avg = None if level_count == 0 else level_sum / level_count
    return result, avg


def ae_train(
    links,
    cfg: AeConfig,
    train_cfg: nn.TrainConfig,
    snr_db: float = 12.0,
) -> tuple[AeSystem, nn.TrainResult]:
    """Joint encoder/decoder training through a differentiable link (or a
    temperature-keyed dict of links when conditioned)."""
    if train_cfg.loss != "cross_entropy":
        raise ValueError("autoencoder training uses the cross-entropy loss")
    if not isinstance(links, (DifferentiableLink, dict)):
        raise TypeError(
            "links must be a DifferentiableLink (or dict of them); "
            "for non-differentiable channels use the evolution trainer")
    encoder, decoder = _make_nets(cfg, train_cfg.seed)
    trace, _ = _train_loop(links, cfg, train_cfg, encoder, decoder, None, snr_db)
    return AeSystem(cfg, decoder, encoder=encoder), trace


def continue_ae_training(
    system: AeSystem,
    links,
    train_cfg: nn.TrainConfig,
    snr_db: float = 12.0,
    polyak_level_steps: int = 0,
) -> nn.TrainResult:
    """Further training of an existing system (reduced rate stages, level
    averaging).  With ``polyak_level_steps`` the exported levels become
    the running average over the final steps."""
    trace, avg = _train_loop(links, system.cfg, train_cfg, system.encoder,
                             system.decoder, system.fixed_levels, snr_db,
                             polyak_level_steps)
    if avg is not None:
        system.averaged_levels = avg
    return trace


def polish_decoder(
    system: AeSystem,
    links,
    train_cfg: nn.TrainConfig,
    snr_db: float = 12.0,
) -> nn.TrainResult:
    """Decoder-only refresh against the system's frozen exported levels
    (used after level averaging so decision boundaries match exactly)."""
    if system.cfg.conditioned:
        raise ValueError("decoder polish applies to unconditioned systems")
    levels = system.levels()
    trace, _ = _train_loop(links, system.cfg, train_cfg, None, system.decoder,
                           levels, snr_db)
    return trace


def equidistant_baseline(
    links,
    cfg: AeConfig,
    train_cfg: nn.TrainConfig,
    snr_db: float = 12.0,
) -> tuple[AeSystem, nn.TrainResult]:
    """Decoder-only training with the transmitter pinned to equidistant
    levels at the same average power."""
    if train_cfg.loss != "cross_entropy":
        raise ValueError("decoder training uses the cross-entropy loss")
    levels = equidistant_levels(cfg.n_messages, cfg.power_budget_ma2)
    _, decoder = _make_nets(cfg, train_cfg.seed)
    trace, _ = _train_loop(links, cfg, train_cfg, None, decoder, levels, snr_db)
    return AeSystem(cfg, decoder, fixed_levels=levels), trace


def ae_link_record(system: AeSystem, link: DifferentiableLink,
                   n_symbols: int, seed: int,
                   t_c: float | None = None) -> LinkRecord:
    """Noiseless link record of the trained transmitter for BER sweeps."""
    rng = np.random.default_rng(seed)
    msgs = rng.integers(0, system.cfg.n_messages, n_symbols)
    levels = system.levels(t_c)
    elec, _ = link.forward(levels[msgs])
    # trim to one pad symbol on each side of the message span
    sps = link.sps
    start = link.offset() - sps
    stop = link.offset() + n_symbols * sps + sps
    received = Waveform(link.sample_rate, elec[start:stop])
    return LinkRecord(received, msgs, sps, offset=sps,
                      bit_map=bit_map_by_amplitude(levels))


def ae_error_curve(
    system: AeSystem,
    link: DifferentiableLink,
    snr_db_grid,
    n_symbols: int = 20000,
    seed: int = 0,
    min_errors: int = 100,
    max_shards: int = 50,
    t_c: float | None = None,
    bit_errors: bool = True,
) -> ErrorRateCurve:
    record = ae_link_record(system, link, n_symbols, seed, t_c)
    decider = lambda windows: system.decode(windows, t_c)
    return ber_sweep(record, decider, system.cfg.window, snr_db_grid,
                     seed=seed + 1, min_errors=min_errors,
                     max_shards=max_shards, bit_errors=bit_errors)
