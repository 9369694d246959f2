"""Post-VCSEL link: multimode fiber as attenuating Gaussian low-pass,
square-law photodetector with additive noise, and the composed link.

Fiber and detector are deliberately simple closed differentiable forms;
the optical power waveform carries the signal (IM/DD), so the fiber acts
linearly on power and the detector is an affine map plus noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import Waveform
from . import vcsel

__all__ = [
    "FiberParams",
    "PdParams",
    "fiber_taps",
    "fiber_apply",
    "noise_std_for_snr",
    "pd_detect",
    "link_simulate",
]


@dataclass(frozen=True)
class FiberParams:
    """Short MMF: attenuation plus a modal-bandwidth low-pass proxy."""

    length_m: float = 100.0
    attenuation_db_per_km: float = 2.0
    f3db_hz: float = np.inf  # Gaussian low-pass -3 dB frequency

    def __post_init__(self):
        if self.length_m < 0 or self.attenuation_db_per_km < 0 or self.f3db_hz <= 0:
            raise ValueError("fiber parameters must be non-negative (f3db > 0)")

    @property
    def attenuation_factor(self) -> float:
        total_db = self.attenuation_db_per_km * self.length_m / 1e3
        return 10.0 ** (-total_db / 10.0)


@dataclass(frozen=True)
class PdParams:
    """Photodetector: responsivity scale plus additive white Gaussian noise.

    Exactly one noise convention applies: a fixed standard deviation
    (`noise_std`) or a target electrical SNR in dB (`target_snr_db`,
    measured as mean squared signal over noise variance at the detector
    output).  Both None means noiseless.
    """

    responsivity_a_per_w: float = 0.6
    noise_std: float | None = None
    target_snr_db: float | None = None

    def __post_init__(self):
        if self.responsivity_a_per_w <= 0:
            raise ValueError("responsivity must be > 0")
        if self.noise_std is not None and self.target_snr_db is not None:
            raise ValueError("specify noise_std or target_snr_db, not both")
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def fiber_taps(f: FiberParams, sample_rate: float) -> np.ndarray | None:
    """Symmetric FIR approximating the Gaussian low-pass; None if all-pass."""
    if not np.isfinite(f.f3db_hz):
        return None
    if sample_rate < 4.0 * f.f3db_hz:
        raise ValueError(
            f"sample rate {sample_rate:.3g} Hz below 4x fiber f3dB {f.f3db_hz:.3g} Hz"
        )
    # |H(f)| = exp(-f^2/(2 sigma_f^2)) with -3 dB (power) at f3db
    sigma_f = f.f3db_hz / np.sqrt(2.0 * np.log(10.0 ** 0.3))
    sigma_t = 1.0 / (2.0 * np.pi * sigma_f)
    half = max(int(np.ceil(4.0 * sigma_t * sample_rate)), 1)
    t = np.arange(-half, half + 1) / sample_rate
    taps = np.exp(-0.5 * (t / sigma_t) ** 2)
    return taps / taps.sum()


def fiber_apply(f: FiberParams, w: Waveform) -> Waveform:
    """Attenuate and low-pass an optical power waveform."""
    taps = fiber_taps(f, w.sample_rate)
    out = w.samples * f.attenuation_factor
    if taps is not None:
        padded = np.pad(out, (taps.size // 2, taps.size // 2), mode="edge")
        out = np.convolve(padded, taps, mode="valid")
    return Waveform(w.sample_rate, out)


def noise_std_for_snr(signal: np.ndarray, snr_db: float) -> float:
    """Std of additive noise giving the target mean-square SNR."""
    p_sig = float(np.mean(np.asarray(signal) ** 2))
    return np.sqrt(p_sig / 10.0 ** (snr_db / 10.0))


def pd_detect(p: PdParams, w: Waveform, seed: int | None = None) -> Waveform:
    """Responsivity scaling plus AWGN per the configured noise convention."""
    if np.any(w.samples < 0):
        raise ValueError("optical power waveform must be non-negative")
    y = p.responsivity_a_per_w * w.samples
    std = 0.0
    if p.noise_std is not None:
        std = p.noise_std
    elif p.target_snr_db is not None:
        std = noise_std_for_snr(y, p.target_snr_db)
    if std > 0.0:
        rng = np.random.default_rng(seed)
        y = y + std * rng.standard_normal(y.size)
    return Waveform(w.sample_rate, y)


def link_simulate(
    vcsel_params: vcsel.VcselParams,
    fiber: FiberParams,
    pd: PdParams,
    drive: Waveform,
    t_amb: float,
    seed: int | None = None,
    oversample: int = 1,
) -> Waveform:
    """Full link: rate-equation VCSEL -> fiber -> photodetector.

    The seed feeds both the laser intensity noise and the detector noise
    deterministically.
    """
    ss = np.random.SeedSequence(seed)
    s_rin, s_pd = ss.spawn(2)
    optical = vcsel.integrate(
        vcsel_params, drive, t_amb,
        seed=s_rin.generate_state(1)[0], oversample=oversample,
    )
    return pd_detect(pd, fiber_apply(fiber, optical), seed=s_pd.generate_state(1)[0])
