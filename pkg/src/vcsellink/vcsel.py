"""Physics-level VCSEL reference model.

Three views of the same device, kept mutually consistent and cross-checked
in the test suite:

* static: steady-state carrier/photon/thermal solve per bias point (IPV
  curves with threshold and thermal roll-over),
* large-signal: fixed-step RK4 integration of the two-level rate equations
  driven by an arbitrary current waveform,
* small-signal: the analytic two-pole modulation response around a bias
  point, with resonance frequency from the static photon density.

Rate equations (N carrier density, S photon density, both 1/m^3):

    dN/dt = eta_i*I/(q*V) - N/tau_n - v_g*g(N,S)*S
    dS/dt = Gc*v_g*g(N,S)*S - S/tau_p + Gc*beta_sp*N/tau_n
    g(N,S) = g0*(N - N_tr)/(1 + eps*S)

with an internal temperature low-passed by tau_th toward
T_amb + r_th*P_diss, and temperature-dependent N_tr, g0, eta_d producing
the roll-over.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .signal import Waveform

__all__ = [
    "Q_E",
    "H_PLANCK",
    "C_LIGHT",
    "VcselParams",
    "VcselState",
    "OperatingPoint",
    "StaticCurve",
    "FiguresOfMerit",
    "SmallSignalResponse",
    "ConvergenceError",
    "IntegrationError",
    "PROFILES",
    "get_profile",
    "list_profiles",
    "static_operating_point",
    "static_iv",
    "figures_of_merit",
    "threshold_current_analytic",
    "small_signal",
    "s21",
    "numeric_s21",
    "integrate",
    "integrate_full",
]

# Physical constants (SI), fixed by convention for every parameter set.
Q_E = 1.602e-19  # elementary charge, C
H_PLANCK = 6.626e-34  # Planck constant, J*s
C_LIGHT = 2.998e8  # vacuum speed of light, m/s


class ConvergenceError(RuntimeError):
    """Static thermal fixed point failed to converge."""


class IntegrationError(RuntimeError):
    """Rate-equation integration left the physically plausible range."""


@dataclass(frozen=True)
class VcselParams:
    """Rate-equation, thermal and efficiency parameters of one device."""

    eta_d: float = 0.40  # differential quantum efficiency
    eta_i: float = 0.85  # injection efficiency
    lambda0: float = 850e-9  # lasing wavelength, m
    v_g: float = 7.14e7  # group velocity, m/s
    g0: float = 1.2e-19  # differential gain dg/dN, m^2
    eps: float = 6.0e-23  # gain compression factor, m^3
    tau_p: float = 2.2e-12  # photon lifetime, s
    tau_n: float = 1.0e-9  # carrier lifetime, s
    n_tr: float = 1.8e24  # transparency carrier density, 1/m^3
    v_act: float = 1.0e-18  # active volume, m^3
    gamma_c: float = 0.04  # optical confinement factor
    beta_sp: float = 1.0e-4  # spontaneous emission fraction into the mode
    r_th: float = 2.6  # thermal impedance, K/mW
    tau_th: float = 1.0e-6  # thermal time constant, s; 0 pins T during integrate()
    r_s: float = 70.0  # series resistance, Ohm
    v_j: float = 1.5  # junction voltage, V
    a_n: float = 9.0e-5  # transparency shift coefficient, 1/K^2
    a_g: float = 3.0e-3  # gain reduction coefficient, 1/K
    a_eta: float = 4.5e-3  # efficiency reduction coefficient, 1/K
    t_ref: float = 298.15  # reference temperature, K
    rin_std: float = 0.0  # intensity noise std as fraction of instant power
    gamma0: float | None = None  # damping floor, 1/s; default 1/tau_n

    def __post_init__(self):
        positive = {
            "eta_d": self.eta_d,
            "eta_i": self.eta_i,
            "lambda0": self.lambda0,
            "v_g": self.v_g,
            "g0": self.g0,
            "tau_p": self.tau_p,
            "tau_n": self.tau_n,
            "n_tr": self.n_tr,
            "v_act": self.v_act,
            "gamma_c": self.gamma_c,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        for name, value in (("eta_d", self.eta_d), ("eta_i", self.eta_i),
                            ("gamma_c", self.gamma_c)):
            if value > 1.0:
                raise ValueError(f"{name} must be <= 1, got {value}")
        for name, value in (("eps", self.eps), ("beta_sp", self.beta_sp),
                            ("r_th", self.r_th), ("tau_th", self.tau_th),
                            ("r_s", self.r_s), ("rin_std", self.rin_std)):
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    # Temperature dependence of the static coefficients.  Gain and
    # efficiency are clamped away from zero so extreme sweeps degrade
    # gracefully instead of inverting sign.
    def n_tr_at(self, t_k: float) -> float:
        return self.n_tr * (1.0 + self.a_n * (t_k - self.t_ref) ** 2)

    def g0_at(self, t_k: float) -> float:
        return self.g0 * max(1.0 - self.a_g * (t_k - self.t_ref), 0.05)

    def eta_d_at(self, t_k: float) -> float:
        return self.eta_d * max(1.0 - self.a_eta * (t_k - self.t_ref), 0.0)

    @property
    def photon_energy(self) -> float:
        return H_PLANCK * C_LIGHT / self.lambda0

    @property
    def damping_floor(self) -> float:
        return self.gamma0 if self.gamma0 is not None else 1.0 / self.tau_n

    def power_mw(self, s_density: float, t_k: float) -> float:
        """Emitted optical power for a photon density at temperature t_k."""
        return (
            self.eta_d_at(t_k)
            * self.photon_energy
            * (self.v_act / self.gamma_c)
            * s_density
            / self.tau_p
            * 1e3
        )

    def voltage(self, i_ma: float) -> float:
        return self.v_j + i_ma * 1e-3 * self.r_s

    def athermal(self) -> "VcselParams":
        """Copy with every thermal feedback path disabled."""
        return replace(self, r_th=0.0, a_n=0.0, a_g=0.0, a_eta=0.0)

    def quasi_static_thermal(self) -> "VcselParams":
        """Copy whose internal temperature stays pinned at the operating
        point during large-signal runs (tau_th = 0).  Static solves are
        unaffected."""
        return replace(self, tau_th=0.0)


@dataclass(frozen=True)
class VcselState:
    """Instantaneous integrator state."""

    n_density: float  # 1/m^3
    s_density: float  # 1/m^3
    t_int: float  # K

    def __post_init__(self):
        if self.n_density < 0 or self.s_density < 0:
            raise ValueError("densities must be >= 0")


@dataclass(frozen=True)
class OperatingPoint:
    """Converged static solution at one bias current."""

    i_ma: float
    n_density: float
    s_density: float
    t_int: float
    power_mw: float
    voltage_v: float


@dataclass(frozen=True)
class StaticCurve:
    """IPV sweep: current, optical power and terminal voltage."""

    current_ma: np.ndarray
    power_mw: np.ndarray
    voltage_v: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.current_ma, dtype=float)
        p = np.asarray(self.power_mw, dtype=float)
        v = np.asarray(self.voltage_v, dtype=float)
        if not (i.shape == p.shape == v.shape):
            raise ValueError("curve columns must have equal length")
        if i.size >= 2 and not np.all(np.diff(i) > 0):
            raise ValueError("current sweep must be strictly increasing")
        object.__setattr__(self, "current_ma", i)
        object.__setattr__(self, "power_mw", p)
        object.__setattr__(self, "voltage_v", v)


@dataclass(frozen=True)
class FiguresOfMerit:
    i_th_ma: float
    slope_eff_w_per_a: float
    i_rollover_ma: float | None
    diff_resistance_ohm: np.ndarray  # dV/dI along the sweep


@dataclass(frozen=True)
class SmallSignalResponse:
    """Analytic two-pole response around a bias point."""

    i_bias_ma: float
    f_r: float  # resonance frequency, Hz
    gamma: float  # damping rate, 1/s
    s_density: float
    t_int: float
    dc_gain_w_per_a: float

    def evaluate(self, f_hz) -> np.ndarray:
        """Complex response H(f); DC value equals `dc_gain_w_per_a`."""
        f = np.asarray(f_hz, dtype=float)
        den = self.f_r**2 - f**2 + 1j * self.gamma * f / (2.0 * np.pi)
        return self.dc_gain_w_per_a * self.f_r**2 / den

    def s21_db(self, f_hz) -> np.ndarray:
        h = self.evaluate(f_hz)
        return 20.0 * np.log10(np.abs(h) / self.dc_gain_w_per_a)


def _steady_state_at_temp(p: VcselParams, i_ma: float, t_k: float):
    """Carrier/photon steady state with the temperature held fixed."""
    i_a = max(i_ma, 0.0) * 1e-3
    pump = p.eta_i * i_a / (Q_E * p.v_act)
    if pump == 0.0:
        return 0.0, 0.0
    g0t = p.g0_at(t_k)
    ntrt = p.n_tr_at(t_k)

    def s_of_n(n):
        return p.tau_p * p.gamma_c * (pump - (1.0 - p.beta_sp) * n / p.tau_n)

    def resid(n):
        s = s_of_n(n)
        gain = g0t * (n - ntrt) / (1.0 + p.eps * s)
        return (
            p.gamma_c * p.v_g * gain * s
            - s / p.tau_p
            + p.gamma_c * p.beta_sp * n / p.tau_n
        )

    n_upper = pump * p.tau_n / (1.0 - p.beta_sp)
    n = brentq(resid, 0.0, n_upper, xtol=1e-12 * n_upper, rtol=1e-14)
    return n, max(s_of_n(n), 0.0)


def static_operating_point(
    p: VcselParams, i_ma: float, t_amb: float, max_iter: int = 200
) -> OperatingPoint:
    """Coupled rate + thermal steady state by damped fixed-point iteration."""
    if i_ma < 0:
        raise ValueError("bias current must be >= 0")
    t = t_amb
    v = p.voltage(i_ma)
    for _ in range(max_iter):
        n, s = _steady_state_at_temp(p, i_ma, t)
        p_opt = p.power_mw(s, t)
        p_diss = max(i_ma * 1e-3 * v * 1e3 - p_opt, 0.0)
        t_new = t_amb + p.r_th * p_diss
        if abs(t_new - t) < 1e-9:
            return OperatingPoint(i_ma, n, s, t_new, p.power_mw(s, t_new), v)
        t += 0.7 * (t_new - t)
    raise ConvergenceError(
        f"thermal fixed point did not converge at {i_ma} mA, T_amb={t_amb} K"
    )


def static_iv(p: VcselParams, currents_ma, t_amb: float) -> StaticCurve:
    """IPV sweep at fixed ambient temperature."""
    currents = np.asarray(currents_ma, dtype=float)
    if np.any(currents < 0):
        raise ValueError("currents must be >= 0")
    power = np.empty_like(currents)
    volt = np.empty_like(currents)
    for k, i_ma in enumerate(currents):
        op = static_operating_point(p, float(i_ma), t_amb)
        power[k] = op.power_mw
        volt[k] = op.voltage_v
    return StaticCurve(currents, power, volt)


def threshold_current_analytic(p: VcselParams, t_k: float) -> float:
    """Closed-form athermal threshold (beta_sp -> 0 limit), in mA."""
    g0t = p.g0_at(t_k)
    ntrt = p.n_tr_at(t_k)
    n_th = ntrt + 1.0 / (p.gamma_c * p.v_g * g0t * p.tau_p)
    return Q_E * p.v_act * n_th / (p.eta_i * p.tau_n) * 1e3


def figures_of_merit(curve: StaticCurve) -> FiguresOfMerit:
    """Threshold, slope efficiency, roll-over and differential resistance
    extracted from an IPV sweep."""
    i = curve.current_ma
    pw = curve.power_mw
    if i.size < 4:
        raise ValueError("curve too short to extract figures of merit")
    slopes = np.gradient(pw, i)
    peak = int(np.argmax(pw))
    # Linear region: steepest section before any roll-over.
    upto = peak if 0 < peak < i.size - 1 else i.size
    max_slope = np.max(slopes[:upto]) if upto else np.max(slopes)
    sel = np.flatnonzero(slopes[:upto] >= 0.85 * max_slope)
    if sel.size < 2:
        raise ValueError("no linear above-threshold region found")
    coeff = np.polyfit(i[sel], pw[sel], 1)
    slope_eff = float(coeff[0])  # mW/mA == W/A
    i_th = float(-coeff[1] / coeff[0])
    rollover = None if peak >= i.size - 1 else float(i[peak])
    dr = np.gradient(curve.voltage_v, i) * 1e3  # V/mA -> Ohm
    return FiguresOfMerit(i_th, slope_eff, rollover, dr)


def small_signal(p: VcselParams, i_bias_ma: float, t_amb: float) -> SmallSignalResponse:
    """Two-pole intrinsic response at a bias point.

    Resonance from the static photon density; damping from the K-factor
    form gamma = K*f_r^2 + gamma0 with K = 4*pi^2*(tau_p + eps/(v_g*g0)).
    """
    op = static_operating_point(p, i_bias_ma, t_amb)
    if i_bias_ma <= threshold_current_analytic(p, op.t_int):
        raise ValueError(
            f"bias {i_bias_ma} mA is below threshold at T_amb={t_amb} K"
        )
    g0t = p.g0_at(op.t_int)
    s = op.s_density
    f_r = np.sqrt(p.v_g * g0t * s / (p.tau_p * (1.0 + p.eps * s))) / (2.0 * np.pi)
    k_factor = 4.0 * np.pi**2 * (p.tau_p + p.eps / (p.v_g * g0t))
    gamma = k_factor * f_r**2 + p.damping_floor
    dc_gain = p.eta_d_at(op.t_int) * p.photon_energy / Q_E
    return SmallSignalResponse(
        i_bias_ma=i_bias_ma,
        f_r=float(f_r),
        gamma=float(gamma),
        s_density=s,
        t_int=op.t_int,
        dc_gain_w_per_a=float(dc_gain),
    )


def s21(p: VcselParams, i_bias_ma: float, f_grid, t_amb: float):
    """Normalized modulation response in dB over a frequency grid.

    Returns ``(s21_db, f_3db)`` where f_3db is the first -3 dB crossing
    (None if the grid never crosses it).
    """
    resp = small_signal(p, i_bias_ma, t_amb)
    f = np.asarray(f_grid, dtype=float)
    curve = resp.s21_db(f)
    f3 = None
    below = np.flatnonzero(curve <= -3.0)
    if below.size:
        j = below[0]
        if j == 0:
            f3 = float(f[0])
        else:
            x0, x1 = f[j - 1], f[j]
            y0, y1 = curve[j - 1], curve[j]
            f3 = float(x0 + (x1 - x0) * (-3.0 - y0) / (y1 - y0))
    return curve, f3


# ---------------------------------------------------------------------------
# Large-signal integration

# params vector layout for the jitted kernel
_PV_FIELDS = (
    "eta_i", "v_g", "g0", "eps", "tau_p", "tau_n", "n_tr", "v_act",
    "gamma_c", "beta_sp", "r_th", "tau_th", "r_s", "v_j", "a_n", "a_g",
    "a_eta", "t_ref", "eta_d", "lambda0",
)


def _params_vector(p: VcselParams) -> np.ndarray:
    return np.array([getattr(p, name) for name in _PV_FIELDS], dtype=np.float64)


@njit(cache=True)
def _derivs(n, s, t, i_a, t_amb, pv):
    (eta_i, v_g, g0, eps, tau_p, tau_n, n_tr, v_act, gamma_c, beta_sp,
     r_th, tau_th, r_s, v_j, a_n, a_g, a_eta, t_ref, eta_d, lambda0) = (
        pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7], pv[8],
        pv[9], pv[10], pv[11], pv[12], pv[13], pv[14], pv[15], pv[16],
        pv[17], pv[18], pv[19])
    dt_k = t - t_ref
    g0t = g0 * max(1.0 - a_g * dt_k, 0.05)
    ntrt = n_tr * (1.0 + a_n * dt_k * dt_k)
    etadt = eta_d * max(1.0 - a_eta * dt_k, 0.0)
    gain = g0t * (n - ntrt) / (1.0 + eps * s)
    pump = eta_i * i_a / (1.602e-19 * v_act)
    dn = pump - n / tau_n - v_g * gain * s
    ds = gamma_c * v_g * gain * s - s / tau_p + gamma_c * beta_sp * n / tau_n
    e_ph = 6.626e-34 * 2.998e8 / lambda0
    p_opt_mw = etadt * e_ph * (v_act / gamma_c) * s / tau_p * 1e3
    p_diss_mw = i_a * (v_j + i_a * r_s) * 1e3 - p_opt_mw
    if p_diss_mw < 0.0:
        p_diss_mw = 0.0
    if tau_th > 0.0:
        dtemp = (t_amb + r_th * p_diss_mw - t) / tau_th
    else:
        dtemp = 0.0
    return dn, ds, dtemp


@njit(cache=True)
def _rk4_run(drive_a, oversample, dt, pv, t_amb, n0, s0, t0,
             n_bound, s_bound, p_out, n_out, s_out, t_out):
    n, s, t = n0, s0, t0
    eta_d = pv[18]
    lambda0 = pv[19]
    a_eta = pv[16]
    t_ref = pv[17]
    v_act = pv[7]
    gamma_c = pv[8]
    tau_p = pv[4]
    e_ph = 6.626e-34 * 2.998e8 / lambda0
    for i in range(drive_a.size):
        i_a = drive_a[i]
        for _ in range(oversample):
            k1n, k1s, k1t = _derivs(n, s, t, i_a, t_amb, pv)
            k2n, k2s, k2t = _derivs(
                n + 0.5 * dt * k1n, s + 0.5 * dt * k1s, t + 0.5 * dt * k1t,
                i_a, t_amb, pv)
            k3n, k3s, k3t = _derivs(
                n + 0.5 * dt * k2n, s + 0.5 * dt * k2s, t + 0.5 * dt * k2t,
                i_a, t_amb, pv)
            k4n, k4s, k4t = _derivs(
                n + dt * k3n, s + dt * k3s, t + dt * k3t, i_a, t_amb, pv)
            n += dt * (k1n + 2.0 * k2n + 2.0 * k3n + k4n) / 6.0
            s += dt * (k1s + 2.0 * k2s + 2.0 * k3s + k4s) / 6.0
            t += dt * (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0
            if n < 0.0:
                n = 0.0
            if s < 0.0:
                s = 0.0
        if not (np.isfinite(n) and np.isfinite(s)) or n > n_bound or s > s_bound:
            return i
        etadt = eta_d * max(1.0 - a_eta * (t - t_ref), 0.0)
        p_out[i] = etadt * e_ph * (v_act / gamma_c) * s / tau_p * 1e3
        n_out[i] = n
        s_out[i] = s
        t_out[i] = t
    return -1


@dataclass(frozen=True)
class IntegrationResult:
    output: Waveform  # optical power, mW
    n_density: np.ndarray
    s_density: np.ndarray
    t_int: np.ndarray
    initial: VcselState


def integrate_full(
    p: VcselParams,
    drive: Waveform,
    t_amb: float,
    seed: int | None = None,
    oversample: int = 1,
    initial_state: VcselState | None = None,
) -> IntegrationResult:
    """Rate-equation integration returning internal trajectories too.

    The integrator starts from the static operating point implied by the
    drive (thermal state from the mean current, carrier/photon state from
    the first sample) so constant drives are transient-free.  Negative
    drive excursions are integrated as-is (signed pump) with carrier and
    photon densities clamped at zero.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    drive_a = drive.samples * 1e-3
    if initial_state is None:
        i_mean = float(np.mean(np.clip(drive.samples, 0.0, None)))
        op_mean = static_operating_point(p, i_mean, t_amb)
        n0, s0 = _steady_state_at_temp(
            p, max(float(drive.samples[0]), 0.0), op_mean.t_int
        )
        initial_state = VcselState(n0, s0, op_mean.t_int)

    i_max_a = max(float(np.max(np.abs(drive_a))), 1e-3 * 1e-3)
    s_bound = 1e3 * (
        p.gamma_c * p.tau_p * p.eta_i * i_max_a / (Q_E * p.v_act) + 1e6
    )
    n_bound = 1e3 * (p.n_tr + 1.0 / (p.gamma_c * p.v_g * p.g0 * p.tau_p))

    dt = 1.0 / (drive.sample_rate * oversample)
    p_out = np.empty(drive_a.size)
    n_out = np.empty(drive_a.size)
    s_out = np.empty(drive_a.size)
    t_out = np.empty(drive_a.size)
    bad = _rk4_run(
        drive_a, oversample, dt, _params_vector(p), t_amb,
        initial_state.n_density, initial_state.s_density, initial_state.t_int,
        n_bound, s_bound, p_out, n_out, s_out, t_out,
    )
    if bad >= 0:
        raise IntegrationError(
            f"integration unstable at sample {bad}: carrier or photon density "
            f"exceeded 1000x physical bound (N<{n_bound:.3g}, S<{s_bound:.3g}); "
            "check drive amplitude and sample rate"
        )
    if p.rin_std > 0.0:
        rng = np.random.default_rng(seed)
        p_out = np.clip(
            p_out * (1.0 + p.rin_std * rng.standard_normal(p_out.size)), 0.0, None
        )
    return IntegrationResult(
        Waveform(drive.sample_rate, p_out), n_out, s_out, t_out, initial_state
    )


def integrate(
    p: VcselParams,
    drive: Waveform,
    t_amb: float,
    seed: int | None = None,
    oversample: int = 1,
    initial_state: VcselState | None = None,
) -> Waveform:
    """Optical power response (mW) to a drive current waveform (mA)."""
    return integrate_full(p, drive, t_amb, seed, oversample, initial_state).output


def numeric_s21(
    p: VcselParams,
    i_bias_ma: float,
    f_grid,
    t_amb: float,
    rel_amplitude: float = 0.01,
    n_periods: int = 40,
    settle_s: float = 2e-9,
) -> np.ndarray:
    """Modulation response measured on the integrator with a small
    sinusoidal perturbation, normalized to the lowest grid frequency.

    Comparable to ``SmallSignalResponse.s21_db`` after normalizing that
    curve at the same reference frequency.
    """
    f_grid = np.asarray(f_grid, dtype=float)
    rate = max(40.0 * float(np.max(f_grid)), 400e9)
    amps = np.empty(f_grid.size)
    op = static_operating_point(p, i_bias_ma, t_amb)
    state = VcselState(op.n_density, op.s_density, op.t_int)
    p_quiet = replace(p, rin_std=0.0)
    for k, f in enumerate(f_grid):
        n_settle = int(np.ceil(settle_s * rate))
        n_meas = int(np.ceil(n_periods / f * rate))
        n_tot = n_settle + n_meas
        tt = np.arange(n_tot) / rate
        drive = Waveform(
            rate, i_bias_ma * (1.0 + rel_amplitude * np.sin(2.0 * np.pi * f * tt))
        )
        out = integrate(p_quiet, drive, t_amb, initial_state=state)
        seg = out.samples[n_settle:]
        t_seg = tt[n_settle:]
        phasor = np.exp(-2j * np.pi * f * t_seg)
        amps[k] = 2.0 * np.abs(np.mean((seg - np.mean(seg)) * phasor))
    return 20.0 * np.log10(amps / amps[0])


# ---------------------------------------------------------------------------
# Named parameter profiles

PROFILES: dict[str, VcselParams] = {
    # Generic 850 nm datacom device: threshold ~0.6 mA, f_r in the
    # 15-25 GHz range at 6-10 mA and thermal roll-over near 14 mA at 25 C.
    # Values are a design choice for desk-scale experiments, not device data.
    "datacom850": VcselParams(rin_std=1e-3),
    # Same device with all thermal feedback removed; no roll-over.
    "datacom850-athermal": VcselParams(rin_std=1e-3).athermal(),
}


def get_profile(name: str) -> VcselParams:
    try:
        return PROFILES[name]
    except KeyError:
        known = ", ".join(sorted(PROFILES))
        raise KeyError(f"unknown VCSEL profile {name!r}; known: {known}") from None


def list_profiles() -> list[str]:
    return sorted(PROFILES)
