"""Waveforms, PAM modulation, stimulus generation and link quality metrics.

The :class:`Waveform` is the currency every other module trades in: a
uniformly sampled real-valued signal plus its sample rate.  Units are
context dependent (mA for drive current, mW for optical power, V after
photodetection) and are tracked by convention, not by the type.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Waveform",
    "PamConfig",
    "EyeDiagram",
    "ErrorRateCurve",
    "gray_code",
    "modulate",
    "bits_to_symbols",
    "symbols_to_bits",
    "white_gaussian_stimulus",
    "eye_diagram",
    "nrmse",
    "r_squared",
    "count_errors",
    "decision_instants",
    "decide_nearest_level",
    "waveform_to_csv",
    "waveform_from_csv",
    "eye_to_csv",
    "error_rate_curve_to_csv",
]


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real signal.

    ``samples`` is stored as a read-only float64 array; operations never
    mutate a waveform in place.
    """

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples contain NaN or Inf")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        """New waveform at the same rate."""
        return Waveform(self.sample_rate, samples)


def gray_code(n_bits: int) -> list[tuple[int, ...]]:
    """Gray labels for 2**n_bits levels, in level order (lowest first)."""
    labels = []
    for i in range(1 << n_bits):
        g = i ^ (i >> 1)
        labels.append(tuple((g >> (n_bits - 1 - k)) & 1 for k in range(n_bits)))
    return labels


@dataclass(frozen=True)
class PamConfig:
    """PAM drive configuration: Gray-labelled current levels around a bias."""

    order: int = 4
    baud: float = 28e9
    sps: int = 10
    bias_mA: float = 8.0
    levels_mA: tuple[float, ...] = (-6.0, -2.0, 2.0, 6.0)
    bit_map: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.order not in (2, 4, 8):
            raise ValueError(f"order must be one of 2, 4, 8, got {self.order}")
        if self.sps < 1:
            raise ValueError("sps must be >= 1")
        if self.baud <= 0:
            raise ValueError("baud must be > 0")
        levels = tuple(float(v) for v in self.levels_mA)
        if len(levels) != self.order:
            raise ValueError("levels_mA must have exactly `order` entries")
        if not all(a < b for a, b in zip(levels, levels[1:])):
            raise ValueError("levels_mA must be strictly increasing")
        object.__setattr__(self, "levels_mA", levels)
        if self.bit_map is None:
            object.__setattr__(self, "bit_map", tuple(gray_code(self.bits_per_symbol)))
        else:
            bm = tuple(tuple(int(b) for b in lbl) for lbl in self.bit_map)
            if len(bm) != self.order or len(set(bm)) != self.order:
                raise ValueError("bit_map must assign a distinct label per level")
            object.__setattr__(self, "bit_map", bm)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def sample_rate(self) -> float:
        return self.baud * self.sps


@dataclass(frozen=True)
class EyeDiagram:
    """Stacked waveform windows aligned to symbol boundaries."""

    span_ui: int
    sps: int
    traces: np.ndarray  # (num_windows, span_ui * sps)

    def __post_init__(self):
        tr = np.asarray(self.traces, dtype=np.float64)
        if tr.ndim != 2 or tr.shape[1] != self.span_ui * self.sps:
            raise ValueError("traces must be (num_windows, span_ui*sps)")
        object.__setattr__(self, "traces", tr)

    def rail_values(self, symbol: int = 0) -> np.ndarray:
        """Trace values at the sampling instant of `symbol` within the window."""
        return self.traces[:, symbol * self.sps + self.sps // 2]


@dataclass
class ErrorRateCurve:
    """Error rate vs SNR with the raw counts behind every point."""

    snr_db: list[float] = field(default_factory=list)
    rate: list[float] = field(default_factory=list)
    errors_counted: list[int] = field(default_factory=list)
    symbols_counted: list[int] = field(default_factory=list)

    def add_point(self, snr_db: float, errors: int, symbols: int) -> None:
        self.snr_db.append(float(snr_db))
        self.errors_counted.append(int(errors))
        self.symbols_counted.append(int(symbols))
        self.rate.append(errors / symbols if symbols else 0.0)

    def confidence_interval(self, i: int) -> tuple[float, float]:
        """Normal-approximation 95% CI of point i."""
        n = self.symbols_counted[i]
        p = self.rate[i]
        half = 1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / n) if n else 0.0
        return (max(p - half, 0.0), min(p + half, 1.0))


def bits_to_symbols(bits: np.ndarray, cfg: PamConfig) -> np.ndarray:
    """Pack a bit sequence into level indices via the config's bit map."""
    bits = np.asarray(bits, dtype=np.int64)
    k = cfg.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by {k} bits/symbol")
    lookup = {lbl: i for i, lbl in enumerate(cfg.bit_map)}
    groups = bits.reshape(-1, k)
    try:
        return np.array([lookup[tuple(g)] for g in groups], dtype=np.int64)
    except KeyError as exc:  # only possible with non-binary input
        raise ValueError(f"invalid bit group {exc}") from exc


def symbols_to_bits(symbols: np.ndarray, cfg: PamConfig) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    table = np.array(cfg.bit_map, dtype=np.int64)
    return table[symbols].reshape(-1)


def modulate(bits, cfg: PamConfig) -> Waveform:
    """Rectangular-pulse PAM drive waveform: bias + Gray-mapped level, held
    for ``sps`` samples per symbol."""
    symbols = bits_to_symbols(np.asarray(list(bits), dtype=np.int64), cfg)
    return modulate_symbols(symbols, cfg)


def modulate_symbols(symbols: np.ndarray, cfg: PamConfig) -> Waveform:
    """Same as :func:`modulate` but starting from level indices."""
    levels = np.asarray(cfg.levels_mA)
    amplitudes = cfg.bias_mA + levels[np.asarray(symbols, dtype=np.int64)]
    samples = np.repeat(amplitudes, cfg.sps)
    return Waveform(cfg.sample_rate, samples)


def white_gaussian_stimulus(
    std_mA: float, bias_mA: float, n: int, seed: int, sample_rate: float = 280e9
) -> Waveform:
    """White Gaussian drive, the identification stimulus for surrogate fits."""
    if std_mA < 0:
        raise ValueError("std_mA must be >= 0")
    if n <= 0:
        raise ValueError("n must be > 0")
    rng = np.random.default_rng(seed)
    return Waveform(sample_rate, bias_mA + std_mA * rng.standard_normal(n))


def decision_instants(n_symbols: int, sps: int, offset: int = 0) -> np.ndarray:
    """Sample indices of symbol centers (perfect timing assumed)."""
    return offset + np.arange(n_symbols) * sps + sps // 2


def decide_nearest_level(values: np.ndarray, rails: np.ndarray) -> np.ndarray:
    """Nearest-rail slicer; rails need not be the nominal levels."""
    values = np.asarray(values)
    rails = np.asarray(rails)
    return np.argmin(np.abs(values[:, None] - rails[None, :]), axis=1)


def eye_diagram(w: Waveform, sps: int, span_ui: int = 2, offset: int = 0) -> EyeDiagram:
    """Fold a waveform into consecutive non-overlapping windows of
    ``span_ui`` unit intervals, phase-aligned to symbol boundaries."""
    if sps < 1 or span_ui < 1:
        raise ValueError("sps and span_ui must be >= 1")
    window = span_ui * sps
    usable = (len(w) - offset) // window
    if usable < 1:
        raise ValueError(f"waveform shorter than one {window}-sample window")
    data = w.samples[offset : offset + usable * window]
    return EyeDiagram(span_ui=span_ui, sps=sps, traces=data.reshape(usable, window))


def nrmse(test: Waveform | np.ndarray, reference: Waveform | np.ndarray) -> float:
    """RMS error normalized by the reference peak-to-peak span."""
    t = test.samples if isinstance(test, Waveform) else np.asarray(test, dtype=float)
    r = (
        reference.samples
        if isinstance(reference, Waveform)
        else np.asarray(reference, dtype=float)
    )
    if t.shape != r.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {r.shape}")
    span = np.max(r) - np.min(r)
    if span == 0:
        raise ValueError("reference is constant; NRMSE undefined")
    return float(np.sqrt(np.mean((t - r) ** 2)) / span)


def r_squared(test: Waveform | np.ndarray, reference: Waveform | np.ndarray) -> float:
    """Coefficient of determination of `test` against `reference`."""
    t = test.samples if isinstance(test, Waveform) else np.asarray(test, dtype=float)
    r = (
        reference.samples
        if isinstance(reference, Waveform)
        else np.asarray(reference, dtype=float)
    )
    if t.shape != r.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {r.shape}")
    ss_tot = float(np.sum((r - np.mean(r)) ** 2))
    if ss_tot == 0:
        raise ValueError("reference is constant; R^2 undefined")
    ss_res = float(np.sum((t - r) ** 2))
    return 1.0 - ss_res / ss_tot


def count_errors(
    decided_symbols: np.ndarray,
    true_symbols: np.ndarray,
    bit_map: tuple[tuple[int, ...], ...],
) -> tuple[int, int]:
    """Symbol and bit error counts; bit errors go through the Gray labels."""
    dec = np.asarray(decided_symbols, dtype=np.int64)
    tru = np.asarray(true_symbols, dtype=np.int64)
    if dec.shape != tru.shape:
        raise ValueError("sequence length mismatch")
    sym_errors = int(np.count_nonzero(dec != tru))
    table = np.array(bit_map, dtype=np.int64)
    bit_errors = int(np.sum(table[dec] != table[tru]))
    return sym_errors, bit_errors


# ---------------------------------------------------------------------------
# CSV export (comma separated, '.' decimal, '#' comment header lines)

def _write_header(fh, header_lines):
    for line in header_lines or ():
        fh.write(f"# {line}\n")


def waveform_to_csv(w: Waveform, path_or_buf, header_lines=()) -> None:
    """Two-column CSV: time_s, value."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        _write_header(fh, header_lines)
        fh.write("time_s,value\n")
        for t, v in zip(w.times, w.samples):
            fh.write(f"{t:.15g},{v:.15g}\n")
    finally:
        if own:
            fh.close()


def waveform_from_csv(path) -> Waveform:
    times, values = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("time_s"):
                continue
            t, v = line.split(",")
            times.append(float(t))
            values.append(float(v))
    if len(times) < 2:
        raise ValueError("waveform CSV needs at least two samples")
    dt = np.mean(np.diff(times))
    return Waveform(1.0 / dt, np.array(values))


def eye_to_csv(eye: EyeDiagram, path_or_buf, header_lines=()) -> None:
    """CSV matrix: one trace per row."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        _write_header(fh, header_lines)
        fh.write(",".join(f"s{i}" for i in range(eye.traces.shape[1])) + "\n")
        for row in eye.traces:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    finally:
        if own:
            fh.close()


def error_rate_curve_to_csv(
    curve: ErrorRateCurve, path_or_buf, header_lines=(), rate_name: str = "rate"
) -> None:
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        _write_header(fh, header_lines)
        fh.write(f"snr_db,{rate_name},errors_counted,symbols_counted\n")
        for s, r, e, n in zip(
            curve.snr_db, curve.rate, curve.errors_counted, curve.symbols_counted
        ):
            fh.write(f"{s:.9g},{r:.9g},{e},{n}\n")
    finally:
        if own:
            fh.close()


def csv_text(writer, *args, **kwargs) -> str:
    """Render one of the *_to_csv writers into a string."""
    buf = io.StringIO()
    writer(*args, path_or_buf=buf, **kwargs)
    return buf.getvalue()
