"""Experiment configuration: strict TOML with named defaults.

A config file has an ``[experiment]`` section (name, seed) and an
optional ``[params]`` section whose keys depend on the experiment, plus
an optional ``[vcsel]`` section selecting a profile and overriding
device fields.  Unknown keys anywhere are rejected; validation collects
every violation instead of stopping at the first.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import vcsel

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ConfigError",
    "load_config",
    "validate_config",
    "config_hash",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(
            f"  - {v}" for v in self.violations))


# Per-experiment parameter defaults; the types of the defaults define the
# accepted types (int accepted where float expected).
EXPERIMENTS: dict[str, dict] = {
    "iv": {
        "temps_c": [25.0, 55.0, 85.0],
        "i_start_ma": 0.0,
        "i_stop_ma": 18.0,
        "points": 61,
    },
    "s21": {
        "bias_list_ma": [2.0, 4.0, 6.0, 10.0],
        "t_amb_c": 25.0,
        "f_max_ghz": 45.0,
        "points": 1200,
        "numeric_check": False,
        "numeric_points": 10,
    },
    "eye": {
        "baud": 28e9,
        "sps": 10,
        "bias_ma": 8.0,
        "levels_ma": [-6.0, -2.0, 2.0, 6.0],
        "n_symbols": 4000,
        "t_amb_c": 25.0,
        "span_ui": 2,
    },
    "fit-volterra": {
        "stim_std_ma": 6.0,
        "stim_bias_ma": 8.0,
        "stim_samples": 1_000_000,
        "sample_rate": 280e9,
        "window_b": 31,
        "test_baud": 28e9,
        "test_sps": 10,
        "test_bias_ma": 8.0,
        "test_levels_ma": [-4.5, -1.5, 1.5, 4.5],
        "test_symbols": 20000,
        "t_amb_c": 25.0,
    },
    "fit-tdnn": {
        "stim_std_ma": 6.0,
        "stim_bias_ma": 8.0,
        "stim_samples": 1_000_000,
        "sample_rate": 280e9,
        "delays": 22,
        "hidden": 22,
        "train_steps": 30000,
        "batch_size": 256,
        "lr": 1e-3,
        "window_b": 31,
        "test_baud": 28e9,
        "test_sps": 10,
        "test_bias_ma": 8.0,
        "test_levels_ma": [-4.5, -1.5, 1.5, 4.5],
        "test_symbols": 20000,
        "t_amb_c": 25.0,
    },
    "equalizer": {
        "baud": 20e9,
        "sps": 10,
        "bias_ma": 8.0,
        "levels_ma": [-4.5, -1.5, 1.5, 4.5],
        "fiber_length_m": 100.0,
        "fiber_f3db_ghz": 30.0,
        "responsivity": 0.6,
        "t_amb_c": 25.0,
        "train_snr_db": 12.0,
        "train_steps": 12000,
        "snr_grid_db": [6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
        "record_symbols": 200_000,
        "train_record_symbols": 20_000,
        "hidden": 4,
        "window_symbols": 2,
        "prune_sparsity": 0.6,
        "prune_steps": 500,
        "deep_prune_sparsity": 0.8,
    },
    "dpd": {
        "baud": 28e9,
        "sps": 10,
        "bias_ma": 8.0,
        "levels_ma": [-4.5, -1.5, 1.5, 4.5],
        "t_amb_c": 25.0,
        "train_symbols": 6000,
        "context": 16,
        "dla_context": 12,
        "hidden": 16,
        "ila_steps": 20000,
        "dla_steps": 800,
        "stim_samples": 600_000,
    },
    "ae": {
        "sps": 4,
        "power_budget": 5.0,
        "snr_db": 12.0,
        "stage1_steps": 20000,
        "stage2_steps": 20000,
        "polyak_steps": 12000,
    },
    "ae-temp": {
        "temps_c": [5.0, 95.0],
        "gain_temp_c": 95.0,
        "baud": 14e9,
        "sps": 10,
        "bias_ma": 6.0,
        "levels_ma": [-4.5, -1.5, 1.5, 4.5],
        "fiber_length_m": 100.0,
        "fiber_f3db_ghz": 30.0,
        "responsivity": 0.6,
        "stim_std_ma": 5.0,
        "stim_bias_ma": 6.0,
        "stim_samples": 600_000,
        "decoder_hidden": 16,
        "train_snr_db": 14.0,
        "train_steps": 8000,
        "snr_grid_db": [8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
        "eval_symbols": 6000,
    },
    "de-receiver": {
        "fir_taps": 21,
        "demapper_hidden": 4,
        "train_snr_db": 13.0,
        "eval_batch": 8192,
        "population": 30,
        "generations": 3000,
        "f_weight": 0.5,
        "crossover": 0.9,
        "init_scale": 0.4,
        "bp_steps": 8000,
        "snr_grid_db": [8.0, 10.0, 12.0, 14.0, 16.0],
        "record_symbols": 60_000,
    },
}

_VCSEL_FIELDS = {f.name: f for f in dataclasses.fields(vcsel.VcselParams)}


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    params: dict
    profile: str = "datacom850"
    overrides: dict = field(default_factory=dict)
    out_dir: str | None = None

    def vcsel_params(self) -> vcsel.VcselParams:
        base = vcsel.get_profile(self.profile)
        return dataclasses.replace(base, **self.overrides) if self.overrides else base


def _type_ok(value, reference) -> bool:
    if isinstance(reference, bool):
        return isinstance(value, bool)
    if isinstance(reference, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(reference, list):
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    return isinstance(value, type(reference))


def validate_config(data: dict) -> tuple[ExperimentConfig | None, list[str]]:
    """Validate parsed TOML; returns (config, violations).  The config is
    None whenever violations exist.  Never runs a simulation."""
    violations: list[str] = []
    known_sections = {"experiment", "params", "vcsel"}
    for section in data:
        if section not in known_sections:
            violations.append(f"unknown section [{section}]")

    exp = data.get("experiment")
    if not isinstance(exp, dict):
        violations.append("missing required section [experiment]")
        exp = {}
    name = exp.get("name")
    if name is None:
        violations.append("[experiment] missing required key 'name'")
    elif name not in EXPERIMENTS:
        violations.append(
            f"[experiment] unknown name {name!r}; known: {', '.join(sorted(EXPERIMENTS))}")
    seed = exp.get("seed")
    if seed is None:
        violations.append("[experiment] missing required key 'seed' (no implicit entropy)")
    elif not isinstance(seed, int) or isinstance(seed, bool):
        violations.append(f"[experiment] 'seed' must be an integer, got {seed!r}")
    out_dir = exp.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        violations.append("[experiment] 'out_dir' must be a string")
    for key in exp:
        if key not in ("name", "seed", "out_dir"):
            violations.append(f"[experiment] unknown key {key!r}")

    params = {}
    if name in EXPERIMENTS:
        schema = EXPERIMENTS[name]
        params = dict(schema)
        for key, value in (data.get("params") or {}).items():
            if key not in schema:
                violations.append(f"[params] unknown key {key!r} for experiment {name!r}")
            elif not _type_ok(value, schema[key]):
                violations.append(
                    f"[params] key {key!r}: expected {type(schema[key]).__name__}, "
                    f"got {type(value).__name__}")
            else:
                params[key] = value
    elif data.get("params"):
        violations.append("[params] present but experiment name is invalid")

    profile = "datacom850"
    overrides: dict = {}
    vc = data.get("vcsel") or {}
    if not isinstance(vc, dict):
        violations.append("[vcsel] must be a table")
        vc = {}
    for key, value in vc.items():
        if key == "profile":
            if not isinstance(value, str):
                violations.append("[vcsel] 'profile' must be a string")
            elif value not in vcsel.PROFILES:
                violations.append(
                    f"[vcsel] unknown profile {value!r}; known: "
                    f"{', '.join(vcsel.list_profiles())}")
            else:
                profile = value
        elif key in _VCSEL_FIELDS:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                violations.append(f"[vcsel] override {key!r} must be numeric")
            else:
                overrides[key] = float(value)
        else:
            violations.append(f"[vcsel] unknown key {key!r}")
    if not violations and overrides:
        try:
            dataclasses.replace(vcsel.get_profile(profile), **overrides)
        except ValueError as exc:
            violations.append(f"[vcsel] invariant violation: {exc}")

    if violations:
        return None, violations
    return ExperimentConfig(
        name=name, seed=int(seed), params=params,
        profile=profile, overrides=overrides, out_dir=out_dir,
    ), []


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_bytes()
    try:
        data = tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML parse error: {exc}"]) from exc
    cfg, violations = validate_config(data)
    if violations:
        raise ConfigError(violations)
    return cfg


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
