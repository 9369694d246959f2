"""Named experiments: each reproduces one worked example at desk scale.

Every experiment takes an :class:`~vcsellink.config.ExperimentConfig`,
writes CSV artifacts plus ``report.json`` and ``manifest.json`` into its
output directory, and returns the report dict.  All randomness descends
from the config seed through a hierarchical seed sequence, so reruns are
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import __version__, nn
from . import autoencoder as ae
from . import de as de_mod
from . import dpd as dpd_mod
from . import surrogate as surr
from . import vcsel
from .channel import FiberParams, PdParams, fiber_apply, pd_detect
from .config import ExperimentConfig
from .equalize import (
    EqualizerConfig,
    LinkRecord,
    ber_sweep,
    linear_ffe_baseline,
    make_awgn_symbol_record,
    net_decider,
    prune_equalizer,
    snr_at_rate,
    threshold_decider,
    train_equalizer,
)
from .signal import (
    PamConfig,
    Waveform,
    decision_instants,
    error_rate_curve_to_csv,
    eye_diagram,
    eye_to_csv,
    modulate_symbols,
    waveform_to_csv,
)
from .sweeps import theoretical_pam_ser

SNR_DEFINITION = (
    "SNR = mean squared noiseless electrical signal at the decision input "
    "over noise variance, in dB"
)

RUNNERS = {}


def _experiment(name):
    def wrap(fn):
        RUNNERS[name] = fn
        return fn
    return wrap


def _headers(cfg: ExperimentConfig, extra=()):
    return [
        f"config_hash: {cfg.params.get('_config_hash', 'n/a')}",
        f"seed: {cfg.seed}",
        SNR_DEFINITION,
        *extra,
    ]


def _seeds(cfg: ExperimentConfig, n: int) -> list[int]:
    ss = np.random.SeedSequence(cfg.seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir, budget: int | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[cfg.name](cfg, out, budget)
    report["experiment"] = cfg.name
    _write_json(out / "report.json", report)
    manifest = {
        "experiment": cfg.name,
        "seed": cfg.seed,
        "profile": cfg.profile,
        "overrides": cfg.overrides,
        "params": {k: v for k, v in cfg.params.items() if not k.startswith("_")},
        "config_hash": cfg.params.get("_config_hash", "n/a"),
        "versions": {"vcsellink": __version__, "numpy": np.__version__},
        "snr_definition": SNR_DEFINITION,
    }
    _write_json(out / "manifest.json", manifest)
    return report


# ---------------------------------------------------------------------------
@_experiment("iv")
def run_iv(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params()
    pr = cfg.params
    currents = np.linspace(pr["i_start_ma"], pr["i_stop_ma"], int(pr["points"]))
    report = {"temps_c": list(pr["temps_c"]), "per_temp": []}
    for t_c in pr["temps_c"]:
        curve = vcsel.static_iv(p, currents, 273.15 + t_c)
        fom = vcsel.figures_of_merit(curve)
        name = f"ipv_{int(round(t_c))}C.csv"
        with open(out / name, "w") as fh:
            for line in _headers(cfg, [f"ambient temperature: {t_c} C",
                                       "units: current_mA, power_mW, voltage_V"]):
                fh.write(f"# {line}\n")
            fh.write("current_mA,power_mW,voltage_V\n")
            for i, pw, v in zip(curve.current_ma, curve.power_mw, curve.voltage_v):
                fh.write(f"{i:.9g},{pw:.9g},{v:.9g}\n")
        report["per_temp"].append({
            "t_c": t_c,
            "i_th_ma": fom.i_th_ma,
            "slope_eff_w_per_a": fom.slope_eff_w_per_a,
            "i_rollover_ma": fom.i_rollover_ma,
            "peak_power_mw": float(np.max(curve.power_mw)),
            "artifact": name,
        })
    rollovers = [t["i_rollover_ma"] for t in report["per_temp"]]
    peaks = [t["peak_power_mw"] for t in report["per_temp"]]
    report["rollover_strictly_decreasing"] = (
        all(r is not None for r in rollovers)
        and all(a > b for a, b in zip(rollovers, rollovers[1:]))
    )
    report["peak_power_strictly_decreasing"] = all(
        a > b for a, b in zip(peaks, peaks[1:]))
    return report


@_experiment("s21")
def run_s21(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params()
    pr = cfg.params
    t_amb = 273.15 + pr["t_amb_c"]
    f = np.linspace(1e8, pr["f_max_ghz"] * 1e9, int(pr["points"]))
    columns = {}
    report = {"bias_ma": list(pr["bias_list_ma"]), "per_bias": []}
    for i_b in pr["bias_list_ma"]:
        resp = vcsel.small_signal(p, i_b, t_amb)
        curve, f3 = vcsel.s21(p, i_b, f, t_amb)
        columns[i_b] = curve
        report["per_bias"].append({
            "bias_ma": i_b,
            "f_r_ghz": resp.f_r / 1e9,
            "gamma_per_s": resp.gamma,
            "f_3db_ghz": None if f3 is None else f3 / 1e9,
            "peaking_db": float(np.max(curve)),
        })
    with open(out / "s21.csv", "w") as fh:
        for line in _headers(cfg, ["units: f_Hz, s21_dB per bias"]):
            fh.write(f"# {line}\n")
        fh.write("f_hz," + ",".join(f"s21_db_{b}mA" for b in pr["bias_list_ma"]) + "\n")
        for k, fk in enumerate(f):
            fh.write(f"{fk:.9g}," + ",".join(
                f"{columns[b][k]:.6f}" for b in pr["bias_list_ma"]) + "\n")
    f3s = [b["f_3db_ghz"] for b in report["per_bias"]]
    report["f3db_strictly_increasing"] = all(
        a is not None and b is not None and b > a for a, b in zip(f3s, f3s[1:]))
    report["top_bias_peaking_db"] = report["per_bias"][-1]["peaking_db"]
    if pr["numeric_check"]:
        resp = vcsel.small_signal(p, pr["bias_list_ma"][-1], t_amb)
        fg = np.linspace(resp.f_r / 20.0, 1.5 * resp.f_r, int(pr["numeric_points"]))
        num = vcsel.numeric_s21(p, pr["bias_list_ma"][-1], fg, t_amb)
        ana = resp.s21_db(fg) - resp.s21_db(fg[0])
        report["numeric_vs_analytic_max_db"] = float(np.max(np.abs(num - ana)))
    return report


@_experiment("eye")
def run_eye(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params()
    pr = cfg.params
    seeds = _seeds(cfg, 2)
    pam = PamConfig(baud=pr["baud"], sps=int(pr["sps"]), bias_mA=pr["bias_ma"],
                    levels_mA=tuple(pr["levels_ma"]))
    rng = np.random.default_rng(seeds[0])
    n_sym = int(pr["n_symbols"]) if budget is None else min(int(pr["n_symbols"]), budget)
    syms = rng.integers(0, pam.order, n_sym)
    drive = modulate_symbols(syms, pam)
    ovs = max(1, int(np.ceil(20 / pam.sps)))
    out_w = vcsel.integrate(p, drive, 273.15 + pr["t_amb_c"], seed=seeds[1],
                            oversample=ovs)
    eye_in = eye_diagram(drive, pam.sps, int(pr["span_ui"]))
    eye_out = eye_diagram(out_w, pam.sps, int(pr["span_ui"]))
    eye_to_csv(eye_in, out / "eye_drive.csv", _headers(cfg, ["units: mA"]))
    eye_to_csv(eye_out, out / "eye_output.csv", _headers(cfg, ["units: mW"]))
    centers = out_w.samples[decision_instants(n_sym, pam.sps)]
    rails = [float(np.mean(centers[syms == k])) for k in range(pam.order)]
    spreads = [float(np.std(centers[syms == k])) for k in range(pam.order)]
    gaps = np.diff(rails)
    sep = [float(g) > 0.5 * (spreads[i] + spreads[i + 1])
           for i, g in enumerate(gaps)]
    return {
        "rails_mw": rails,
        "rail_spreads_mw": spreads,
        "rails_distinguishable": bool(all(np.diff(rails) > 0) and all(sep)),
    }


def _surrogate_reference(p, t_amb):
    return lambda w: vcsel.integrate(p, w, t_amb, oversample=2)


def _fit_test_drive(pr, seed):
    pam = PamConfig(baud=pr["test_baud"], sps=int(pr["test_sps"]),
                    bias_mA=pr["test_bias_ma"], levels_mA=tuple(pr["test_levels_ma"]))
    rng = np.random.default_rng(seed)
    syms = rng.integers(0, pam.order, int(pr["test_symbols"]))
    return modulate_symbols(syms, pam), pam


@_experiment("fit-volterra")
def run_fit_volterra(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params().quasi_static_thermal()
    pr = cfg.params
    seeds = _seeds(cfg, 2)
    t_amb = 273.15 + pr["t_amb_c"]
    reference = _surrogate_reference(p, t_amb)
    stim = surr.StimulusConfig(std_ma=pr["stim_std_ma"], bias_ma=pr["stim_bias_ma"],
                               n_samples=int(pr["stim_samples"]), seed=seeds[0],
                               sample_rate=pr["sample_rate"])
    model = surr.fit_volterra(reference, stim, window=(0, int(pr["window_b"])))
    drive, pam = _fit_test_drive(pr, seeds[1])
    result = surr.validate(model, reference, drive, sps=pam.sps)
    h0, h1, h2 = model.raw_kernels()
    with open(out / "kernel_h1.csv", "w") as fh:
        for line in _headers(cfg, ["units: lag_samples, h1 (mW per mA)"]):
            fh.write(f"# {line}\n")
        fh.write("lag,h1\n")
        for tau, v in enumerate(h1):
            fh.write(f"{tau},{v:.9g}\n")
    with open(out / "kernel_h2.csv", "w") as fh:
        for line in _headers(cfg, ["units: mW per mA^2; row i col j = h2(i,j)"]):
            fh.write(f"# {line}\n")
        fh.write(",".join(f"l{j}" for j in range(h2.shape[1])) + "\n")
        for row in h2:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    eye_to_csv(result.eye_model, out / "eye_volterra.csv", _headers(cfg, ["units: mW"]))
    eye_to_csv(result.eye_reference, out / "eye_reference.csv", _headers(cfg, ["units: mW"]))
    return {
        "nrmse": result.report.nrmse,
        "r_squared": result.report.r_squared,
        "h0_mw": h0,
        "window": [0, int(pr["window_b"])],
    }


@_experiment("fit-tdnn")
def run_fit_tdnn(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params().quasi_static_thermal()
    pr = cfg.params
    seeds = _seeds(cfg, 3)
    t_amb = 273.15 + pr["t_amb_c"]
    reference = _surrogate_reference(p, t_amb)
    stim = surr.StimulusConfig(std_ma=pr["stim_std_ma"], bias_ma=pr["stim_bias_ma"],
                               n_samples=int(pr["stim_samples"]), seed=seeds[0],
                               sample_rate=pr["sample_rate"])
    train_cfg = nn.TrainConfig(optimizer="adam", lr=pr["lr"],
                               batch_size=int(pr["batch_size"]),
                               max_steps=int(pr["train_steps"]),
                               seed=seeds[1], loss="mse")
    model, trace = surr.fit_tdnn(reference, stim, train_cfg,
                                 delays=int(pr["delays"]), hidden=int(pr["hidden"]))
    volterra = surr.fit_volterra(reference, stim, window=(0, int(pr["window_b"])))
    drive, pam = _fit_test_drive(pr, seeds[2])
    res_t = surr.validate(model, reference, drive, sps=pam.sps)
    res_v = surr.validate(volterra, reference, drive)
    nn.save_network(model.net, out / "tdnn.json")
    eye_to_csv(res_t.eye_model, out / "eye_tdnn.csv", _headers(cfg, ["units: mW"]))
    eye_to_csv(res_t.eye_reference, out / "eye_reference.csv", _headers(cfg, ["units: mW"]))
    return {
        "nrmse_tdnn": res_t.report.nrmse,
        "r_squared_tdnn": res_t.report.r_squared,
        "nrmse_volterra": res_v.report.nrmse,
        "r_squared_volterra": res_v.report.r_squared,
        "tdnn_not_worse": res_t.report.nrmse <= res_v.report.nrmse,
        "final_train_loss": trace.final_loss,
    }


def _equalizer_record(p, pr, n_symbols, seed) -> LinkRecord:
    pam = PamConfig(baud=pr["baud"], sps=int(pr["sps"]), bias_mA=pr["bias_ma"],
                    levels_mA=tuple(pr["levels_ma"]))
    rng = np.random.default_rng(seed)
    syms = rng.integers(0, pam.order, n_symbols)
    drive = modulate_symbols(syms, pam)
    optical = vcsel.integrate(p, drive, 273.15 + pr["t_amb_c"], oversample=2)
    fiber = FiberParams(length_m=pr["fiber_length_m"],
                        f3db_hz=pr["fiber_f3db_ghz"] * 1e9)
    pd = PdParams(responsivity_a_per_w=pr["responsivity"])
    received = pd_detect(pd, fiber_apply(fiber, optical))
    return LinkRecord(received, syms, pam.sps, bit_map=pam.bit_map)


@_experiment("equalizer")
def run_equalizer(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params().quasi_static_thermal()
    pr = cfg.params
    seeds = _seeds(cfg, 6)
    n_eval = int(pr["record_symbols"]) if budget is None else min(
        int(pr["record_symbols"]), budget)
    train_record = _equalizer_record(p, pr, int(pr["train_record_symbols"]), seeds[0])
    eval_record = _equalizer_record(p, pr, n_eval, seeds[1])
    eq_cfg = EqualizerConfig(window_symbols=int(pr["window_symbols"]),
                             sps=int(pr["sps"]), hidden=int(pr["hidden"]))
    tc = nn.TrainConfig("adam", 1e-3, 128, int(pr["train_steps"]), seeds[2],
                        "cross_entropy")
    net_nn, _ = train_equalizer(train_record, eq_cfg, tc, pr["train_snr_db"])
    net_ffe, _ = linear_ffe_baseline(train_record, eq_cfg.input_width,
                                     dataclasses.replace(tc, seed=seeds[3]),
                                     train_snr_db=pr["train_snr_db"])
    sched = nn.PruneSchedule(s_initial=0.0, s_final=pr["prune_sparsity"],
                             begin_step=0, end_step=int(pr["prune_steps"]))
    net_pruned, prune_rep = prune_equalizer(
        net_nn, sched, train_record,
        dataclasses.replace(tc, lr=2e-4, seed=seeds[4]), pr["train_snr_db"])
    deep_sched = nn.PruneSchedule(s_initial=0.0, s_final=pr["deep_prune_sparsity"],
                                  begin_step=0, end_step=int(pr["prune_steps"]))
    net_deep, deep_rep = prune_equalizer(
        net_nn, deep_sched, train_record,
        dataclasses.replace(tc, lr=2e-4, seed=seeds[5]), pr["train_snr_db"])

    grid = pr["snr_grid_db"]
    w = eq_cfg.input_width
    curves = {
        "ber_nn": ber_sweep(eval_record, net_decider(net_nn), w, grid, seeds[2]),
        "ber_linear": ber_sweep(eval_record, net_decider(net_ffe), w, grid, seeds[2]),
        "ber_none": ber_sweep(
            eval_record,
            threshold_decider(eval_record.rail_means(), eq_cfg.sps), w, grid, seeds[2]),
        "ber_pruned": ber_sweep(eval_record, net_decider(net_pruned), w, grid, seeds[2]),
    }
    with open(out / "ber_curves.csv", "w") as fh:
        for line in _headers(cfg, ["columns: snr_db, ber_nn, ber_linear, ber_none, ber_pruned"]):
            fh.write(f"# {line}\n")
        fh.write("snr_db,ber_nn,ber_linear,ber_none,ber_pruned\n")
        for i, s in enumerate(grid):
            fh.write(f"{s:.9g}," + ",".join(
                f"{curves[k].rate[i]:.9g}"
                for k in ("ber_nn", "ber_linear", "ber_none", "ber_pruned")) + "\n")

    target = 1e-4
    snr_nn = snr_at_rate(curves["ber_nn"], target)
    snr_ffe = snr_at_rate(curves["ber_linear"], target)
    snr_none = snr_at_rate(curves["ber_none"], target)
    snr_pruned = snr_at_rate(curves["ber_pruned"], target)
    report = {
        "snr_at_1e-4": {"nn": snr_nn, "linear": snr_ffe, "none": snr_none,
                        "pruned": snr_pruned},
        "gain_over_none_db": None if None in (snr_nn, snr_none) else snr_none - snr_nn,
        "gain_over_linear_db": None if None in (snr_nn, snr_ffe) else snr_ffe - snr_nn,
        "pruned_penalty_db": None if None in (snr_nn, snr_pruned) else snr_pruned - snr_nn,
        "prune_60": {
            "sparsity": prune_rep.sparsity,
            "multiplies_before": prune_rep.multiplies_before,
            "multiplies_after": prune_rep.multiplies_after,
            "reduction": prune_rep.multiply_reduction,
        },
        "prune_deep": {
            "sparsity": deep_rep.sparsity,
            "multiplies_before": deep_rep.multiplies_before,
            "multiplies_after": deep_rep.multiplies_after,
            "reduction": deep_rep.multiply_reduction,
        },
    }
    return report


@_experiment("dpd")
def run_dpd(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params().quasi_static_thermal()
    pr = cfg.params
    seeds = _seeds(cfg, 5)
    t_amb = 273.15 + pr["t_amb_c"]
    pam = PamConfig(baud=pr["baud"], sps=int(pr["sps"]), bias_mA=pr["bias_ma"],
                    levels_mA=tuple(pr["levels_ma"]))
    rng = np.random.default_rng(seeds[0])
    syms = rng.integers(0, pam.order, int(pr["train_symbols"]))
    train_sig = modulate_symbols(syms, pam)

    # linear invertible transmitter: the closed-form sanity case
    taps = np.array([1.0, 0.45, 0.2])
    fir_tx = lambda w: Waveform(w.sample_rate,
                                np.convolve(w.samples, taps)[: len(w)])
    raw_fir = dpd_mod.cascade_residual(fir_tx, train_sig)
    pre_fir, _ = dpd_mod.train_dpd_ila(
        fir_tx, train_sig, dpd_mod.DpdConfig(context=6, hidden=12),
        nn.TrainConfig("adam", 1e-3, 128, 5000, seeds[1], "mse"))
    ila_fir = dpd_mod.cascade_residual(fir_tx, train_sig, pre_fir)

    # VCSEL surrogate: indirect vs direct learning
    reference = _surrogate_reference(p, t_amb)
    stim = surr.StimulusConfig(n_samples=int(pr["stim_samples"]), seed=seeds[2],
                               sample_rate=pam.sample_rate)
    model = surr.fit_volterra(reference, stim, window=(0, 31))
    raw_sur = dpd_mod.cascade_residual(model, train_sig)
    pre_ila, _ = dpd_mod.train_dpd_ila(
        model, train_sig, dpd_mod.DpdConfig(context=int(pr["context"]),
                                            hidden=int(pr["hidden"])),
        nn.TrainConfig("adam", 1e-3, 256, int(pr["ila_steps"]), seeds[3], "mse"))
    ila_sur = dpd_mod.cascade_residual(model, train_sig, pre_ila)
    pre_dla, _ = dpd_mod.train_dpd_dla(
        model, train_sig, dpd_mod.DpdConfig(context=int(pr["dla_context"]),
                                            hidden=int(pr["hidden"]), n_train=12000),
        nn.TrainConfig("adam", 5e-4, 128, int(pr["dla_steps"]), seeds[4], "mse"))
    dla_sur = dpd_mod.cascade_residual(model, train_sig, pre_dla)
    dla_true = dpd_mod.cascade_residual(reference, train_sig, pre_dla)

    return {
        "fir": {"raw_residual": raw_fir, "ila_residual": ila_fir,
                "reduction": raw_fir / max(ila_fir, 1e-12)},
        "surrogate": {"raw_residual": raw_sur, "ila_residual": ila_sur,
                      "dla_residual": dla_sur,
                      "dla_not_worse": dla_sur <= ila_sur},
        "dla_on_rate_equation_residual": dla_true,
        "dla_mismatch_ratio": dla_true / max(dla_sur, 1e-12),
    }


@_experiment("ae")
def run_ae(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    pr = cfg.params
    seeds = _seeds(cfg, 2)
    link = ae.DifferentiableLink(surrogate=None, fiber=None, bias_ma=0.0,
                                 sps=int(pr["sps"]), sample_rate=1.0)
    cfg1 = ae.AeConfig(sps=int(pr["sps"]), batch_size=512,
                       power_budget_ma2=pr["power_budget"],
                       stratified_batches=True)
    system, _ = ae.ae_train(
        link, cfg1,
        nn.TrainConfig("adam", 5e-3, 512, int(pr["stage1_steps"]), seeds[0],
                       "cross_entropy"),
        snr_db=pr["snr_db"])
    system.cfg = dataclasses.replace(cfg1, batch_size=1024)
    ae.continue_ae_training(
        system, link,
        nn.TrainConfig("adam", 2e-3, 1024, int(pr["stage2_steps"]), seeds[1],
                       "cross_entropy"),
        snr_db=pr["snr_db"], polyak_level_steps=int(pr["polyak_steps"]))
    levels = np.sort(system.levels())
    gaps = np.diff(levels)
    with open(out / "levels_awgn.csv", "w") as fh:
        for line in _headers(cfg, ["units: amplitude (normalized)"]):
            fh.write(f"# {line}\n")
        fh.write("message_rank,level\n")
        for i, v in enumerate(levels):
            fh.write(f"{i},{v:.9g}\n")
    return {
        "levels": levels.tolist(),
        "gap_spread": float((gaps.max() - gaps.min()) / gaps.mean()),
        "mean_square": float(np.mean(levels**2)),
        "power_budget": pr["power_budget"],
    }


def _ae_temp_link(p, pr, t_c, seed):
    t_amb = 273.15 + t_c
    reference = lambda w: vcsel.integrate(p, w, t_amb, oversample=2)
    rate = pr["baud"] * pr["sps"]
    stim = surr.StimulusConfig(std_ma=pr["stim_std_ma"], bias_ma=pr["stim_bias_ma"],
                               n_samples=int(pr["stim_samples"]), seed=seed,
                               sample_rate=rate)
    model = surr.fit_volterra(reference, stim, window=(0, 31))
    fiber = FiberParams(length_m=pr["fiber_length_m"],
                        f3db_hz=pr["fiber_f3db_ghz"] * 1e9)
    pd = PdParams(responsivity_a_per_w=pr["responsivity"])
    return ae.DifferentiableLink(surrogate=model, fiber=fiber, pd=pd,
                                 bias_ma=pr["bias_ma"], sps=int(pr["sps"]),
                                 sample_rate=rate)


@_experiment("ae-temp")
def run_ae_temp(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    p = cfg.vcsel_params().quasi_static_thermal()
    pr = cfg.params
    budget_ma2 = float(np.mean(np.asarray(pr["levels_ma"]) ** 2))
    n_eval = int(pr["eval_symbols"]) if budget is None else min(
        int(pr["eval_symbols"]), budget)
    grid = pr["snr_grid_db"]
    report = {"per_temp": {}, "power_budget_ma2": budget_ma2}
    curves = {}
    seeds = _seeds(cfg, 8 * len(pr["temps_c"]))
    si = 0
    for t_c in pr["temps_c"]:
        link = _ae_temp_link(p, pr, t_c, seeds[si]); si += 1
        acfg = ae.AeConfig(sps=int(pr["sps"]), batch_size=256,
                           power_budget_ma2=budget_ma2, stratified_batches=True,
                           decoder_hidden=int(pr["decoder_hidden"]))
        tc = nn.TrainConfig("adam", 2e-3, 256, int(pr["train_steps"]), seeds[si],
                            "cross_entropy"); si += 1
        base_sys, _ = ae.equidistant_baseline(link, acfg, tc, pr["train_snr_db"])
        ae_sys, _ = ae.ae_train(
            link, acfg, dataclasses.replace(tc, seed=seeds[si]),
            pr["train_snr_db"]); si += 1
        ae.continue_ae_training(
            ae_sys, link,
            nn.TrainConfig("adam", 5e-4, 512, int(pr["train_steps"]) // 2,
                           seeds[si], "cross_entropy"),
            pr["train_snr_db"], polyak_level_steps=int(pr["train_steps"]) // 4)
        si += 1
        ae.polish_decoder(
            ae_sys, link,
            nn.TrainConfig("adam", 1e-3, 512, 3000, seeds[si], "cross_entropy"),
            pr["train_snr_db"]); si += 1
        c_base = ae.ae_error_curve(base_sys, link, grid, n_eval, seeds[si],
                                   min_errors=80, max_shards=30); si += 1
        c_ae = ae.ae_error_curve(ae_sys, link, grid, n_eval, seeds[si],
                                 min_errors=80, max_shards=30); si += 1
        si += 1  # reserved
        curves[t_c] = (c_base, c_ae)
        s_base = snr_at_rate(c_base, 1e-3)
        s_ae = snr_at_rate(c_ae, 1e-3)
        levels = np.sort(ae_sys.levels())
        with open(out / f"levels_{int(round(t_c))}C.csv", "w") as fh:
            for line in _headers(cfg, ["units: drive amplitude deviation, mA"]):
                fh.write(f"# {line}\n")
            fh.write("message_rank,level_ma\n")
            for i, v in enumerate(levels):
                fh.write(f"{i},{v:.9g}\n")
        report["per_temp"][str(t_c)] = {
            "ae_levels_ma": levels.tolist(),
            "equidistant_levels_ma": ae.equidistant_levels(4, budget_ma2).tolist(),
            "snr_at_1e-3_equidistant": s_base,
            "snr_at_1e-3_ae": s_ae,
            "gain_db": None if None in (s_base, s_ae) else s_base - s_ae,
        }
    with open(out / "ber_vs_snr.csv", "w") as fh:
        names = []
        for t_c in pr["temps_c"]:
            names += [f"ber_equidistant_{int(round(t_c))}C", f"ber_ae_{int(round(t_c))}C"]
        for line in _headers(cfg, ["columns: snr_db, " + ", ".join(names)]):
            fh.write(f"# {line}\n")
        fh.write("snr_db," + ",".join(names) + "\n")
        for i, s in enumerate(grid):
            row = [f"{s:.9g}"]
            for t_c in pr["temps_c"]:
                row.append(f"{curves[t_c][0].rate[i]:.9g}")
                row.append(f"{curves[t_c][1].rate[i]:.9g}")
            fh.write(",".join(row) + "\n")
    gain_t = report["per_temp"][str(pr["gain_temp_c"])]["gain_db"]
    report["gain_at_target_temp_db"] = gain_t
    return report


@_experiment("de-receiver")
def run_de_receiver(cfg: ExperimentConfig, out: Path, budget=None) -> dict:
    pr = cfg.params
    seeds = _seeds(cfg, 5)
    n_rec = int(pr["record_symbols"]) if budget is None else min(
        int(pr["record_symbols"]), budget)
    record = make_awgn_symbol_record(n_rec, seed=seeds[0])
    rx = de_mod.TrainableReceiver(fir_taps=int(pr["fir_taps"]),
                                  demapper_hidden=int(pr["demapper_hidden"]))
    rng = np.random.default_rng(seeds[1])
    wins, labels = record.sample_batch(rng, int(pr["eval_batch"]), rx.fir_taps,
                                       pr["train_snr_db"])
    de_cfg = de_mod.DeConfig(population=int(pr["population"]),
                             generations=int(pr["generations"]),
                             f_weight=pr["f_weight"], crossover=pr["crossover"],
                             seed=seeds[2])
    net_de, de_res = de_mod.de_train(rx, wins, labels, de_cfg,
                                     init_scale=pr["init_scale"])
    net_bp, _ = de_mod.backprop_train_receiver(
        rx, record,
        nn.TrainConfig("adam", 1e-3, 128, int(pr["bp_steps"]), seeds[3],
                       "cross_entropy"),
        pr["train_snr_db"])
    grid = pr["snr_grid_db"]
    c_de = ber_sweep(record, net_decider(net_de), rx.fir_taps, grid, seeds[4],
                     min_errors=100, max_shards=60, bit_errors=False)
    c_bp = ber_sweep(record, net_decider(net_bp), rx.fir_taps, grid, seeds[4],
                     min_errors=100, max_shards=60, bit_errors=False)
    theory = theoretical_pam_ser(np.asarray(grid))
    with open(out / "ser_vs_snr.csv", "w") as fh:
        for line in _headers(cfg, ["columns: snr_db, ser_backprop, ser_de, ser_theory"]):
            fh.write(f"# {line}\n")
        fh.write("snr_db,ser_backprop,ser_de,ser_theory\n")
        for s, b, d, t in zip(grid, c_bp.rate, c_de.rate, theory):
            fh.write(f"{s:.9g},{b:.9g},{d:.9g},{t:.9g}\n")
    fine = np.linspace(min(grid), max(grid), 1200)
    tt = theoretical_pam_ser(fine)
    report = {"per_target": {}, "de_best_fitness": de_res.best_fitness,
              "de_evaluations": de_res.evaluations}
    worst_th = worst_bp = 0.0
    for target in (1e-1, 1e-2, 1e-3):
        sd = snr_at_rate(c_de, target)
        sb = snr_at_rate(c_bp, target)
        st = float(np.interp(np.log10(target), np.log10(tt[::-1]), fine[::-1]))
        dth = None if sd is None else abs(sd - st)
        dbp = None if None in (sd, sb) else abs(sd - sb)
        report["per_target"][f"{target:g}"] = {
            "theory_snr_db": st, "de_snr_db": sd, "backprop_snr_db": sb,
            "de_vs_theory_db": dth, "de_vs_backprop_db": dbp,
        }
        worst_th = max(worst_th, dth if dth is not None else np.inf)
        worst_bp = max(worst_bp, dbp if dbp is not None else np.inf)
    report["worst_de_vs_theory_db"] = worst_th
    report["worst_de_vs_backprop_db"] = worst_bp
    return report
