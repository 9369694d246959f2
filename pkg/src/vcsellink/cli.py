"""Command line entry point: run, validate, list-profiles.

``run`` executes a named experiment from a TOML config and writes its
artifacts (CSV files, report.json, manifest.json) into the output
directory; reruns with an identical config are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import vcsel
from .config import ConfigError, config_hash, load_config, validate_config


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.params["_config_hash"] = config_hash(args.config)
    out_dir = args.out or cfg.out_dir or f"results/{cfg.name}"
    from . import experiments  # deferred: importing numba-backed modules is slow

    report = experiments.run_experiment(cfg, out_dir, budget=args.budget)
    print(f"{cfg.name}: artifacts written to {Path(out_dir).resolve()}")
    for key, value in sorted(report.items()):
        if key in ("experiment",):
            continue
        print(f"  {key}: {value}")
    return 0


def _cmd_validate(args) -> int:
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        data = tomllib.loads(Path(args.config).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(f"cannot parse {args.config}: {exc}", file=sys.stderr)
        return 2
    cfg, violations = validate_config(data)
    if violations:
        print("invalid configuration:")
        for v in violations:
            print(f"  - {v}")
        return 2
    print(f"ok: experiment {cfg.name!r}, profile {cfg.profile!r}, seed {cfg.seed}")
    return 0


def _cmd_list_profiles(args) -> int:
    for name in vcsel.list_profiles():
        p = vcsel.get_profile(name)
        print(f"{name}: lambda0={p.lambda0*1e9:.0f} nm, tau_p={p.tau_p*1e12:.1f} ps, "
              f"r_th={p.r_th} K/mW, rin_std={p.rin_std}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcsellink",
        description="VCSEL link simulation and learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a TOML config")
    p_run.add_argument("config", help="path to the experiment config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="root seed (overrides config)")
    p_run.add_argument("--budget", type=int,
                       help="cap Monte-Carlo symbol counts per evaluation")
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)

    p_list = sub.add_parser("list-profiles", help="list VCSEL parameter profiles")
    p_list.set_defaults(fn=_cmd_list_profiles)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
