"""Command-line entry point: ``synth``, ``oracle-gap``, ``replay`` and ``bounds``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..model import DomainError
from .bounds import bounds_report
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, preset, set_option
from .replay import ReplayParseError, ReplaySchemaError, load_replay_dataset, run_replay
from .runner import metadata, run_experiment, write_outputs
from .sweep import DEFAULT_J_VALUES, gap_table_csv, sweep_oracle_gap

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3

log = logging.getLogger("evalbandit")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _build_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, args.preset)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        set_option(cfg, key.strip(), value.strip())
    return cfg.validate()


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--preset", choices=PRESETS, help="start from a named preset")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable; dotted keys reach into reward.*)")


def cmd_synth(args) -> int:
    cfg = _build_config(args)
    if not cfg.policies:
        raise ConfigError(["policies: at least one policy is required"])
    result = run_experiment(cfg)
    out = args.out or cfg.out_dir or "results"
    stem = args.name or cfg.preset or "experiment"
    csv_path, json_path = write_outputs(result, out, stem)
    print(json.dumps({"csv": str(csv_path), "json": str(json_path), "summary": metadata(result)["summary"]},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_oracle_gap(args) -> int:
    rows = sweep_oracle_gap(args.j_list, args.alpha0, args.sigma0, args.setting, args.rounds, args.runs,
                            K=args.K, K_max=args.K_max, seed=args.seed, truncation=args.truncation)
    text = gap_table_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _build_config(args)
    if args.policies:
        set_option(cfg, "policies", args.policies)
    if not cfg.policies:
        raise ConfigError(["policies: at least one policy is required"])
    dataset = load_replay_dataset(args.data)
    result = run_replay(dataset, cfg)
    out = args.out or cfg.out_dir or "results"
    csv_path, json_path = write_outputs(result, out, args.name or "replay")
    print(json.dumps({"csv": str(csv_path), "json": str(json_path), "summary": metadata(result)["summary"]},
                     indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _build_config(args)
    print(json.dumps(bounds_report(cfg), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalbandit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="run a synthetic regret experiment")
    _add_config_args(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="output file stem (default: preset name)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle-gap", help="oracle and average-strategy gap versus J")
    p.add_argument("--j-list", type=_int_list, default=list(DEFAULT_J_VALUES))
    p.add_argument("--setting", type=lambda s: [v for v in s.split(",") if v], default=["linear", "glm"])
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=500)
    p.add_argument("--runs", type=int, default=40)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--K-max", dest="K_max", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncation", choices=["range", "symmetric"], default="range")
    p.add_argument("--out", help="also write the table to this CSV path")
    p.set_defaults(func=cmd_oracle_gap)

    p = sub.add_parser("replay", help="run policies over a recorded evaluation dataset")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="CSV with round,arm,reward,eval_1..eval_J")
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="output file stem (default: replay)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bounds", help="print bound constants as JSON")
    _add_config_args(p)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ReplayParseError, ReplaySchemaError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
