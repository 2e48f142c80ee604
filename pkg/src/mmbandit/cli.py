"""Command-line interface: run experiments, validate markets, print oracles.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .env import ConfigError
from .harness import ExperimentConfig, preset_figure1, run_experiment
from .market import MarketError, MarketInstance, blocking_pairs, min_gap, stable_matching_serial

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmbandit",
        description="Matching-market bandit simulator and regret experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a multi-seed experiment")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="experiment config JSON")
    source.add_argument("--preset", choices=["figure1"], help="built-in experiment")
    run.add_argument("--out", type=Path, default=None, help="override output directory")
    run.add_argument("--policy", default=None, help="override policy tag (presets only)")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    validate = sub.add_parser("validate", help="check a market JSON file")
    validate.add_argument("--market", type=Path, required=True)

    oracle = sub.add_parser("oracle", help="print the stable matching and minimum gap")
    oracle.add_argument("--market", type=Path, required=True)
    return parser


def _load_market(path: Path) -> MarketInstance:
    try:
        return MarketInstance.from_file(path)
    except OSError as exc:
        raise ConfigError(f"cannot read market file {path}: {exc}") from exc
    except MarketError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args: argparse.Namespace) -> int:
    if args.config is not None:
        config = ExperimentConfig.from_json_file(args.config)
        if args.policy is not None:
            raise ConfigError("--policy only applies to --preset runs")
    else:
        config = preset_figure1(policy_tag=args.policy or "mlss-elim")
    if args.out is not None:
        config.out_dir = args.out
    if args.no_figures:
        config.figures = False
    summary = run_experiment(config)
    total = summary["final_regret"]["total_mean"]
    print(f"wrote {config.out_dir} (mean total final regret {total:.2f})")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    market = _load_market(args.market)
    print(
        f"ok: {market.n_players} players, {market.n_arms} arms, "
        f"min gap {min_gap(market) if market.n_arms > 1 else float('nan'):.6f}"
    )
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    market = _load_market(args.market)
    matching = stable_matching_serial(market)
    assert not blocking_pairs(market, matching)
    print(json.dumps(
        {
            "stable_matching": {str(i): matching.arm_of(i) for i in range(market.n_players)},
            "min_gap": min_gap(market) if market.n_arms > 1 else None,
        },
        indent=2,
    ))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except (ConfigError, MarketError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
