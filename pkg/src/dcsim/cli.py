"""Command line entry point.

  dcsim run --config cfg.yaml --output-dir out [--seed N]
  dcsim validate --config cfg.yaml
  dcsim sweep --config sweep.yaml --output-dir out [--parallelism N]

Exit codes: 0 success, 1 runtime failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import ConfigError, config_from_dict, load_sweep
from .experiment import Experiment, run_sweep
from .stats import fmt


def _load_yaml(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _cmd_run(args: argparse.Namespace) -> int:
    data = _load_yaml(args.config)
    data.pop("sweep", None)  # allow running the base of a sweep file
    cfg = config_from_dict(data)
    experiment = Experiment(cfg, seed=args.seed)
    result = experiment.run()
    if args.output_dir:
        result.write(args.output_dir)
    for key, value in result.summary:
        print(f"{key}: {fmt(value)}")
    if args.output_dir:
        print(f"wrote {args.output_dir}/summary.csv")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    data = _load_yaml(args.config)
    if "sweep" in data:
        load_sweep(args.config)  # validates base and sweep block together
        print(f"{args.config}: OK (sweep)")
    else:
        config_from_dict(data)
        print(f"{args.config}: OK")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    base, spec = load_sweep(args.config)
    results = run_sweep(base, spec, out_dir=args.output_dir,
                        parallelism=args.parallelism)
    for cell_id, rows in results:
        summary = dict(rows)
        total = summary.get("total_energy_j", float("nan"))
        print(f"{cell_id}: jobs={summary.get('jobs_completed', 0)} "
              f"energy_j={fmt(total)}")
    if args.output_dir:
        print(f"wrote {args.output_dir}/aggregate.csv")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dcsim",
        description="Event-driven data center energy/latency simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the seed in the config")
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(fn=_cmd_validate)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.set_defaults(fn=_cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
