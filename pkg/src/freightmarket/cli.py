"""Command-line interface.

Verbs:
  run <preset|config.json>   simulate an experiment, write CSV/JSON outputs
  presets                    list the named experiment presets
  nash <payoffs.csv>         best responses and pure Nash cells of a payoff table
  checkpoint save|load       write or inspect model checkpoints

Diagnostics go to stderr; data goes to files and stdout. The default
output directory can be set with the FREIGHTMARKET_OUT environment
variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .game import best_responses, format_nash_report, load_payoff_csv
from .nets import load_checkpoint


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_config(target: str) -> harness.ExperimentConfig:
    path = Path(target)
    if path.suffix == ".json" or path.exists():
        return harness.load_config(path)
    return harness.preset(target)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _resolve_config(args.target)
    except KeyError as exc:
        _log(str(exc).strip('"\''))
        _log("available presets:")
        for name in harness.preset_names():
            _log(f"  {name}")
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.days is not None:
        overrides["days"] = args.days
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    out_dir = args.out or os.environ.get("FREIGHTMARKET_OUT") or f"out/{config.name}"
    _log(f"running {config.name}: {config.replications} x {config.episodes} episodes x {config.days} days")
    result = harness.run_experiment(
        config,
        out_dir=out_dir,
        progress=_log,
        save_checkpoints=args.save_checkpoints,
        init_from=args.init_from,
    )
    _log(f"finished in {result.duration_s:.1f}s; outputs in {out_dir}")
    print(json.dumps(harness._json_safe(result.pooled), indent=2))
    if args.strict and not all(result.stable):
        _log("one or more replications were unstable (N/A)")
        return 1
    return 0


def _cmd_presets(_args: argparse.Namespace) -> int:
    for name in harness.preset_names():
        print(name)
    return 0


def _cmd_nash(args: argparse.Namespace) -> int:
    matrix = load_payoff_csv(args.csv)
    report = best_responses(matrix)
    print(format_nash_report(matrix, report))
    return 0


def _cmd_checkpoint(args: argparse.Namespace) -> int:
    if args.action == "save":
        config = _resolve_config(args.preset)
        streams = harness._replication_streams(args.seed)
        shipper = harness._build_agent(
            "shipper", config.shipper, config.case, streams["shipper_policy"],
            streams["shipper_init"], config.grad_mode,
        )
        carrier = harness._build_agent(
            "carrier", config.carrier, config.case, streams["carrier_policy"],
            streams["carrier_init"], config.grad_mode,
        )
        harness._save_agents_checkpoint(Path(args.path), shipper, carrier)
        _log(f"wrote freshly initialized models for {config.name} to {args.path}")
        return 0
    nets, opts = load_checkpoint(args.path)
    info = {
        name: {"layer_sizes": net.layer_sizes, "parameters": sum(p.size for p in net.params())}
        for name, net in nets.items()
    }
    print(json.dumps({"nets": info, "optimizer_steps": {k: o.step_count for k, o in opts.items()}}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freightmarket", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset or config file")
    run.add_argument("target", help="preset name or path to a JSON config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--replications", type=int, default=None)
    run.add_argument("--episodes", type=int, default=None)
    run.add_argument("--days", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory (default: FREIGHTMARKET_OUT or out/<name>)")
    run.add_argument("--strict", action="store_true", help="exit nonzero if any replication is unstable")
    run.add_argument("--save-checkpoints", action="store_true", help="write final model weights per replication")
    run.add_argument("--init-from", default=None, help="warm-start agents from a checkpoint file")
    run.set_defaults(func=_cmd_run)

    presets = sub.add_parser("presets", help="list named experiment presets")
    presets.set_defaults(func=_cmd_presets)

    nash = sub.add_parser("nash", help="analyze a carrier-vs-shipper payoff matrix CSV")
    nash.add_argument("csv")
    nash.set_defaults(func=_cmd_nash)

    ckpt = sub.add_parser("checkpoint", help="save or inspect model checkpoints")
    ckpt_sub = ckpt.add_subparsers(dest="action", required=True)
    save = ckpt_sub.add_parser("save", help="initialize models for a preset and save them")
    save.add_argument("path")
    save.add_argument("--preset", default="case1-tuned")
    save.add_argument("--seed", type=int, default=42)
    save.set_defaults(func=_cmd_checkpoint)
    load = ckpt_sub.add_parser("load", help="load a checkpoint and print a summary")
    load.add_argument("path")
    load.set_defaults(func=_cmd_checkpoint)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
