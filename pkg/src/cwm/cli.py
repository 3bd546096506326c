"""Command-line entry point.

Subcommands: pretrain | finetune | eval | probe | inspect.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from cwm.config import ConfigError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--dataset", default=None,
                   help="'synthetic' or a frame-folder dataset path")
    p.add_argument("--vanilla-wm", action="store_true",
                   help="disable the context pathway entirely")
    p.add_argument("--concat-conditioning", action="store_true",
                   help="replace cross-attention with naive concatenation")
    p.add_argument("--no-dual-reward", action="store_true",
                   help="drop the representative reward head")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--load-theta-only", action="store_true",
                   help="restore only the action-free/vision parameters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cwm",
        description="context-conditioned world models: video pre-training "
                    "and visual model-based RL")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("pretrain", "finetune", "eval", "probe", "inspect"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "inspect":
            p.add_argument("--preset", default="paper",
                           choices=("desk", "paper"))
    return parser


def _build_config(args: argparse.Namespace):
    from cwm.harness.config_io import load_run_config

    overrides: dict[str, str] = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.dataset is not None:
        overrides["dataset"] = args.dataset
    if args.vanilla_wm and args.concat_conditioning:
        raise ConfigError("--vanilla-wm and --concat-conditioning conflict")
    if args.vanilla_wm:
        overrides["conditioning"] = "none"
    if args.concat_conditioning:
        overrides["conditioning"] = "concat"
    if args.no_dual_reward:
        overrides["dual_reward"] = "false"
    return load_run_config(args.config, overrides)


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    from cwm.data.frames import DataError
    from cwm.harness.checkpoint import CheckpointError

    try:
        if args.command == "inspect":
            from cwm.harness.inspect_tool import inspect_preset

            print(json.dumps(inspect_preset(args.preset), indent=2,
                             sort_keys=True))
            return 0
        cfg = _build_config(args)
        if args.command == "pretrain":
            from cwm.harness.pretrain import run_pretrain

            path = run_pretrain(cfg, resume=args.checkpoint)
            print(f"final checkpoint: {path}")
        elif args.command == "finetune":
            from cwm.harness.finetune import run_finetune

            path = run_finetune(cfg, pretrained=args.checkpoint,
                                load_theta_only=(args.load_theta_only
                                                 or args.checkpoint is not None))
            print(f"final checkpoint: {path}")
        elif args.command == "eval":
            if args.checkpoint is None:
                raise ConfigError("eval requires --checkpoint")
            from cwm.harness.evaluate import run_eval

            report = run_eval(cfg, args.checkpoint)
            print(json.dumps(report, indent=2, sort_keys=True))
        elif args.command == "probe":
            if args.checkpoint is None:
                raise ConfigError("probe requires --checkpoint")
            from cwm.harness.evaluate import run_probe

            report = run_probe(cfg, args.checkpoint)
            print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, Exception) as exc:  # noqa: BLE001
        if isinstance(exc, KeyboardInterrupt):
            raise
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
