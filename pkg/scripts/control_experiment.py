#!/usr/bin/env python3
"""Reach-task control experiment: fine-tune from scratch and from a
pre-trained checkpoint, compare against the random-policy baseline.

    python scripts/control_experiment.py --out runs/control --seed 0 \
        --pretrained runs/benefit/context_s0/checkpoint_final.ckpt
"""

import argparse
import json

from cwm.experiments import control_experiment


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pretrained", default=None,
                    help="pre-training checkpoint for the transfer arm")
    ap.add_argument("--env-steps", type=int, default=30_000)
    args = ap.parse_args()

    res = control_experiment(args.out, args.seed, args.pretrained,
                             env_steps=args.env_steps)
    print(json.dumps(res, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
