#!/usr/bin/env python3
"""Pre-training benefit experiment: context-conditioned vs vanilla world
model on synthetic videos, validated on novel contexts.

Full budget (matches the acceptance criterion):
    python scripts/pretrain_benefit.py --out runs/benefit --seeds 0 1 2

Smoke budget:
    python scripts/pretrain_benefit.py --out /tmp/b --iters 300 --videos 60
"""

import argparse
import json

from cwm.experiments import pretrain_benefit


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--videos", type=int, default=400)
    args = ap.parse_args()

    wins = 0
    for seed in args.seeds:
        res = pretrain_benefit(args.out, seed, pretrain_iters=args.iters,
                               n_train_videos=args.videos)
        print(json.dumps(res, indent=2, sort_keys=True))
        if res["nll_ratio"] <= 0.95:
            wins += 1
    print(f"seeds with context NLL <= 0.95 x vanilla: "
          f"{wins}/{len(args.seeds)}")


if __name__ == "__main__":
    main()
