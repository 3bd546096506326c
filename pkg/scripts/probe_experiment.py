#!/usr/bin/env python3
"""Motion-direction probe: linear left/right accuracy of averaged model
states, comparing context-conditioned and vanilla checkpoints.

    python scripts/probe_experiment.py --seed 0 \
        --context runs/benefit/context_s0/checkpoint_final.ckpt \
        --vanilla runs/benefit/vanilla_s0/checkpoint_final.ckpt
"""

import argparse
import json

from cwm.experiments import probe_comparison


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--context", required=True)
    ap.add_argument("--vanilla", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--videos", type=int, default=120)
    args = ap.parse_args()

    res = probe_comparison(args.context, args.vanilla, args.seed,
                           n_videos=args.videos)
    print(json.dumps(res, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
