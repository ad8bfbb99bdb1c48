"""Write a synthetic corpus, feature files and a split manifest.

    python3 scripts/make_toy_corpus.py --out /tmp/toy --games 6
"""

import argparse
from pathlib import Path

from sdvc.pipeline import SplitManifest, write_dataset
from sdvc.toy import make_toy_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--games", type=int, default=6)
    p.add_argument("--anchors-per-half", type=int, default=4)
    p.add_argument("--half-seconds", type=float, default=300.0)
    p.add_argument("--fps", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if args.games < 3:
        p.error("need at least 3 games for train/valid/test")

    games = make_toy_corpus(args.games, args.anchors_per_half, args.half_seconds, args.fps, seed=args.seed)
    ids = [g.doc.game_id for g in games]
    split = SplitManifest(ids[:-2], ids[-2:-1], ids[-1:])
    write_dataset(args.out, games, split)
    print(f"{len(ids)} games under {args.out} (train {len(split.train)}, valid 1, test 1)")


if __name__ == "__main__":
    main()
