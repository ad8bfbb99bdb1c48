"""Toy end-to-end run: build a synthetic dataset, train one transfer regime,
infer on the test game and evaluate.

    python3 scripts/run_toy_baseline.py --work /tmp/toyrun --regime "spot->capt frozen"
"""

import argparse
import json
import shutil
from pathlib import Path

import yaml

from sdvc.baseline import REGIMES
from sdvc.cli import run
from sdvc.pipeline import SplitManifest, write_dataset
from sdvc.toy import make_toy_corpus

MODEL = {"clusters": 8, "hidden": 64, "embed": 32, "layers": 1}
TRAIN = {"chunk_seconds": 5, "nms_seconds": 30, "max_epochs": 60, "batch_size": 16}
CAPTION_TRAIN = {"max_epochs": 300, "plateau_patience": 40, "target_loss": 0.01}


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--work", type=Path, required=True)
    p.add_argument("--regime", choices=sorted(REGIMES), default="scratch")
    p.add_argument("--games", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    games = make_toy_corpus(args.games, anchors_per_half=4, seed=args.seed)
    ids = [g.doc.game_id for g in games]
    data = args.work / "data"
    write_dataset(data, games, SplitManifest(ids[:-2], ids[-2:-1], ids[-1:]))
    gt = args.work / "gt"
    shutil.rmtree(gt, ignore_errors=True)
    shutil.copytree(data / "corpus" / ids[-1], gt / ids[-1])
    cfg = args.work / "train.yaml"
    cfg.write_text(yaml.safe_dump({"model": MODEL, "train": TRAIN, "caption_train": CAPTION_TRAIN}))

    common = ["--features", str(data / "features"), "--split", str(data / "split.json"), "--fps", "1", "--seed", str(args.seed)]
    steps = [
        ["train", "--corpus", str(data / "corpus"), "--out", str(args.work / "model"), "--regime", args.regime,
         "--min-count", "1", "--config", str(cfg), *common],
        ["infer", "--model", str(args.work / "model"), "--out", str(args.work / "pred"), *common],
        ["eval-sdvc", "--gt", str(gt), "--pred", str(args.work / "pred"), "--out", str(args.work / "report.json"),
         "--seed", str(args.seed)],
    ]
    for step in steps:
        code = run(step)
        if code:
            raise SystemExit(code)
    report = json.loads((args.work / "report.json").read_text())
    print(json.dumps({"regime": args.regime, "spotting": report["spotting"], "captioning": report["captioning"]}, indent=2))


if __name__ == "__main__":
    main()
