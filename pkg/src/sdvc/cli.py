"""Command-line entry point: ``sdvc <command> [flags]``.

Every command writes its artifact plus a config echo next to it
(``<out>.config.json`` for files, ``<out>/config.json`` for directories).
Exit status is 0 on success, 1 when inputs fail validation and 2 on usage
errors. Values from ``--config FILE`` (YAML) override flags; ``SDVC_SEED``
is read only when neither gives a seed.
"""

from __future__ import annotations

import argparse
import difflib
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .anonymizer import anonymize, build_entity_index, load_overrides
from .baseline import REGIMES, ModelConfig, TrainConfig
from .corpus import (
    LABELS,
    CorpusWarning,
    DocumentValidationError,
    FeatureFileError,
    compute_stats,
    filter_corpus,
    load_corpus,
    serialize_game_document,
    start_of_half_peak,
)
from .metrics import ScoredPair, evaluate_pairs
from .sdvc_eval import DEFAULT_DELTAS, DEFAULT_TOLERANCES, SdvcConfig, evaluate_sdvc
from .spotting import load_prediction_dir, map_at_deltas, write_prediction_dir
from .text import build_vocabulary, tokenize


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with a close-match hint for mistyped flags and no sys.exit."""

    def error(self, message: str):  # type: ignore[override]
        hint = ""
        if "unrecognized arguments" in message:
            known = [s for a in self._actions for s in a.option_strings if s.startswith("--")]
            for sub in self._subparsers._group_actions if self._subparsers else []:
                for p in getattr(sub, "choices", {}).values():
                    known += [s for a in p._actions for s in a.option_strings if s.startswith("--")]
            for bad in message.split(":", 1)[1].split():
                close = difflib.get_close_matches(bad.split("=")[0], known, n=1)
                if close:
                    hint = f" (did you mean {close[0]}?)"
                    break
        raise UsageError(f"{self.prog}: {message}{hint}")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must be nonempty")
    return vals


def _labels(text: str) -> list[str]:
    vals = [x.strip().lower() for x in text.split(",") if x.strip()]
    bad = [v for v in vals if v not in LABELS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown labels {bad}; known: {', '.join(LABELS)}")
    return vals


def build_parser() -> Parser:
    p = Parser(prog="sdvc", description="Single-anchored dense video captioning toolkit.", allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"sdvc {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=Parser)

    def cmd(name: str, help: str) -> Parser:
        c = sub.add_parser(name, help=help, allow_abbrev=False)
        c.add_argument("--config", type=Path, help="YAML file whose keys override flags")
        c.add_argument("--seed", type=int, default=None)
        return c

    c = cmd("validate", "check game documents against the corpus invariants")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--out", type=Path)

    c = cmd("stats", "corpus statistics")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--bin-seconds", type=int, default=60)
    c.add_argument("--text-version", choices=("original", "identified", "anonymized"), default="original")
    c.add_argument("--min-count", type=int, default=5)
    c.add_argument("--drop-labels", type=_labels, default=[])
    c.add_argument("--no-validate", action="store_true")

    c = cmd("anonymize", "recompute identified and anonymized texts from the originals")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--overrides", type=Path)
    c.add_argument("--fuzzy-threshold", type=float, default=0.85)

    c = cmd("eval-spotting", "mAP of predicted anchors")
    c.add_argument("--gt", type=Path, required=True)
    c.add_argument("--pred", type=Path, required=True)
    c.add_argument("--tolerances", type=_floats, default=list(DEFAULT_TOLERANCES))
    c.add_argument("--window", choices=("half", "full"), default="half")
    c.add_argument("--drop-labels", type=_labels, default=[])
    c.add_argument("--out", type=Path, required=True)

    c = cmd("eval-caption", "caption metrics over candidate/reference pairs")
    c.add_argument("--pairs", type=Path, required=True, help='JSON list of {"candidate": str, "references": [str]}')
    c.add_argument("--out", type=Path, required=True)

    c = cmd("eval-sdvc", "full single-anchored dense captioning evaluation")
    c.add_argument("--gt", type=Path, required=True)
    c.add_argument("--pred", type=Path, required=True)
    c.add_argument("--deltas", type=_floats, default=list(DEFAULT_DELTAS))
    c.add_argument("--tolerances", type=_floats, default=list(DEFAULT_TOLERANCES))
    c.add_argument("--window", choices=("half", "full"), default="half")
    c.add_argument("--window-halfwidth", type=float, default=None)
    c.add_argument("--gt-averaged", action="store_true", help="average windowed metrics over GT captions")
    c.add_argument("--text-version", choices=("original", "identified", "anonymized"), default="anonymized")
    c.add_argument("--drop-labels", type=_labels, default=[])
    c.add_argument("--out", type=Path, required=True)

    c = cmd("train", "train the spotting and captioning baselines")
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--features", type=Path, required=True)
    c.add_argument("--split", type=Path, required=True, help="JSON with train/valid/test game-id lists")
    c.add_argument("--fps", type=float, default=2.0)
    c.add_argument("--regime", choices=sorted(REGIMES), default="scratch")
    c.add_argument("--pool", choices=("NetVLAD", "NetRVLAD", "NetVLAD++", "NetRVLAD++"), default=None)
    c.add_argument("--clusters", type=int, default=None)
    c.add_argument("--max-epochs", type=int, default=None)
    c.add_argument("--min-count", type=int, default=5)
    c.add_argument("--drop-labels", type=_labels, default=[])
    c.add_argument("--out", type=Path, required=True)

    c = cmd("infer", "write prediction files with a trained baseline")
    c.add_argument("--model", type=Path, required=True)
    c.add_argument("--features", type=Path, required=True)
    c.add_argument("--split", type=Path, help="JSON manifest; games of --subset are used")
    c.add_argument("--subset", choices=("train", "valid", "test"), default="test")
    c.add_argument("--games", nargs="*", default=None)
    c.add_argument("--fps", type=float, default=2.0)
    c.add_argument("--out", type=Path, required=True)

    c = cmd("selftest", "run the built-in sanity checks")
    c.add_argument("--out", type=Path)
    return p


# ------------------------------------------------------------------- helpers

def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Apply the config file over the flags, then settle the seed."""
    cfg: dict[str, Any] = {}
    if args.config is not None:
        if not args.config.exists():
            raise InputError(f"config file {args.config} does not exist")
        cfg = yaml.safe_load(args.config.read_text()) or {}
        if not isinstance(cfg, dict):
            raise UsageError(f"{args.config}: expected a mapping at top level")
    known = set(vars(args)) | {"model", "train", "caption_train"}
    for key, value in cfg.items():
        name = key.replace("-", "_")
        if name not in known:
            close = difflib.get_close_matches(name, sorted(known), n=1)
            raise UsageError(f"{args.config}: unknown key {key!r}" + (f" (did you mean {close[0]}?)" if close else ""))
        if name in ("tolerances", "deltas") and not isinstance(value, list):
            value = _floats(str(value))
        if name == "drop_labels" and isinstance(value, list):
            value = _labels(",".join(value))
        if isinstance(getattr(args, name, None), Path) and value is not None:
            value = Path(value)
        setattr(args, name, value)
    if args.seed is None:
        env = os.environ.get("SDVC_SEED")
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"SDVC_SEED must be an integer, got {env!r}")
    for name in ("tolerances", "deltas"):
        if name in vars(args) and not getattr(args, name):
            raise UsageError(f"--{name} must be nonempty")
    return args


def echo(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "config":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return {"sdvc_version": __version__, "command": args.command, "args": out}


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_artifact(path: Path, obj: Any, args: argparse.Namespace) -> None:
    write_json(path, obj)
    write_json(path.with_name(path.name + ".config.json"), echo(args))


def need(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"{what} {path} does not exist")
    return path


def corpus(path: Path, drop_labels: Sequence[str] = (), validate: bool = True):
    docs = load_corpus(need(path, "corpus"), validate=validate)
    removed: dict[str, int] = {}
    if drop_labels:
        docs, removed = filter_corpus(docs, drop_labels)
    return docs, removed


# ------------------------------------------------------------------ commands

def cmd_validate(args) -> int:
    need(args.corpus, "corpus")
    try:
        docs = load_corpus(args.corpus, validate=True)
        report = {"valid": True, "n_games": len(docs), "violations": []}
    except DocumentValidationError as exc:
        report = {"valid": False, "n_games": None, "violations": exc.violations}
    if args.out:
        write_artifact(args.out, report, args)
    for v in report["violations"]:
        print(v, file=sys.stderr)
    print("valid" if report["valid"] else f"{len(report['violations'])} violation(s)")
    return 0 if report["valid"] else 1


def cmd_stats(args) -> int:
    docs, removed = corpus(args.corpus, args.drop_labels, validate=not args.no_validate)
    stats = compute_stats(docs, args.bin_seconds, args.text_version)
    vocab = build_vocabulary(docs, min_count=args.min_count, field="anonymized")
    report = stats.to_dict()
    report["vocabulary_size"] = len(vocab)
    report["removed"] = removed
    if args.bin_seconds == 60:
        report["start_of_half_peak"] = start_of_half_peak(stats)
    write_artifact(args.out, report, args)
    print(f"{stats.n_games} games, {stats.n_captions} captions, vocabulary {len(vocab)}")
    return 0


def cmd_anonymize(args) -> int:
    docs = load_corpus(need(args.corpus, "corpus"), validate=False)
    overrides = load_overrides(args.overrides)
    unresolved = []
    for d in docs:
        index = build_entity_index(d, overrides)
        caps = []
        for i, c in enumerate(d.captions):
            a = anonymize(c.text_original, index, args.fuzzy_threshold)
            caps.append(replace(c, text_identified=a.identified, text_anonymized=a.anonymized))
            unresolved += [
                {"game_id": d.game_id, "caption": i, "text": u.text, "start": u.start, "end": u.end,
                 "reason": u.reason, "candidates": list(u.candidates)}
                for u in a.unresolved
            ]
        d = replace(d, captions=caps)
        path = args.out / "corpus" / d.game_id / "Labels-caption.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(serialize_game_document(d) + b"\n")
    write_json(args.out / "unresolved.json", unresolved)
    write_json(args.out / "config.json", echo(args))
    print(f"{len(docs)} games anonymized, {len(unresolved)} span(s) for review")
    return 0


def cmd_eval_spotting(args) -> int:
    docs, _ = corpus(args.gt, args.drop_labels)
    preds = load_prediction_dir(need(args.pred, "prediction directory"))
    gt = {d.game_id: [c.clock for c in d.captions] for d in docs}
    try:
        maps = map_at_deltas(preds, gt, args.tolerances, args.window)
    except KeyError as exc:
        raise InputError(str(exc.args[0]))
    report = {"config": {"tolerances": args.tolerances, "window": args.window, "n_games": len(gt)},
              "spotting": {f"mAP@{d:g}": round(v, 6) for d, v in maps.items()}}
    write_artifact(args.out, report, args)
    print(" ".join(f"{k}={v:.4f}" for k, v in report["spotting"].items()))
    return 0


def cmd_eval_caption(args) -> int:
    raw = json.loads(need(args.pairs, "pairs file").read_text(encoding="utf-8"))
    try:
        pairs = [ScoredPair(tokenize(r["candidate"]), [tokenize(x) for x in r["references"]]) for r in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.pairs}: bad pair record ({exc})")
    if not pairs:
        raise InputError(f"{args.pairs}: no pairs")
    report = evaluate_pairs(pairs).to_dict()
    write_artifact(args.out, report, args)
    print(" ".join(f"{k}={v:.4f}" for k, v in report["corpus"].items()))
    return 0


def cmd_eval_sdvc(args) -> int:
    docs, removed = corpus(args.gt, args.drop_labels)
    preds = load_prediction_dir(need(args.pred, "prediction directory"))
    cfg = SdvcConfig(
        window_halfwidth=args.window_halfwidth,
        window=args.window,
        averaging="gt" if args.gt_averaged else "predictions",
        text_version=args.text_version,
    )
    try:
        report = evaluate_sdvc(preds, docs, cfg, args.deltas, args.tolerances).to_dict()
    except KeyError as exc:
        raise InputError(str(exc.args[0]))
    report["config"]["removed"] = removed
    write_artifact(args.out, report, args)
    flat = {**report["spotting"], **{k: v for m in report["captioning"].values() for k, v in m.items()}}
    print(" ".join(f"{k}={v:.4f}" for k, v in flat.items()))
    return 0


def _train_configs(args) -> tuple[ModelConfig, TrainConfig, TrainConfig]:
    model = dict(getattr(args, "model", None) or {})
    for k in ("pool", "clusters"):
        if getattr(args, k) is not None:
            model[k] = getattr(args, k)
    train = dict(getattr(args, "train", None) or {})
    if args.max_epochs is not None:
        train["max_epochs"] = args.max_epochs
    train["seed"] = args.seed
    caption = {**train, **dict(getattr(args, "caption_train", None) or {}), "seed": args.seed}
    try:
        return ModelConfig.from_dict(model), TrainConfig.from_dict(train), TrainConfig.from_dict(caption)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training configuration: {exc}")


def cmd_train(args) -> int:
    from .pipeline import SplitManifest, load_game_halves, save_baseline, train_baseline

    model_cfg, spot_cfg, cap_cfg = _train_configs(args)
    split = SplitManifest.load(need(args.split, "split manifest"))
    docs, removed = corpus(args.corpus, args.drop_labels)
    by_id = {d.game_id: d for d in docs}
    need(args.features, "feature directory")

    def games(ids):
        missing = [g for g in ids if g not in by_id]
        if missing:
            raise InputError(f"split lists games absent from the corpus: {missing}")
        return [(by_id[g], load_game_halves(args.features, g, args.fps, by_id[g], model_cfg.feature_dim)) for g in ids]

    trained = train_baseline(
        games(split.train), spot_cfg, model_cfg, games(split.valid), args.regime, args.min_count,
        spot_cfg=spot_cfg, caption_cfg=cap_cfg,
    )
    save_baseline(args.out, trained, spot_cfg, model_cfg, {"caption_train_config": cap_cfg.to_dict(), "regime": args.regime})
    write_json(args.out / "config.json", {**echo(args), "removed": removed})
    print(f"trained {args.regime}: vocabulary {len(trained.vocab)}, "
          f"{len(trained.spot_log.losses())} spotting / {len(trained.caption_log.losses())} captioning epochs")
    return 0


def cmd_infer(args) -> int:
    from .pipeline import SplitManifest, infer_games, load_baseline, load_game_halves

    spotter, captioner, vocab, cfg = load_baseline(need(args.model, "model directory"))
    if args.games:
        ids = list(args.games)
    elif args.split is not None:
        ids = getattr(SplitManifest.load(need(args.split, "split manifest")), args.subset)
    else:
        raise UsageError("infer needs --games or --split")
    need(args.features, "feature directory")
    games = [(g, load_game_halves(args.features, g, args.fps, None, spotter.cfg.feature_dim)) for g in ids]
    sets = infer_games(games, spotter, captioner, vocab, cfg)
    write_prediction_dir(args.out, sets)
    write_json(args.out / "config.json", echo(args))
    print(f"{sum(len(s) for s in sets.values())} predictions for {len(sets)} games")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run

    results = run()
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if args.out:
        write_artifact(args.out, {"checks": {n: ok for n, ok in results}}, args)
    return 0 if all(ok for _, ok in results) else 1


COMMANDS = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "anonymize": cmd_anonymize,
    "eval-spotting": cmd_eval_spotting,
    "eval-caption": cmd_eval_caption,
    "eval-sdvc": cmd_eval_sdvc,
    "train": cmd_train,
    "infer": cmd_infer,
    "selftest": cmd_selftest,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"{parser.prog}: a command is required ({', '.join(COMMANDS)})")
        args = resolve(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default", CorpusWarning)
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (InputError, DocumentValidationError, FeatureFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
