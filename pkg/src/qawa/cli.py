"""Command-line entry point: ``qawa <subcommand> [options] [--section.key value ...]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import lm as lmmod
from .adapters import EngineError
from .config import CONDITIONS, ConfigError, PipelineConfig, load_config, parse_overrides
from .pipeline import StageError, cmd_augment, cmd_condition, cmd_eval, cmd_pipeline, cmd_preprocess

log = logging.getLogger("qawa")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_ENGINE = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("QAWA_LOG", "info").lower()
    level = LOG_LEVELS.get(name, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)
    if name not in LOG_LEVELS:
        log.warning("unknown QAWA_LOG level %r, using info", name)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' configuration file")
    common.add_argument("--seed", type=int, help="global seed (run.seed)")
    common.add_argument("--jobs", type=int, help="parallel per-utterance workers (run.jobs)")
    common.add_argument("--out", help="output directory (paths.out)")

    p = argparse.ArgumentParser(prog="qawa", description=__doc__,
                                epilog="Any configuration key can be overridden as --section.key VALUE.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="decode, canonicalize, gate, segment and split")
    sub.add_parser("augment", parents=[common], help="delexicalize, paraphrase, relexicalize, synthesize")
    c = sub.add_parser("condition", parents=[common], help="build a training manifest and LM per condition")
    c.add_argument("conditions", nargs="*", choices=[[], *CONDITIONS], metavar="CONDITION",
                   help=f"one or more of {', '.join(CONDITIONS)} (default: eval.conditions)")
    m = sub.add_parser("lm", parents=[common], help="train an n-gram LM on a text file")
    m.add_argument("--text", required=True, help="training text, one sentence per line")
    m.add_argument("--arpa", help="output ARPA path (default: <out>/lm/lm.arpa)")
    m.add_argument("--eval-text", help="report perplexity on this text")
    m.add_argument("--no-prune", action="store_true", help="skip singleton pruning")
    sub.add_parser("eval", parents=[common], help="score hypotheses per condition")
    sub.add_parser("pipeline", parents=[common], help="preprocess, augment, condition, eval")
    s = sub.add_parser("stats", parents=[common], help="speakers and hours per dialect and gender")
    s.add_argument("--manifest", help="manifest to summarize (default: preprocessed or raw manifest)")
    t = sub.add_parser("toy", help="write the bundled toy corpus and its config")
    t.add_argument("dir", help="target directory")
    t.add_argument("--seed", type=int, default=0)
    return p


def _config(args, extra) -> PipelineConfig:
    overrides = parse_overrides(extra)
    for flag, key in (("seed", "run.seed"), ("jobs", "run.jobs"), ("out", "paths.out")):
        if getattr(args, flag, None) is not None:
            overrides[key] = str(getattr(args, flag))
    cfg = PipelineConfig(load_config(args.config, overrides))
    cfg.validate()
    return cfg


def _run(args, extra) -> int:
    from .corpus import corpus_stats, load_manifest

    if args.command == "toy":
        if extra:
            raise ConfigError(f"unrecognized arguments: {' '.join(extra)}")
        from .toy import make_toy_corpus

        print(make_toy_corpus(args.dir, args.seed))
        return EXIT_OK
    cfg = _config(args, extra)
    if args.command == "preprocess":
        res = cmd_preprocess(cfg)
        print(f"{len(res.manifest)} records ({', '.join(f'{s.split}={len(s)}' for s in res.splits)}), "
              f"{len(res.drops)} dropped")
    elif args.command == "augment":
        s = cmd_augment(cfg)
        print(f"{s.synthetic} synthetic sentences from {s.sources} sources; {s.audio} audio records; "
              f"slot F1 {s.slot_f1:.3f}")
    elif args.command == "condition":
        for cond in args.conditions or cfg.conditions:
            r = cmd_condition(cfg, cond)
            print(f"{cond}: {len(r.manifest)} utterances")
    elif args.command == "lm":
        with open(args.text, encoding="utf-8") as f:
            texts = [ln.strip() for ln in f if ln.strip()]
        model = lmmod.train(texts, cfg.lm, prune=not args.no_prune)
        path = args.arpa or os.path.join(cfg.out, "lm", "lm.arpa")
        lmmod.export_arpa(model, path)
        print(path)
        if args.eval_text:
            with open(args.eval_text, encoding="utf-8") as f:
                r = lmmod.perplexity(model, [ln for ln in f if ln.strip()])
            print(f"perplexity {r.perplexity:.2f} over {r.n_tokens} tokens ({r.n_oov} scored as {model.unk})")
    elif args.command == "eval":
        print(cmd_eval(cfg).render(), end="")
    elif args.command == "pipeline":
        print(cmd_pipeline(cfg).render(), end="")
    elif args.command == "stats":
        path = args.manifest
        if path is None:
            pre = os.path.join(cfg.out, "preprocess", "all.jsonl")
            path = pre if os.path.exists(pre) else cfg.path("paths.manifest")
        if not path:
            raise ConfigError("no manifest given (use --manifest or paths.manifest)")
        print(corpus_stats(load_manifest(path)).render(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return _run(args, extra)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except StageError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except EngineError as exc:
        log.error("%s", exc)
        return EXIT_ENGINE
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
