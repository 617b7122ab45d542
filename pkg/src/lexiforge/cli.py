"""``lexiforge`` command line.

Exit status: 0 success, 1 usage or configuration error, 2 data error (bad or
missing input, failed stage), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from .errors import ConfigError, LexiforgeError
from .pipeline import STAGES, PipelineConfig, WorkdirLock
from . import pipeline as P

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("lexiforge")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _abs(value):
    return str(Path(value).expanduser().resolve())


def _kind(value: str) -> str:
    kind = value.replace("-", "_")
    if kind not in ("cnn", "cnn_crf", "linear_crf"):
        raise argparse.ArgumentTypeError(f"unknown model {value!r} (choose cnn, cnn-crf or linear-crf)")
    return kind


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="JSON configuration file")
    g.add_argument("--workdir", type=_abs, help="work directory (default: config, then $LEXIFORGE_WORKDIR)")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--threshold", type=float, help="cosine gate threshold for blocks and candidates")
    g.add_argument("--scheme", type=int, choices=(1, 2, 3, 4), help="restrict to one split scheme")
    g.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="lexiforge", description="Terminology extraction pipeline.")
    parser.add_argument("--version", action="version", version=f"lexiforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    p = add("ingest", "filter and extract passages from the documents of a manifest")
    p.add_argument("--manifest", type=_abs)
    p.add_argument("--out", type=_abs, help="output directory (default: <workdir>/ingest)")
    p.add_argument("--keywords", help="comma-separated seed keywords")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = add("lexicon", "load the gold lexicon, bootstrap C-value candidates or merge reviewed terms")
    p.add_argument("action", choices=("load", "bootstrap", "merge"))
    p.add_argument("--lexicon", type=_abs, help="gold lexicon TSV")
    p.add_argument("--out", type=_abs)

    add("annotate", "mark lexicon terms in every sentence")
    p = add("blocks", "build context blocks and apply the similarity gate")
    p.add_argument("--embeddings", type=_abs)
    add("split", "split blocks into train and test sides")

    for name, help_ in (("train", "train taggers"), ("tag", "tag the held-out side or a CoNLL file")):
        p = add(name, help_)
        p.add_argument("--model", help="cnn, cnn-crf or linear-crf" + (" (or a model file)" if name == "tag" else ""))
        p.add_argument("--max-epochs", type=int)
    p.add_argument("--input", type=_abs, help="CoNLL file to tag when --model is a model file")
    p.add_argument("--out", type=_abs)

    p = add("extract", "collect new-term candidates from predictions")
    p.add_argument("--embeddings", type=_abs)
    p.add_argument("--model", type=_kind)

    p = add("review", "review candidates (interactive, or scripted with --replay)")
    p.add_argument("--candidates", type=_abs)
    p.add_argument("--replay", type=_abs)
    p.add_argument("--reviewer")

    p = add("eval", "score predictions and render the report")
    p.add_argument("--model", type=_kind)
    p.add_argument("--exclude-mac", action="store_true", help="do not count I-mac spans")
    p.add_argument("--external", action="append", default=[], metavar="MODEL:SCHEME:PATH",
                   help="also score a token/gold/predicted CoNLL file produced elsewhere")

    p = add("pipeline", "run every stage in order")
    p.add_argument("--model", type=_kind)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("synth", help="write the synthetic benchmark corpus")
    p.add_argument("--out", type=_abs, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-web", type=int, default=100)
    p.add_argument("--n-pdf", type=int, default=100)
    return parser


def _overrides(args) -> dict:
    o = {"paths.workdir": args.workdir, "seed": args.seed, "threshold": args.threshold}
    if args.scheme is not None:
        o["split.schemes"] = [args.scheme]
    for attr, key in (("manifest", "paths.manifest"), ("lexicon", "paths.lexicon"),
                      ("embeddings", "paths.embeddings"), ("max_depth", "filter.max_depth"),
                      ("max_epochs", "train.max_epochs"), ("reviewer", "review.reviewer")):
        o[key] = getattr(args, attr, None)
    if getattr(args, "keywords", None):
        o["filter.keywords"] = [k.strip() for k in args.keywords.split(",") if k.strip()]
    model = getattr(args, "model", None)
    if model is not None and not (args.command == "tag" and Path(model).is_file()):
        try:
            o["train.models"] = [_kind(model)]
        except argparse.ArgumentTypeError as exc:
            raise ConfigError("--model", str(exc)) from None
    if getattr(args, "exclude_mac", False):
        o["report.include_mac"] = False
    return o


_STAGES_FOR = {"pipeline": tuple(s for s in STAGES if s != "review"), "lexicon": ("lexicon",)}


def _run(args) -> int:
    if args.command == "synth":
        from .synthetic import generate

        out = generate(args.out, args.n_web, args.n_pdf, args.seed)
        print(f"wrote synthetic corpus to {out} (config: {out / 'config.json'})")
        return EXIT_OK

    if args.command == "ingest" and args.out and not args.workdir and not args.config:
        args.workdir = str(Path(args.out).parent)
    cfg = PipelineConfig.build(args.config, _overrides(args))
    stages = _STAGES_FOR.get(args.command, (args.command,))
    if args.command == "lexicon" and args.action != "load":
        stages = ()
    if args.command == "tag" and args.model and Path(args.model).is_file() and not args.input:
        raise ConfigError("--input", "a CoNLL file is required when --model is a model file")
    if args.dry_run:
        for line in cfg.validate(stages):
            print(f"ok  {line}")
        print("configuration valid; nothing written (dry run)")
        return EXIT_OK
    cfg.validate(stages)

    with WorkdirLock(cfg.workdir):
        c = args.command
        if c == "ingest":
            store = P.run_ingest(cfg, args.out, args.workers)
            print(f"{len(store.passages)} passages, {len(store.skipped)} documents skipped")
        elif c == "lexicon":
            P.run_lexicon(cfg, args.action, args.out)
        elif c == "annotate":
            P.run_annotate(cfg)
        elif c == "blocks":
            P.run_blocks(cfg)
        elif c == "split":
            P.run_split(cfg)
        elif c == "train":
            P.run_train(cfg)
        elif c == "tag":
            if args.model and Path(args.model).is_file():
                P.run_tag(cfg, args.out, args.model, args.input)
            else:
                P.run_tag(cfg, args.out)
        elif c == "extract":
            P.run_extract(cfg)
        elif c == "review":
            rows = P.run_review(cfg, args.candidates, args.replay)
            for r in rows:
                print(f"{r.model_id}\tscheme {r.scheme_id}\t{r.accepted}/{r.count} accepted ({r.rate:.2f}%)")
        elif c == "eval":
            ext = []
            for spec in args.external:
                parts = spec.rsplit(":", 2)
                if len(parts) != 3 or not parts[1].isdigit():
                    raise ConfigError("--external", f"expected MODEL:SCHEME:PATH, got {spec!r}")
                ext.append((parts[0], int(parts[1]), _abs(parts[2])))
            P.run_eval(cfg, external=ext)
            print((cfg.workdir / "eval" / "report.md").read_text(encoding="utf-8"))
        elif c == "pipeline":
            P.run_pipeline(cfg, args.workers)
            print((cfg.workdir / "eval" / "report.md").read_text(encoding="utf-8"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * getattr(args, "verbose", 0)
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"lexiforge: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LexiforgeError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"lexiforge: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("lexiforge: interrupted", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
