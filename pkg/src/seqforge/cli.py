"""Command-line entry point: ``seqforge {synth,train,generate,eval-metrics}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("seqforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--config", type=Path, help="YAML run configuration (defaults are built in)")
    p.add_argument("--seed", type=int, help="base seed; overrides generation.seed and trainer.seed")
    p.add_argument("--out", type=Path, required=out_required, help="output directory (or file for eval-metrics)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seqforge", description="Synthetic text-sequence image factory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write semantic samples with glyph/foreground masks")
    _common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--corpus", type=Path, help="corpus text file (overrides renderer.corpus)")
    p.add_argument("--fonts", type=Path, help="font directory (overrides renderer.font_dir)")
    p.add_argument("--paired", action="store_true", help="also write procedural stand-in *_real.png targets")

    p = sub.add_parser("train", help="train the two-stage cascade")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="directory of <stem>_semantic.png / <stem>_real.png pairs")
    src.add_argument("--on-the-fly", action="store_true", help="synthesize pairs with stand-in targets")
    p.add_argument("--epoch-size", type=int, default=6715, help="samples per epoch for --on-the-fly")
    p.add_argument("--corpus", type=Path)
    p.add_argument("--fonts", type=Path)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--resume", action="store_true", help="continue from the newest checkpoint in --out")

    p = sub.add_parser("generate", help="generate a labelled dataset with a trained cascade")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--grayscale", action="store_true")
    p.add_argument("--corpus", type=Path)
    p.add_argument("--fonts", type=Path)

    p = sub.add_parser("eval-metrics", help="Inception score and FID between two image directories")
    _common(p)
    p.add_argument("generated", type=Path)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--backend", default="tiny-convnet")
    p.add_argument("--splits", type=int, default=10)
    return parser


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace("generation", seed=args.seed).replace("trainer", seed=args.seed)
    renderer = {}
    if getattr(args, "corpus", None):
        renderer["corpus"] = str(args.corpus)
    if getattr(args, "fonts", None):
        renderer["font_dir"] = str(args.fonts)
    if renderer:
        cfg = cfg.replace("renderer", **renderer)
    return cfg


def _text_sources(cfg):
    from .render import Corpus, FontCatalogue

    if not cfg.renderer.corpus:
        raise UsageError("no corpus given (use --corpus or renderer.corpus)")
    path = Path(cfg.renderer.corpus)
    if not path.is_file():
        raise UsageError(f"corpus file {path} does not exist")
    if cfg.renderer.font_dir and not Path(cfg.renderer.font_dir).is_dir():
        raise UsageError(f"font directory {cfg.renderer.font_dir} does not exist")
    return Corpus.from_file(path), FontCatalogue.default(cfg.renderer.font_dir)


def _positive(name: str, value: int):
    if value < 1:
        raise UsageError(f"--{name} must be at least 1")


def cmd_synth(args) -> int:
    from .generate import synthesize_to_dir

    _positive("count", args.count)
    cfg = _load(args)
    corpus, fonts = _text_sources(cfg)
    n = synthesize_to_dir(corpus, fonts, cfg.renderer, args.count, args.out, cfg.generation.seed, args.paired)
    log.info("wrote %d new samples (%d requested) to %s", n, args.count, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import train

    cfg = _load(args)
    changes = {k: v for k, v in (("epochs", args.epochs), ("max_steps", args.max_steps), ("batch_size", args.batch_size)) if v is not None}
    if changes:
        try:
            cfg = cfg.replace("trainer", **changes)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if args.data is not None:
        from .pairs import load_pair_dir

        if not args.data.is_dir():
            raise UsageError(f"training data directory {args.data} does not exist")
        dataset = load_pair_dir(args.data, cfg.renderer.radius)
    else:
        from .pairs import OnTheFlyPairs

        _positive("epoch-size", args.epoch_size)
        corpus, fonts = _text_sources(cfg)
        dataset = OnTheFlyPairs(corpus, fonts, cfg.renderer, args.epoch_size)
    result = train(dataset, cfg.trainer, args.out, plan=cfg.model, resume=args.resume or None)
    log.info("trained to step %d; checkpoint %s", result.trainer.step, result.checkpoint)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .checkpoint import load_checkpoint, restore_cascade
    from .generate import generate_dataset

    _positive("count", args.count)
    if not args.checkpoint.is_file():
        raise UsageError(f"checkpoint {args.checkpoint} does not exist")
    cfg = _load(args)
    corpus, fonts = _text_sources(cfg)
    ckpt = load_checkpoint(args.checkpoint)
    if (ckpt.plan.image_height, ckpt.plan.image_width) != (cfg.renderer.image_height, cfg.renderer.image_width):
        raise RuntimeError("checkpoint image size does not match the renderer configuration")
    cascade = restore_cascade(ckpt)
    grayscale = args.grayscale or cfg.generation.grayscale
    manifest = generate_dataset(
        cascade, corpus, fonts, cfg.renderer, args.count, args.out,
        base_seed=cfg.generation.seed, batch_size=cfg.generation.batch_size, grayscale=grayscale,
    )
    log.info("wrote %d images; manifest %s", args.count, manifest)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate_dirs

    for d in (args.generated, args.reference):
        if not d.is_dir():
            raise UsageError(f"image directory {d} does not exist")
    _positive("splits", args.splits)
    report = evaluate_dirs(args.generated, args.reference, args.backend, args.splits)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report.write(args.out)
    print(report.to_json())
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate, "eval-metrics": cmd_eval}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    from .config import ConfigError

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"seqforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        log.debug("failure", exc_info=True)
        print(f"seqforge {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
