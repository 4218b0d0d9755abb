"""Command-line entry point.

Subcommands: gen, preprocess, train, eval, bench, predict. Exit codes:
0 on success, 1 for usage mistakes, 2 for data or file-format problems.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import capsnet, cnn, dsp, echosim, harness
from .errors import (
    ConfigError,
    DataError,
    DesignError,
    FormatError,
    ScenarioError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    p = _Parser(prog="usheight", description="Ultrasonic echo height classification pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate a labeled raw-trace dataset", parents=[])
    g.add_argument("--out", required=True, help="output trace directory")
    g.add_argument("--n", type=int, default=21_600, help="total traces (divisible by 4)")
    g.add_argument("--seed", type=int, default=0)

    pp = sub.add_parser("preprocess", help="condition traces into 16-bit PNG images")
    pp.add_argument("--traces", required=True, help="trace directory from 'gen'")
    pp.add_argument("--out", required=True, help="output image directory")
    pp.add_argument("--absolute", action="store_true", help="write magnitude-only grayscale images")

    t = sub.add_parser("train", help="train a model on preprocessed images")
    t.add_argument("--arch", choices=harness.ARCHS, default=None)
    t.add_argument("--variant", choices=harness.VARIANTS, default=None)
    t.add_argument("--config", default=None, help="key=value config file")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--data", default=None, help="image directory (overrides config)")
    t.add_argument("--checkpoint", default=None, help="checkpoint output path")
    t.add_argument("--metrics", default=None, help="metrics log output path")

    e = sub.add_parser("eval", help="evaluate a checkpoint on an image directory")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)

    b = sub.add_parser("bench", help="single-measurement latency benchmark")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--warm", type=int, default=10)
    b.add_argument("--measure", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)

    pr = sub.add_parser("predict", help="classify one envelope image")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--image", required=True)
    return p


def _cmd_gen(args) -> int:
    cfg = echosim.SignalConfig()
    items = echosim.gen_dataset(args.n, args.seed, cfg)
    echosim.write_traces(args.out, items)
    print(f"wrote {len(items)} traces to {args.out}")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    cfg = echosim.SignalConfig()
    items = echosim.read_traces(args.traces)
    dataset = harness.preprocess_traces(items, cfg, absolute=args.absolute)
    harness.write_images(args.out, dataset)
    print(f"wrote {len(dataset)} {dataset.variant} images to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = harness.load_config(args.config) if args.config else harness.TrainConfig()
    for key in ("arch", "variant", "seed", "data", "checkpoint", "metrics"):
        value = getattr(args, key)
        if value is not None:
            setattr(config, key, value)
    result = harness.run_training(config, verbose=True)
    print(f"best validation accuracy: {result.best_accuracy:.4f}")
    print(result.confusion.format_table())
    if config.checkpoint:
        print(f"checkpoint written to {config.checkpoint}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    ckpt = harness.load_checkpoint(args.checkpoint)
    data = harness.load_images(args.data)
    accuracy, confusion = harness.evaluate(ckpt, data)
    print(f"validation accuracy: {accuracy * 100:.2f}% over {confusion.total} samples")
    print(confusion.format_table())
    return EXIT_OK


def _cmd_bench(args) -> int:
    ckpt = harness.load_checkpoint(args.checkpoint)
    report = harness.bench_latency(ckpt, n_warm=args.warm, n_measure=args.measure, seed=args.seed)
    print(report.format())
    return EXIT_OK


def _cmd_predict(args) -> int:
    ckpt = harness.load_checkpoint(args.checkpoint)
    params = harness.model_from_checkpoint(ckpt)
    from . import pngio

    arr, _ = pngio.decode(Path(args.image).read_bytes())
    nch = arr.shape[2]
    if ckpt.variant == "complex" and nch != 3:
        raise UsageError("complex-variant model needs an RGB envelope image")
    if ckpt.variant == "absolute" and nch != 1:
        raise UsageError("absolute-variant model needs a grayscale magnitude image")
    img = dsp.decode_image(args.image) if nch == 3 else dsp.decode_gray(args.image)
    x = dsp.network_input(img)
    run_cfg = harness.parse_config_text(ckpt.config_text)
    if ckpt.arch == "capsnet":
        scores = capsnet.capsule_norms(params, x, run_cfg.routing_iterations)
        kind = "capsule norms"
    else:
        scores, _ = cnn.cnn_forward(params, x)
        kind = "probabilities"
    label = echosim.CLASS_NAMES[int(np.argmax(scores))]
    print(f"class: {label}")
    print(kind + ": " + "  ".join(
        f"{name}={val:.4f}" for name, val in zip(echosim.CLASS_NAMES, scores)
    ))
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "predict": _cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError, ValueError) as exc:
        if isinstance(exc, (DataError, FormatError, ScenarioError, DesignError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
