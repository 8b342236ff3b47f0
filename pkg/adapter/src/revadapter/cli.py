"""revadapter command line: serve the protocol or fine-tune the
classifier."""

from __future__ import annotations

import argparse
import logging
import sys

from revadapter import __version__


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revadapter",
        description="Language-model metrics over the adapter wire protocol.",
    )
    parser.add_argument(
        "--version", action="version", version=f"revadapter {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("serve", help="answer protocol requests on stdin/stdout")
    p.add_argument("--mode", choices=["score", "pair"], required=True)
    p.add_argument(
        "--model", required=True, help="model directory or hub identifier"
    )
    p.add_argument("--device", default="cpu", help="torch device (default cpu)")
    p.add_argument(
        "--max-length",
        type=int,
        default=512,
        help="token budget per text; longer inputs are head-truncated",
    )
    p.add_argument(
        "--allow-untrained",
        action="store_true",
        help="pair mode: serve a checkpoint without a training marker",
    )
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="fine-tune the pair classifier")
    p.add_argument("--pairs", required=True, help="training pairs JSONL (a, b, label)")
    p.add_argument("--base-model", required=True, help="base checkpoint to fine-tune")
    p.add_argument("--out", required=True, help="output model directory")
    p.add_argument("--learning-rate", type=float, default=2e-5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-length", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_train)
    return parser


def cmd_serve(args) -> int:
    from revadapter.protocol import serve

    if args.mode == "score":
        from revadapter.scorer import CausalLmScorer

        backend = CausalLmScorer(args.model, args.device, args.max_length)
        metadata = {
            "name": "revadapter",
            "unit": backend.unit,
            "truncation": f"head-{args.max_length}",
        }
    else:
        from revadapter.classifier import PairClassifier

        backend = PairClassifier(
            args.model, args.device, args.max_length, args.allow_untrained
        )
        metadata = {"name": "revadapter", "truncation": f"head-{args.max_length}"}
    return serve(backend, args.mode, metadata)


def cmd_train(args) -> int:
    from revadapter.classifier import TrainConfig, train

    summary = train(
        args.pairs,
        args.base_model,
        args.out,
        TrainConfig(
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            batch_size=args.batch_size,
            max_length=args.max_length,
            seed=args.seed,
            device=args.device,
        ),
    )
    print(
        f"fine-tuned on {summary['examples']} pairs for {summary['epochs']} epochs"
        f" (final mean loss {summary['final_mean_loss']:.4f}) -> {args.out}"
    )
    return 0


def main() -> None:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    try:
        args = parser.parse_args()
    except SystemExit as exc:
        raise SystemExit(exc.code if isinstance(exc.code, int) else 2)
    try:
        raise SystemExit(args.func(args))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)


if __name__ == "__main__":
    main()
