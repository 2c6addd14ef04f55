"""``gan-export`` command line: write feature stores from GAN checkpoints."""

from __future__ import annotations

import argparse
import sys

from .export import DEFAULT_CLASS_NAMES, ExportConfig, ExportError, export_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gan-export",
        description="Export synthesis-block activations into a feature store",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser(
        "export",
        help="sample latents and capture block activations",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--checkpoint", required=True, help="generator checkpoint path")
    p.add_argument("--out", required=True, help="output store directory")
    p.add_argument("--images", type=int, required=True, help="number of images")
    p.add_argument("--trunc", type=float, default=0.7, help="truncation psi")
    p.add_argument("--blocks", type=int, default=5, help="last-k synthesis blocks")
    p.add_argument("--seed", type=int, required=True, help="latent seed base")
    p.add_argument(
        "--classes",
        default=",".join(DEFAULT_CLASS_NAMES),
        help="comma-separated class catalog recorded in the manifest",
    )
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = ExportConfig(
        checkpoint=args.checkpoint,
        out_dir=args.out,
        n_images=args.images,
        truncation=args.trunc,
        latent_seed=args.seed,
        block_count=args.blocks,
        class_names=args.classes.split(","),
    )
    try:
        print(export_features(config))
        return 0
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
