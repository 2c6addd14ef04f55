"""``hdgan`` command-line entry point.

Subcommands: synth, validate-store, train, eval, infer, export-pairs.
Exit codes: 0 success, 1 validation/data error, 2 usage error, 3 I/O error.
Diagnostics go to stderr; machine-readable results go to files or stdout.
Randomized commands require an explicit --seed rather than defaulting to a
nondeterministic one.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import feature_store, synthetic
from .annotations import split_dataset
from .errors import ConfigError, HdganError, IoError
from .inference import VoteRule, export_pairs, predict_image
from .mlp import load_checkpoint, save_checkpoint
from .resampler import ResampleMode
from .sampler import SamplingPlan, Strategy
from .trainer import TrainConfig, evaluate, train, write_history_csv
from .rng import derive_seed

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _parse_blocks(specs: list[str], size: int):
    if not specs:
        return None
    pairs = []
    for text in specs:
        try:
            resolution, channels = text.split(":")
            pairs.append((int(resolution), int(channels)))
        except ValueError as exc:
            raise ConfigError(f"--block expects R:C, got {text!r}") from exc
    pairs.sort(key=lambda rc: rc[0])
    return feature_store.block_pyramid(size, pairs)


def _parse_hidden(text: str) -> tuple[int, int]:
    try:
        h1, h2 = (int(v) for v in text.split(","))
        return h1, h2
    except ValueError as exc:
        raise ConfigError(f"--hidden expects H1,H2 got {text!r}") from exc


def _load_models(text: str):
    return [load_checkpoint(path) for path in text.split(",")]


def _resample_mode(name: str) -> ResampleMode:
    return ResampleMode.BILINEAR if name == "bilinear" else ResampleMode.NEAREST


def _vote_rule(name: str) -> VoteRule:
    return VoteRule.MAJORITY_ARGMAX if name == "majority" else VoteRule.MEAN_LOGITS


def _member_path(base: Path, member: int, count: int) -> Path:
    if count == 1:
        return base
    return base.with_name(f"{base.stem}.{member}{base.suffix}")


def _cmd_synth(args) -> int:
    blocks = _parse_blocks(args.block or [], args.size)
    out = synthetic.build_synthetic_store(
        seed=args.seed,
        n_images=args.images,
        size=args.size,
        out_dir=args.out,
        blocks=blocks,
        num_classes=args.classes,
        noise_sigma=args.sigma,
    )
    print(out)
    return EXIT_OK


def _cmd_validate_store(args) -> int:
    image_ids = feature_store.validate_store(args.store)
    print(f"OK {len(image_ids)} images")
    return EXIT_OK


def _split_for(handle, args):
    counts = (args.train, args.val, args.test)
    return split_dataset(handle.image_ids, counts, args.seed)


def _cmd_train(args) -> int:
    handle = feature_store.open_store(args.store)
    split = _split_for(handle, args)
    config = TrainConfig(
        master_seed=args.seed,
        lr=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        patience=args.patience,
        mode=_resample_mode(args.mode),
        ensemble_size=args.ensemble,
        hidden_dims=_parse_hidden(args.hidden),
        dropout_p=args.dropout,
        sampling=SamplingPlan(
            seed=derive_seed(args.seed, "sampling"),
            strategy=Strategy(args.sampling),
            pixels_per_image=args.pixels_per_image,
        ),
    )
    checkpoints, histories = train(config, handle, split)
    base = Path(args.out)
    for member, (ckpt, history) in enumerate(zip(checkpoints, histories)):
        path = _member_path(base, member, len(checkpoints))
        save_checkpoint(ckpt, path)
        print(path)
        print(
            f"member {member}: best val accuracy {history.best_accuracy:.4f} "
            f"at epoch {history.best_epoch}",
            file=sys.stderr,
        )
        if args.history:
            write_history_csv(history, _member_path(Path(args.history), member, len(checkpoints)))
    handle.close()
    return EXIT_OK


def _cmd_eval(args) -> int:
    handle = feature_store.open_store(args.store)
    checkpoints = _load_models(args.model)
    split = _split_for(handle, args)
    report = evaluate(
        checkpoints,
        handle,
        split.part(args.split),
        mode=_resample_mode(args.mode),
        vote=_vote_rule(args.vote),
    )
    sys.stdout.write(report.as_text())
    if args.report:
        try:
            Path(args.report).write_text(report.as_csv(), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write report {args.report}: {exc}") from exc
    handle.close()
    return EXIT_OK


def _cmd_infer(args) -> int:
    handle = feature_store.open_store(args.store)
    checkpoints = _load_models(args.model)
    mask = predict_image(
        checkpoints,
        handle,
        args.image,
        chunk_budget_bytes=args.chunk_mb << 20,
        mode=_resample_mode(args.mode),
        vote=_vote_rule(args.vote),
    )
    from .annotations import write_mask

    write_mask(mask, args.out)
    print(args.out)
    handle.close()
    return EXIT_OK


def _cmd_export_pairs(args) -> int:
    handle = feature_store.open_store(args.store)
    checkpoints = _load_models(args.model)
    image_ids = args.images.split(",") if args.images else handle.image_ids
    index = export_pairs(
        checkpoints,
        handle,
        image_ids,
        args.out,
        chunk_budget_bytes=args.chunk_mb << 20,
        mode=_resample_mode(args.mode),
        vote=_vote_rule(args.vote),
    )
    print(Path(args.out) / "pairs.json")
    print(f"wrote {len(index['pairs'])} pairs", file=sys.stderr)
    handle.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdgan",
        description="Out-of-core pixel-classifier pipeline over feature stores",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="build a synthetic feature store", formatter_class=formatter)
    p.add_argument("--out", required=True, help="store output directory")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--images", type=int, default=36, help="number of images")
    p.add_argument("--size", type=int, default=128, help="image height and width")
    p.add_argument(
        "--block",
        action="append",
        metavar="R:C",
        help="block as resolution:channels; repeat per block (default pyramid)",
    )
    p.add_argument("--sigma", type=float, default=0.25, help="feature noise level")
    p.add_argument("--classes", type=int, default=5, help="number of classes")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate-store", help="deep-check a store", formatter_class=formatter)
    p.add_argument("store", help="store directory")
    p.set_defaults(func=_cmd_validate_store)

    def add_split_flags(p):
        p.add_argument("--train", type=int, default=16, help="train image count")
        p.add_argument("--val", type=int, default=4, help="validation image count")
        p.add_argument("--test", type=int, default=16, help="test image count")

    p = sub.add_parser("train", help="train pixel classifiers", formatter_class=formatter)
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    add_split_flags(p)
    p.add_argument("--hidden", default="256,128", help="hidden widths H1,H2")
    p.add_argument("--lr", type=float, default=0.0001, help="SGD learning rate")
    p.add_argument("--batch", type=int, default=64, help="batch size")
    p.add_argument("--epochs", type=int, default=50, help="epoch cap")
    p.add_argument("--patience", type=int, default=5, help="early-stopping patience")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout probability")
    p.add_argument("--ensemble", type=int, default=1, help="ensemble size")
    p.add_argument("--mode", choices=["nearest", "bilinear"], default="nearest",
                   help="feature resampling mode")
    p.add_argument("--sampling", choices=[s.value for s in Strategy],
                   default=Strategy.CLASS_BALANCED.value, help="pixel sampling strategy")
    p.add_argument("--pixels-per-image", type=int, default=4096,
                   help="training pixels sampled per image")
    p.add_argument("--out", required=True, help="checkpoint output path (.hdgm)")
    p.add_argument("--history", default=None, help="optional training-history CSV path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a split", formatter_class=formatter)
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--model", required=True, help="checkpoint file[,file...]")
    p.add_argument("--split", choices=["train", "val", "test"], required=True,
                   help="which split part to score")
    p.add_argument("--seed", type=int, required=True, help="split master seed")
    add_split_flags(p)
    p.add_argument("--mode", choices=["nearest", "bilinear"], default="nearest",
                   help="feature resampling mode")
    p.add_argument("--vote", choices=["mean", "majority"], default="mean",
                   help="ensemble vote rule")
    p.add_argument("--report", default=None, help="optional CSV report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("infer", help="predict one image's mask", formatter_class=formatter)
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--model", required=True, help="checkpoint file[,file...]")
    p.add_argument("--image", required=True, help="image id")
    p.add_argument("--chunk-mb", type=int, default=8, help="stream budget in MiB")
    p.add_argument("--out", required=True, help="output mask path (.pgm)")
    p.add_argument("--mode", choices=["nearest", "bilinear"], default="nearest",
                   help="feature resampling mode")
    p.add_argument("--vote", choices=["mean", "majority"], default="mean",
                   help="ensemble vote rule")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("export-pairs", help="export image-annotation pairs",
                       formatter_class=formatter)
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--model", required=True, help="checkpoint file[,file...]")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--images", default=None, help="comma-separated ids (default: all)")
    p.add_argument("--chunk-mb", type=int, default=8, help="stream budget in MiB")
    p.add_argument("--mode", choices=["nearest", "bilinear"], default="nearest",
                   help="feature resampling mode")
    p.add_argument("--vote", choices=["mean", "majority"], default="mean",
                   help="ensemble vote rule")
    p.set_defaults(func=_cmd_export_pairs)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except HdganError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyError as exc:
        print(f"error: unknown image id {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
