"""Command-line entry point: ``contextmix <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import dataio
from .imagecore import as_image
from .inspection import ComponentRecord, audit_record, inspect_component
from .metrics import PredictionSet, mean_ir, summarize
from .mixers import DEFAULT_SEED, FILTERS, VARIANTS, FilterSpec, MixPolicy, mix_batch
from .sampling import CropBox, RngStream, simulate_area_distribution
from .trainer import ModelParams, TrainConfig, predict, train, write_epoch_log


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=1, help="worker threads; outputs do not depend on it")
    common.add_argument("--out", type=Path, default=None, help="output directory or file")
    return common


def _policy_args(p: argparse.ArgumentParser, kinds, default: str):
    p.add_argument("--policy", choices=kinds, default=default)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--region-id", type=int, default=5, help="paste cell for --variant fixed_region (1-5)")
    p.add_argument("--epsilon", type=float, default=None, help="resize ratio for contextmix (default: fit the box)")
    p.add_argument("--filter", choices=FILTERS, default=None)
    p.add_argument("--filter-target", choices=("occluded", "resized"), default="resized")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--amount", type=float, default=1.0)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--per-image-boxes", action="store_true")


def _train_args(p: argparse.ArgumentParser):
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--valid-manifest", type=Path, default=None)
    p.add_argument("--arch", choices=("linear", "mlp"), default="mlp")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--decay-epochs", default="", help="comma-separated epochs at which lr is multiplied by --decay-factor")
    p.add_argument("--decay-factor", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contextmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("augment", parents=[common], help="mix batches from a manifest and write PPMs + mix records")
    p.add_argument("--manifest", type=Path, required=True)
    _policy_args(p, ("contextmix", "cutmix", "mixup", "cutout"), "contextmix")
    p.add_argument("--n-batches", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("areas", parents=[common], help="histogram of crop areas before and after clipping")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--bins", type=int, default=20)

    p = sub.add_parser("synth", parents=[common], help="render the synthetic long-tailed inspection dataset")
    p.add_argument("--preset", choices=("desk", "mlcc"), default="desk")
    p.add_argument("--counts", default=None, help="comma-separated per-class counts (overrides --preset)")
    p.add_argument("--n-classes", type=int, default=None)
    p.add_argument("--total", type=int, default=None)
    p.add_argument("--mean-ir", type=float, default=None)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--noise-std", type=float, default=0.02)
    p.add_argument("--valid-fraction", type=float, default=0.2)

    p = sub.add_parser("train", parents=[common], help="train a classifier with a mixing policy")
    _train_args(p)
    _policy_args(p, ("none", "contextmix", "cutmix", "mixup", "cutout"), "contextmix")

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model on a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--bins", type=int, default=15)

    p = sub.add_parser("inspect", parents=[common], help="run the per-surface inspection and final decision")
    p.add_argument("--components", type=Path, required=True, help="TSV: component_id, image path, x0,y0,x1,y1")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--normal-class", type=int, default=0)

    p = sub.add_parser("sweep", parents=[common], help="train once per resize ratio")
    p.add_argument("--epsilons", required=True, help="comma-separated ratios; 'fit' means plain contextmix")
    _train_args(p)
    _policy_args(p, ("contextmix",), "contextmix")
    return parser


def _policy_from(args, parser, epsilon=None) -> MixPolicy:
    eps = args.epsilon if epsilon is None else epsilon
    if eps is not None and args.policy != "contextmix":
        parser.error("--epsilon is only valid with --policy contextmix")
    if args.variant is not None and args.policy != "contextmix":
        parser.error("--variant is only valid with --policy contextmix")
    flt = None
    if args.filter is not None:
        flt = FilterSpec(args.filter, args.filter_target, args.sigma, args.amount, args.radius)
    try:
        return MixPolicy(
            kind=args.policy,
            alpha=args.alpha,
            variant=args.variant,
            region_id=args.region_id,
            epsilon=eps,
            filter=flt,
            per_image_boxes=args.per_image_boxes,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _announce_seed(args):
    print(f"seed={args.seed}", file=sys.stderr)


def _ints(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def cmd_augment(args, parser) -> int:
    policy = _policy_from(args, parser)
    if args.n_batches < 0 or args.batch_size < 2:
        parser.error("--n-batches must be >= 0 and --batch-size >= 2")
    if args.out is None:
        parser.error("augment needs --out")
    _announce_seed(args)
    manifest = dataio.load_manifest(args.manifest)
    out = args.out
    (out / "images").mkdir(parents=True, exist_ok=True)
    if args.n_batches == 0:
        print("warning: --n-batches 0, nothing to do", file=sys.stderr)
        dataio.write_mix_records([], out / "mix_records.txt")
        return 0
    if args.batch_size > len(manifest):
        raise ValueError(f"batch size {args.batch_size} exceeds the {len(manifest)} images in the manifest")
    k = manifest.n_classes
    eye = np.eye(k)
    records, names = [], []
    for b in range(args.n_batches):
        idx = RngStream(args.seed, (0xBA7C, b)).generator().choice(len(manifest), args.batch_size, replace=False)
        images = [as_image(manifest.load_image(int(i))) for i in idx]
        labels = [eye[manifest.entries[int(i)][1]] for i in idx]
        outcomes = mix_batch(images, labels, policy, epoch=0, total_epochs=1, master_seed=args.seed, batch_index=b, workers=args.threads)
        for i, o in enumerate(outcomes):
            name = f"images/mix_b{b:04d}_{i:03d}.ppm"
            dataio.write_ppm(o.image, out / name)
            records.append(o)
            names.append(name)
    dataio.write_mix_records(records, out / "mix_records.txt", names)
    lam = np.array([o.lambda_a for o in records])
    nomix = np.mean([o.box is None and policy.kind != "mixup" for o in records])
    print(f"images={len(records)} mean_lambda_a={lam.mean():.6f} nomix_rate={nomix:.6f}")
    return 0


def cmd_areas(args, parser) -> int:
    if args.samples < 1:
        parser.error("--samples must be >= 1")
    if args.bins < 1 or args.width < 1 or args.height < 1:
        parser.error("--bins, --width and --height must be >= 1")
    if not args.alpha > 0:
        parser.error("--alpha must be positive")
    _announce_seed(args)
    hist = simulate_area_distribution(args.width, args.height, args.alpha, args.samples, RngStream(args.seed, 0xA4EA), args.bins)
    text = hist.to_text()
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_synth(args, parser) -> int:
    if args.out is None:
        parser.error("synth needs --out")
    _announce_seed(args)
    if args.counts:
        counts = _ints(args.counts)
    else:
        n_classes, total, target = 10, 5000, 12.0
        if args.preset == "mlcc":
            n_classes, total, target = (dataio.MLCC_PRESET[k] for k in ("n_classes", "total", "mean_ir"))
        n_classes = args.n_classes or n_classes
        total = args.total or total
        target = args.mean_ir or target
        counts = dataio.long_tailed_counts(n_classes, total, target)
    spec = dataio.SynthSpec(counts, image_size=args.image_size, noise_std=args.noise_std, seed=args.seed)
    manifest = dataio.generate_synthetic(spec, args.out)
    if len(counts) > 1:
        train_m, valid_m = dataio.split_manifest(manifest, args.valid_fraction, args.seed)
        dataio.write_manifest(train_m, args.out / "train.tsv")
        dataio.write_manifest(valid_m, args.out / "valid.tsv")
    print(f"images={len(manifest)} classes={len(counts)} counts={','.join(map(str, counts))} mean_ir={mean_ir(counts):.4f}")
    return 0


def _train_config(args, policy: MixPolicy) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lr_decay_epochs=tuple(_ints(args.decay_epochs)),
        lr_decay_factor=args.decay_factor,
        policy=policy,
        seed=args.seed,
        arch=args.arch,
        hidden=args.hidden,
        workers=args.threads,
    )


def cmd_train(args, parser) -> int:
    policy = _policy_from(args, parser)
    _announce_seed(args)
    manifest = dataio.load_manifest(args.manifest)
    valid = dataio.load_manifest(args.valid_manifest, manifest.n_classes) if args.valid_manifest else None
    params, log = train(manifest, _train_config(args, policy), valid)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        params.save(args.out / "model.npz")
        write_epoch_log(log, args.out / "epochs.log")
    for entry in log:
        print(entry.line())
    return 0


def cmd_eval(args, parser) -> int:
    manifest = dataio.load_manifest(args.manifest)
    params = ModelParams.load(args.model)
    x, y = manifest.load_arrays()
    stats = summarize(PredictionSet(y, predict(params, x)), args.bins)
    for key, value in stats.items():
        print(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
    return 0


def _read_components(path: Path) -> List[ComponentRecord]:
    records: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'component_id<TAB>image<TAB>x0,y0,x1,y1'")
        cid, image_path, roi = fields
        coords = _ints(roi)
        if len(coords) != 4:
            raise ValueError(f"{path}:{lineno}: ROI needs four integers")
        img_path = Path(image_path)
        if not img_path.is_absolute():
            img_path = path.parent / img_path
        records.setdefault(cid, []).append((dataio.read_ppm(img_path), CropBox(*coords)))
    return [ComponentRecord(cid, surfaces) for cid, surfaces in records.items()]


def cmd_inspect(args, parser) -> int:
    params = ModelParams.load(args.model)
    lines = []
    for record in _read_components(args.components):
        verdicts, decision = inspect_component(record, params, args.normal_class)
        lines.append(audit_record(record.component_id, verdicts, decision))
    text = "".join(line + "\n" for line in lines)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_sweep(args, parser) -> int:
    if args.variant is not None:
        parser.error("sweep runs plain contextmix; drop --variant")
    tokens = [t.strip() for t in args.epsilons.split(",") if t.strip()]
    if not tokens:
        parser.error("--epsilons is empty")
    values: List[Optional[float]] = []
    for tok in tokens:
        try:
            value = None if tok == "fit" else float(tok)
        except ValueError:
            parser.error(f"bad epsilon {tok!r}")
        if value in values:
            print(f"warning: duplicate epsilon {tok} ignored", file=sys.stderr)
            continue
        values.append(value)
    if args.epsilon is not None:
        parser.error("use --epsilons with sweep, not --epsilon")
    policies = [_policy_from(args, parser, epsilon=v) for v in values]
    _announce_seed(args)
    manifest = dataio.load_manifest(args.manifest)
    valid = dataio.load_manifest(args.valid_manifest, manifest.n_classes) if args.valid_manifest else None
    rows = ["epsilon\tloss\ttop1_error\tmacro_f1\tece"]
    for value, policy in zip(values, policies):
        _, log = train(manifest, _train_config(args, policy), valid)
        last = log[-1]
        label = "fit" if value is None else f"{value:g}"
        rows.append(f"{label}\t{last.loss:.6f}\t{last.top1_error:.6f}\t{last.macro_f1:.6f}\t{last.ece:.6f}")
    text = "\n".join(rows) + "\n"
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "augment": cmd_augment,
    "areas": cmd_areas,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
