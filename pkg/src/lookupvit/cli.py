"""Command line entry point: ``python -m lookupvit <command> ...``.

Commands: ``gen-data``, ``train``, ``eval``, ``flops``, ``attnmap``,
``robust``. Output files are written atomically. Exit status is 0 on
success, 2 on usage errors, 1 on any other failure (including malformed
config files, reported with the offending field).
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import sys
from pathlib import Path
from typing import Sequence


from . import analysis, flops, pgm
from . import train as training
from .checkpoint import file_sha256, load_checkpoint, save_checkpoint
from .config import load_config
from .data import atomic_write, gen_synthetic, load_dataset, save_dataset, to_float
from .errors import LookupViTError

METRICS_HEADER = "step,loss,acc_p,acc_l,acc_avg,grid"
EVAL_HEADER = "grid,acc_p,acc_l,acc_avg,loss,checkpoint_sha256"
ROBUST_HEADER = "severity,sigma,mean_deviation"


def parse_grid(text: str) -> tuple[int, ...]:
    try:
        grid = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected e.g. 5x5") from None
    if len(grid) not in (2, 3) or min(grid) < 1:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected e.g. 5x5")
    return grid


def parse_grids(text: str) -> list[tuple[int, ...]]:
    return [parse_grid(g) for g in text.split(",") if g]


def parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def fmt_grid(grid: Sequence[int]) -> str:
    return "x".join(str(g) for g in grid)


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def cmd_gen_data(args) -> int:
    ds = gen_synthetic(args.classes, args.n, args.size, args.seed, channels=args.channels)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out} (sha256 {ds.sha256()})")
    return 0


def cmd_train(args) -> int:
    model_cfg, train_cfg = load_config(args.config)
    if args.seed is not None:
        model_cfg = model_cfg.replace(seed=args.seed)
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    if args.steps is not None:
        train_cfg = dataclasses.replace(train_cfg, steps=args.steps)
    ds = load_dataset(args.data)
    if ds.shape != (*model_cfg.image_size, model_cfg.channels):
        raise LookupViTError(f"dataset images {ds.shape} do not match the model input shape")
    if ds.classes != model_cfg.num_classes:
        raise LookupViTError(f"dataset has {ds.classes} classes, model expects {model_cfg.num_classes}")
    lines = [METRICS_HEADER]

    def log(step, m):
        if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
            lines.append(
                f"{step},{m['loss']!r},{m['acc_p']!r},{m['acc_l']!r},{m['acc_avg']!r},{fmt_grid(m['grid'])}"
            )

    params, _ = training.fit(model_cfg, train_cfg, to_float(ds.images, model_cfg.dtype), ds.labels,
                             callback=log)
    digest = save_checkpoint(args.out, model_cfg, params)
    atomic_write(args.metrics, ("\n".join(lines) + "\n").encode("utf-8"))
    print(f"wrote checkpoint {args.out} (sha256 {digest}) and metrics {args.metrics}")
    return 0


def cmd_eval(args) -> int:
    config, params = load_checkpoint(args.checkpoint)
    digest = file_sha256(args.checkpoint)
    ds = load_dataset(args.data)
    x = to_float(ds.images, config.dtype)
    grids = args.grids or list(config.compressed_grids)
    buf = io.StringIO()
    buf.write(EVAL_HEADER + "\n")
    for g in grids:
        r = training.evaluate(params, config, x, ds.labels, g)
        buf.write(f"{fmt_grid(g)},{r['acc_p']:.6f},{r['acc_l']:.6f},{r['acc_avg']:.6f},{r['loss']:.6f},{digest}\n")
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_flops(args) -> int:
    reference = None
    if args.preset:
        pre = flops.PRESETS.get(args.preset)
        if pre is None:
            raise LookupViTError(f"unknown preset {args.preset!r}; choose from {sorted(flops.PRESETS)}")
        sizes = args.sizes or [pre.image_size]
        grids = args.grids or list(pre.grids)
        dim, depth, patch, classes = pre.dim, pre.depth, pre.patch, pre.classes
        if args.compare and sizes == [pre.image_size]:
            reference = flops.REFERENCE_GFLOPS.get(args.preset)
    else:
        sizes = args.sizes or [224]
        grids = args.grids or [(5, 5)]
        dim, depth, patch, classes = args.dim, args.depth, args.patch, args.classes
    rows = flops.scaling_sweep(sizes, grids, dim, depth, patch, args.p, args.q,
                               include_overheads=args.all, classes=classes)
    _emit(flops.to_csv(rows, reference), args.out)
    return 0


def cmd_attnmap(args) -> int:
    config, params = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    image = to_float(ds.images[args.index], config.dtype)
    maps = analysis.attention_maps(params, config, image, args.grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    n = maps[0].size
    buf.write("layer," + ",".join(f"t{i}" for i in range(n)) + "\n")
    for k, m in enumerate(maps):
        pgm.write_pgm(out / f"layer_{k:02d}.pgm", analysis.as_image(m), comment=f"layer {k}")
        buf.write(f"{k}," + ",".join(repr(float(v)) for v in m.reshape(-1)) + "\n")
    atomic_write(out / "attention.csv", buf.getvalue().encode("utf-8"))
    print(f"wrote {len(maps)} maps to {out}")
    return 0


def cmd_robust(args) -> int:
    config, params = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    x = to_float(ds.images[:args.samples], config.dtype)
    sigmas = analysis.severity_sigmas(args.severities)
    curve = analysis.robustness_curve(params, config, x, sigmas, args.grid, args.seed)
    buf = io.StringIO()
    buf.write(ROBUST_HEADER + "\n")
    for sev, (sigma, dev) in zip(args.severities, curve):
        buf.write(f"{sev},{sigma:.4f},{dev:.8f}\n")
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lookupvit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic LVDS dataset")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", required=True, help="JSON config with 'model' and 'train' sections")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", required=True, help="metrics CSV path")
    p.add_argument("--seed", type=int, help="overrides model.seed and train.seed")
    p.add_argument("--steps", type=int, help="overrides train.steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy per head, optionally per compressed grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grids", type=parse_grids, help="e.g. 3x3,5x5,7x7")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="analytic GFLOPs table as CSV")
    p.add_argument("--preset", help=f"one of {sorted(flops.PRESETS)}")
    p.add_argument("--sizes", type=parse_ints, help="image sizes, e.g. 224,384")
    p.add_argument("--grids", type=parse_grids)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--classes", type=int, default=1000)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--all", action="store_true", help="include patch embedding and heads")
    p.add_argument("--compare", action="store_true", help="append published GFLOPs for the preset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("attnmap", help="export per-layer cross-attention maps (PGM + CSV)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_attnmap)

    p = sub.add_parser("robust", help="mean feature deviation vs Gaussian noise severity")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--severities", type=parse_ints, default=[1, 2, 3, 4, 5])
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_robust)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LookupViTError, OSError, json.JSONDecodeError) as exc:
        print(f"lookupvit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
