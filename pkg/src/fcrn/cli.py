"""The ``fcrn`` command-line tool.

Subcommands: analyze, bench, train, predict, eval, selftest. Every
subcommand takes ``--seed``; ``train`` also reads a key=value ``--config``
file whose keys are TrainConfig / AugmentConfig fields or dataset options.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import archgraph as ag
from .bench import DEFAULT_SHAPES, bench_upconv, format_report
from .data import AugmentConfig, synth_dataset
from .io import FormatError, load_depth, load_rgb, parse_key_values, save_depth_png, save_tensor
from .metrics import MetricsAccumulator
from .tensor import bilinear_upsample
from .train import TrainConfig, TrainingDiverged, config_from_dict, train

DEPTH_SUFFIXES = (".fcrnt", ".png")
DATA_KEYS = {"n_train": 200, "n_val": 50, "height": 64, "width": 64, "data_seed": 100}


def _shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by 'x' or ',', got {text!r}")


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    try:
        g = ag.build_architecture(args.arch, args.input)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    n_params = ag.count_parameters(g)
    mem = ag.memory_estimate(g, args.bytes_per_param)
    print(f"architecture   {g.name}")
    print(f"input          {'x'.join(map(str, g.input_shape))}")
    print(f"output         {'x'.join(map(str, g.output_shape))}")
    if "bottleneck" in g.tags:
        print(f"bottleneck     {'x'.join(map(str, g.shape(g.tags['bottleneck'])))}")
    print(f"parameters     {n_params:,}")
    print(f"memory         {mem:,} bytes ({mem / 2**20:.1f} MiB at {args.bytes_per_param} B/param)")
    for tag in ("last_conv", "backbone"):
        if tag in g.tags:
            (rh, rw), (jh, jw) = ag.receptive_field(g, g.tags[tag])
            print(f"rf {tag:<11} {rh}x{rw} (jump {jh}x{jw}) at {g[g.tags[tag]].name}")
    if "bottleneck" in g.tags and not any(n.kind == "fc" for n in g.nodes):
        b = g.shape(g.tags["bottleneck"])
        fc = ag.fc_replacement_parameters(b, g.output_shape[1:])
        print(f"fc replacement {fc:,} parameters ({fc * args.bytes_per_param / 2**30:.2f} GiB)")
    if args.layers:
        print()
        print(ag.to_text(g))
    return 0


# ---------------------------------------------------------------------------
# bench

def cmd_bench(args) -> int:
    shapes = args.shape or DEFAULT_SHAPES
    for s in shapes:
        if len(s) != 5:
            print(f"error: --shape needs N,C,H,W,outC, got {s}", file=sys.stderr)
            return 2
    try:
        rows = bench_upconv(shapes, args.repetitions, args.warmup,
                            np.float32 if args.dtype == "float32" else np.float64, args.seed)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(format_report(rows))
    return 0


# ---------------------------------------------------------------------------
# train

def split_config(values: dict) -> tuple[TrainConfig, AugmentConfig | None, dict]:
    """Route key=value settings to TrainConfig, AugmentConfig or the dataset options."""
    tkeys = {f.name for f in fields(TrainConfig)}
    akeys = {f.name for f in fields(AugmentConfig)}
    tvals, avals, data = {}, {}, dict(DATA_KEYS)
    for k, v in values.items():
        if k in tkeys:
            tvals[k] = v
        elif k in akeys:
            avals[k] = v
        elif k in DATA_KEYS:
            data[k] = int(v)
        else:
            raise ValueError(f"unknown setting {k!r}")
    aug = config_from_dict(AugmentConfig, avals) if avals else None
    return config_from_dict(TrainConfig, tvals), aug, data


def cmd_train(args) -> int:
    values = parse_key_values(Path(args.config).read_text()) if args.config else {}
    for item in args.set or ():
        if "=" not in item:
            print(f"error: --set expects key=value, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if args.seed is not None:
        values["seed"] = str(args.seed)
    try:
        cfg, aug, data = split_config(values)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if aug is not None and aug.crop is None:
        aug.crop = (data["height"], data["width"])
    size = (data["height"], data["width"])
    ds = synth_dataset(data["n_train"], size, data["data_seed"])
    val = synth_dataset(data["n_val"], size, data["data_seed"] + 1) if data["n_val"] > 0 else None
    t0 = time.perf_counter()
    try:
        result = train(cfg, ds, val, aug)
    except TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 1
    print(f"trained {cfg.arch} for {cfg.epochs} epochs in {time.perf_counter() - t0:.1f} s")
    print(f"loss: initial step {result.initial_loss:.4f}, final epoch {result.final_loss:.4f}")
    if val:
        print(result.val_reports[-1].to_table())
    result.net.save(args.out)
    print(f"saved {args.out}")
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    net = ag.load_network(args.model)
    rgb = load_rgb(args.image)
    _, H, W = net.graph.input_shape
    h, w = rgb.shape[2:]
    x = bilinear_upsample(rgb, H, W) if (h, w) != (H, W) else rgb
    t0 = time.perf_counter()
    pred = net.forward(x, train=False)
    ms = (time.perf_counter() - t0) * 1e3
    depth = bilinear_upsample(pred, h, w)
    image = Path(args.image)
    out = Path(args.out) if args.out else image.with_name(image.stem + "_depth")
    save_tensor(out.with_suffix(".fcrnt"), depth)
    save_depth_png(out.with_suffix(".png"), depth[0, 0], args.meters_per_unit)
    print(f"wrote {out.with_suffix('.fcrnt')} and {out.with_suffix('.png')} ({h}x{w}, forward {ms:.1f} ms)")
    return 0


# ---------------------------------------------------------------------------
# eval

def _depth_files(d: Path) -> dict[str, Path]:
    """Map stem to file; the tensor format wins when both exist."""
    out = {}
    for suffix in reversed(DEPTH_SUFFIXES):
        for p in sorted(d.glob(f"*{suffix}")):
            out[p.stem] = p
    return out


def evaluate_dirs(pred_dir, gt_dir, max_depth=None):
    """Pool metrics over matching files; returns ``(report or None, errors)``."""
    preds, gts = _depth_files(Path(pred_dir)), _depth_files(Path(gt_dir))
    acc = MetricsAccumulator(max_depth)
    errors = []
    for stem in sorted(set(preds) | set(gts)):
        if stem not in gts:
            errors.append((stem, "missing ground truth"))
            continue
        if stem not in preds:
            errors.append((stem, "missing prediction"))
            continue
        try:
            pred, gt = load_depth(preds[stem]), load_depth(gts[stem])
            if pred.shape != gt.shape:
                raise FormatError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
            acc.add(pred, gt, (gt > 0) & np.isfinite(gt))
        except (OSError, ValueError) as e:
            errors.append((stem, str(e)))
    report = acc.report() if acc.n > 0 else None
    return report, errors


def cmd_eval(args) -> int:
    report, errors = evaluate_dirs(args.pred_dir, args.gt_dir, args.max_depth)
    if report is not None:
        print(report.to_record() if args.record else report.to_table())
        print(f"pixels {report.n_pixels}, floored predictions {report.n_clamped}")
    else:
        print("no pixels evaluated")
    if errors:
        print(f"{len(errors)} file error(s):", file=sys.stderr)
        for stem, msg in errors:
            print(f"  {stem}: {msg}", file=sys.stderr)
    return 1 if errors or report is None else 0


# ---------------------------------------------------------------------------
# selftest

def cmd_selftest(args) -> int:
    from .checks import equivalence_suite, gradient_suite

    ok = True
    t0 = time.perf_counter()
    eq = equivalence_suite(args.configs, args.seed)
    for k, v in eq.items():
        tol = 1e-10 if k.endswith("grad") else 1e-12
        passed = v < tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} equivalence {k:<16} max abs {v:.2e} (< {tol:g})")
    for k, v in gradient_suite(args.cases, args.seed).items():
        passed = v < 1e-4
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} gradient {k:<19} rel {v:.2e} (< 1e-4)")
    print(f"selftest {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s")
    return 0 if ok else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fcrn", description="Depth regression toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="parameters, receptive field, memory and shapes")
    a.add_argument("arch", help=f"one of: {', '.join(ag.ARCHITECTURES)}")
    a.add_argument("--input", type=_shape, default=None, help="input shape CxHxW")
    a.add_argument("--bytes-per-param", type=int, default=4)
    a.add_argument("--layers", action="store_true", help="also print the layer table")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", parents=[common], help="naive vs fast up-convolution timing")
    b.add_argument("--shape", type=_shape, action="append", help="N,C,H,W,outC (repeatable)")
    b.add_argument("--repetitions", type=int, default=20)
    b.add_argument("--warmup", type=int, default=3)
    b.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("train", parents=[common], help="train on synthetic scenes")
    t.add_argument("--config", help="key=value file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    t.add_argument("--out", default="model.npz")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", parents=[common], help="depth for one image")
    r.add_argument("model")
    r.add_argument("image", help="PNG/JPEG or FCRNT1 tensor")
    r.add_argument("--out", help="output path without suffix (default: <image>_depth next to the image)")
    r.add_argument("--meters-per-unit", type=float, default=0.001)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", parents=[common], help="metrics over a directory of predictions")
    e.add_argument("pred_dir")
    e.add_argument("gt_dir")
    e.add_argument("--max-depth", type=float, default=None, help="ignore ground truth beyond this (m)")
    e.add_argument("--record", action="store_true", help="one comma-separated line instead of a table")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selftest", parents=[common], help="equivalence and gradient checks")
    s.add_argument("--configs", type=int, default=200)
    s.add_argument("--cases", type=int, default=20)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command != "train" and args.seed is None:
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
