"""Command-line entry point: ``crossnet {train,eval,sr,flow-viz,report}``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import ast
import logging
import os
import sys
import time
from pathlib import Path

from .data import LightFieldDataset, read_image, write_image
from .evaluation import MetricTable, evaluate
from .flownet import WARP_LEVELS, flow_to_color
from .imaging import DomainError
from .model import CrossNetConfig, build_model, super_resolve
from .report import emit_report
from .tiling import TileSpec, sliding_window_sr
from .training import PairSampler, TrainConfig, restore_model, train

__all__ = ["run_cli", "main", "parse_config_file", "UsageError"]

log = logging.getLogger("crossnet")


class UsageError(Exception):
    """Bad command-line input (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if "x" in text and all(p.isdigit() for p in text.split("x")):
        return tuple(int(p) for p in text.split("x"))
    if ":" in text:
        # lr_schedule = 150000:0.1, 180000:0.01
        return tuple(
            (int(it), float(m)) for it, m in (item.split(":") for item in text.split(",") if item.strip())
        )
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_file(path) -> dict:
    """Read UTF-8 ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse_value(value)
    return out


def _data_root(arg) -> Path:
    root = arg or os.environ.get("CROSSNET_DATA_ROOT")
    if not root:
        raise UsageError("no dataset given (use --dataset or set CROSSNET_DATA_ROOT)")
    return Path(root)


def _parse_positions(text):
    if not text:
        return None
    if text == "diag":
        return None
    return [tuple(int(v) for v in item.split(",")) for item in text.split(";") if item]


def cmd_train(args) -> int:
    raw = parse_config_file(args.config) if args.config else {}
    raw.update({k: v for k, v in (("total_iterations", args.iterations), ("seed", args.seed)) if v is not None})
    try:
        cfg = TrainConfig.from_dict(raw)
    except (DomainError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    dataset = LightFieldDataset(_data_root(args.dataset or cfg.dataset or None), "train")
    sampler = PairSampler(dataset, cfg.scale, cfg.crop_size, cfg.parallax_augment)
    result = train(cfg, sampler, resume_from=args.resume, out_dir=args.out)
    print(f"trained to iteration {result.iteration}; last checkpoint {result.last_checkpoint}")
    return 0


def _load_model(path):
    model, meta = restore_model(path)
    model.eval()
    return model, meta


def cmd_eval(args) -> int:
    model, meta = _load_model(args.checkpoint)
    dataset = LightFieldDataset(_data_root(args.dataset), args.split)
    tiles = TileSpec(args.window, args.stride, context=args.context) if args.window else None
    table = evaluate(model, dataset, _parse_positions(args.positions), tiles=tiles, method=args.method)
    table.dataset = Path(dataset.root).name
    table.to_csv(args.out)
    if args.report_dir:
        emit_report([table], args.report_dir, config=meta)
    m = table.mean()
    print(f"mean PSNR {m['psnr']:.2f} dB, SSIM {m['ssim']:.4f} over {len(table.rows)} views -> {args.out}")
    return 0


def _check_ratio(lr, ref, scale):
    want = (lr.shape[-2] * scale, lr.shape[-1] * scale)
    if tuple(ref.shape[-2:]) != want:
        raise UsageError(
            f"size-ratio violation: reference is {ref.shape[-1]}x{ref.shape[-2]} but must be "
            f"{scale}x the LR size {lr.shape[-1]}x{lr.shape[-2]} = {want[1]}x{want[0]}"
        )


def cmd_sr(args) -> int:
    lr, ref = read_image(args.lr), read_image(args.ref)
    _check_ratio(lr, ref, args.scale)
    if args.checkpoint:
        model, _ = _load_model(args.checkpoint)
        if model.cfg.scale_factor != args.scale:
            raise UsageError(f"checkpoint is x{model.cfg.scale_factor}, --scale is {args.scale}")
    else:
        log.warning("no --checkpoint given; using randomly initialised weights")
        model = build_model(CrossNetConfig(scale_factor=args.scale), seed=0).eval()
    t0 = time.perf_counter()
    out = sliding_window_sr(model, lr, ref, TileSpec(args.window, args.stride, args.blend, args.context))
    elapsed = time.perf_counter() - t0
    write_image(args.out, out)
    print(f"wrote {args.out} ({out.shape[-1]}x{out.shape[-2]}) in {elapsed:.2f} s")
    return 0


def cmd_flow_viz(args) -> int:
    lr, ref = read_image(args.lr), read_image(args.ref)
    model, _ = _load_model(args.checkpoint)
    _check_ratio(lr, ref, model.cfg.scale_factor)
    _, flows = super_resolve(model, lr, ref)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    levels = range(len(flows)) if args.all_levels else WARP_LEVELS
    for level in levels:
        flow = flows[level]
        max_mag = args.max_magnitude or max(float(flow.norm(dim=0).max()), 1e-6)
        write_image(out / f"flow_scale{level}.png", flow_to_color(flow, max_mag))
    print(f"wrote {len(list(levels))} flow visualisations to {out}")
    return 0


def cmd_report(args) -> int:
    tables = []
    for spec in args.tables:
        method, _, path = spec.rpartition("=")
        tables.append(MetricTable.from_csv(path, method=method or None, dataset=args.dataset))
    paths = emit_report(tables, args.out, config={"tables": args.tables})
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crossnet", description="Reference-based super-resolution with cross-scale warping.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on a light-field dataset")
    t.add_argument("--config", help="key = value TrainConfig file")
    t.add_argument("--dataset", help="dataset root (default: $CROSSNET_DATA_ROOT)")
    t.add_argument("--out", required=True, help="directory for checkpoints and train_log.csv")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--iterations", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint with the angular test protocol")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset")
    e.add_argument("--split", default="test")
    e.add_argument("--positions", help="'1,1;3,3;7,7' (default: all diagonal positions)")
    e.add_argument("--out", required=True, help="CSV output path")
    e.add_argument("--report-dir", help="also write a PSNR plot here")
    e.add_argument("--method", default="crossnet")
    e.add_argument("--window", type=int, default=0, help="sliding-window size (0 = whole image)")
    e.add_argument("--stride", type=int, default=256)
    e.add_argument("--context", type=int, default=64, help="extra pixels fed around each window")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sr", help="super-resolve one LR image with a reference")
    s.add_argument("--lr", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--scale", type=int, choices=(4, 8), default=8)
    s.add_argument("--window", type=int, default=512)
    s.add_argument("--stride", type=int, default=256)
    s.add_argument("--blend", choices=("average", "feather"), default="average")
    s.add_argument("--context", type=int, default=64, help="extra pixels fed around each window")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sr)

    f = sub.add_parser("flow-viz", help="colour-code the estimated flow pyramid")
    f.add_argument("--lr", required=True)
    f.add_argument("--ref", required=True)
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--max-magnitude", type=float, default=None)
    f.add_argument("--all-levels", action="store_true", help="include the two coarsest levels")
    f.set_defaults(func=cmd_flow_viz)

    r = sub.add_parser("report", help="CSV + plot from one or more metric CSVs")
    r.add_argument("tables", nargs="+", help="[method=]path.csv")
    r.add_argument("--dataset", default="data")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"crossnet: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"crossnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
